#include "cogc/gc_code.hpp"

#include "cogc/errors.hpp"
#include "cogc/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace cogc::gc {

namespace {

constexpr int kMaxConstructionAttempts = 64;
constexpr std::uint64_t kMaxPatternRows = 1u << 21;
constexpr double kConstructionTol = 1e-10;

Eigen::MatrixXd draw_auxiliary(int tolerance, int clients, rng::Stream& stream) {
    Eigen::MatrixXd h(tolerance, clients);
    for (int i = 0; i < tolerance; ++i)
        for (int j = 0; j < clients; ++j) h(i, j) = stream.next_gaussian();
    // Zero row sums: puts the all-ones vector into null(H), which row(B)
    // must span for A * B = 1 to be solvable.
    for (int i = 0; i < tolerance; ++i) {
        const double mean = h.row(i).sum() / clients;
        h.row(i).array() -= mean;
    }
    return h;
}

// One construction attempt; returns false on an ill-conditioned draw.
bool try_construct(int clients, int tolerance, rng::Stream& stream, GcScheme& out) {
    const int m_count = clients;
    const int s = tolerance;
    const Eigen::MatrixXd h = draw_auxiliary(s, m_count, stream);

    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m_count, m_count);
    for (int m = 0; m < m_count; ++m) {
        b(m, m) = 1.0;
        if (s == 0) continue;
        // Solve H_sub * x = -H[:, m] so that row m lies in null(H).
        Eigen::MatrixXd h_sub(s, s);
        for (int j = 0; j < s; ++j) h_sub.col(j) = h.col((m + 1 + j) % m_count);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h_sub);
        if (qr.rank() < s) return false;
        const Eigen::VectorXd x = qr.solve(-h.col(m));
        if (!x.allFinite()) return false;
        if ((h_sub * x + h.col(m)).cwiseAbs().maxCoeff() > kConstructionTol) return false;
        for (int j = 0; j < s; ++j) b(m, (m + 1 + j) % m_count) = x(j);
    }

    const auto patterns = enumerate_subsets(m_count, s);
    const int f = static_cast<int>(patterns.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(f, m_count);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m_count);
    std::vector<int> complement;
    complement.reserve(m_count);
    for (int r = 0; r < f; ++r) {
        const auto& pattern = patterns[r];
        complement.clear();
        for (int m = 0; m < m_count; ++m)
            if (!std::binary_search(pattern.begin(), pattern.end(), m))
                complement.push_back(m);
        // Solve B[K,:]^T * a_K = 1 on the complement K of the pattern.
        Eigen::MatrixXd bt(m_count, static_cast<int>(complement.size()));
        for (std::size_t j = 0; j < complement.size(); ++j)
            bt.col(static_cast<int>(j)) = b.row(complement[j]).transpose();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(bt);
        const Eigen::VectorXd sol = qr.solve(ones);
        if (!sol.allFinite()) return false;
        if ((bt * sol - ones).cwiseAbs().maxCoeff() > kConstructionTol) return false;
        for (std::size_t j = 0; j < complement.size(); ++j)
            a(r, complement[j]) = sol(static_cast<int>(j));
    }

    out.clients = m_count;
    out.tolerance = s;
    out.b_matrix = std::move(b);
    out.a_matrix = std::move(a);
    out.patterns = patterns;
    return verify_scheme(out) <= kConstructionTol;
}

}  // namespace

std::uint64_t binomial_exact(int n, int k, std::uint64_t max_value) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 result = 1;
    for (int i = 1; i <= k; ++i) {
        // Exact at every step: the running value is C(n-k+i, i).
        result = result * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
        if (result > max_value)
            throw InvalidParams("binomial coefficient exceeds supported size");
    }
    return static_cast<std::uint64_t>(result);
}

std::vector<std::vector<int>> enumerate_subsets(int n, int k) {
    std::vector<std::vector<int>> subsets;
    std::vector<int> current(k);
    for (int i = 0; i < k; ++i) current[i] = i;
    if (k == 0) {
        subsets.push_back({});
        return subsets;
    }
    while (true) {
        subsets.push_back(current);
        int i = k - 1;
        while (i >= 0 && current[i] == n - k + i) --i;
        if (i < 0) break;
        ++current[i];
        for (int j = i + 1; j < k; ++j) current[j] = current[j - 1] + 1;
    }
    return subsets;
}

std::vector<int> GcScheme::neighbors(int m) const {
    std::vector<int> result;
    result.reserve(tolerance);
    for (int j = 1; j <= tolerance; ++j) result.push_back((m + j) % clients);
    return result;
}

GcScheme construct_gc_scheme(int clients, int tolerance, std::uint64_t seed) {
    if (clients < 1) throw InvalidParams("client count must be at least 1");
    if (tolerance < 0 || tolerance >= clients)
        throw InvalidParams("straggler tolerance must satisfy 0 <= s < M");
    binomial_exact(clients, tolerance, kMaxPatternRows);

    GcScheme scheme;
    for (int attempt = 0; attempt < kMaxConstructionAttempts; ++attempt) {
        rng::Stream stream(rng::key(seed, rng::Tag::gc_construct,
                                    static_cast<std::uint64_t>(attempt)));
        if (try_construct(clients, tolerance, stream, scheme)) return scheme;
    }
    throw ConstructionFailed("no well-conditioned scheme after " +
                             std::to_string(kMaxConstructionAttempts) + " draws");
}

double verify_scheme(const GcScheme& scheme) {
    const Eigen::MatrixXd product = scheme.a_matrix * scheme.b_matrix;
    return (product.array() - 1.0).abs().maxCoeff();
}

StragglerPattern detect_straggler_pattern(const GcScheme& scheme,
                                          const std::vector<int>& tau) {
    if (static_cast<int>(tau.size()) != scheme.clients)
        throw InvalidParams("tau length does not match client count");
    StragglerPattern result;
    for (int m = 0; m < scheme.clients; ++m)
        if (tau[m] == 0) result.stragglers.push_back(m);
    if (static_cast<int>(result.stragglers.size()) > scheme.tolerance) return result;
    for (int r = 0; r < scheme.pattern_count(); ++r) {
        if (std::includes(scheme.patterns[r].begin(), scheme.patterns[r].end(),
                          result.stragglers.begin(), result.stragglers.end())) {
            result.matched_row = r;
            break;
        }
    }
    return result;
}

void export_scheme(const GcScheme& scheme, std::ostream& out) {
    out << scheme.clients << ' ' << scheme.tolerance << ' ' << scheme.pattern_count()
        << '\n';
    char buf[64];
    auto write_matrix = [&](const Eigen::MatrixXd& mat) {
        for (Eigen::Index i = 0; i < mat.rows(); ++i) {
            for (Eigen::Index j = 0; j < mat.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", mat(i, j));
                out << buf << (j + 1 < mat.cols() ? ' ' : '\n');
            }
        }
    };
    write_matrix(scheme.b_matrix);
    write_matrix(scheme.a_matrix);
}

GcScheme import_scheme(std::istream& in) {
    int clients = 0, tolerance = 0, rows = 0;
    if (!(in >> clients >> tolerance >> rows))
        throw InvalidParams("scheme dump: malformed header");
    if (clients < 1 || tolerance < 0 || tolerance >= clients)
        throw InvalidParams("scheme dump: invalid M/s header");
    const auto expected =
        static_cast<std::uint64_t>(binomial_exact(clients, tolerance, kMaxPatternRows));
    if (static_cast<std::uint64_t>(rows) != expected)
        throw InvalidParams("scheme dump: f does not equal C(M, s)");

    GcScheme scheme;
    scheme.clients = clients;
    scheme.tolerance = tolerance;
    scheme.b_matrix.resize(clients, clients);
    scheme.a_matrix.resize(rows, clients);
    for (int i = 0; i < clients; ++i)
        for (int j = 0; j < clients; ++j)
            if (!(in >> scheme.b_matrix(i, j)))
                throw InvalidParams("scheme dump: truncated B matrix");
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < clients; ++j)
            if (!(in >> scheme.a_matrix(i, j)))
                throw InvalidParams("scheme dump: truncated A matrix");
    scheme.patterns = enumerate_subsets(clients, tolerance);

    for (int i = 0; i < rows; ++i)
        for (int m : scheme.patterns[i])
            if (scheme.a_matrix(i, m) != 0.0)
                throw InvalidParams("scheme dump: A row violates its pattern zeros");
    for (int m = 0; m < clients; ++m)
        for (int k = 0; k < clients; ++k) {
            const int offset = (k - m + clients) % clients;
            if (offset > tolerance && scheme.b_matrix(m, k) != 0.0)
                throw InvalidParams("scheme dump: B support is not cyclic");
        }
    return scheme;
}

void export_scheme_file(const GcScheme& scheme, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open scheme file for writing: " + path);
    export_scheme(scheme, out);
}

GcScheme import_scheme_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scheme file: " + path);
    return import_scheme(in);
}

}  // namespace cogc::gc
