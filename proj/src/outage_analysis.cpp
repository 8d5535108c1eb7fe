#include "cogc/outage_analysis.hpp"

#include "cogc/errors.hpp"
#include "cogc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace cogc::outage {

namespace {

// a * log(x) with the 0 * log(0) = 0 convention.
inline double xlogy(double a, double x) { return a == 0.0 ? 0.0 : a * std::log(x); }

inline double log_choose(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// P(Bin(n, p) = k), evaluated in log-space.
inline double binom_pmf(int n, int k, double p) {
    if (p == 0.0) return k == 0 ? 1.0 : 0.0;
    if (p == 1.0) return k == n ? 1.0 : 0.0;
    return std::exp(log_choose(n, k) + xlogy(k, p) + xlogy(n - k, 1.0 - p));
}

// P(Bin(n, p) >= k).
inline double binom_tail(int n, int k, double p) {
    double total = 0.0;
    for (int v = std::max(k, 0); v <= n; ++v) total += binom_pmf(n, v, p);
    return std::min(total, 1.0);
}

}  // namespace

OutageReport closed_form_outage(int clients, int tolerance, double q) {
    if (clients < 1) throw InvalidParams("client count must be at least 1");
    if (tolerance < 0 || tolerance >= clients)
        throw InvalidParams("straggler tolerance must satisfy 0 <= s < M");
    if (q < 0.0 || q > 1.0) throw InvalidParams("q must lie in [0, 1]");

    const int m = clients;
    const int s = tolerance;
    // Probability a client misses at least one of its s neighbor messages.
    const double p_straggle = -std::expm1(xlogy(s, 1.0 - q));

    OutageReport report;
    report.clients = m;
    report.tolerance = s;
    report.q = q;

    report.p1 = std::exp(xlogy(s * m, 1.0 - q)) * binom_tail(m, s + 1, q);
    report.p2 = binom_tail(m, s + 1, p_straggle);
    double p3 = 0.0;
    for (int v1 = 1; v1 <= s; ++v1) {
        p3 += binom_pmf(m, v1, p_straggle) * binom_tail(m - v1, s - v1 + 1, q);
    }
    report.p3 = p3;
    report.p_o = std::min(report.p1 + report.p2 + report.p3, 1.0);
    return report;
}

MonteCarloEstimate monte_carlo_outage(int clients, int tolerance, double q_a, double q_b,
                                      std::uint64_t trials, std::uint64_t seed,
                                      int threads) {
    if (clients < 1) throw InvalidParams("client count must be at least 1");
    if (tolerance < 0 || tolerance >= clients)
        throw InvalidParams("straggler tolerance must satisfy 0 <= s < M");
    if (q_a < 0.0 || q_a > 1.0 || q_b < 0.0 || q_b > 1.0)
        throw InvalidParams("outage probabilities must lie in [0, 1]");
    if (trials < 1) throw InvalidParams("trials must be at least 1");

    const int m = clients;
    const int s = tolerance;
    auto run_block = [&](std::uint64_t begin, std::uint64_t end) -> std::uint64_t {
        std::uint64_t failures = 0;
        for (std::uint64_t t = begin; t < end; ++t) {
            rng::Stream stream(rng::key(seed, rng::Tag::mc_trial, t));
            int survivors = 0;
            for (int c = 0; c < m; ++c) {
                bool straggler = false;
                for (int j = 0; j < s; ++j) {
                    if (stream.next_u01() >= 1.0 - q_a) straggler = true;
                }
                if (straggler) continue;
                if (stream.next_u01() < 1.0 - q_b) ++survivors;
            }
            if (survivors < m - s) ++failures;
        }
        return failures;
    };

    std::uint64_t failures = 0;
    const int workers = std::max(1, threads);
    if (workers == 1) {
        failures = run_block(0, trials);
    } else {
        std::vector<std::uint64_t> partial(workers, 0);
        std::vector<std::thread> pool;
        const std::uint64_t chunk = (trials + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::uint64_t begin = std::min<std::uint64_t>(w * chunk, trials);
            const std::uint64_t end = std::min<std::uint64_t>(begin + chunk, trials);
            pool.emplace_back([&, w, begin, end] { partial[w] = run_block(begin, end); });
        }
        for (auto& th : pool) th.join();
        for (auto f : partial) failures += f;
    }

    MonteCarloEstimate est;
    est.trials = trials;
    est.failures = failures;
    est.estimate = static_cast<double>(failures) / static_cast<double>(trials);
    est.std_error =
        std::sqrt(est.estimate * (1.0 - est.estimate) / static_cast<double>(trials));
    return est;
}

}  // namespace cogc::outage
