#pragma once

// Gradient-coding scheme: the (B_cyc, A) matrix pair.
//
// B_cyc is MxM with s+1 cyclically consecutive nonzeros per row; A is fxM
// with f = C(M, s), one row per size-s straggler pattern, and A * B_cyc is
// the all-ones matrix. The parameter server picks the A row whose zeros
// cover the observed stragglers and combines the surviving partial sums
// with it to recover the exact weighted update.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cogc::gc {

struct GcScheme {
    int clients = 0;             // M
    int tolerance = 0;           // s, number of tolerated stragglers
    Eigen::MatrixXd b_matrix;    // M x M cyclic allocation matrix
    Eigen::MatrixXd a_matrix;    // f x M combination matrix
    // Row i of a_matrix has structural zeros exactly at patterns[i]
    // (sorted, size s). Patterns are enumerated in lexicographic order.
    std::vector<std::vector<int>> patterns;

    int pattern_count() const { return static_cast<int>(patterns.size()); }

    // Neighbor set of client m: the s off-diagonal support columns of B row m.
    std::vector<int> neighbors(int m) const;
};

struct StragglerPattern {
    int round = 0;
    std::vector<int> stragglers;          // sorted client indices with tau == 0
    std::optional<int> matched_row;       // lowest A row covering the stragglers
};

// Builds the scheme from a random auxiliary matrix H (s x M, zero row sums so
// the all-ones vector lies in H's null space). Each B row gets its s trailing
// support entries by solving the s x s system that puts the row in null(H)
// with leading entry 1; each A row solves a least-squares system on the
// complement of its pattern. Ill-conditioned draws are retried with a fresh H.
GcScheme construct_gc_scheme(int clients, int tolerance, std::uint64_t seed);

// Max |(A*B)_ij - 1| over all entries.
double verify_scheme(const GcScheme& scheme);

// tau is the {0,1} received-set indicator, length M. matched_row is present
// iff at most s entries are zero; ties break to the lowest pattern index.
StragglerPattern detect_straggler_pattern(const GcScheme& scheme,
                                          const std::vector<int>& tau);

// Plain-text dump: header "M s f", then B and A row-major with 17 significant
// digits. import reconstructs patterns from (M, s) and validates support.
void export_scheme(const GcScheme& scheme, std::ostream& out);
GcScheme import_scheme(std::istream& in);
void export_scheme_file(const GcScheme& scheme, const std::string& path);
GcScheme import_scheme_file(const std::string& path);

// Lexicographic enumeration of all size-k subsets of {0, ..., n-1}.
std::vector<std::vector<int>> enumerate_subsets(int n, int k);

// C(n, k) with overflow guard; throws InvalidParams if it exceeds max_value.
std::uint64_t binomial_exact(int n, int k, std::uint64_t max_value);

}  // namespace cogc::gc
