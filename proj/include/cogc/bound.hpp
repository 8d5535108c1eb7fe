#pragma once

// Numerical evaluator for the convergence bound.
//
// The bound couples four ingredients: the initial optimality gap, the
// gradient dissimilarity across clients, the stochastic-gradient variance
// and the quantization distortion, all modulated by the per-round recovery
// failure probability p_o through the moments of the geometric inter-success
// gap and two series constants C1/C2. The series denominators turn
// non-positive for large gaps, so the sums are truncated where the
// denominator falls below 0.1 and the discarded geometric tail must stay
// under 1e-6 for the result to be reported at all.

#include <cstdint>
#include <vector>

namespace cogc::bound {

struct BoundParams {
    double smoothness = 1.0;        // L
    double grad_variance = 0.0;     // sigma^2 (divided by batch below)
    int batch = 1;                  // minibatch size scaling the variance
    std::vector<double> dissimilarity;  // D_m, one per client
    double f_star_gap = 0.0;        // |F(theta_0) - F*|
    double eta = 0.0;               // ignored when paper_schedule is set
    bool paper_schedule = true;     // eta = (1/L) sqrt(M/T)
    int local_steps = 5;            // I
    double rounds = 1e4;            // T
    int clients = 10;               // M
    std::vector<double> weights;    // p_m
    std::vector<double> j_terms;    // per-round sum_m p_m^2 J_{m,r}^2
    double p_o = 0.0;

    double effective_eta() const;
    void validate() const;
};

struct GeometricMoments {
    double mean = 0.0;        // E[R] = 1 / (1 - p_o)
    double second_moment = 0.0;  // E[R^2] = (1 + p_o) / (1 - p_o)^2
};

struct SeriesConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    int r_max = 0;        // largest gap kept in the sums
    double tail_mass = 0.0;  // p_o^r_max, the discarded probability
};

struct BoundReport {
    GeometricMoments moments;
    SeriesConstants series;
    double e_h1 = 0.0;
    double h2 = 0.0;
    double e_h3 = 0.0;
    double e_h4 = 0.0;
    double h5 = 0.0;
    double term_gap = 0.0;
    double term_dissimilarity = 0.0;
    double term_variance = 0.0;
    double term_quantization = 0.0;
    double total = 0.0;
};

GeometricMoments geometric_moments(double p_o);

SeriesConstants series_constants(const BoundParams& params);

BoundReport theorem_bound(const BoundParams& params);

}  // namespace cogc::bound
