#pragma once

// Closed-form probability that a full round fails to recover the global
// update, plus an independent Monte Carlo estimator of the same event.
//
// The round fails when the number of clients whose partial sum reaches the
// server drops below M - s. The closed form splits the event by the number
// of D2D-stage stragglers (0, 1..s, or > s) and assumes a common per-link
// outage probability q for both stages.

#include <cstdint>

namespace cogc::outage {

struct OutageReport {
    int clients = 0;       // M
    int tolerance = 0;     // s
    double q = 0.0;
    double p1 = 0.0;       // clean D2D stage, too many D2P losses
    double p2 = 0.0;       // more than s D2D stragglers
    double p3 = 0.0;       // 1..s D2D stragglers and too many extra D2P losses
    double p_o = 0.0;      // total: p1 + p2 + p3
};

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::uint64_t trials = 0;
    std::uint64_t failures = 0;
};

OutageReport closed_form_outage(int clients, int tolerance, double q);

// Simulates the two-stage link process trial by trial: a client is a D2D
// straggler when any of its s incoming links is down; surviving clients
// reach the PS independently with probability 1 - q_b. Per-trial RNG keys
// make the result independent of how trials are blocked across threads.
MonteCarloEstimate monte_carlo_outage(int clients, int tolerance, double q_a, double q_b,
                                      std::uint64_t trials, std::uint64_t seed,
                                      int threads = 1);

}  // namespace cogc::outage
