#pragma once

// Fading-outage link model and per-round connectivity draws.
//
// A Rayleigh-faded link at SNR gamma and rate R is in outage when the
// capacity (1/2)log(1 + |h|^2 gamma) drops below R; integrating the fading
// gives q = 1 - exp(-g / (2 sigma^2)) with g = (2^(2R) - 1) / gamma. The
// linearized mode keeps only the first-order term q ~= g / (2 sigma^2).
// Delivered messages are bit-exact, lost ones vanish whole (erasure links).

#include <cstdint>
#include <vector>

#include "cogc/gc_code.hpp"

namespace cogc::channel {

enum class OutageMode { exact, linearized };

struct ChannelConfig {
    double rate = 0.2;       // R, channel uses per symbol
    double snr_a = 5.0;      // gamma_a, device-to-device
    double snr_b = 5.0;      // gamma_b, device-to-PS
    double sigma2_a = 1.0;   // fading variance, D2D
    double sigma2_b = 1.0;   // fading variance, D2P
    OutageMode mode = OutageMode::exact;

    double q_d2d() const;
    double q_d2p() const;
    void validate() const;
};

// Per-round Bernoulli link realization. d2d_up is indexed [receiver][neighbor
// slot] following GcScheme::neighbors order; tau is the D2P up indicator.
struct ConnectivityDraw {
    int round = 0;
    std::vector<std::vector<std::uint8_t>> d2d_up;
    std::vector<std::uint8_t> tau;
};

// Eq.-style closed form for a single link.
double link_outage_probability(double rate, double snr, double sigma2, OutageMode mode);

// D2P SNR that equalizes the two stages' outage probabilities:
// gamma_b = (sigma_a^2 / sigma_b^2) * gamma_a.
double balanced_d2p_snr(double snr_a, double sigma2_a, double sigma2_b);

// Independent keyed Bernoulli draws on the cyclic support plus the D2P
// vector; a given (seed, round, link) always yields the same coin.
ConnectivityDraw draw_connectivity(const gc::GcScheme& scheme, double q_a, double q_b,
                                   std::uint64_t seed, int round);

// Keyed single-link draws, exposed for the baselines that skip the D2D stage.
bool d2p_link_up(std::uint64_t seed, int round, int client, double q_b);

}  // namespace cogc::channel
