#include "cogc/channel.hpp"

#include "cogc/errors.hpp"
#include "cogc/rng.hpp"

#include <algorithm>
#include <cmath>

namespace cogc::channel {

double link_outage_probability(double rate, double snr, double sigma2, OutageMode mode) {
    if (!(rate > 0.0)) throw InvalidParams("rate must be positive");
    if (!(snr > 0.0)) throw InvalidParams("snr must be positive");
    if (!(sigma2 > 0.0)) throw InvalidParams("sigma2 must be positive");
    const double g = (std::exp2(2.0 * rate) - 1.0) / snr;
    const double x = g / (2.0 * sigma2);
    if (mode == OutageMode::linearized) return std::min(1.0, x);
    return -std::expm1(-x);
}

double balanced_d2p_snr(double snr_a, double sigma2_a, double sigma2_b) {
    if (!(snr_a > 0.0) || !(sigma2_a > 0.0) || !(sigma2_b > 0.0))
        throw InvalidParams("balanced_d2p_snr requires positive inputs");
    return snr_a * sigma2_a / sigma2_b;
}

double ChannelConfig::q_d2d() const {
    return link_outage_probability(rate, snr_a, sigma2_a, mode);
}

double ChannelConfig::q_d2p() const {
    return link_outage_probability(rate, snr_b, sigma2_b, mode);
}

void ChannelConfig::validate() const {
    if (!(rate > 0.0)) throw InvalidParams("channel rate must be positive");
    if (!(snr_a > 0.0) || !(snr_b > 0.0)) throw InvalidParams("snr must be positive");
    if (!(sigma2_a > 0.0) || !(sigma2_b > 0.0))
        throw InvalidParams("fading variance must be positive");
}

namespace {

inline bool link_up(std::uint64_t seed, rng::Tag tag, int round, std::uint64_t link_id,
                    double q) {
    const double u = rng::keyed_u01(
        rng::key(seed, tag, static_cast<std::uint64_t>(round), link_id));
    return u < 1.0 - q;
}

}  // namespace

bool d2p_link_up(std::uint64_t seed, int round, int client, double q_b) {
    return link_up(seed, rng::Tag::link_d2p, round, static_cast<std::uint64_t>(client), q_b);
}

ConnectivityDraw draw_connectivity(const gc::GcScheme& scheme, double q_a, double q_b,
                                   std::uint64_t seed, int round) {
    if (q_a < 0.0 || q_a > 1.0 || q_b < 0.0 || q_b > 1.0)
        throw InvalidParams("outage probabilities must lie in [0, 1]");
    const int m_count = scheme.clients;
    ConnectivityDraw draw;
    draw.round = round;
    draw.d2d_up.resize(m_count);
    draw.tau.resize(m_count);
    for (int m = 0; m < m_count; ++m) {
        const auto neigh = scheme.neighbors(m);
        draw.d2d_up[m].resize(neigh.size());
        for (std::size_t j = 0; j < neigh.size(); ++j) {
            const std::uint64_t link_id =
                static_cast<std::uint64_t>(m) * m_count + neigh[j];
            draw.d2d_up[m][j] = link_up(seed, rng::Tag::link_d2d, round, link_id, q_a);
        }
        draw.tau[m] = d2p_link_up(seed, round, m, q_b);
    }
    return draw;
}

}  // namespace cogc::channel
