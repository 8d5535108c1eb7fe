#include "cogc/protocols.hpp"

#include "cogc/errors.hpp"
#include "cogc/rng.hpp"

#include <algorithm>

namespace cogc::proto {

namespace {

constexpr int kWallCapFactor = 100;

// Quantizes a round delta, or passes it through when quantization is off.
Eigen::VectorXd transmit_delta(const Eigen::VectorXd& delta, const ProtocolConfig& cfg,
                               std::uint64_t seed, int client, int wall_round,
                               std::int64_t& clamped, double& max_coord) {
    max_coord = std::max(max_coord, delta.cwiseAbs().maxCoeff());
    if (!cfg.quantize) return delta;
    auto qv = quant::quantize_vector(
        delta, cfg.quantizer,
        rng::key(seed, rng::Tag::quantizer, static_cast<std::uint64_t>(client),
                 static_cast<std::uint64_t>(wall_round)));
    clamped += qv.clamped;
    return std::move(qv.values);
}

void broadcast_global(std::vector<fl::ClientState>& clients, const Eigen::VectorXd& global) {
    for (auto& client : clients) {
        client.params = global;
        client.last_sync = global;
    }
}

// Runs the local-training leg shared by every protocol and returns the
// quantized (or raw) deltas in client order.
std::vector<Eigen::VectorXd> train_and_transmit(std::vector<fl::ClientState>& clients,
                                                const ProtocolConfig& cfg,
                                                const fl::ModelSpec& model,
                                                std::uint64_t seed, int wall_round,
                                                std::int64_t& clamped, double& max_coord) {
    std::vector<Eigen::VectorXd> transmitted(clients.size());
    for (std::size_t m = 0; m < clients.size(); ++m) {
        fl::local_sgd(clients[m], model, cfg.local_steps, cfg.eta, cfg.batch,
                      rng::key(seed, rng::Tag::sgd_batch, m,
                               static_cast<std::uint64_t>(wall_round)));
        transmitted[m] = transmit_delta(fl::local_update_delta(clients[m]), cfg, seed,
                                        static_cast<int>(m), wall_round, clamped,
                                        max_coord);
    }
    return transmitted;
}

}  // namespace

RoundOutcome cogc_round(std::vector<fl::ClientState>& clients, Eigen::VectorXd& global,
                        bool broadcast, const gc::GcScheme& scheme,
                        const channel::ConnectivityDraw& draw, const ProtocolConfig& cfg,
                        const fl::ModelSpec& model, std::uint64_t seed, int wall_round) {
    const int m_count = scheme.clients;
    if (static_cast<int>(clients.size()) != m_count)
        throw SchemeMismatch("scheme is for " + std::to_string(m_count) + " clients, got " +
                             std::to_string(clients.size()));

    RoundOutcome outcome;
    outcome.round = wall_round;

    if (broadcast) broadcast_global(clients, global);
    const auto transmitted = train_and_transmit(clients, cfg, model, seed, wall_round,
                                                outcome.clamped, outcome.max_delta_coord);

    // D2D stage: a client only computes its partial sum after decoding all
    // s neighbor messages; otherwise it stays silent for the round.
    outcome.neighbor_sets.resize(m_count);
    outcome.decoded_neighbors.resize(m_count);
    std::vector<Eigen::VectorXd> partial_sums(m_count);
    std::vector<char> in_full_set(m_count, 0);
    for (int m = 0; m < m_count; ++m) {
        outcome.neighbor_sets[m] = scheme.neighbors(m);
        const auto& up = draw.d2d_up[m];
        for (std::size_t j = 0; j < up.size(); ++j)
            if (up[j]) outcome.decoded_neighbors[m].push_back(outcome.neighbor_sets[m][j]);
        if (outcome.decoded_neighbors[m].size() != outcome.neighbor_sets[m].size()) continue;
        in_full_set[m] = 1;
        outcome.d2d_full_set.push_back(m);
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(global.size());
        for (int k = 0; k < m_count; ++k) {
            const double b = scheme.b_matrix(m, k);
            if (b != 0.0) sum += b * (clients[k].weight * transmitted[k]);
        }
        partial_sums[m] = std::move(sum);
    }

    // D2P stage.
    std::vector<int> tau_indicator(m_count, 0);
    for (int m = 0; m < m_count; ++m) {
        if (in_full_set[m] && draw.tau[m]) {
            tau_indicator[m] = 1;
            outcome.d2p_received.push_back(m);
        }
    }

    auto pattern = gc::detect_straggler_pattern(scheme, tau_indicator);
    pattern.round = wall_round;
    outcome.matched_row = pattern.matched_row;
    if (pattern.matched_row) {
        Eigen::VectorXd update = Eigen::VectorXd::Zero(global.size());
        for (int m : outcome.d2p_received)
            update += scheme.a_matrix(*pattern.matched_row, m) * partial_sums[m];
        global += update;
        outcome.recovered_update = std::move(update);
        outcome.success = true;
    }
    return outcome;
}

BaselineRoundInfo qfl_round(std::vector<fl::ClientState>& clients, Eigen::VectorXd& global,
                            const ProtocolConfig& cfg, const fl::ModelSpec& model,
                            std::uint64_t seed, int wall_round) {
    BaselineRoundInfo info;
    broadcast_global(clients, global);
    const auto transmitted = train_and_transmit(clients, cfg, model, seed, wall_round,
                                                info.clamped, info.max_delta_coord);
    Eigen::VectorXd update = Eigen::VectorXd::Zero(global.size());
    for (std::size_t m = 0; m < clients.size(); ++m)
        update += clients[m].weight * transmitted[m];
    global += update;
    info.received = static_cast<int>(clients.size());
    info.updated = true;
    return info;
}

namespace {

BaselineRoundInfo partial_participation_round(std::vector<fl::ClientState>& clients,
                                              Eigen::VectorXd& global, double q_d2p,
                                              const ProtocolConfig& cfg,
                                              const fl::ModelSpec& model,
                                              std::uint64_t seed, int wall_round,
                                              bool renormalize) {
    BaselineRoundInfo info;
    broadcast_global(clients, global);
    const auto transmitted = train_and_transmit(clients, cfg, model, seed, wall_round,
                                                info.clamped, info.max_delta_coord);

    Eigen::VectorXd update = Eigen::VectorXd::Zero(global.size());
    double received_mass = 0.0;
    for (std::size_t m = 0; m < clients.size(); ++m) {
        if (!channel::d2p_link_up(seed, wall_round, static_cast<int>(m), q_d2p)) continue;
        update += clients[m].weight * transmitted[m];
        received_mass += clients[m].weight;
        ++info.received;
    }
    if (info.received == 0) return info;
    if (renormalize) update /= received_mass;
    global += update;
    info.updated = true;
    return info;
}

}  // namespace

BaselineRoundInfo nonblind_round(std::vector<fl::ClientState>& clients,
                                 Eigen::VectorXd& global, double q_d2p,
                                 const ProtocolConfig& cfg, const fl::ModelSpec& model,
                                 std::uint64_t seed, int wall_round) {
    return partial_participation_round(clients, global, q_d2p, cfg, model, seed,
                                       wall_round, /*renormalize=*/true);
}

BaselineRoundInfo blind_round(std::vector<fl::ClientState>& clients, Eigen::VectorXd& global,
                              double q_d2p, const ProtocolConfig& cfg,
                              const fl::ModelSpec& model, std::uint64_t seed,
                              int wall_round) {
    return partial_participation_round(clients, global, q_d2p, cfg, model, seed,
                                       wall_round, /*renormalize=*/false);
}

RunResult run_cogc(std::vector<fl::ClientState> clients, Eigen::VectorXd global,
                   const gc::GcScheme& scheme, double q_d2d, double q_d2p,
                   const ProtocolConfig& cfg, const fl::ModelSpec& model,
                   const fl::Dataset& test_set, int preliminary_rounds,
                   std::uint64_t seed) {
    if (preliminary_rounds < 1) throw InvalidParams("round budget must be >= 1");
    RunResult result;
    result.trace.preliminary = preliminary_rounds;

    bool prev_success = true;  // the PS broadcasts the initial model
    int gap = 0;
    int wall = 0;
    const int cap = kWallCapFactor * preliminary_rounds;
    while (true) {
        ++wall;
        if (wall > cap)
            throw NonTermination("no successful round in " + std::to_string(cap) +
                                 " wall rounds; outage probability too high");
        const auto draw = channel::draw_connectivity(scheme, q_d2d, q_d2p, seed, wall);
        const auto outcome = cogc_round(clients, global, prev_success, scheme, draw, cfg,
                                        model, seed, wall);
        prev_success = outcome.success;
        result.clamped_total += outcome.clamped;
        result.max_delta_coord = std::max(result.max_delta_coord, outcome.max_delta_coord);
        ++gap;
        if (outcome.success) {
            result.trace.gaps.push_back(gap);
            gap = 0;
        }

        RoundRecord record;
        record.wall_round = wall;
        record.successful_round = static_cast<int>(result.trace.gaps.size());
        record.success = outcome.success;
        record.n_d2d_stragglers =
            scheme.clients - static_cast<int>(outcome.d2d_full_set.size());
        record.n_d2p_lost = static_cast<int>(outcome.d2d_full_set.size()) -
                            static_cast<int>(outcome.d2p_received.size());
        const auto eval = fl::evaluate(model, global, test_set);
        record.accuracy = eval.accuracy;
        record.loss = eval.loss;
        result.rounds.push_back(record);

        if (wall >= preliminary_rounds && outcome.success) break;
    }
    result.trace.executed = static_cast<int>(result.trace.gaps.size());
    result.final_params = std::move(global);
    return result;
}

RunResult run_baseline(Method method, std::vector<fl::ClientState> clients,
                       Eigen::VectorXd global, double q_d2p, const ProtocolConfig& cfg,
                       const fl::ModelSpec& model, const fl::Dataset& test_set, int rounds,
                       std::uint64_t seed) {
    if (method == Method::cogc) throw InvalidParams("run_baseline does not drive cogc");
    if (rounds < 1) throw InvalidParams("round budget must be >= 1");
    RunResult result;
    result.trace.preliminary = rounds;

    int successes = 0;
    for (int wall = 1; wall <= rounds; ++wall) {
        BaselineRoundInfo info;
        switch (method) {
            case Method::qfl:
                info = qfl_round(clients, global, cfg, model, seed, wall);
                break;
            case Method::nonblind:
                info = nonblind_round(clients, global, q_d2p, cfg, model, seed, wall);
                break;
            case Method::blind:
                info = blind_round(clients, global, q_d2p, cfg, model, seed, wall);
                break;
            case Method::cogc:
                break;
        }
        result.clamped_total += info.clamped;
        result.max_delta_coord = std::max(result.max_delta_coord, info.max_delta_coord);
        if (info.updated) ++successes;

        RoundRecord record;
        record.wall_round = wall;
        record.successful_round = successes;
        record.success = info.updated;
        record.n_d2d_stragglers = 0;
        record.n_d2p_lost = static_cast<int>(clients.size()) - info.received;
        const auto eval = fl::evaluate(model, global, test_set);
        record.accuracy = eval.accuracy;
        record.loss = eval.loss;
        result.rounds.push_back(record);
        result.trace.gaps.push_back(1);
    }
    result.trace.executed = rounds;
    result.final_params = std::move(global);
    return result;
}

}  // namespace cogc::proto
