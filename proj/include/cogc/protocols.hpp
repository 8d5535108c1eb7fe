#pragma once

// Round engines: the cooperative gradient-coding protocol and the three
// reference baselines (quantized FL with perfect links, non-blind and blind
// partial participation).
//
// A CoGC round either recovers the exact weighted update or leaves the
// global model untouched. Clients that lose any neighbor message stay
// silent; the server decodes only when at least M - s partial sums arrive,
// combining them with the A row matched to the straggler pattern. After a
// failed round clients keep training from their local models and the next
// delta spans every step since the last successful broadcast.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "cogc/channel.hpp"
#include "cogc/fl_core.hpp"
#include "cogc/gc_code.hpp"
#include "cogc/quantize.hpp"

namespace cogc::proto {

enum class Method { cogc, qfl, nonblind, blind };

struct ProtocolConfig {
    int local_steps = 5;   // I
    double eta = 0.01;
    int batch = 64;
    bool quantize = true;
    quant::QuantizerConfig quantizer;
};

struct RoundOutcome {
    int round = 0;
    double max_delta_coord = 0.0;
    std::vector<int> d2d_full_set;    // clients that decoded all s neighbors
    std::vector<int> d2p_received;    // clients whose partial sum reached the PS
    std::optional<int> matched_row;
    bool success = false;
    std::optional<Eigen::VectorXd> recovered_update;
    std::vector<std::vector<int>> neighbor_sets;      // per-client listen sets
    std::vector<std::vector<int>> decoded_neighbors;  // per-client decoded sets
    std::int64_t clamped = 0;
};

// Inter-success gaps of one run. gaps[j] counts the wall rounds spent on the
// j-th successful update, so their sum is the executed wall-round count.
struct MirrorTrace {
    std::vector<int> gaps;
    int executed = 0;     // T', number of successful updates
    int preliminary = 0;  // T
};

struct RoundRecord {
    int wall_round = 0;
    int successful_round = 0;  // successes up to and including this round
    bool success = false;
    int n_d2d_stragglers = 0;
    int n_d2p_lost = 0;
    double accuracy = 0.0;
    double loss = 0.0;
};

struct RunResult {
    MirrorTrace trace;
    std::vector<RoundRecord> rounds;
    Eigen::VectorXd final_params;
    std::int64_t clamped_total = 0;
    double max_delta_coord = 0.0;  // largest |delta coordinate| before quantization
};

// One CoGC round against an explicit connectivity draw. `broadcast` says
// whether the previous round succeeded (the PS only re-broadcasts then).
// Updates clients in place and `global` only on success.
RoundOutcome cogc_round(std::vector<fl::ClientState>& clients, Eigen::VectorXd& global,
                        bool broadcast, const gc::GcScheme& scheme,
                        const channel::ConnectivityDraw& draw, const ProtocolConfig& cfg,
                        const fl::ModelSpec& model, std::uint64_t seed, int wall_round);

struct BaselineRoundInfo {
    int received = 0;
    bool updated = false;
    std::int64_t clamped = 0;
    double max_delta_coord = 0.0;
};

// Full participation over perfect links.
BaselineRoundInfo qfl_round(std::vector<fl::ClientState>& clients, Eigen::VectorXd& global,
                            const ProtocolConfig& cfg, const fl::ModelSpec& model,
                            std::uint64_t seed, int wall_round);

// D2P erasures only; the PS knows the arrival set and renormalizes by the
// received weight mass. Skips the update when nothing arrives.
BaselineRoundInfo nonblind_round(std::vector<fl::ClientState>& clients,
                                 Eigen::VectorXd& global, double q_d2p,
                                 const ProtocolConfig& cfg, const fl::ModelSpec& model,
                                 std::uint64_t seed, int wall_round);

// D2P erasures with an oblivious PS: lost contributions count as zero.
BaselineRoundInfo blind_round(std::vector<fl::ClientState>& clients,
                              Eigen::VectorXd& global, double q_d2p,
                              const ProtocolConfig& cfg, const fl::ModelSpec& model,
                              std::uint64_t seed, int wall_round);

// Runs CoGC until at least `preliminary_rounds` wall rounds have executed and
// the last round succeeded. Walls are capped at 100x the budget.
RunResult run_cogc(std::vector<fl::ClientState> clients, Eigen::VectorXd global,
                   const gc::GcScheme& scheme, double q_d2d, double q_d2p,
                   const ProtocolConfig& cfg, const fl::ModelSpec& model,
                   const fl::Dataset& test_set, int preliminary_rounds,
                   std::uint64_t seed);

// Runs a baseline for exactly `rounds` rounds.
RunResult run_baseline(Method method, std::vector<fl::ClientState> clients,
                       Eigen::VectorXd global, double q_d2p, const ProtocolConfig& cfg,
                       const fl::ModelSpec& model, const fl::Dataset& test_set, int rounds,
                       std::uint64_t seed);

}  // namespace cogc::proto
