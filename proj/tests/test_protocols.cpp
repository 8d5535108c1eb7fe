#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cogc/channel.hpp"
#include "cogc/errors.hpp"
#include "cogc/fl_core.hpp"
#include "cogc/gc_code.hpp"
#include "cogc/outage_analysis.hpp"
#include "cogc/protocols.hpp"
#include "cogc/quantize.hpp"
#include "cogc/rng.hpp"

using namespace cogc;

namespace {

struct Fixture {
    gc::GcScheme scheme;
    fl::ModelSpec model;
    std::vector<fl::ClientState> clients;
    Eigen::VectorXd initial;
    fl::Dataset test_set;
    proto::ProtocolConfig cfg;
};

Fixture make_fixture(int m_count, int tolerance, std::uint64_t seed, bool quantize,
                     int classes = 4, int dim = 6) {
    Fixture f;
    f.scheme = gc::construct_gc_scheme(m_count, tolerance, seed);
    f.model.kind = fl::ModelSpec::Kind::logistic;
    f.model.classes = classes;
    f.model.feature_dim = dim;
    auto data = fl::make_blobs(classes, dim, 40 * m_count, 3.0, 1.0,
                               rng::key(seed, rng::Tag::blob_centers),
                               rng::key(seed, rng::Tag::blob_train));
    f.test_set =
        fl::make_blobs(classes, dim, 200, 3.0, 1.0, rng::key(seed, rng::Tag::blob_centers),
                               rng::key(seed, rng::Tag::blob_test));
    auto part = fl::partition_dataset(data, m_count, fl::PartitionKind::iid, 0, seed);
    f.initial = fl::init_params(f.model, rng::key(seed, rng::Tag::model_init));
    f.clients.resize(m_count);
    for (int m = 0; m < m_count; ++m) {
        f.clients[m].id = m;
        f.clients[m].shard = std::move(part.shards[m]);
        f.clients[m].weight = part.weights[m];
        f.clients[m].params = f.initial;
        f.clients[m].last_sync = f.initial;
    }
    f.cfg.local_steps = 3;
    f.cfg.eta = 0.02;
    f.cfg.batch = 8;
    f.cfg.quantize = quantize;
    f.cfg.quantizer = quant::QuantizerConfig{8, 0.0, 1.0};
    return f;
}

channel::ConnectivityDraw all_up_draw(const gc::GcScheme& scheme) {
    return channel::draw_connectivity(scheme, 0.0, 0.0, 0, 1);
}

// Independent oracle: replays the round's training and quantization with the
// same keyed streams and returns sum_m p_m Q(delta_m).
Eigen::VectorXd weighted_update_oracle(const Fixture& f, std::uint64_t seed,
                                       int wall_round) {
    auto clients = f.clients;  // fresh copies at the pre-round state
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(f.initial.size());
    for (std::size_t m = 0; m < clients.size(); ++m) {
        fl::local_sgd(clients[m], f.model, f.cfg.local_steps, f.cfg.eta, f.cfg.batch,
                      rng::key(seed, rng::Tag::sgd_batch, m,
                               static_cast<std::uint64_t>(wall_round)));
        Eigen::VectorXd delta = fl::local_update_delta(clients[m]);
        if (f.cfg.quantize) {
            delta = quant::quantize_vector(
                        delta, f.cfg.quantizer,
                        rng::key(seed, rng::Tag::quantizer, m,
                                 static_cast<std::uint64_t>(wall_round)))
                        .values;
        }
        expected += clients[m].weight * delta;
    }
    return expected;
}

double rel_inf_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    return (got - want).cwiseAbs().maxCoeff() / std::max(1e-300, want.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("clean round recovers the exact weighted quantized update") {
    auto f = make_fixture(6, 2, 21, true);
    const auto expected = weighted_update_oracle(f, 21, 1);
    Eigen::VectorXd global = f.initial;
    const auto outcome = proto::cogc_round(f.clients, global, true, f.scheme,
                                           all_up_draw(f.scheme), f.cfg, f.model, 21, 1);
    REQUIRE(outcome.success);
    REQUIRE(outcome.recovered_update.has_value());
    CHECK(rel_inf_error(*outcome.recovered_update, expected) < 1e-9);
    CHECK((global - (f.initial + expected)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(outcome.d2d_full_set.size() == 6);
    CHECK(outcome.d2p_received.size() == 6);
}

TEST_CASE("every tolerated D2P straggler pattern still recovers exactly") {
    auto f = make_fixture(6, 2, 22, true);
    const auto expected = weighted_update_oracle(f, 22, 1);
    for (const auto& pattern : gc::enumerate_subsets(6, 2)) {
        auto clients = f.clients;
        Eigen::VectorXd global = f.initial;
        auto draw = all_up_draw(f.scheme);
        for (int m : pattern) draw.tau[m] = 0;
        const auto outcome = proto::cogc_round(clients, global, true, f.scheme, draw,
                                               f.cfg, f.model, 22, 1);
        REQUIRE(outcome.success);
        CHECK(rel_inf_error(*outcome.recovered_update, expected) < 1e-9);
    }
}

TEST_CASE("a silent D2D straggler's update still arrives through its neighbors") {
    auto f = make_fixture(6, 2, 23, true);
    const auto expected = weighted_update_oracle(f, 23, 1);
    auto draw = all_up_draw(f.scheme);
    draw.d2d_up[4][0] = 0;  // client 4 misses one neighbor message
    Eigen::VectorXd global = f.initial;
    const auto outcome =
        proto::cogc_round(f.clients, global, true, f.scheme, draw, f.cfg, f.model, 23, 1);
    REQUIRE(outcome.success);
    CHECK(outcome.d2d_full_set.size() == 5);
    CHECK(outcome.decoded_neighbors[4].size() == 1);
    // The recovered update still includes client 4's quantized delta.
    CHECK(rel_inf_error(*outcome.recovered_update, expected) < 1e-9);
}

TEST_CASE("one straggler too many fails the round and leaves the model untouched") {
    auto f = make_fixture(6, 2, 24, true);
    auto draw = all_up_draw(f.scheme);
    draw.tau[0] = draw.tau[2] = draw.tau[5] = 0;  // s + 1 = 3 losses
    Eigen::VectorXd global = f.initial;
    const Eigen::VectorXd before = global;
    const auto outcome =
        proto::cogc_round(f.clients, global, true, f.scheme, draw, f.cfg, f.model, 24, 1);
    CHECK(!outcome.success);
    CHECK(!outcome.recovered_update.has_value());
    CHECK(global == before);  // bit-identical
}

TEST_CASE("scheme and client count must agree") {
    auto f = make_fixture(5, 1, 25, false);
    auto wrong = gc::construct_gc_scheme(6, 1, 25);
    Eigen::VectorXd global = f.initial;
    CHECK_THROWS_AS(proto::cogc_round(f.clients, global, true, wrong,
                                      all_up_draw(wrong), f.cfg, f.model, 25, 1),
                    SchemeMismatch);
}

TEST_CASE("baseline rounds") {
    auto f = make_fixture(5, 1, 26, true);

    SUBCASE("qfl matches a clean cogc round almost exactly") {
        auto qfl_clients = f.clients;
        Eigen::VectorXd qfl_global = f.initial;
        proto::qfl_round(qfl_clients, qfl_global, f.cfg, f.model, 26, 1);

        auto cogc_clients = f.clients;
        Eigen::VectorXd cogc_global = f.initial;
        proto::cogc_round(cogc_clients, cogc_global, true, f.scheme,
                          all_up_draw(f.scheme), f.cfg, f.model, 26, 1);
        CHECK(rel_inf_error(cogc_global, qfl_global) < 1e-10);
    }

    SUBCASE("zero deltas leave the model unchanged") {
        // A saturated global model yields underflowing gradients, so every
        // delta is exactly zero and quantizes to the zero knob.
        auto clients = f.clients;
        fl::Dataset tiny;
        tiny.classes = f.model.classes;
        tiny.features = Eigen::MatrixXd::Zero(1, f.model.feature_dim);
        tiny.features(0, 0) = 1.0;
        tiny.labels = {0};
        Eigen::VectorXd global = Eigen::VectorXd::Zero(f.initial.size());
        global.segment(0, f.model.feature_dim).setConstant(800.0);
        for (auto& c : clients) c.shard = tiny;
        const Eigen::VectorXd before = global;
        proto::qfl_round(clients, global, f.cfg, f.model, 26, 1);
        CHECK(global == before);
    }

    SUBCASE("nothing received leaves the blind model unchanged") {
        auto clients = f.clients;
        Eigen::VectorXd global = f.initial;
        const Eigen::VectorXd before = global;
        const auto info = proto::blind_round(clients, global, 1.0, f.cfg, f.model, 26, 1);
        CHECK(!info.updated);
        CHECK(global == before);
    }

    SUBCASE("unquantized aggregation equals the weighted model average") {
        // With full participation and a shared sync point, applying the
        // weighted deltas is algebraically the weighted mean of the local
        // models.
        auto clients = f.clients;
        auto cfg = f.cfg;
        cfg.quantize = false;
        Eigen::VectorXd global = f.initial;
        proto::qfl_round(clients, global, cfg, f.model, 26, 1);
        Eigen::VectorXd averaged = Eigen::VectorXd::Zero(global.size());
        for (const auto& client : clients) averaged += client.weight * client.params;
        CHECK((global - averaged).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("a fresh sync point has a zero delta") {
        CHECK(fl::local_update_delta(f.clients[0]).isZero(0.0));
    }

    SUBCASE("non-blind with every link up equals qfl") {
        auto a = f.clients;
        Eigen::VectorXd global_a = f.initial;
        proto::nonblind_round(a, global_a, 0.0, f.cfg, f.model, 26, 1);
        auto b = f.clients;
        Eigen::VectorXd global_b = f.initial;
        proto::qfl_round(b, global_b, f.cfg, f.model, 26, 1);
        CHECK(rel_inf_error(global_a, global_b) < 1e-12);
    }

    SUBCASE("blind with every link up equals qfl bitwise") {
        auto a = f.clients;
        Eigen::VectorXd global_a = f.initial;
        proto::blind_round(a, global_a, 0.0, f.cfg, f.model, 26, 1);
        auto b = f.clients;
        Eigen::VectorXd global_b = f.initial;
        proto::qfl_round(b, global_b, f.cfg, f.model, 26, 1);
        CHECK(global_a == global_b);
    }
}

TEST_CASE("partial participation algebra") {
    // Deterministic single-coordinate "models": craft clients whose deltas
    // are known by construction through a one-step saturated gradient.
    auto f = make_fixture(4, 1, 27, false);
    f.cfg.local_steps = 1;

    // Find the first keyed D2P pattern at q = 0.5 that is properly partial.
    int round = 0;
    std::vector<int> received;
    for (int w = 1; w <= 50 && received.empty(); ++w) {
        std::vector<int> arrived;
        for (int m = 0; m < 4; ++m)
            if (channel::d2p_link_up(27, w, m, 0.5)) arrived.push_back(m);
        if (!arrived.empty() && arrived.size() < 4) {
            round = w;
            received = arrived;
        }
    }
    REQUIRE(round > 0);

    // Replay the round per client to learn individual deltas.
    std::vector<Eigen::VectorXd> deltas(4);
    for (int m = 0; m < 4; ++m) {
        auto c = f.clients[m];
        fl::local_sgd(c, f.model, 1, f.cfg.eta, f.cfg.batch,
                      rng::key(27, rng::Tag::sgd_batch, m, round));
        deltas[m] = fl::local_update_delta(c);
    }

    SUBCASE("non-blind renormalizes by the received mass") {
        auto clients = f.clients;
        Eigen::VectorXd global = f.initial;
        proto::nonblind_round(clients, global, 0.5, f.cfg, f.model, 27, round);
        Eigen::VectorXd expected = Eigen::VectorXd::Zero(f.initial.size());
        double mass = 0.0;
        for (int m : received) {
            expected += f.clients[m].weight * deltas[m];
            mass += f.clients[m].weight;
        }
        expected /= mass;
        CHECK(rel_inf_error(global - f.initial, expected) < 1e-12);
    }

    SUBCASE("blind applies the received mass without renormalization") {
        auto clients = f.clients;
        Eigen::VectorXd global = f.initial;
        proto::blind_round(clients, global, 0.5, f.cfg, f.model, 27, round);
        Eigen::VectorXd expected = Eigen::VectorXd::Zero(f.initial.size());
        for (int m : received) expected += f.clients[m].weight * deltas[m];
        CHECK(rel_inf_error(global - f.initial, expected) < 1e-12);
    }
}

TEST_CASE("perfect channels give a trivial mirror trace") {
    auto f = make_fixture(4, 1, 28, true);
    const auto result = proto::run_cogc(f.clients, f.initial, f.scheme, 0.0, 0.0, f.cfg,
                                        f.model, f.test_set, 10, 28);
    CHECK(result.trace.executed == 10);
    CHECK(result.trace.gaps == std::vector<int>(10, 1));
    CHECK(result.rounds.size() == 10);
    for (const auto& r : result.rounds) CHECK(r.success);
}

TEST_CASE("gap statistics match the geometric law at p_o near one half") {
    // Find q with P_O ~= 0.5 through the closed form (bisection).
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (outage::closed_form_outage(10, 5, mid).p_o < 0.5 ? lo : hi) = mid;
    }
    const double q = 0.5 * (lo + hi);
    const double p_o = outage::closed_form_outage(10, 5, q).p_o;
    CHECK(p_o == doctest::Approx(0.5).epsilon(1e-6));

    auto f = make_fixture(10, 5, 29, true, 3, 4);
    f.cfg.batch = 4;
    const auto result = proto::run_cogc(f.clients, f.initial, f.scheme, q, q, f.cfg,
                                        f.model, f.test_set, 200, 29);
    const auto& gaps = result.trace.gaps;
    REQUIRE(gaps.size() > 30);
    const double mean =
        std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    // Geometric: mean 1/(1-p), variance p/(1-p)^2.
    const double sigma =
        std::sqrt(p_o / ((1 - p_o) * (1 - p_o)) / static_cast<double>(gaps.size()));
    CHECK(std::abs(mean - 1.0 / (1.0 - p_o)) < 3.0 * sigma);

    // Second moment within 5 standard errors of (1+p)/(1-p)^2; the error bar
    // comes from the geometric law's fourth moment.
    double second = 0.0, fourth = 0.0;
    for (int g : gaps) {
        const double g2 = static_cast<double>(g) * g;
        second += g2;
        fourth += g2 * g2;
    }
    second /= static_cast<double>(gaps.size());
    fourth /= static_cast<double>(gaps.size());
    const double expected_second = (1.0 + p_o) / ((1.0 - p_o) * (1.0 - p_o));
    const double second_se =
        std::sqrt(std::max(fourth - second * second, 0.0) /
                  static_cast<double>(gaps.size()));
    CHECK(std::abs(second - expected_second) < 5.0 * second_se);

    // Trace bookkeeping: wall rounds = sum of gaps >= T, partial sums < T.
    const int total = std::accumulate(gaps.begin(), gaps.end(), 0);
    CHECK(total == static_cast<int>(result.rounds.size()));
    CHECK(total >= 200);
    CHECK(total - gaps.back() < 200);
}

TEST_CASE("success rate tracks the closed-form outage probability") {
    const double q = 0.0639016;
    const double p_o = outage::closed_form_outage(10, 5, q).p_o;
    auto f = make_fixture(10, 5, 30, true, 3, 4);
    f.cfg.batch = 4;
    const auto result = proto::run_cogc(f.clients, f.initial, f.scheme, q, q, f.cfg,
                                        f.model, f.test_set, 400, 30);
    const int walls = static_cast<int>(result.rounds.size());
    int successes = 0;
    for (const auto& r : result.rounds) successes += r.success ? 1 : 0;
    const double rate = static_cast<double>(successes) / walls;
    const double sigma = std::sqrt(p_o * (1 - p_o) / walls);
    CHECK(std::abs(rate - (1.0 - p_o)) < 4.0 * sigma);
}

TEST_CASE("mirror process replay is bit-identical when the algebra is exact") {
    // s = 0 keeps the combination row at exactly 1.0 per client, so the
    // gradient-coding aggregation reduces to the plain weighted sum and the
    // mirror replay must match bit for bit.
    auto f = make_fixture(5, 0, 31, false);
    const double q_d2p = 0.35;
    const auto result = proto::run_cogc(f.clients, f.initial, f.scheme, 0.0, q_d2p, f.cfg,
                                        f.model, f.test_set, 30, 31);

    // Success-indexed model states from the recorded run.
    std::vector<Eigen::VectorXd> cogc_models;
    {
        auto clients = f.clients;
        Eigen::VectorXd global = f.initial;
        bool prev = true;
        for (std::size_t w = 1; w <= result.rounds.size(); ++w) {
            const auto draw = channel::draw_connectivity(f.scheme, 0.0, q_d2p, 31,
                                                         static_cast<int>(w));
            const auto outcome = proto::cogc_round(clients, global, prev, f.scheme, draw,
                                                   f.cfg, f.model, 31, static_cast<int>(w));
            prev = outcome.success;
            if (outcome.success) cogc_models.push_back(global);
        }
    }
    REQUIRE(cogc_models.size() == result.trace.gaps.size());

    // Mirror replay: R_j * I local steps per executed round, plain weighted
    // aggregation, batch streams keyed by the underlying wall round.
    auto clients = f.clients;
    Eigen::VectorXd global = f.initial;
    int wall = 0;
    for (std::size_t j = 0; j < result.trace.gaps.size(); ++j) {
        for (auto& c : clients) {
            c.params = global;
            c.last_sync = global;
        }
        for (int g = 0; g < result.trace.gaps[j]; ++g) {
            ++wall;
            for (std::size_t m = 0; m < clients.size(); ++m)
                fl::local_sgd(clients[m], f.model, f.cfg.local_steps, f.cfg.eta,
                              f.cfg.batch,
                              rng::key(31, rng::Tag::sgd_batch, m,
                                       static_cast<std::uint64_t>(wall)));
        }
        Eigen::VectorXd update = Eigen::VectorXd::Zero(global.size());
        for (std::size_t m = 0; m < clients.size(); ++m) {
            const Eigen::VectorXd delta = fl::local_update_delta(clients[m]);
            update += f.scheme.a_matrix(0, static_cast<int>(m)) *
                      (f.scheme.b_matrix(static_cast<int>(m), static_cast<int>(m)) *
                       (clients[m].weight * delta));
        }
        global += update;
        CHECK(global == cogc_models[j]);
    }
}

TEST_CASE("mirror equivalence holds within tolerance for s > 0") {
    auto f = make_fixture(6, 2, 32, false);
    const double q = 0.2;
    const auto result = proto::run_cogc(f.clients, f.initial, f.scheme, q, q, f.cfg,
                                        f.model, f.test_set, 25, 32);

    auto clients = f.clients;
    Eigen::VectorXd global = f.initial;
    int wall = 0;
    for (std::size_t j = 0; j < result.trace.gaps.size(); ++j) {
        for (auto& c : clients) {
            c.params = global;
            c.last_sync = global;
        }
        for (int g = 0; g < result.trace.gaps[j]; ++g) {
            ++wall;
            for (std::size_t m = 0; m < clients.size(); ++m)
                fl::local_sgd(clients[m], f.model, f.cfg.local_steps, f.cfg.eta,
                              f.cfg.batch,
                              rng::key(32, rng::Tag::sgd_batch, m,
                                       static_cast<std::uint64_t>(wall)));
        }
        Eigen::VectorXd update = Eigen::VectorXd::Zero(global.size());
        for (std::size_t m = 0; m < clients.size(); ++m)
            update += clients[m].weight * fl::local_update_delta(clients[m]);
        global += update;
    }
    CHECK(rel_inf_error(global, result.final_params) < 1e-9);
}

TEST_CASE("pathological channels trip the non-termination guard") {
    auto f = make_fixture(4, 1, 33, false);
    CHECK_THROWS_AS(proto::run_cogc(f.clients, f.initial, f.scheme, 1.0, 1.0, f.cfg,
                                    f.model, f.test_set, 2, 33),
                    NonTermination);
}

TEST_CASE("seeded cogc run regression") {
    auto f = make_fixture(10, 5, 34, true, 3, 4);
    f.cfg.batch = 4;
    const auto result = proto::run_cogc(f.clients, f.initial, f.scheme, 0.0639016,
                                        0.0639016, f.cfg, f.model, f.test_set, 20, 34);
    REQUIRE(result.rounds.size() >= 20);
    // Frozen on first run of this configuration.
    CHECK(result.trace.executed == 19);
    CHECK(result.rounds.back().accuracy == doctest::Approx(0.845).epsilon(1e-12));
    CHECK(result.rounds.back().loss ==
          doctest::Approx(0.55097793756942781).epsilon(1e-12));
}
