#include <doctest.h>

#include <cmath>

#include "cogc/bound.hpp"
#include "cogc/errors.hpp"
#include "cogc/rng.hpp"
#include "series_oracle.hpp"

using namespace cogc;
using cogc::testing::mpfr_series;

namespace {

bound::BoundParams base_params(double p_o, double rounds, int local_steps = 5) {
    bound::BoundParams bp;
    bp.smoothness = 1.0;
    bp.grad_variance = 1.0;
    bp.batch = 1;
    bp.clients = 10;
    bp.local_steps = local_steps;
    bp.rounds = rounds;
    bp.p_o = p_o;
    bp.paper_schedule = true;
    bp.f_star_gap = 1.0;
    bp.weights.assign(10, 0.1);
    bp.dissimilarity.assign(10, 1.0);
    bp.j_terms.assign(1, 0.1);
    return bp;
}

}  // namespace

TEST_CASE("geometric moments") {
    const auto zero = bound::geometric_moments(0.0);
    CHECK(zero.mean == 1.0);
    CHECK(zero.second_moment == 1.0);
    const auto half = bound::geometric_moments(0.5);
    CHECK(half.mean == doctest::Approx(2.0));
    CHECK(half.second_moment == doctest::Approx(6.0));
    CHECK_THROWS_AS(bound::geometric_moments(1.0), InvalidParams);
    CHECK_THROWS_AS(bound::geometric_moments(-0.1), InvalidParams);

    SUBCASE("sampling oracle at the published outage point") {
        const double p = 0.0703892;
        const auto m = bound::geometric_moments(p);
        rng::Stream stream(rng::key(0, rng::Tag::mc_trial, 99));
        const int n = 1000000;
        double sum = 0.0, sum_sq = 0.0;
        for (int i = 0; i < n; ++i) {
            double u = stream.next_u01();
            while (u == 0.0) u = stream.next_u01();
            const double r = std::floor(std::log(u) / std::log(p)) + 1.0;
            sum += r;
            sum_sq += r * r;
        }
        const double mean = sum / n;
        const double second = sum_sq / n;
        const double var = second - mean * mean;
        CHECK(std::abs(mean - m.mean) < 3.0 * std::sqrt(var / n));
        // Fourth-moment-based error bar for the second moment, padded.
        CHECK(std::abs(second - m.second_moment) < 0.01);
    }
}

TEST_CASE("series constants") {
    SUBCASE("degenerate geometric keeps only the first term") {
        auto bp = base_params(0.0, 1e4);
        const auto series = bound::series_constants(bp);
        const double eta = bp.effective_eta();
        const double denom = 1.0 - 5.0 * 6.0 * eta * eta;
        const double drift = 0.5 + eta * 5.0;
        CHECK(series.c1 ==
              doctest::Approx((2.0 / 3.0) * 6.0 * 11.0 * drift / denom).epsilon(1e-12));
        CHECK(series.c2 == doctest::Approx(0.5 * 6.0 * drift / denom).epsilon(1e-12));
        CHECK(series.tail_mass == 0.0);
    }

    SUBCASE("matches the 256-bit re-summation") {
        for (double p : {0.0, 0.07, 0.3}) {
            auto bp = base_params(p, 1e5);
            const auto series = bound::series_constants(bp);
            double c1 = 0.0, c2 = 0.0;
            int r_max = 0;
            mpfr_series(bp, &c1, &c2, &r_max);
            CHECK(series.r_max == r_max);
            CHECK(std::abs(series.c1 - c1) / c1 < 1e-10);
            CHECK(std::abs(series.c2 - c2) / c2 < 1e-10);
        }
    }

    SUBCASE("strictly increasing in the outage probability") {
        double prev = -1.0;
        for (double p = 0.0; p <= 0.31; p += 0.05) {
            auto bp = base_params(p, 1e5);
            const double c1 = bound::series_constants(bp).c1;
            CHECK(c1 > prev);
            prev = c1;
        }
    }

    SUBCASE("oversized learning rates are refused") {
        auto bp = base_params(0.0, 1e4);
        bp.paper_schedule = false;
        bp.eta = 0.2;  // eta^2 L^2 I (I+1) = 1.2 > 1
        CHECK_THROWS_AS(bound::series_constants(bp), DenominatorViolation);
    }

    SUBCASE("heavy tails are refused rather than truncated silently") {
        auto bp = base_params(0.2, 1e4);  // r_max = 5, tail 3.2e-4
        CHECK_THROWS_AS(bound::series_constants(bp), TailTooHeavy);
    }
}

TEST_CASE("assembled bound") {
    SUBCASE("noise-free limit keeps only the gap term") {
        auto bp = base_params(0.0, 1e4);
        bp.grad_variance = 0.0;
        bp.dissimilarity.assign(10, 0.0);
        bp.j_terms.assign(1, 0.0);
        const auto report = bound::theorem_bound(bp);
        CHECK(report.term_dissimilarity == 0.0);
        CHECK(report.term_variance == 0.0);
        CHECK(report.term_quantization == 0.0);
        const double eta = bp.effective_eta();
        CHECK(report.total ==
              doctest::Approx(2.0 * bp.f_star_gap / (eta * bp.local_steps * bp.rounds))
                  .epsilon(1e-12));
    }

    SUBCASE("strictly decreasing in the round budget") {
        // I = 2 keeps the H1 > 0 precondition satisfiable down to T = 1e3;
        // at I = 5 the schedule is not yet "small enough" there.
        double prev = std::numeric_limits<double>::infinity();
        for (double t : {1e3, 1e4, 1e5}) {
            const auto report = bound::theorem_bound(base_params(0.0, t, 2));
            CHECK(report.total < prev);
            prev = report.total;
        }
    }

    SUBCASE("strictly increasing in the outage probability") {
        double prev = 0.0;
        for (double p : {0.0, 0.2, 0.4}) {
            const auto report = bound::theorem_bound(base_params(p, 1e5));
            CHECK(report.total > prev);
            prev = report.total;
        }
    }

    SUBCASE("continuous at vanishing outage probability") {
        const auto at_zero = bound::theorem_bound(base_params(0.0, 1e4));
        const auto near_zero = bound::theorem_bound(base_params(1e-9, 1e4));
        CHECK(std::abs(at_zero.total - near_zero.total) / at_zero.total < 1e-6);
    }

    SUBCASE("over-aggressive schedules trip the H1 guard") {
        auto bp = base_params(0.005, 1e4);
        bp.paper_schedule = false;
        bp.eta = 0.05;
        CHECK_THROWS_AS(bound::theorem_bound(bp), NonPositiveH1);
    }

    SUBCASE("parameter validation names the problem") {
        auto bp = base_params(0.0, 1e4);
        bp.weights.assign(10, 0.2);
        CHECK_THROWS_AS(bound::theorem_bound(bp), InvalidParams);
        bp = base_params(0.0, 1e4);
        bp.dissimilarity.pop_back();
        CHECK_THROWS_AS(bound::theorem_bound(bp), InvalidParams);
        bp = base_params(0.0, 1e4);
        bp.p_o = 1.0;
        CHECK_THROWS_AS(bound::theorem_bound(bp), InvalidParams);
    }
}
