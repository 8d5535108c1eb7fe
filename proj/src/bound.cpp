#include "cogc/bound.hpp"

#include "cogc/errors.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace cogc::bound {

namespace {

constexpr double kDenominatorFloor = 0.1;
constexpr double kTailLimit = 1e-6;

double series_denominator(double eta_l, int local_steps, double gap) {
    const double steps = gap * local_steps;
    return 1.0 - steps * (steps + 1.0) * eta_l * eta_l;
}

}  // namespace

double BoundParams::effective_eta() const {
    if (!paper_schedule) return eta;
    return std::sqrt(static_cast<double>(clients) / rounds) / smoothness;
}

void BoundParams::validate() const {
    if (!(smoothness > 0.0)) throw InvalidParams("smoothness constant must be positive");
    if (grad_variance < 0.0) throw InvalidParams("gradient variance must be >= 0");
    if (batch < 1) throw InvalidParams("batch must be >= 1");
    if (clients < 1) throw InvalidParams("client count must be >= 1");
    if (!(rounds >= 1.0)) throw InvalidParams("round budget must be >= 1");
    if (local_steps < 1) throw InvalidParams("local steps must be >= 1");
    if (p_o < 0.0 || p_o >= 1.0)
        throw InvalidParams("outage probability must lie in [0, 1)");
    if (!paper_schedule && !(eta > 0.0))
        throw InvalidParams("explicit learning rate must be positive");
    if (static_cast<int>(weights.size()) != clients)
        throw InvalidParams("weights must have one entry per client");
    if (static_cast<int>(dissimilarity.size()) != clients)
        throw InvalidParams("dissimilarity must have one entry per client");
    for (double d : dissimilarity)
        if (d < 0.0) throw InvalidParams("dissimilarity bounds must be >= 0");
    const double mass = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(mass - 1.0) > 1e-9) throw InvalidParams("weights must sum to 1");
    if (f_star_gap < 0.0) throw InvalidParams("optimality gap must be >= 0");
}

GeometricMoments geometric_moments(double p_o) {
    if (p_o < 0.0 || p_o >= 1.0)
        throw InvalidParams("outage probability must lie in [0, 1)");
    GeometricMoments m;
    m.mean = 1.0 / (1.0 - p_o);
    m.second_moment = (1.0 + p_o) / ((1.0 - p_o) * (1.0 - p_o));
    return m;
}

SeriesConstants series_constants(const BoundParams& params) {
    params.validate();
    const double eta = params.effective_eta();
    const double l = params.smoothness;
    const double eta_l = eta * l;
    const int steps = params.local_steps;
    const double p = params.p_o;

    if (series_denominator(eta_l, steps, 1.0) <= 0.0)
        throw DenominatorViolation(
            "series denominator non-positive already at gap 1; learning rate too large");
    if (series_denominator(eta_l, steps, 1.0) < kDenominatorFloor)
        throw DenominatorViolation(
            "series denominator below the truncation floor already at gap 1");

    SeriesConstants out;
    int r_max = 1;
    while (series_denominator(eta_l, steps, static_cast<double>(r_max) + 1.0) >=
           kDenominatorFloor)
        ++r_max;
    out.r_max = r_max;
    out.tail_mass = std::pow(p, r_max);
    if (out.tail_mass > kTailLimit)
        throw TailTooHeavy("discarded geometric tail " + std::to_string(out.tail_mass) +
                           " exceeds 1e-6; outage probability too large for this schedule");

    double c1 = 0.0;
    double c2 = 0.0;
    for (int r = 1; r <= r_max; ++r) {
        const double weight = (1.0 - p) * std::pow(p, r - 1);
        if (weight == 0.0 && r > 1) break;
        const double gap_steps = static_cast<double>(r) * steps;
        const double denom = series_denominator(eta_l, steps, r);
        const double drift = 0.5 + eta_l * gap_steps;
        c1 += weight * (2.0 / 3.0) * l * l * r * (gap_steps + 1.0) *
              (2.0 * gap_steps + 1.0) * drift / denom;
        c2 += weight * 0.5 * l * l * r * (gap_steps + 1.0) * drift / denom;
    }
    out.c1 = c1;
    out.c2 = c2;
    return out;
}

BoundReport theorem_bound(const BoundParams& params) {
    params.validate();
    BoundReport report;
    report.moments = geometric_moments(params.p_o);
    report.series = series_constants(params);

    const double eta = params.effective_eta();
    const double l = params.smoothness;
    const double p = params.p_o;
    const int steps = params.local_steps;
    const double t_rounds = params.rounds;

    double weighted_dissim = 0.0;  // sum_m p_m D_m^2
    double sum_p_sq = 0.0;         // sum_m p_m^2
    for (int m = 0; m < params.clients; ++m) {
        weighted_dissim += params.weights[m] * params.dissimilarity[m] * params.dissimilarity[m];
        sum_p_sq += params.weights[m] * params.weights[m];
    }
    const double sigma2_eff = params.grad_variance / params.batch;
    const double j_avg =
        params.j_terms.empty()
            ? 0.0
            : std::accumulate(params.j_terms.begin(), params.j_terms.end(), 0.0) /
                  static_cast<double>(params.j_terms.size());

    report.h2 = 1.0 / (eta * steps);
    report.h5 = eta * l / (2.0 * steps);
    report.e_h3 = 2.0 * eta * steps * l * report.moments.second_moment +
                  eta * eta * report.series.c1;
    report.e_h4 = 0.5 * eta * l * sum_p_sq * report.moments.mean +
                  eta * eta * report.series.c2;
    report.e_h1 = 0.5 * report.moments.mean - report.e_h3;
    if (!(report.e_h1 > 0.0))
        throw NonPositiveH1("E[H1] = " + std::to_string(report.e_h1) +
                            " is not positive; schedule too aggressive for this p_o");

    report.term_gap = report.h2 * std::abs(params.f_star_gap) / ((1.0 - p) * t_rounds);
    report.term_dissimilarity = report.e_h3 * weighted_dissim;
    report.term_variance = report.e_h4 * sigma2_eff;
    report.term_quantization = report.h5 * j_avg;
    report.total = 2.0 * (1.0 - p) *
                   (report.term_gap + report.term_dissimilarity + report.term_variance +
                    report.term_quantization);
    return report;
}

}  // namespace cogc::bound
