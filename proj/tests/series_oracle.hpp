#pragma once

// Test-only 256-bit re-summation of the bound's series constants, independent
// of the double-precision implementation (including its own truncation rule).

#include <mpfr.h>

#include "cogc/bound.hpp"

namespace cogc::testing {

inline void mpfr_series(const bound::BoundParams& bp, double* c1_out, double* c2_out,
                        int* r_max_out) {
    const int prec = 256;
    mpfr_t eta, l, el, c1, c2, term, denom, weight, gap_steps, drift, tmp;
    mpfr_inits2(prec, eta, l, el, c1, c2, term, denom, weight, gap_steps, drift, tmp,
                static_cast<mpfr_ptr>(nullptr));
    // eta = sqrt(M / T) / L on the schedule, else the explicit value.
    mpfr_set_d(l, bp.smoothness, MPFR_RNDN);
    if (bp.paper_schedule) {
        mpfr_set_d(tmp, static_cast<double>(bp.clients), MPFR_RNDN);
        mpfr_div_d(tmp, tmp, bp.rounds, MPFR_RNDN);
        mpfr_sqrt(eta, tmp, MPFR_RNDN);
        mpfr_div(eta, eta, l, MPFR_RNDN);
    } else {
        mpfr_set_d(eta, bp.eta, MPFR_RNDN);
    }
    mpfr_mul(el, eta, l, MPFR_RNDN);

    auto denominator_at = [&](long r) {
        // 1 - rI(rI + 1) (eta L)^2
        mpfr_set_si(gap_steps, r * bp.local_steps, MPFR_RNDN);
        mpfr_add_si(tmp, gap_steps, 1, MPFR_RNDN);
        mpfr_mul(tmp, tmp, gap_steps, MPFR_RNDN);
        mpfr_mul(tmp, tmp, el, MPFR_RNDN);
        mpfr_mul(tmp, tmp, el, MPFR_RNDN);
        mpfr_si_sub(denom, 1, tmp, MPFR_RNDN);
    };

    long r_max = 1;
    while (true) {
        denominator_at(r_max + 1);
        if (mpfr_cmp_d(denom, 0.1) < 0) break;
        ++r_max;
    }
    *r_max_out = static_cast<int>(r_max);

    mpfr_set_zero(c1, 1);
    mpfr_set_zero(c2, 1);
    for (long r = 1; r <= r_max; ++r) {
        denominator_at(r);
        // weight = (1 - p) p^(r-1)
        mpfr_set_d(weight, bp.p_o, MPFR_RNDN);
        mpfr_pow_si(weight, weight, r - 1, MPFR_RNDN);
        mpfr_mul_d(weight, weight, 1.0 - bp.p_o, MPFR_RNDN);
        // drift = 1/2 + eta L * r I
        mpfr_set_si(gap_steps, r * bp.local_steps, MPFR_RNDN);
        mpfr_mul(drift, el, gap_steps, MPFR_RNDN);
        mpfr_add_d(drift, drift, 0.5, MPFR_RNDN);
        // c1 term: (2/3) L^2 r (rI + 1)(2rI + 1) drift / denom
        mpfr_add_si(term, gap_steps, 1, MPFR_RNDN);
        mpfr_mul_si(tmp, gap_steps, 2, MPFR_RNDN);
        mpfr_add_si(tmp, tmp, 1, MPFR_RNDN);
        mpfr_mul(term, term, tmp, MPFR_RNDN);
        mpfr_mul_si(term, term, r, MPFR_RNDN);
        mpfr_mul(term, term, l, MPFR_RNDN);
        mpfr_mul(term, term, l, MPFR_RNDN);
        mpfr_mul(term, term, drift, MPFR_RNDN);
        mpfr_mul_d(term, term, 2.0 / 3.0, MPFR_RNDN);
        mpfr_div(term, term, denom, MPFR_RNDN);
        mpfr_mul(term, term, weight, MPFR_RNDN);
        mpfr_add(c1, c1, term, MPFR_RNDN);
        // c2 term: (1/2) L^2 r (rI + 1) drift / denom
        mpfr_add_si(term, gap_steps, 1, MPFR_RNDN);
        mpfr_mul_si(term, term, r, MPFR_RNDN);
        mpfr_mul(term, term, l, MPFR_RNDN);
        mpfr_mul(term, term, l, MPFR_RNDN);
        mpfr_mul(term, term, drift, MPFR_RNDN);
        mpfr_mul_d(term, term, 0.5, MPFR_RNDN);
        mpfr_div(term, term, denom, MPFR_RNDN);
        mpfr_mul(term, term, weight, MPFR_RNDN);
        mpfr_add(c2, c2, term, MPFR_RNDN);
    }
    *c1_out = mpfr_get_d(c1, MPFR_RNDN);
    *c2_out = mpfr_get_d(c2, MPFR_RNDN);
    mpfr_clears(eta, l, el, c1, c2, term, denom, weight, gap_steps, drift, tmp,
                static_cast<mpfr_ptr>(nullptr));
}

}  // namespace cogc::testing
