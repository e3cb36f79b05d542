#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "graphcpd/types.hpp"

namespace graphcpd::special {

namespace detail {

constexpr double kEpsilon = 1e-16;
constexpr int kMaxTerms = 10000;

// P(a, x) by its power series; converges quickly for x < a + 1.
inline double lower_series(double a, double x) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < kMaxTerms; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEpsilon) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by its continued fraction (modified Lentz); for x >= a + 1.
inline double upper_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < kMaxTerms; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEpsilon) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline void check_args(double a, double x) {
    if (!(a > 0.0)) throw DomainError("incomplete gamma: shape must be > 0");
    if (!(x >= 0.0)) throw DomainError("incomplete gamma: argument must be >= 0");
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    detail::check_args(a, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return x < a + 1.0 ? detail::lower_series(a, x) : 1.0 - detail::upper_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), accurate in the tail.
inline double gamma_q(double a, double x) {
    detail::check_args(a, x);
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return x < a + 1.0 ? 1.0 - detail::lower_series(a, x) : detail::upper_fraction(a, x);
}

inline double chi2_cdf(double dof, double c) { return c <= 0.0 ? 0.0 : gamma_p(dof / 2.0, c / 2.0); }
inline double chi2_sf(double dof, double c) { return c <= 0.0 ? 1.0 : gamma_q(dof / 2.0, c / 2.0); }

inline double chi2_pdf(double dof, double c) {
    if (c <= 0.0) return dof == 2.0 && c == 0.0 ? 0.5 : 0.0;
    const double a = dof / 2.0;
    return std::exp((a - 1.0) * std::log(c / 2.0) - c / 2.0 - std::lgamma(a)) / 2.0;
}

namespace detail {

// Solves F(c) = target where F is the cdf (upper == false) or the survival
// function (upper == true). Newton steps, falling back to bisection whenever
// a step leaves the current bracket.
inline double chi2_invert(double dof, double target, bool upper) {
    auto residual = [&](double c) { return upper ? chi2_sf(dof, c) - target : chi2_cdf(dof, c) - target; };
    // residual is increasing in c for the cdf and decreasing for the sf
    auto below_root = [&](double c) { return upper ? residual(c) > 0.0 : residual(c) < 0.0; };

    double lo = 0.0, hi = std::max(1.0, dof);
    while (below_root(hi)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) return std::numeric_limits<double>::infinity();
    }
    double c = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
        const double f = residual(c);
        if (f == 0.0) return c;
        if (upper ? f > 0.0 : f < 0.0)
            lo = c;
        else
            hi = c;
        const double slope = upper ? -chi2_pdf(dof, c) : chi2_pdf(dof, c);
        double next = slope != 0.0 ? c - f / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - c) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(next) || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi)
            return next;
        c = next;
    }
    return c;
}

}  // namespace detail

/// c with P(chi2_dof <= c) = q.
inline double chi2_quantile(double dof, double q) {
    if (!(dof > 0.0)) throw DomainError("chi2_quantile: degrees of freedom must be > 0");
    if (!(q > 0.0 && q < 1.0)) throw DomainError("chi2_quantile: probability must lie in (0, 1)");
    // Upper-tail inversion keeps relative accuracy when q is close to 1.
    return q <= 0.5 ? detail::chi2_invert(dof, q, false) : detail::chi2_invert(dof, 1.0 - q, true);
}

/// c with P(chi2_dof > c) = p. Prefer this over chi2_quantile(dof, 1 - p) for small p.
inline double chi2_upper_quantile(double dof, double p) {
    if (!(dof > 0.0)) throw DomainError("chi2_upper_quantile: degrees of freedom must be > 0");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("chi2_upper_quantile: probability must lie in (0, 1)");
    return p >= 0.5 ? detail::chi2_invert(dof, 1.0 - p, false) : detail::chi2_invert(dof, p, true);
}

}  // namespace graphcpd::special
