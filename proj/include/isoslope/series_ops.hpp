#pragma once

#include <vector>

#include "series.hpp"

namespace isoslope {

struct NotSimpleRoot : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HenselResult {
    TruncatedSeries alpha;
    // (-c, d-2c): the Henselian-lifting bound. It certifies the correction
    // alpha - alpha0, i.e. the root in the proof's normalization where the
    // residue root sits at 0; alpha itself carries the combined certificate.
    Certificate cert;
    bool cert_verified = false;
};

// Monic f over O with all coefficients of Gauss norm <= 1 sharing a bound
// N_{a_i}(l) >= c - d l (c <= 0 < d), and a simple residue root alpha0:
// Newton iteration lifts alpha0 to a root mod p^N carrying the bound
// N_alpha(l) >= -c + (2c - d) l.
// f is given by ascending coefficients f[0] + f[1] x + ... + f[deg] x^deg.
inline HenselResult hensel_lift(const std::vector<TruncatedSeries>& f, const TruncatedSeries& alpha0) {
    if (f.size() < 2) throw std::invalid_argument("hensel_lift: need degree >= 1");
    const auto& ctx = alpha0.ctx();
    const auto& ring = alpha0.ring();
    TruncatedSeries one = TruncatedSeries::one(ctx, ring);
    if (!eq_at_precision(f.back(), one))
        throw std::invalid_argument("hensel_lift: polynomial must be monic");

    Rational c(0), d(1);
    for (const auto& ai : f) {
        auto g = ai.gauss_ord();
        if (g && *g < Rational(0))
            throw std::invalid_argument("hensel_lift: coefficient with Gauss norm > 1");
        if (ai.is_zero()) continue;
        Certificate ci = ai.cert() ? *ai.cert() : ai.scan_certificate();
        c = rat_min(c, ci.c);
        d = rat_max(d, ci.d);
    }

    auto eval = [&](const std::vector<TruncatedSeries>& poly, const TruncatedSeries& x) {
        TruncatedSeries acc = TruncatedSeries::zero(ctx, x.ring());
        for (std::size_t k = poly.size(); k-- > 0;) acc = acc * x + poly[k];
        return acc;
    };
    std::vector<TruncatedSeries> fprime;
    for (std::size_t k = 1; k < f.size(); k++)
        fprime.push_back(f[k].scaled(PadicScalar::from_int(ctx, std::int64_t(k))));

    // alpha0 must be a simple root of the reduction: f(alpha0) small in the
    // mixed (p, t)-topology, f'(alpha0) a Gauss unit
    TruncatedSeries f0 = eval(f, alpha0);
    for (const auto& [e, c] : f0.terms())
        if (!(Rational(0) < *c.ord()) && !(Rational(0) < e))
            throw NotSimpleRoot("hensel_lift: alpha0 is not a root of the reduction");
    TruncatedSeries fp0 = eval(fprime, alpha0);
    auto fp0ord = fp0.gauss_ord();
    if (!fp0ord || !(*fp0ord == Rational(0)))
        throw NotSimpleRoot("hensel_lift: derivative not a unit at alpha0");

    TruncatedSeries alpha = alpha0;
    Rational width = (ring.e_max - ring.e_min) * Rational(std::int64_t(ring.D));
    std::uint32_t budget = ctx->N() + std::uint32_t(std::max<std::int64_t>(1, width.num / width.den));
    std::uint32_t iters = 2;
    while ((1u << iters) < budget + 1) iters++;
    for (std::uint32_t i = 0; i <= iters; i++) {
        TruncatedSeries fa = eval(f, alpha).truncate_abs(ctx->N());
        if (fa.is_zero()) break;
        TruncatedSeries fpa = eval(fprime, alpha);
        alpha = (alpha - fa * fpa.invert()).truncate_abs(ctx->N());
    }
    if (!eval(f, alpha).truncate_abs(ctx->N()).is_zero())
        throw PrecisionExhausted("hensel_lift: residual not zero at precision");

    HenselResult res;
    Certificate out{-c, d - c - c};
    res.cert = out;
    TruncatedSeries beta = alpha - alpha0;
    res.cert_verified = beta.check_overconvergent(out.c, out.d).certified;
    // alpha = alpha0 + beta obeys the weaker of the two profiles
    Rational c_full = out.c;
    {
        NewtonProfile np0 = alpha0.newton_profile();
        for (std::uint32_t l = 0; l < np0.entries.size(); l++)
            if (np0.entries[l])
                c_full = rat_min(c_full, *np0.entries[l] + out.d * Rational(std::int64_t(l)));
    }
    (void)alpha.check_overconvergent(c_full, out.d);
    res.alpha = alpha;
    return res;
}

struct FrobeniusVerdict {
    bool certified = false;
    // when the equation fails: the first p-digit where it does
    std::optional<Rational> fails_at;
    std::optional<Certificate> witness;
};

// Check phi^s(y) + a_1 phi^{s-1}(y) + ... + a_s y = 0 at precision; on
// success report the overconvergence witness for y with slope
// d / (q^s - q^{s-1}) as in the proof that bounded Frobenius solutions are
// overconvergent.
inline FrobeniusVerdict verify_frobenius_solution(const std::vector<TruncatedSeries>& a,
                                                  TruncatedSeries& y) {
    if (a.empty()) throw std::invalid_argument("verify_frobenius_solution: need s >= 1");
    const std::uint32_t s = std::uint32_t(a.size());
    for (const auto& ai : a) {
        auto g = ai.gauss_ord();
        if (g && *g < Rational(0))
            throw std::invalid_argument("verify_frobenius_solution: |a_i| > 1");
    }
    TruncatedSeries resid = y.phi_pow(s);
    for (std::uint32_t i = 1; i <= s; i++)
        resid = resid + a[i - 1] * y.phi_pow(s - i);
    if (!resid.is_zero()) {
        FrobeniusVerdict v;
        v.fails_at = *resid.gauss_ord();
        return v;
    }
    Rational draw(0);
    for (const auto& ai : a) {
        NewtonProfile np = ai.newton_profile();
        for (std::uint32_t l = 1; l < np.entries.size(); l++)
            if (np.entries[l])
                draw = rat_max(draw, -(*np.entries[l]) / Rational(std::int64_t(l)));
    }
    std::int64_t q = std::int64_t(y.ctx()->q());
    std::int64_t denom = 1;
    for (std::uint32_t i = 0; i + 1 < s; i++) denom *= q;
    Rational dy = draw / Rational(denom * (q - 1));
    if (!(Rational(0) < dy)) dy = Rational(1);
    NewtonProfile np = y.newton_profile();
    Rational cy(0);
    bool first = true;
    for (std::uint32_t l = 0; l < np.entries.size(); l++) {
        if (!np.entries[l]) continue;
        Rational v = *np.entries[l] + dy * Rational(std::int64_t(l));
        if (first || v < cy) cy = v, first = false;
    }
    FrobeniusVerdict v;
    v.certified = y.check_overconvergent(cy, dy).certified;
    v.witness = Certificate{cy, dy};
    return v;
}

} // namespace isoslope
