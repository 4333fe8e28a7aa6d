#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "padic.hpp"
#include "rational.hpp"

namespace isoslope {

struct IncompatibleRings : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotInvertibleAtPrecision : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// exponent left the (1/D)-lattice or the D budget; callers turn this into
// their own verdicts (NoBoundedSplitting, FixedPointNotFound, ...)
struct LatticeOverflow : std::runtime_error {
    Rational witness;
    LatticeOverflow(const std::string& m, Rational w) : std::runtime_error(m), witness(w) {}
};

enum class RingTag { BOUNDED_DISC, AMICE, BOUNDED_ROBBA, ROBBA, HAHN, HAHN_DAGGER };

inline const char* ring_tag_name(RingTag t) {
    switch (t) {
        case RingTag::BOUNDED_DISC: return "BOUNDED_DISC";
        case RingTag::AMICE: return "AMICE";
        case RingTag::BOUNDED_ROBBA: return "BOUNDED_ROBBA";
        case RingTag::ROBBA: return "ROBBA";
        case RingTag::HAHN: return "HAHN";
        case RingTag::HAHN_DAGGER: return "HAHN_DAGGER";
    }
    return "?";
}
inline RingTag ring_tag_parse(const std::string& s) {
    if (s == "BOUNDED_DISC") return RingTag::BOUNDED_DISC;
    if (s == "AMICE") return RingTag::AMICE;
    if (s == "BOUNDED_ROBBA") return RingTag::BOUNDED_ROBBA;
    if (s == "ROBBA") return RingTag::ROBBA;
    if (s == "HAHN") return RingTag::HAHN;
    if (s == "HAHN_DAGGER") return RingTag::HAHN_DAGGER;
    throw std::invalid_argument("unknown ring tag: " + s);
}

inline bool ring_fractional(RingTag t) { return t == RingTag::HAHN || t == RingTag::HAHN_DAGGER; }

// least upper bound in the containment order of the six rings
inline std::optional<RingTag> ring_join(RingTag a, RingTag b) {
    if (a == b) return a;
    auto leq = [](RingTag x, RingTag y) {
        if (x == y) return true;
        switch (x) {
            case RingTag::BOUNDED_DISC: return true;
            case RingTag::BOUNDED_ROBBA:
                return y == RingTag::AMICE || y == RingTag::ROBBA || y == RingTag::HAHN ||
                       y == RingTag::HAHN_DAGGER;
            case RingTag::AMICE: return y == RingTag::HAHN;
            case RingTag::HAHN_DAGGER: return y == RingTag::HAHN;
            default: return false;
        }
    };
    if (leq(a, b)) return b;
    if (leq(b, a)) return a;
    const RingTag all[] = {RingTag::BOUNDED_DISC, RingTag::BOUNDED_ROBBA, RingTag::AMICE,
                           RingTag::HAHN_DAGGER, RingTag::ROBBA, RingTag::HAHN};
    std::optional<RingTag> best;
    for (RingTag c : all)
        if (leq(a, c) && leq(b, c) && (!best || leq(c, *best))) best = c;
    return best;
}

struct RingConfig {
    RingTag tag = RingTag::AMICE;
    std::uint32_t D = 1;      // exponent lattice (1/D) Z
    std::uint32_t D_cap = 1;  // hard budget for D (powers of q get multiplied in)
    Rational e_min{-24}, e_max{24};

    void normalize() {
        if (D_cap < D) D_cap = D;
        if (tag == RingTag::BOUNDED_DISC && e_min < Rational(0)) e_min = Rational(0);
        if (!ring_fractional(tag) && D != 1)
            throw std::invalid_argument("RingConfig: integral ring with D > 1");
    }

    bool in_lattice(const Rational& e) const {
        return (std::int64_t(D) * e.num) % e.den == 0;
    }
    bool in_window(const Rational& e) const { return !(e < e_min) && !(e_max < e); }
};

struct Certificate {
    Rational c, d; // claim: N_a(l) >= c - d*l for l in [0, N], d > 0
};

struct NewtonProfile {
    // entries[l] for l = 0..N; nullopt = infinity
    std::vector<std::optional<Rational>> entries;
};

// Finite-support model of an element of one of the series rings. Stored
// coefficients are nonzero at their effective precision; anything that fell
// off the window sets `clipped`.
class TruncatedSeries {
public:
    TruncatedSeries() = default;
    TruncatedSeries(ScalarCtxPtr ctx, RingConfig ring) : ctx_(std::move(ctx)), ring_(ring) {
        ring_.normalize();
    }

    static TruncatedSeries zero(const ScalarCtxPtr& ctx, const RingConfig& ring) {
        return TruncatedSeries(ctx, ring);
    }
    static TruncatedSeries constant(const ScalarCtxPtr& ctx, const RingConfig& ring,
                                    const PadicScalar& c) {
        TruncatedSeries s(ctx, ring);
        s.set_term(Rational(0), c);
        return s;
    }
    static TruncatedSeries monomial(const ScalarCtxPtr& ctx, const RingConfig& ring,
                                    const Rational& e, const PadicScalar& c) {
        TruncatedSeries s(ctx, ring);
        s.set_term(e, c);
        return s;
    }
    static TruncatedSeries one(const ScalarCtxPtr& ctx, const RingConfig& ring) {
        return constant(ctx, ring, PadicScalar::from_int(ctx, 1));
    }

    const ScalarCtxPtr& ctx() const { return ctx_; }
    const RingConfig& ring() const { return ring_; }
    const std::map<Rational, PadicScalar>& terms() const { return support_; }
    bool clipped() const { return clipped_; }
    void mark_clipped() { clipped_ = true; }
    const std::optional<Certificate>& cert() const { return cert_; }
    void set_cert(std::optional<Certificate> c) { cert_ = std::move(c); }

    bool is_zero() const { return support_.empty(); }

    // effective precision loss relative to the context budget
    std::uint32_t loss() const {
        std::uint32_t worst = 0;
        for (const auto& [e, c] : support_)
            worst = std::max(worst, ctx_->N() - std::min(ctx_->N(), c.prec()));
        return worst;
    }

    void set_term(const Rational& e, const PadicScalar& c) {
        if (!ring_.in_lattice(e))
            throw LatticeOverflow("exponent outside lattice (1/D)Z: " + e.str(), e);
        if (!ring_.in_window(e)) {
            clipped_ = true;
            return;
        }
        if (c.is_zero())
            support_.erase(e);
        else
            support_[e] = c;
    }

    void add_term(const Rational& e, const PadicScalar& c) {
        auto it = support_.find(e);
        if (it == support_.end())
            set_term(e, c);
        else {
            PadicScalar s = it->second + c;
            if (s.is_zero())
                support_.erase(it);
            else
                it->second = s;
        }
    }

    PadicScalar coeff(const Rational& e) const {
        auto it = support_.find(e);
        return it == support_.end() ? PadicScalar::zero(ctx_) : it->second;
    }

    // Gauss norm as a valuation: |a| = p^{-gauss_ord}; nullopt for 0
    std::optional<Rational> gauss_ord() const {
        std::optional<Rational> m;
        for (const auto& [e, c] : support_) {
            Rational o = *c.ord();
            if (!m || o < *m) m = o;
        }
        return m;
    }

    // leading term in the (valuation, exponent) lexicographic order
    std::optional<std::pair<Rational, PadicScalar>> leading_term() const {
        auto g = gauss_ord();
        if (!g) return std::nullopt;
        for (const auto& [e, c] : support_)
            if (*c.ord() == *g) return std::make_pair(e, c);
        return std::nullopt;
    }

    friend TruncatedSeries operator+(const TruncatedSeries& a, const TruncatedSeries& b) {
        TruncatedSeries r = a.combined_shell(b);
        for (const auto& [e, c] : a.support_)
            if (r.ring_.in_window(e)) r.add_term(e, c); else r.clipped_ = true;
        for (const auto& [e, c] : b.support_)
            if (r.ring_.in_window(e)) r.add_term(e, c); else r.clipped_ = true;
        return r;
    }
    TruncatedSeries operator-() const {
        TruncatedSeries r = *this;
        for (auto& [e, c] : r.support_) c = -c;
        return r;
    }
    friend TruncatedSeries operator-(const TruncatedSeries& a, const TruncatedSeries& b) {
        return a + (-b);
    }

    friend TruncatedSeries operator*(const TruncatedSeries& a, const TruncatedSeries& b) {
        TruncatedSeries r = a.combined_shell(b);
        for (const auto& [ea, ca] : a.support_)
            for (const auto& [eb, cb] : b.support_) {
                Rational e = ea + eb;
                if (!r.ring_.in_window(e)) {
                    r.clipped_ = true;
                    continue;
                }
                r.add_term(e, ca * cb);
            }
        // product certificate, Lemma-ineq(3) style: (c1+c2, max(d1,d2))
        if (a.cert_ && b.cert_)
            r.cert_ = Certificate{a.cert_->c + b.cert_->c, rat_max(a.cert_->d, b.cert_->d)};
        return r;
    }

    TruncatedSeries scaled(const PadicScalar& c) const {
        TruncatedSeries r = *this;
        r.support_.clear();
        for (const auto& [e, x] : support_) r.add_term(e, x * c);
        r.cert_ = std::nullopt;
        return r;
    }

    // phi(sum a_n t^n) = sum sigma(a_n) t^{qn}
    TruncatedSeries phi() const {
        TruncatedSeries r = *this;
        r.support_.clear();
        std::int64_t q = std::int64_t(ctx_->q());
        for (const auto& [e, c] : support_) {
            Rational eq = e * Rational(q);
            if (!ring_.in_window(eq)) {
                r.clipped_ = true;
                continue;
            }
            r.support_[eq] = c.sigma();
        }
        if (cert_) r.cert_ = Certificate{cert_->c * Rational(q), cert_->d * Rational(q)};
        return r;
    }
    TruncatedSeries phi_pow(std::uint32_t k) const {
        TruncatedSeries r = *this;
        for (std::uint32_t i = 0; i < k; i++) r = r.phi();
        return r;
    }

    // inverse image under phi; enlarges D up to D_cap when exponents demand it
    TruncatedSeries phi_inv() const {
        TruncatedSeries r = *this;
        r.support_.clear();
        r.cert_ = std::nullopt;
        std::int64_t q = std::int64_t(ctx_->q());
        for (const auto& [e, c] : support_) {
            Rational eq = e / Rational(q);
            if (!r.ring_.in_lattice(eq)) {
                std::uint64_t newD = std::uint64_t(r.ring_.D) * std::uint64_t(q);
                if (newD > r.ring_.D_cap || !ring_fractional(r.ring_.tag))
                    throw LatticeOverflow("phi_inv: exponent " + eq.str() + " exceeds lattice budget", eq);
                r.ring_.D = std::uint32_t(newD);
            }
            if (!r.ring_.in_window(eq)) {
                r.clipped_ = true;
                continue;
            }
            r.support_[eq] = c.sigma_inv();
        }
        return r;
    }

    // coefficientwise d/dt
    TruncatedSeries derivative() const {
        TruncatedSeries r = *this;
        r.support_.clear();
        r.cert_ = std::nullopt;
        for (const auto& [e, c] : support_) {
            if (e == Rational(0)) continue;
            Rational e1 = e - Rational(1);
            if (!r.ring_.in_lattice(e1))
                throw LatticeOverflow("derivative: exponent leaves lattice", e1);
            if (!r.ring_.in_window(e1)) {
                r.clipped_ = true;
                continue;
            }
            PadicScalar cc = c * PadicScalar::from_rational(ctx_, e);
            if (!cc.is_zero()) r.support_[e1] = cc;
        }
        return r;
    }

    // reduce to the quotient O/p^Nabs: drop what is 0 there, cap what is
    // known beyond it (iterative solvers call this to keep supports finite)
    TruncatedSeries truncate_abs(std::int64_t Nabs) const {
        TruncatedSeries r = *this;
        r.support_.clear();
        for (const auto& [e, c] : support_) {
            if (c.shift() >= Nabs) continue;
            std::int64_t rel = Nabs - c.shift();
            if (std::int64_t(c.prec()) > rel)
                r.support_[e] = PadicScalar::from_coords(ctx_, c.coords(), c.shift(),
                                                         std::uint32_t(rel));
            else
                r.support_[e] = c;
        }
        return r;
    }

    NewtonProfile newton_profile() const {
        NewtonProfile np;
        std::uint32_t N = ctx_->N();
        np.entries.assign(N + 1, std::nullopt);
        for (std::uint32_t l = 0; l <= N; l++) {
            std::optional<Rational> best;
            for (const auto& [e, c] : support_) {
                if (*c.ord() <= Rational(std::int64_t(l))) {
                    best = e;
                    break; // support_ is ordered by exponent
                }
            }
            np.entries[l] = best;
        }
        return np;
    }

    struct OverconvergenceVerdict {
        bool certified = false;
        std::optional<std::uint32_t> fails_at;
    };

    // verify N_a(l) >= c - d*l for l in [0, N]; "certified" always means
    // at this precision and window only
    OverconvergenceVerdict check_overconvergent(const Rational& c, const Rational& d,
                                                bool strict = false) {
        if (!(Rational(0) < d)) throw std::invalid_argument("check_overconvergent: d must be > 0");
        if (strict && clipped_)
            throw std::invalid_argument("check_overconvergent(strict): input was clipped");
        NewtonProfile np = newton_profile();
        for (std::uint32_t l = 0; l < np.entries.size(); l++) {
            Rational bound = c - d * Rational(std::int64_t(l));
            if (np.entries[l] && *np.entries[l] < bound)
                return {false, l};
        }
        cert_ = Certificate{c, d};
        return {true, std::nullopt};
    }

    // the tightest (c,d) visible in the window: d >= 1, c = min_l(N_a(l)+d*l)
    Certificate scan_certificate() const {
        NewtonProfile np = newton_profile();
        Rational d(1);
        for (std::uint32_t l = 1; l < np.entries.size(); l++) {
            if (!np.entries[0] || !np.entries[l]) continue;
            Rational need = (*np.entries[0] - *np.entries[l]) / Rational(std::int64_t(l));
            d = rat_max(d, need);
        }
        Rational c(0);
        bool first = true;
        for (std::uint32_t l = 0; l < np.entries.size(); l++) {
            if (!np.entries[l]) continue;
            Rational v = *np.entries[l] + d * Rational(std::int64_t(l));
            if (first || v < c) c = v, first = false;
        }
        return Certificate{first ? Rational(0) : c, d};
    }

    // Newton iteration for the reciprocal. The work happens in a widened
    // window so the inverse's tail does not contaminate the verification;
    // the result is clipped back and the residual must vanish on the
    // original window at precision.
    TruncatedSeries invert() const {
        auto lead = leading_term();
        if (!lead) throw NotInvertibleAtPrecision("invert: zero series");
        Rational span = support_.rbegin()->first - support_.begin()->first;
        RingConfig wide = ring_;
        Rational slack = span * Rational(std::int64_t(ctx_->N()) + 2);
        wide.e_min = ring_.e_min - slack;
        wide.e_max = ring_.e_max + slack;
        TruncatedSeries aw = zero(ctx_, wide);
        for (const auto& [e, c] : support_) aw.set_term(e, c);

        TruncatedSeries y = monomial(ctx_, wide, -lead->first, lead->second.inv());
        std::uint32_t width_steps = 1;
        {
            Rational w = (wide.e_max - wide.e_min) * Rational(std::int64_t(ring_.D));
            width_steps = std::uint32_t(std::max<std::int64_t>(1, w.num / w.den));
        }
        std::uint32_t total = width_steps + ctx_->N() + 2, iters = 2;
        while ((1u << iters) < total + 1) iters++;
        TruncatedSeries two = constant(ctx_, wide, PadicScalar::from_int(ctx_, 2));
        for (std::uint32_t i = 0; i <= iters; i++)
            y = (y * (two - aw * y)).truncate_abs(ctx_->N() + 1);
        // the inverse can only be as good as the input's own effective precision
        std::int64_t eff = ctx_->N();
        for (const auto& [e, c] : support_) eff = std::min(eff, c.abs_prec());
        TruncatedSeries resid = (aw * y - one(ctx_, wide)).truncate_abs(eff);
        for (const auto& [e, c] : resid.terms())
            if (!(e < ring_.e_min) && !(ring_.e_max < e))
                throw NotInvertibleAtPrecision("invert: residual not zero at precision");

        TruncatedSeries out = zero(ctx_, ring_);
        for (const auto& [e, c] : y.terms()) out.set_term(e, c);
        if (clipped_) out.clipped_ = true;
        if (!out.is_zero()) out.cert_ = out.scan_certificate();
        return out;
    }

    std::string str() const {
        if (support_.empty()) return "0";
        std::string s;
        for (const auto& [e, c] : support_) {
            if (!s.empty()) s += " + ";
            s += "[ord " + (c.ord() ? c.ord()->str() : "inf") + "]t^" + e.str();
        }
        return s;
    }

private:
    ScalarCtxPtr ctx_;
    RingConfig ring_;
    std::map<Rational, PadicScalar> support_;
    std::optional<Certificate> cert_;
    bool clipped_ = false;

    TruncatedSeries combined_shell(const TruncatedSeries& b) const {
        if (!ctx_ || !b.ctx_) throw std::logic_error("TruncatedSeries: missing context");
        if (ctx_->p() != b.ctx_->p() || ctx_->deg() != b.ctx_->deg() || ctx_->q() != b.ctx_->q())
            throw IncompatibleRings("series over incompatible scalar contexts");
        auto j = ring_join(ring_.tag, b.ring_.tag);
        if (!j) throw IncompatibleRings(std::string("no join of ") + ring_tag_name(ring_.tag) +
                                        " and " + ring_tag_name(b.ring_.tag));
        TruncatedSeries r(ctx_, ring_);
        r.ring_.tag = *j;
        r.ring_.D = std::lcm(ring_.D, b.ring_.D);
        r.ring_.D_cap = std::max(ring_.D_cap, b.ring_.D_cap);
        r.ring_.e_min = rat_max(ring_.e_min, b.ring_.e_min);
        r.ring_.e_max = rat_min(ring_.e_max, b.ring_.e_max);
        r.ring_.normalize();
        r.clipped_ = clipped_ || b.clipped_;
        return r;
    }
};

inline bool eq_at_precision(const TruncatedSeries& a, const TruncatedSeries& b) {
    return (a - b).is_zero();
}

} // namespace isoslope
