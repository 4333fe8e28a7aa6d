#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "fq.hpp"
#include "rational.hpp"

namespace isoslope {

struct PrecisionExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shared tables for K = W(F_{q^r})[1/p] with q = p^s: a monic lift g of an
// irreducible polynomial of degree d = s*r over F_p, the matrix of the
// q-Frobenius sigma = Frob_p^s on the basis 1, x, ..., x^{d-1} mod p^N, and
// the residue field F_{p^d}. sigma^r = identity.
class ScalarContext {
public:
    ScalarContext(std::uint32_t p, std::uint32_t s, std::uint32_t r, std::uint32_t N)
        : p_(p), s_(s), r_(r), N_(N), deg_(s * r), residue_(p, s * r) {
        if (N == 0 || N > 40) throw std::invalid_argument("ScalarContext: bad precision");
        ppow_.resize(N + 1);
        ppow_[0] = 1;
        for (std::uint32_t i = 1; i <= N; i++) {
            if (ppow_[i - 1] > UINT64_MAX / (2 * p))
                throw std::invalid_argument("ScalarContext: p^N overflows");
            ppow_[i] = ppow_[i - 1] * p;
        }
        modulus_.assign(residue_.modulus().begin(), residue_.modulus().end());
        build_sigma();
    }

    std::uint32_t p() const { return p_; }
    std::uint32_t s() const { return s_; }
    std::uint32_t r() const { return r_; }
    std::uint32_t N() const { return N_; }
    std::uint32_t deg() const { return deg_; }
    std::uint64_t q() const { return ppow_.at(s_); }
    std::uint64_t pk(std::uint32_t k) const { return ppow_.at(k); }
    const Fq& residue_field() const { return residue_; }

    using Coords = std::vector<std::uint64_t>;

    // multiplication in Z[x]/(g, p^m)
    Coords mulmod(const Coords& a, const Coords& b, std::uint32_t m) const {
        std::uint64_t mod = pk(m);
        std::vector<std::uint64_t> prod(2 * deg_ - 1, 0);
        for (std::uint32_t i = 0; i < deg_; i++) {
            if (!a[i]) continue;
            for (std::uint32_t j = 0; j < deg_; j++)
                prod[i + j] = (prod[i + j] + mul64(a[i], b[j], mod)) % mod;
        }
        for (std::uint32_t k = 2 * deg_ - 2; k + 1 > deg_; k--) {
            std::uint64_t c = prod[k];
            if (!c) continue;
            for (std::uint32_t i = 0; i < deg_; i++) {
                std::uint64_t gi = modulus_[i] % mod;
                prod[k - deg_ + i] = (prod[k - deg_ + i] + mul64(c, mod - gi == mod ? 0 : mod - gi, mod)) % mod;
            }
            prod[k] = 0;
        }
        prod.resize(deg_);
        return prod;
    }

    Coords apply_matrix(const std::vector<Coords>& mat, const Coords& v, std::uint32_t m) const {
        std::uint64_t mod = pk(m);
        Coords out(deg_, 0);
        for (std::uint32_t j = 0; j < deg_; j++) {
            if (!v[j]) continue;
            for (std::uint32_t i = 0; i < deg_; i++)
                out[i] = (out[i] + mul64(mat[j][i], v[j] % mod, mod)) % mod;
        }
        return out;
    }

    const std::vector<Coords>& sigma_matrix() const { return sigma_mat_; }
    const std::vector<Coords>& sigma_inv_matrix() const { return sigma_inv_mat_; }
    const std::vector<Coords>& frobp_matrix() const { return frobp_mat_; }

    static std::uint64_t mul64(std::uint64_t a, std::uint64_t b, std::uint64_t mod) {
        return std::uint64_t((unsigned __int128)a * b % mod);
    }

private:
    std::uint32_t p_, s_, r_, N_, deg_;
    std::vector<std::uint64_t> ppow_;
    Fq residue_;
    Coords modulus_; // monic lift of the residue minimal polynomial (length deg+1)
    std::vector<Coords> sigma_mat_, sigma_inv_mat_, frobp_mat_;

    Coords eval_poly(const Coords& coeffs, const Coords& at, std::uint32_t m) const {
        // Horner over Z[x]/(g, p^m); coeffs are plain integers (constants)
        Coords acc(deg_, 0);
        for (std::uint32_t k = std::uint32_t(coeffs.size()); k-- > 0;) {
            acc = mulmod(acc, at, m);
            acc[0] = (acc[0] + coeffs[k] % pk(m)) % pk(m);
        }
        return acc;
    }

    void build_sigma() {
        if (deg_ == 1) {
            sigma_mat_ = sigma_inv_mat_ = frobp_mat_ = {Coords{1}};
            return;
        }
        // beta = the root of g congruent to x^p (mod p), by Newton iteration
        Coords beta(deg_, 0);
        {
            // start from x^p mod (g, p)
            Coords x(deg_, 0);
            x[1] = 1;
            Coords b = x;
            for (std::uint32_t i = 1; i < p_; i++) b = mulmod(b, x, 1);
            beta = b;
        }
        for (std::uint32_t digits = 1; digits < N_; digits *= 2) {
            std::uint32_t target = std::min(2 * digits, N_);
            // beta <- beta - g(beta)/g'(beta) mod p^target
            Coords gb = eval_gpoly(beta, target, false);
            Coords gpb = eval_gpoly(beta, target, true);
            Coords gpinv = invert_coords(gpb, target);
            Coords corr = mulmod(gb, gpinv, target);
            std::uint64_t mod = pk(target);
            for (std::uint32_t i = 0; i < deg_; i++)
                beta[i] = (beta[i] % mod + mod - corr[i]) % mod;
        }
        frobp_mat_.assign(deg_, Coords(deg_, 0));
        Coords pw(deg_, 0);
        pw[0] = 1;
        for (std::uint32_t j = 0; j < deg_; j++) {
            frobp_mat_[j] = pw;
            pw = mulmod(pw, beta, N_);
        }
        sigma_mat_ = mat_pow(frobp_mat_, s_);
        sigma_inv_mat_ = mat_pow(sigma_mat_, r_ == 0 ? 0 : r_ - 1); // sigma^r = id
    }

    Coords eval_gpoly(const Coords& at, std::uint32_t m, bool derivative) const {
        Coords acc(deg_, 0);
        std::uint64_t mod = pk(m);
        if (!derivative) {
            for (std::uint32_t k = deg_ + 1; k-- > 0;) {
                acc = mulmod(acc, at, m);
                acc[0] = (acc[0] + modulus_[k] % mod) % mod;
            }
        } else {
            for (std::uint32_t k = deg_ + 1; k-- > 1;) {
                acc = mulmod(acc, at, m);
                acc[0] = (acc[0] + mul64(k % mod, modulus_[k] % mod, mod)) % mod;
            }
        }
        return acc;
    }

    // inverse of a unit in Z[x]/(g, p^m): residue inverse + Newton lifting
    Coords invert_coords(const Coords& a, std::uint32_t m) const {
        Fq::Elem abar(deg_);
        for (std::uint32_t i = 0; i < deg_; i++) abar[i] = std::uint32_t(a[i] % p_);
        if (residue_.is_zero(abar)) throw std::domain_error("invert_coords: not a unit");
        Fq::Elem ibar = residue_.inv(abar);
        Coords y(deg_, 0);
        for (std::uint32_t i = 0; i < deg_; i++) y[i] = ibar[i];
        for (std::uint32_t digits = 1; digits < m; digits *= 2) {
            std::uint32_t target = std::min(2 * digits, m);
            std::uint64_t mod = pk(target);
            Coords ay = mulmod(a, y, target);
            Coords two_minus(deg_, 0);
            for (std::uint32_t i = 0; i < deg_; i++)
                two_minus[i] = (mod - ay[i]) % mod;
            two_minus[0] = (two_minus[0] + 2) % mod;
            y = mulmod(y, two_minus, target);
        }
        return y;
    }

    std::vector<Coords> mat_pow(std::vector<Coords> base, std::uint32_t e) const {
        std::vector<Coords> acc(deg_, Coords(deg_, 0));
        for (std::uint32_t i = 0; i < deg_; i++) acc[i][i] = 1;
        while (e) {
            if (e & 1) acc = mat_mul(acc, base);
            base = mat_mul(base, base);
            e >>= 1;
        }
        return acc;
    }
    std::vector<Coords> mat_mul(const std::vector<Coords>& A, const std::vector<Coords>& B) const {
        // column-major: column j of result = A applied to column j of B
        std::vector<Coords> C(deg_, Coords(deg_, 0));
        for (std::uint32_t j = 0; j < deg_; j++) C[j] = apply_matrix(A, B[j], N_);
        return C;
    }

    friend class PadicScalar;
};

using ScalarCtxPtr = std::shared_ptr<const ScalarContext>;

// One element of K, capped-relative: value = p^shift * unit, with the unit's
// coordinates known mod p^prec. prec = 0 encodes "zero at precision", i.e.
// O(p^shift). Absolute knowledge is always mod p^(shift+prec).
class PadicScalar {
public:
    PadicScalar() = default;

    static PadicScalar zero(const ScalarCtxPtr& ctx) {
        PadicScalar a;
        a.ctx_ = ctx;
        a.shift_ = ctx->N();
        a.prec_ = 0;
        a.coords_.assign(ctx->deg(), 0);
        return a;
    }

    static PadicScalar from_int(const ScalarCtxPtr& ctx, std::int64_t n) {
        PadicScalar a = zero(ctx);
        if (n == 0) return a;
        bool neg = n < 0;
        std::uint64_t v = neg ? std::uint64_t(-(n + 1)) + 1 : std::uint64_t(n);
        // exact input: factoring out p costs nothing
        a.shift_ = 0;
        while (v % ctx->p() == 0) { v /= ctx->p(); a.shift_++; }
        a.prec_ = ctx->N();
        std::uint64_t mod = ctx->pk(ctx->N());
        a.coords_[0] = v % mod;
        if (neg) a.coords_[0] = (mod - a.coords_[0]) % mod;
        return a;
    }

    static PadicScalar from_rational(const ScalarCtxPtr& ctx, const Rational& x) {
        PadicScalar n = from_int(ctx, x.num);
        if (x.den == 1) return n;
        return n * from_int(ctx, x.den).inv();
    }

    static PadicScalar from_coords(const ScalarCtxPtr& ctx, std::vector<std::uint64_t> coords,
                                   std::int64_t shift, std::uint32_t prec) {
        PadicScalar a;
        a.ctx_ = ctx;
        a.coords_ = std::move(coords);
        a.coords_.resize(ctx->deg(), 0);
        a.shift_ = shift;
        a.prec_ = std::min(prec, ctx->N());
        std::uint64_t mod = ctx->pk(a.prec_ ? a.prec_ : 0);
        if (a.prec_)
            for (auto& c : a.coords_) c %= mod;
        else
            for (auto& c : a.coords_) c = 0;
        a.normalize();
        return a;
    }

    // Teichmuller lift of the residue element with the given index
    static PadicScalar teichmuller(const ScalarCtxPtr& ctx, const Fq::Elem& res) {
        PadicScalar a;
        a.ctx_ = ctx;
        a.shift_ = 0;
        a.prec_ = ctx->N();
        a.coords_.assign(ctx->deg(), 0);
        for (std::uint32_t i = 0; i < ctx->deg(); i++) a.coords_[i] = res[i];
        if (ctx->residue_field().is_zero(res)) return zero(ctx);
        // x -> x^(p^deg) fixes the residue and gains a digit per pass
        std::uint64_t e = 1;
        for (std::uint32_t i = 0; i < ctx->deg(); i++) e *= ctx->p();
        for (std::uint32_t pass = 0; pass < ctx->N(); pass++) {
            std::uint64_t k = e;
            auto base = a.coords_;
            std::vector<std::uint64_t> acc(ctx->deg(), 0);
            acc[0] = 1;
            while (k) {
                if (k & 1) acc = ctx->mulmod(acc, base, ctx->N());
                base = ctx->mulmod(base, base, ctx->N());
                k >>= 1;
            }
            a.coords_ = acc;
        }
        a.normalize();
        return a;
    }

    const ScalarCtxPtr& ctx() const { return ctx_; }
    bool is_zero() const { return prec_ == 0; }
    std::int64_t shift() const { return shift_; }
    std::uint32_t prec() const { return prec_; }
    const std::vector<std::uint64_t>& coords() const { return coords_; }
    // absolute precision: the value is known mod p^abs_prec
    std::int64_t abs_prec() const { return shift_ + std::int64_t(prec_); }

    // ord_p normalized by ord(p) = 1; nullopt means "zero at precision",
    // i.e. ord >= shift (the flagged infinity).
    std::optional<Rational> ord() const {
        if (is_zero()) return std::nullopt;
        return Rational(shift_);
    }
    std::int64_t ord_floor() const { return shift_; } // lower bound in all cases

    PadicScalar sigma() const { return apply(ctx_->sigma_matrix()); }
    PadicScalar sigma_inv() const { return apply(ctx_->sigma_inv_matrix()); }
    PadicScalar sigma_pow(std::uint32_t k) const {
        PadicScalar a = *this;
        for (std::uint32_t i = 0; i < k % std::max(1u, ctx_->r()); i++) a = a.sigma();
        return a;
    }
    PadicScalar frob_p() const { return apply(ctx_->frobp_matrix()); }

    friend PadicScalar operator+(const PadicScalar& a, const PadicScalar& b) {
        a.check(b);
        std::int64_t abs = std::min(a.abs_prec(), b.abs_prec());
        std::int64_t s = std::min(a.is_zero() ? abs : a.shift_, b.is_zero() ? abs : b.shift_);
        std::int64_t rel = abs - s;
        PadicScalar r;
        r.ctx_ = a.ctx_;
        if (rel <= 0) {
            r.shift_ = abs;
            r.prec_ = 0;
            r.coords_.assign(a.ctx_->deg(), 0);
            return r;
        }
        r.shift_ = s;
        r.prec_ = std::uint32_t(std::min<std::int64_t>(rel, a.ctx_->N()));
        std::uint64_t mod = a.ctx_->pk(r.prec_);
        r.coords_.assign(a.ctx_->deg(), 0);
        auto acc = [&](const PadicScalar& x) {
            if (x.is_zero()) return;
            std::int64_t diff = x.shift_ - s;
            if (diff >= std::int64_t(r.prec_)) return; // contributes 0 mod p^prec
            std::uint64_t scale = a.ctx_->pk(std::uint32_t(diff));
            for (std::uint32_t i = 0; i < a.ctx_->deg(); i++)
                r.coords_[i] = (r.coords_[i] + ScalarContext::mul64(x.coords_[i] % mod, scale % mod, mod)) % mod;
        };
        acc(a);
        acc(b);
        r.normalize();
        return r;
    }

    PadicScalar operator-() const {
        PadicScalar r = *this;
        if (r.is_zero()) return r;
        std::uint64_t mod = ctx_->pk(prec_);
        for (auto& c : r.coords_) c = (mod - c) % mod;
        return r;
    }
    friend PadicScalar operator-(const PadicScalar& a, const PadicScalar& b) { return a + (-b); }

    friend PadicScalar operator*(const PadicScalar& a, const PadicScalar& b) {
        a.check(b);
        PadicScalar r;
        r.ctx_ = a.ctx_;
        r.coords_.assign(a.ctx_->deg(), 0);
        if (a.is_zero() || b.is_zero()) {
            r.prec_ = 0;
            r.shift_ = (a.is_zero() ? a.shift_ : a.shift_) + (b.is_zero() ? b.shift_ : b.shift_);
            return r;
        }
        r.shift_ = a.shift_ + b.shift_;
        r.prec_ = std::min(a.prec_, b.prec_);
        r.coords_ = a.ctx_->mulmod(a.coords_, b.coords_, r.prec_);
        r.normalize(); // a unit times a unit stays a unit; normalize is a no-op guard
        return r;
    }

    PadicScalar inv() const {
        if (is_zero()) throw ZeroInput("PadicScalar: inverse of zero at precision");
        PadicScalar r;
        r.ctx_ = ctx_;
        r.shift_ = -shift_;
        r.prec_ = prec_;
        r.coords_ = ctx_->invert_coords(coords_, prec_);
        return r;
    }

    // multiply by p^k (exact, shifts only)
    PadicScalar pshift(std::int64_t k) const {
        PadicScalar r = *this;
        r.shift_ += k;
        return r;
    }

    PadicScalar pow(std::uint64_t n) const {
        PadicScalar acc = from_int(ctx_, 1), base = *this;
        while (n) {
            if (n & 1) acc = acc * base;
            base = base * base;
            n >>= 1;
        }
        return acc;
    }

    // equal as far as both are known
    friend bool eq_at_precision(const PadicScalar& a, const PadicScalar& b) {
        return (a - b).is_zero();
    }

    Fq::Elem residue() const {
        Fq::Elem e(ctx_->deg(), 0);
        if (is_zero() || shift_ != 0) return e; // only meaningful for integral values
        for (std::uint32_t i = 0; i < ctx_->deg(); i++) e[i] = std::uint32_t(coords_[i] % ctx_->p());
        return e;
    }
    // residue of p^(-shift) * value, the leading unit
    Fq::Elem unit_residue() const {
        Fq::Elem e(ctx_->deg(), 0);
        if (is_zero()) return e;
        for (std::uint32_t i = 0; i < ctx_->deg(); i++) e[i] = std::uint32_t(coords_[i] % ctx_->p());
        return e;
    }

    static PadicScalar random_unit(const ScalarCtxPtr& ctx, std::mt19937_64& rng) {
        std::vector<std::uint64_t> c(ctx->deg());
        std::uint64_t mod = ctx->pk(ctx->N());
        bool unit = false;
        while (!unit) {
            for (auto& x : c) x = rng() % mod;
            for (auto& x : c) unit = unit || (x % ctx->p() != 0);
        }
        return from_coords(ctx, c, 0, ctx->N());
    }

    static PadicScalar random(const ScalarCtxPtr& ctx, std::mt19937_64& rng, std::int64_t min_shift = 0,
                              std::int64_t max_shift = 3) {
        std::int64_t sh = min_shift + std::int64_t(rng() % std::uint64_t(max_shift - min_shift + 1));
        return random_unit(ctx, rng).pshift(sh);
    }

private:
    ScalarCtxPtr ctx_;
    std::int64_t shift_ = 0;
    std::uint32_t prec_ = 0;
    std::vector<std::uint64_t> coords_;

    void check(const PadicScalar& b) const {
        if (!ctx_ || !b.ctx_) throw std::logic_error("PadicScalar: missing context");
        if (ctx_->p() != b.ctx_->p() || ctx_->deg() != b.ctx_->deg())
            throw std::invalid_argument("PadicScalar: incompatible contexts");
    }

    void normalize() {
        if (prec_ == 0) {
            for (auto& c : coords_) c = 0;
            return;
        }
        // factor out p from the coordinates; each factor costs one relative digit
        while (prec_ > 0) {
            bool all = true, zero = true;
            for (auto c : coords_) {
                if (c % ctx_->p()) all = false;
                if (c) zero = false;
            }
            if (zero) {
                shift_ += prec_;
                prec_ = 0;
                return;
            }
            if (!all) break;
            for (auto& c : coords_) c /= ctx_->p();
            shift_ += 1;
            prec_ -= 1;
        }
        if (prec_ == 0) {
            for (auto& c : coords_) c = 0;
            return;
        }
        std::uint64_t mod = ctx_->pk(prec_);
        for (auto& c : coords_) c %= mod;
    }

    PadicScalar apply(const std::vector<ScalarContext::Coords>& mat) const {
        PadicScalar r = *this;
        if (is_zero()) return r;
        r.coords_ = ctx_->apply_matrix(mat, coords_, prec_);
        r.normalize();
        return r;
    }
};

} // namespace isoslope
