#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rational.hpp"
#include "padic.hpp"

namespace isoslope {

// Z[zeta_p] (and its fraction field pieces with rational coordinates) in the
// basis 1, zeta, ..., zeta^{p-2}, reduced by 1 + zeta + ... + zeta^{p-1} = 0.
// Character sums stay exact here; the complex embedding is only used for
// weight checks.
template <typename Coef>
struct CycloElem {
    std::uint32_t p = 0;
    std::vector<Coef> coeffs; // length p-1

    CycloElem() = default;
    explicit CycloElem(std::uint32_t p_) : p(p_), coeffs(p_ - 1, Coef(0)) {}

    static CycloElem zero(std::uint32_t p) { return CycloElem(p); }
    static CycloElem from_int(std::uint32_t p, std::int64_t n) {
        CycloElem e(p);
        e.coeffs[0] = Coef(n);
        return e;
    }
    // zeta^k for any integer k, reduced
    static CycloElem zeta_pow(std::uint32_t p, std::int64_t k) {
        CycloElem e(p);
        std::int64_t m = ((k % p) + p) % p;
        if (m < p - 1) {
            e.coeffs[std::size_t(m)] = Coef(1);
        } else {
            // zeta^{p-1} = -(1 + zeta + ... + zeta^{p-2})
            for (auto& c : e.coeffs) c = Coef(-1);
        }
        return e;
    }

    bool is_zero() const {
        for (const auto& c : coeffs)
            if (!(c == Coef(0))) return false;
        return true;
    }

    friend CycloElem operator+(const CycloElem& a, const CycloElem& b) {
        CycloElem r(a.p);
        for (std::size_t i = 0; i < r.coeffs.size(); i++) r.coeffs[i] = a.coeffs[i] + b.coeffs[i];
        return r;
    }
    friend CycloElem operator-(const CycloElem& a, const CycloElem& b) {
        CycloElem r(a.p);
        for (std::size_t i = 0; i < r.coeffs.size(); i++) r.coeffs[i] = a.coeffs[i] - b.coeffs[i];
        return r;
    }
    CycloElem operator-() const {
        CycloElem r(p);
        for (std::size_t i = 0; i < coeffs.size(); i++) r.coeffs[i] = Coef(0) - coeffs[i];
        return r;
    }
    friend CycloElem operator*(const CycloElem& a, const CycloElem& b) {
        std::uint32_t p = a.p;
        std::vector<Coef> prod(2 * (p - 1) - 1, Coef(0));
        for (std::size_t i = 0; i < p - 1; i++)
            for (std::size_t j = 0; j < p - 1; j++)
                prod[i + j] = prod[i + j] + a.coeffs[i] * b.coeffs[j];
        CycloElem r(p);
        for (std::size_t k = 0; k < prod.size(); k++) {
            std::size_t m = k % p;
            if (m < p - 1) {
                r.coeffs[m] = r.coeffs[m] + prod[k];
            } else {
                for (std::size_t i = 0; i < p - 1; i++) r.coeffs[i] = r.coeffs[i] - prod[k];
            }
        }
        return r;
    }
    CycloElem& operator+=(const CycloElem& b) { *this = *this + b; return *this; }
    CycloElem& operator*=(const CycloElem& b) { *this = *this * b; return *this; }

    friend bool operator==(const CycloElem& a, const CycloElem& b) {
        return a.p == b.p && a.coeffs == b.coeffs;
    }

    std::complex<double> embed() const {
        std::complex<double> z = 0;
        const double tau = 6.28318530717958647692;
        for (std::size_t k = 0; k < coeffs.size(); k++) {
            double c = coef_to_double(coeffs[k]);
            z += c * std::polar(1.0, tau * double(k) / double(p));
        }
        return z;
    }

private:
    static double coef_to_double(std::int64_t c) { return double(c); }
    static double coef_to_double(const Rational& c) { return c.to_double(); }
};

using CycloScalar = CycloElem<std::int64_t>;
using CycloRat = CycloElem<Rational>;

inline CycloRat to_rational(const CycloScalar& a) {
    CycloRat r(a.p);
    for (std::size_t i = 0; i < a.coeffs.size(); i++) r.coeffs[i] = Rational(a.coeffs[i]);
    return r;
}

// ord_pi with pi = zeta_p - 1 via the totally ramified model Z_p[pi]/(E(pi)),
// E(pi) = ((1+pi)^p - 1)/pi, computed to precision N. In the pi-basis the
// valuation of sum c_i pi^i is min_i ((p-1) v_p(c_i) + i): the candidates are
// distinct mod p-1, so the minimum is always uniquely attained.
// Returns ord_p(a) = ord_pi(a)/(p-1).
inline Rational cyclo_ord(const CycloScalar& a, std::uint32_t N) {
    if (a.is_zero()) throw ZeroInput("cyclo_ord: zero input");
    std::uint32_t p = a.p, e = p - 1;
    // p^N
    std::uint64_t pN = 1;
    for (std::uint32_t i = 0; i < N; i++) {
        if (pN > UINT64_MAX / p) throw std::invalid_argument("cyclo_ord: p^N overflows");
        pN *= p;
    }
    // E(pi) = sum_{k=1..p} binom(p,k) pi^{k-1}; pi^{e} = -(sum_{k=1..p-1} binom(p,k) pi^{k-1})
    std::vector<std::uint64_t> red(e, 0); // pi^e = sum red[i] pi^i
    {
        std::vector<std::uint64_t> binom(p + 1, 0);
        binom[0] = 1;
        for (std::uint32_t n = 1; n <= p; n++) {
            binom[n] = 1;
            for (std::uint32_t k = n - 1; k >= 1; k--) binom[k] = (binom[k] + binom[k - 1]) % pN;
        }
        for (std::uint32_t k = 1; k < p; k++) red[k - 1] = (pN - binom[k] % pN) % pN;
    }
    auto mul_pi = [&](const std::vector<std::uint64_t>& x) {
        std::vector<std::uint64_t> y(e, 0);
        std::uint64_t top = x[e - 1];
        for (std::uint32_t i = 1; i < e; i++) y[i] = x[i - 1];
        if (top)
            for (std::uint32_t i = 0; i < e; i++)
                y[i] = (y[i] + ScalarContext::mul64(top, red[i], pN)) % pN;
        return y;
    };
    // zeta^k in the pi-basis: (1+pi)^k
    std::vector<std::uint64_t> acc(e, 0);
    std::vector<std::uint64_t> zk(e, 0);
    zk[0] = 1;
    for (std::uint32_t k = 0; k < e; k++) {
        std::int64_t c = a.coeffs[k] % std::int64_t(pN);
        std::uint64_t cu = std::uint64_t(c < 0 ? c + std::int64_t(pN) : c);
        if (cu)
            for (std::uint32_t i = 0; i < e; i++)
                acc[i] = (acc[i] + ScalarContext::mul64(cu, zk[i], pN)) % pN;
        // zk <- zk * (1+pi)
        auto shifted = mul_pi(zk);
        for (std::uint32_t i = 0; i < e; i++) zk[i] = (zk[i] + shifted[i]) % pN;
    }
    std::int64_t best = -1;
    for (std::uint32_t i = 0; i < e; i++) {
        if (!acc[i]) continue;
        std::uint32_t v = 0;
        std::uint64_t c = acc[i];
        while (c % p == 0) { c /= p; v++; }
        std::int64_t cand = std::int64_t(e) * v + i;
        if (best < 0 || cand < best) best = cand;
    }
    if (best < 0)
        throw PrecisionExhausted("cyclo_ord: input is 0 mod pi^(N(p-1))");
    return Rational(best, e);
}

} // namespace isoslope
