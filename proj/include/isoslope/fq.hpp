#pragma once

#include <cstdint>
#include <vector>
#include <stdexcept>
#include <algorithm>

namespace isoslope {

// Arithmetic in F_{p^d} as F_p[x]/(g) for a fixed monic irreducible g.
// Fields here are tiny (p <= 5, d <= 8); everything is naive polynomial
// arithmetic.
class Fq {
public:
    using Elem = std::vector<std::uint32_t>; // length d, coeffs mod p

    Fq(std::uint32_t p, std::uint32_t d) : p_(p), d_(d) {
        if (d == 0) throw std::invalid_argument("Fq: degree must be positive");
        modulus_ = find_irreducible(p, d);
    }

    std::uint32_t p() const { return p_; }
    std::uint32_t degree() const { return d_; }
    std::uint64_t size() const {
        std::uint64_t s = 1;
        for (std::uint32_t i = 0; i < d_; i++) s *= p_;
        return s;
    }
    const std::vector<std::uint32_t>& modulus() const { return modulus_; }

    Elem zero() const { return Elem(d_, 0); }
    Elem one() const { Elem e(d_, 0); e[0] = 1; return e; }
    Elem from_int(std::uint64_t n) const { Elem e(d_, 0); e[0] = std::uint32_t(n % p_); return e; }
    // the class of x, a generator of the extension
    Elem gen() const {
        Elem e(d_, 0);
        if (d_ == 1) throw std::logic_error("Fq: no polynomial generator in prime field");
        e[1] = 1;
        return e;
    }

    // index <-> element, for exhaustive enumeration
    Elem from_index(std::uint64_t idx) const {
        Elem e(d_, 0);
        for (std::uint32_t i = 0; i < d_; i++) { e[i] = std::uint32_t(idx % p_); idx /= p_; }
        return e;
    }
    std::uint64_t to_index(const Elem& e) const {
        std::uint64_t idx = 0;
        for (std::uint32_t i = d_; i-- > 0;) idx = idx * p_ + e[i];
        return idx;
    }

    bool is_zero(const Elem& e) const {
        return std::all_of(e.begin(), e.end(), [](std::uint32_t c) { return c == 0; });
    }

    Elem add(const Elem& a, const Elem& b) const {
        Elem r(d_);
        for (std::uint32_t i = 0; i < d_; i++) r[i] = (a[i] + b[i]) % p_;
        return r;
    }
    Elem sub(const Elem& a, const Elem& b) const {
        Elem r(d_);
        for (std::uint32_t i = 0; i < d_; i++) r[i] = (a[i] + p_ - b[i]) % p_;
        return r;
    }
    Elem neg(const Elem& a) const { return sub(zero(), a); }

    Elem mul(const Elem& a, const Elem& b) const {
        std::vector<std::uint64_t> prod(2 * d_ - 1, 0);
        for (std::uint32_t i = 0; i < d_; i++)
            for (std::uint32_t j = 0; j < d_; j++)
                prod[i + j] += std::uint64_t(a[i]) * b[j];
        // reduce mod g: x^d = -(g_0 + ... + g_{d-1} x^{d-1})
        for (std::uint32_t k = 2 * d_ - 2; k + 1 > d_; k--) {
            std::uint64_t c = prod[k] % p_;
            if (c == 0) continue;
            for (std::uint32_t i = 0; i < d_; i++)
                prod[k - d_ + i] += c * (p_ - modulus_[i] % p_);
            prod[k] = 0;
        }
        Elem r(d_);
        for (std::uint32_t i = 0; i < d_; i++) r[i] = std::uint32_t(prod[i] % p_);
        return r;
    }

    Elem pow(Elem a, std::uint64_t n) const {
        Elem r = one();
        while (n) {
            if (n & 1) r = mul(r, a);
            a = mul(a, a);
            n >>= 1;
        }
        return r;
    }

    Elem inv(const Elem& a) const {
        if (is_zero(a)) throw std::domain_error("Fq: inverse of zero");
        return pow(a, size() - 2);
    }

    // p-power Frobenius; frob^d = id
    Elem frob(const Elem& a) const { return pow(a, p_); }

    // absolute trace to F_p
    std::uint32_t trace(const Elem& a) const {
        Elem s = a, f = a;
        for (std::uint32_t i = 1; i < d_; i++) {
            f = frob(f);
            s = add(s, f);
        }
        return s[0]; // trace lands in F_p
    }

    // Deterministic search for a monic irreducible of degree d over F_p.
    static std::vector<std::uint32_t> find_irreducible(std::uint32_t p, std::uint32_t d) {
        if (d == 1) return {0, 1}; // x itself
        std::vector<std::uint32_t> g(d + 1, 0);
        g[d] = 1;
        std::uint64_t total = 1;
        for (std::uint32_t i = 0; i < d; i++) total *= p;
        for (std::uint64_t idx = 0; idx < total; idx++) {
            std::uint64_t t = idx;
            for (std::uint32_t i = 0; i < d; i++) { g[i] = std::uint32_t(t % p); t /= p; }
            if (g[0] == 0) continue; // reducible: x divides
            if (poly_is_irreducible(g, p)) return g;
        }
        throw std::logic_error("Fq: no irreducible polynomial found");
    }

private:
    std::uint32_t p_, d_;
    std::vector<std::uint32_t> modulus_; // length d+1, monic

    // --- bare F_p[x] helpers for the irreducibility test ---
    static std::vector<std::uint32_t> poly_mulmod(const std::vector<std::uint32_t>& a,
                                                  const std::vector<std::uint32_t>& b,
                                                  const std::vector<std::uint32_t>& g,
                                                  std::uint32_t p) {
        std::vector<std::uint64_t> prod(a.size() + b.size() - 1, 0);
        for (size_t i = 0; i < a.size(); i++)
            for (size_t j = 0; j < b.size(); j++)
                prod[i + j] += std::uint64_t(a[i]) * b[j];
        size_t d = g.size() - 1;
        if (prod.size() < d) prod.resize(d, 0);
        for (size_t k = prod.size(); k-- > d;) {
            std::uint64_t c = prod[k] % p;
            if (c)
                for (size_t i = 0; i < d; i++)
                    prod[k - d + i] += c * (p - g[i] % p);
            prod[k] = 0;
        }
        std::vector<std::uint32_t> r(d);
        for (size_t i = 0; i < d; i++) r[i] = std::uint32_t(prod[i] % p);
        while (r.size() > 1 && r.back() == 0) r.pop_back();
        return r;
    }

    static std::vector<std::uint32_t> poly_xpow_pk(std::uint32_t k,
                                                   const std::vector<std::uint32_t>& g,
                                                   std::uint32_t p) {
        // x^(p^k) mod g by repeated p-th powering
        std::vector<std::uint32_t> r = {0, 1};
        for (std::uint32_t i = 0; i < k; i++) {
            std::vector<std::uint32_t> acc = {1};
            std::vector<std::uint32_t> base = r;
            std::uint32_t e = p;
            while (e) {
                if (e & 1) acc = poly_mulmod(acc, base, g, p);
                base = poly_mulmod(base, base, g, p);
                e >>= 1;
            }
            r = acc;
        }
        return r;
    }

    static std::vector<std::uint32_t> poly_gcd(std::vector<std::uint32_t> a,
                                               std::vector<std::uint32_t> b, std::uint32_t p) {
        auto deg = [](const std::vector<std::uint32_t>& f) {
            for (size_t i = f.size(); i-- > 0;)
                if (f[i]) return (long)i;
            return -1L;
        };
        while (deg(b) >= 0) {
            long da = deg(a), db = deg(b);
            if (da < db) { std::swap(a, b); continue; }
            // a -= lead(a)/lead(b) * x^(da-db) * b
            std::uint32_t lb = b[db];
            std::uint32_t linv = 1;
            for (std::uint32_t t = 1; t < p; t++)
                if (t * lb % p == 1) { linv = t; break; }
            std::uint32_t c = a[da] * linv % p;
            for (long i = 0; i <= db; i++)
                a[da - db + i] = (a[da - db + i] + p - std::uint32_t(std::uint64_t(c) * b[i] % p)) % p;
        }
        return a;
    }

    static bool poly_is_irreducible(const std::vector<std::uint32_t>& g, std::uint32_t p) {
        std::uint32_t d = std::uint32_t(g.size() - 1);
        // x^(p^d) == x mod g
        auto xpd = poly_xpow_pk(d, g, p);
        std::vector<std::uint32_t> x = {0, 1};
        if (xpd.size() < 2) xpd.resize(2, 0);
        std::vector<std::uint32_t> diff(std::max(xpd.size(), x.size()), 0);
        for (size_t i = 0; i < diff.size(); i++) {
            std::uint32_t a = i < xpd.size() ? xpd[i] : 0, b = i < x.size() ? x[i] : 0;
            diff[i] = (a + p - b) % p;
        }
        if (!std::all_of(diff.begin(), diff.end(), [](std::uint32_t c) { return c == 0; }))
            return false;
        // gcd(x^(p^(d/l)) - x, g) == 1 for prime divisors l of d
        for (std::uint32_t l = 2; l <= d; l++) {
            if (d % l) continue;
            bool lprime = true;
            for (std::uint32_t t = 2; t * t <= l; t++)
                if (l % t == 0) { lprime = false; break; }
            if (!lprime) continue;
            auto xq = poly_xpow_pk(d / l, g, p);
            std::vector<std::uint32_t> h(std::max<size_t>(xq.size(), 2), 0);
            for (size_t i = 0; i < h.size(); i++) {
                std::uint32_t a = i < xq.size() ? xq[i] : 0, b = i == 1 ? 1u : 0u;
                h[i] = (a + p - b) % p;
            }
            auto gg = poly_gcd(g, h, p);
            long dg = -1;
            for (size_t i = gg.size(); i-- > 0;)
                if (gg[i]) { dg = (long)i; break; }
            if (dg != 0) return false;
        }
        return true;
    }
};

} // namespace isoslope
