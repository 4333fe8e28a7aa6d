#pragma once

#include <cmath>
#include <vector>

#include "phimod.hpp"

namespace isoslope {

// v_p(n!) by Legendre's formula
inline std::int64_t legendre_factorial_ord(std::int64_t n, std::int64_t p) {
    std::int64_t v = 0;
    while (n) { n /= p; v += n; }
    return v;
}

// Taylor data of the generic solution matrix Y = sum C_n (X-t)^n / n!:
// C_0 = I, C_{n+1} = C_n' + C_1 C_n. The C_n are stored exactly; norms
// record ord of C_n/n! (nullopt for a vanishing matrix).
struct TaylorData {
    std::uint32_t order = 0;
    std::vector<SeriesMatrix> Cn;
    std::vector<std::optional<Rational>> norms; // ord(C_n) - v_p(n!)
};

inline TaylorData taylor_expand(const PhiModule& M, std::uint32_t order) {
    if (!M.C1) throw std::invalid_argument("taylor_expand: module has no connection");
    TaylorData T;
    T.order = order;
    T.Cn.reserve(order + 1);
    T.Cn.push_back(M.id());
    for (std::uint32_t n = 0; n < order; n++)
        T.Cn.push_back(matrix_derivative(T.Cn.back()) + (*M.C1) * T.Cn.back());
    std::int64_t p = M.ctx->p();
    for (std::uint32_t n = 0; n <= order; n++) {
        auto g = matrix_gauss_ord(T.Cn[n]);
        if (!g)
            T.norms.push_back(std::nullopt);
        else
            T.norms.push_back(*g - Rational(legendre_factorial_ord(n, p)));
    }
    return T;
}

struct SolvabilityVerdict {
    bool solvable = false;                      // at this truncation order only
    std::optional<std::uint32_t> witness;       // first index violating decay
};

// |C_n/n!| eta^n must decrease toward 0. At the truncation order the check
// is: the tail never climbs back above the head maximum.
inline SolvabilityVerdict solvability_check(const TaylorData& T, const Rational& eta,
                                            std::uint32_t p) {
    if (!(Rational(0) < eta) || !(eta < Rational(1)))
        throw std::invalid_argument("solvability_check: eta must be in (0,1)");
    std::vector<double> L(T.order + 1, -1e300);
    double lnp = std::log(double(p));
    double lne = std::log(double(eta.num)) - std::log(double(eta.den));
    for (std::uint32_t n = 0; n <= T.order; n++)
        if (T.norms[n]) L[n] = -T.norms[n]->to_double() * lnp + double(n) * lne;
    std::uint32_t head_end = std::max<std::uint32_t>(4, T.order / 8);
    double head = -1e300;
    for (std::uint32_t n = 0; n <= std::min(head_end, T.order); n++) head = std::max(head, L[n]);
    SolvabilityVerdict v;
    v.solvable = true;
    for (std::uint32_t n = head_end + 1; n <= T.order; n++) {
        if (L[n] > head + 1e-9) {
            v.solvable = false;
            v.witness = n;
            break;
        }
    }
    return v;
}

enum class GrowthClass { BOUNDED_AT_PRECISION, UNBOUNDED_WITNESS };

struct SolutionSpace {
    std::size_t dim = 0;
    SeriesMatrix basis;                        // rank x dim columns of initial vectors y0
    std::vector<GrowthClass> growth;           // per basis column
    std::vector<std::optional<std::uint32_t>> witness; // offending n when unbounded
    Rational bound_ord{0};                     // beta: |y0 C_n / n!| <= p^{-beta}
};

// The bounded subspace of initial vectors: sup_n |y0 C_n/n!| <= p^{-beta}.
// Linear algebra route: y0 must kill, over the series field, the part of
// each C_n/n! lying below the bound; each returned basis vector is then
// classified directly against the bound.
inline SolutionSpace bounded_solution_space(const PhiModule& M, const TaylorData& T,
                                            std::optional<Rational> beta_opt = std::nullopt,
                                            std::uint32_t burn_in = 2) {
    std::size_t s = M.rank;
    std::int64_t p = M.ctx->p();
    Rational beta(0);
    if (beta_opt) {
        beta = *beta_opt;
    } else {
        bool first = true;
        for (std::uint32_t n = 0; n <= std::min<std::uint32_t>(burn_in, T.order); n++) {
            if (!T.norms[n]) continue;
            if (first || *T.norms[n] < beta) beta = *T.norms[n], first = false;
        }
    }
    // conditions: y0 * low(C_n, m_n) = 0 with m_n = beta + v_p(n!)
    std::vector<SeriesMatrix> lows;
    for (std::uint32_t n = 0; n <= T.order; n++) {
        Rational mn = beta + Rational(legendre_factorial_ord(n, p));
        SeriesMatrix low(s, s, M.zero());
        bool any = false;
        for (std::size_t i = 0; i < s; i++)
            for (std::size_t j = 0; j < s; j++) {
                TruncatedSeries cut = M.zero();
                for (const auto& [e, c] : T.Cn[n].at(i, j).terms())
                    if (*c.ord() < mn) {
                        cut.add_term(e, c);
                        any = true;
                    }
                low.at(i, j) = cut;
            }
        if (any) lows.push_back(low);
    }
    // stack: y0 (1 x s) * [low_0 | low_1 | ...] = 0; kernel via the transpose
    SolutionSpace out;
    out.bound_ord = beta;
    std::size_t cols = lows.size() * s;
    if (cols == 0) {
        out.dim = s;
        out.basis = M.id();
        for (std::size_t j = 0; j < s; j++) {
            out.growth.push_back(GrowthClass::BOUNDED_AT_PRECISION);
            out.witness.push_back(std::nullopt);
        }
        return out;
    }
    SeriesMatrix A(cols, s, M.zero());
    for (std::size_t b = 0; b < lows.size(); b++)
        for (std::size_t i = 0; i < s; i++)
            for (std::size_t j = 0; j < s; j++)
                A.at(b * s + j, i) = lows[b].at(i, j); // row: condition column j of block b
    std::vector<std::vector<TruncatedSeries>> ker;
    series_rank(A, &ker);
    out.dim = ker.size();
    out.basis = SeriesMatrix(s, std::max<std::size_t>(1, ker.size()), M.zero());
    if (ker.empty()) {
        out.basis = SeriesMatrix(s, 0, M.zero());
        return out;
    }
    for (std::size_t j = 0; j < ker.size(); j++)
        for (std::size_t i = 0; i < s; i++) out.basis.at(i, j) = ker[j][i];
    // classify each basis vector directly
    for (std::size_t j = 0; j < ker.size(); j++) {
        GrowthClass cls = GrowthClass::BOUNDED_AT_PRECISION;
        std::optional<std::uint32_t> wit;
        for (std::uint32_t n = 0; n <= T.order && cls == GrowthClass::BOUNDED_AT_PRECISION; n++) {
            Rational mn = beta + Rational(legendre_factorial_ord(n, p));
            for (std::size_t col = 0; col < s; col++) {
                TruncatedSeries acc = M.zero();
                for (std::size_t i = 0; i < s; i++)
                    acc = acc + out.basis.at(i, j) * T.Cn[n].at(i, col);
                auto g = acc.gauss_ord();
                if (g && *g < mn) {
                    cls = GrowthClass::UNBOUNDED_WITNESS;
                    wit = n;
                    break;
                }
            }
        }
        out.growth.push_back(cls);
        out.witness.push_back(wit);
    }
    return out;
}

} // namespace isoslope
