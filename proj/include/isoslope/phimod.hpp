#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

#include "matrix.hpp"
#include "newton_polygon.hpp"
#include "series.hpp"

namespace isoslope {

struct CyclicSearchFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotUnitRoot : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ResidueNotNormalized : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SlopesNotDistinct : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoBoundedSplitting : std::runtime_error {
    Rational witness;
    NoBoundedSplitting(const std::string& m, Rational w) : std::runtime_error(m), witness(w) {}
};
struct TwistNotRepresentable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FixedPointNotFound : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FiltrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using SeriesMatrix = Matrix<TruncatedSeries>;

// phi_M(e_j) = sum_i e_i F_ij; optional connection nabla(d/dt)(e_j) = sum_i e_i (C1)_ij.
struct PhiModule {
    ScalarCtxPtr ctx;
    RingConfig ring;
    std::size_t rank = 0;
    SeriesMatrix F;
    std::optional<SeriesMatrix> C1;
    mutable std::optional<std::vector<Rational>> cached_slopes;

    TruncatedSeries zero() const { return TruncatedSeries::zero(ctx, ring); }
    TruncatedSeries one() const { return TruncatedSeries::one(ctx, ring); }
    TruncatedSeries cst(std::int64_t n) const {
        return TruncatedSeries::constant(ctx, ring, PadicScalar::from_int(ctx, n));
    }
    SeriesMatrix id() const { return SeriesMatrix::identity(rank, zero(), one()); }

    // action on coordinate columns: v -> F phi(v)
    SeriesMatrix apply_phi(const SeriesMatrix& v) const { return F * matrix_phi(v); }

    // F' = X^{-1} F phi(X), C1' = X^{-1} (C1 X + X')
    PhiModule basis_change(const SeriesMatrix& X) const {
        PhiModule m = *this;
        SeriesMatrix Xi = X.inverse();
        m.F = Xi * F * matrix_phi(X);
        if (C1) m.C1 = Xi * ((*C1) * X + matrix_derivative(X));
        m.cached_slopes.reset();
        return m;
    }

    // integral twist: F -> p^{-m} F (slope shift by -m)
    PhiModule twist(std::int64_t m) const {
        PhiModule t = *this;
        PadicScalar c = PadicScalar::from_int(ctx, 1).pshift(-m);
        for (auto& x : t.F.a) x = x.scaled(c);
        t.cached_slopes.reset();
        return t;
    }

    PhiModule tensor(const PhiModule& other) const {
        PhiModule t;
        t.ctx = ctx;
        t.ring = ring;
        t.rank = rank * other.rank;
        t.F = kronecker(F, other.F);
        if (C1 && other.C1) {
            SeriesMatrix i1 = id(), i2 = other.id();
            t.C1 = kronecker(*C1, i2) + kronecker(i1, *other.C1);
        }
        return t;
    }

    PhiModule dual() const {
        PhiModule d = *this;
        d.F = F.inverse().transpose();
        if (C1) d.C1 = negate(C1->transpose());
        d.cached_slopes.reset();
        return d;
    }

    // phi-nabla compatibility: F' + C1 F = q t^{q-1} F phi(C1), at precision
    bool connection_compatible() const {
        if (!C1) return true;
        TruncatedSeries qt = TruncatedSeries::monomial(
            ctx, ring, Rational(std::int64_t(ctx->q()) - 1),
            PadicScalar::from_int(ctx, std::int64_t(ctx->q())));
        SeriesMatrix lhs = matrix_derivative(F) + (*C1) * F;
        SeriesMatrix rhs = (F * matrix_phi(*C1)).scaled(qt);
        return matrix_is_zero(lhs - rhs);
    }

private:
    static SeriesMatrix kronecker(const SeriesMatrix& A, const SeriesMatrix& B) {
        SeriesMatrix K(A.rows * B.rows, A.cols * B.cols, A.a.front());
        for (std::size_t i = 0; i < A.rows; i++)
            for (std::size_t j = 0; j < A.cols; j++)
                for (std::size_t k = 0; k < B.rows; k++)
                    for (std::size_t l = 0; l < B.cols; l++)
                        K.at(i * B.rows + k, j * B.cols + l) = A.at(i, j) * B.at(k, l);
        return K;
    }
};

inline PhiModule make_phi_module(const ScalarCtxPtr& ctx, const RingConfig& ring, SeriesMatrix F,
                                 std::optional<SeriesMatrix> C1 = std::nullopt) {
    PhiModule m;
    m.ctx = ctx;
    m.ring = ring;
    m.rank = F.rows;
    m.F = std::move(F);
    m.C1 = std::move(C1);
    return m;
}

// ---- linear algebra over the truncated series field ----

// Gauss elimination with Gauss-norm pivoting; returns the rank at precision.
// When kernel != nullptr, columns spanning the kernel are appended to it.
// The elimination runs over a Laurent-widened window (pivots of positive
// t-order are invertible there); kernel vectors are t-cleared back into the
// original ring.
inline std::size_t series_rank(const SeriesMatrix& A0,
                               std::vector<std::vector<TruncatedSeries>>* kernel = nullptr) {
    const std::size_t m = A0.rows, n = A0.cols;
    if (m == 0 || n == 0) return 0;
    const ScalarCtxPtr& ctx = A0.a.front().ctx();
    RingConfig orig = A0.a.front().ring();
    for (const auto& x : A0.a) {
        orig.e_min = rat_min(orig.e_min, x.ring().e_min);
        orig.e_max = rat_max(orig.e_max, x.ring().e_max);
        orig.D = std::lcm(orig.D, x.ring().D);
        orig.D_cap = std::max(orig.D_cap, x.ring().D_cap);
    }
    RingConfig wide = orig;
    if (wide.tag == RingTag::BOUNDED_DISC) wide.tag = RingTag::BOUNDED_ROBBA;
    Rational width = orig.e_max - orig.e_min;
    wide.e_min = orig.e_min - width - Rational(1);
    wide.e_max = orig.e_max + width + Rational(1);
    SeriesMatrix A(m, n, TruncatedSeries::zero(ctx, wide));
    for (std::size_t i = 0; i < m; i++)
        for (std::size_t j = 0; j < n; j++)
            for (const auto& [e, c] : A0.at(i, j).terms()) A.at(i, j).set_term(e, c);

    std::vector<bool> row_used(m, false);
    std::size_t rank = 0;
    std::vector<std::optional<std::size_t>> col_pivot_row(n);
    for (std::size_t j = 0; j < n; j++) {
        std::optional<std::size_t> best;
        std::optional<std::pair<Rational, Rational>> best_key; // (gauss ord, leading exponent)
        for (std::size_t i = 0; i < m; i++) {
            if (row_used[i] || A.at(i, j).is_zero()) continue;
            auto lt = A.at(i, j).leading_term();
            std::pair<Rational, Rational> key{*A.at(i, j).gauss_ord(), lt->first};
            if (!best || key.first < best_key->first ||
                (key.first == best_key->first && key.second < best_key->second))
                best = i, best_key = key;
        }
        if (!best) continue;
        std::size_t pi = *best;
        row_used[pi] = true;
        col_pivot_row[j] = pi;
        rank++;
        TruncatedSeries inv = A.at(pi, j).invert();
        for (std::size_t jj = 0; jj < n; jj++) A.at(pi, jj) = A.at(pi, jj) * inv;
        for (std::size_t i = 0; i < m; i++) {
            if (i == pi || A.at(i, j).is_zero()) continue;
            TruncatedSeries f = A.at(i, j);
            for (std::size_t jj = 0; jj < n; jj++)
                A.at(i, jj) = A.at(i, jj) - f * A.at(pi, jj);
        }
    }
    if (kernel) {
        for (std::size_t j = 0; j < n; j++) {
            if (col_pivot_row[j]) continue;
            std::vector<TruncatedSeries> v(n, TruncatedSeries::zero(ctx, wide));
            v[j] = TruncatedSeries::one(ctx, wide);
            for (std::size_t jj = 0; jj < n; jj++) {
                if (!col_pivot_row[jj]) continue;
                v[jj] = -A.at(*col_pivot_row[jj], j);
            }
            // clear the t-content so the vector lives in the original ring
            std::optional<Rational> lo;
            for (const auto& x : v)
                if (!x.is_zero()) {
                    Rational l = x.terms().begin()->first;
                    if (!lo || l < *lo) lo = l;
                }
            Rational shift = (lo && *lo < orig.e_min) ? orig.e_min - *lo : Rational(0);
            std::vector<TruncatedSeries> w;
            for (const auto& x : v) {
                TruncatedSeries y = TruncatedSeries::zero(ctx, orig);
                for (const auto& [e, c] : x.terms()) y.set_term(e + shift, c);
                if (x.clipped()) y.mark_clipped();
                w.push_back(std::move(y));
            }
            kernel->push_back(std::move(w));
        }
    }
    return rank;
}

// greedy completion of independent columns V to an invertible square matrix
inline SeriesMatrix complete_basis(const PhiModule& M, const SeriesMatrix& V) {
    std::size_t n = M.rank, k = V.cols;
    for (std::size_t mask = 0; mask < (std::size_t(1) << n); mask++) {
        if (std::size_t(__builtin_popcountll(mask)) != n - k) continue;
        SeriesMatrix T(n, n, M.zero());
        for (std::size_t i = 0; i < n; i++)
            for (std::size_t j = 0; j < k; j++) T.at(i, j) = V.at(i, j);
        std::size_t c = k;
        for (std::size_t b = 0; b < n; b++)
            if (mask & (std::size_t(1) << b)) {
                T.at(b, c) = M.one();
                c++;
            }
        try {
            (void)T.inverse();
            return T;
        } catch (const NotInvertibleAtPrecision&) {
            continue;
        }
    }
    throw FiltrationError("complete_basis: no unimodular completion found");
}

// ---- cyclic vectors and slopes ----

// Returns an invertible P whose columns are e, F phi(e), ..., so that the
// basis change by P puts F into companion-style form.
inline SeriesMatrix cyclic_vector(const PhiModule& M, std::uint32_t attempts = 64) {
    std::size_t n = M.rank;
    if (n == 1) return M.id();
    std::vector<SeriesMatrix> seeds;
    auto unit_col = [&](std::size_t i) {
        SeriesMatrix v(n, 1, M.zero());
        v.at(i, 0) = M.one();
        return v;
    };
    for (std::size_t i = 0; i < n; i++) seeds.push_back(unit_col(i));
    {
        SeriesMatrix v(n, 1, M.zero());
        for (std::size_t i = 0; i < n; i++) v.at(i, 0) = M.one();
        seeds.push_back(v);
        SeriesMatrix w(n, 1, M.zero());
        for (std::size_t i = 0; i < n; i++)
            w.at(i, 0) = TruncatedSeries::monomial(M.ctx, M.ring, Rational(std::int64_t(i)),
                                                   PadicScalar::from_int(M.ctx, 1));
        seeds.push_back(w);
    }
    std::mt19937_64 rng(0x1505C0FFEEull);
    for (std::uint32_t a = 0; a < attempts; a++) {
        SeriesMatrix v(n, 1, M.zero());
        if (a < seeds.size())
            v = seeds[a];
        else
            for (std::size_t i = 0; i < n; i++) {
                std::int64_t c = std::int64_t(rng() % (2 * M.ctx->p())) - std::int64_t(M.ctx->p());
                std::int64_t e = std::int64_t(rng() % 3) - 1;
                v.at(i, 0) = TruncatedSeries::monomial(M.ctx, M.ring, Rational(e),
                                                       PadicScalar::from_int(M.ctx, c == 0 ? 1 : c));
            }
        SeriesMatrix P(n, n, M.zero());
        SeriesMatrix w = v;
        for (std::size_t j = 0; j < n; j++) {
            for (std::size_t i = 0; i < n; i++) P.at(i, j) = w.at(i, 0);
            if (j + 1 < n) w = M.apply_phi(w);
        }
        try {
            (void)P.inverse();
            return P;
        } catch (const NotInvertibleAtPrecision&) {
            continue;
        }
    }
    throw CyclicSearchFailed("cyclic_vector: no cyclic vector at precision after configured attempts");
}

namespace detail {

inline std::vector<Rational> slopes_impl(const PhiModule& M);

// block-triangular fallback: strictly lower-left (or upper-right) zero block
inline std::optional<std::vector<Rational>> slopes_block_split(const PhiModule& M) {
    std::size_t n = M.rank;
    for (std::size_t k = 1; k < n; k++) {
        bool lower_zero = true, upper_zero = true;
        for (std::size_t i = k; i < n; i++)
            for (std::size_t j = 0; j < k; j++) {
                if (!M.F.at(i, j).is_zero()) lower_zero = false;
                if (!M.F.at(j, i).is_zero()) upper_zero = false;
            }
        if (!lower_zero && !upper_zero) continue;
        auto take = [&](std::size_t r0, std::size_t c0, std::size_t sz) {
            SeriesMatrix B(sz, sz, M.zero());
            for (std::size_t i = 0; i < sz; i++)
                for (std::size_t j = 0; j < sz; j++) B.at(i, j) = M.F.at(r0 + i, c0 + j);
            return make_phi_module(M.ctx, M.ring, B);
        };
        std::vector<Rational> s1 = slopes_impl(take(0, 0, k));
        std::vector<Rational> s2 = slopes_impl(take(k, k, n - k));
        s1.insert(s1.end(), s2.begin(), s2.end());
        std::sort(s1.begin(), s1.end(), [](const Rational& a, const Rational& b) { return a < b; });
        return s1;
    }
    return std::nullopt;
}

inline std::vector<Rational> slopes_impl(const PhiModule& M) {
    std::size_t n = M.rank;
    if (n == 1) {
        auto g = M.F.at(0, 0).gauss_ord();
        if (!g) throw NotInvertibleAtPrecision("slopes: zero Frobenius");
        return {*g};
    }
    try {
        SeriesMatrix P = cyclic_vector(M);
        PhiModule C = M.basis_change(P);
        // companion form: last column b holds phi^n(e) = sum b_j phi^j(e);
        // twisted char poly X^n - b_{n-1} X^{n-1} - ... - b_0
        std::vector<std::optional<Rational>> vals(n + 1);
        for (std::size_t j = 0; j < n; j++) vals[j] = C.F.at(j, n - 1).gauss_ord();
        vals[n] = Rational(0);
        auto roots = newton_root_valuations(vals);
        if (roots.size() != n) throw CyclicSearchFailed("slopes: degenerate char polynomial");
        return roots;
    } catch (const CyclicSearchFailed&) {
        auto blocks = slopes_block_split(M);
        if (blocks) return *blocks;
        throw;
    }
}

} // namespace detail

inline std::vector<Rational> slopes(const PhiModule& M) {
    if (M.cached_slopes) return *M.cached_slopes;
    auto s = detail::slopes_impl(M);
    M.cached_slopes = s;
    return s;
}

inline Rational max_slope(const PhiModule& M) {
    auto s = slopes(M);
    return s.back();
}

// ---- unit-root trivialization ----

namespace detail {

// Solve w - frobq(w) = c on truncated residue series, where
// frobq(sum a_e t^e) = sum a_e^q t^{qe}. Exponents are processed by
// increasing |e|, so w_{e/q} is known when w_e = c_e + (w_{e/q})^q is set.
// The constant part needs the F_p-linear system (I - frobq) w = c; nullopt
// when it is inconsistent (the Lang obstruction at this digit).
inline std::optional<std::map<Rational, Fq::Elem>> artin_schreier_solve(
    const std::map<Rational, Fq::Elem>& c, const Fq& k, std::uint32_t s, const RingConfig& ring) {
    std::uint32_t d = k.degree(), p = k.p();
    std::int64_t q = 1;
    for (std::uint32_t i = 0; i < s; i++) q *= p;
    auto frobq = [&](const Fq::Elem& e) {
        Fq::Elem r = e;
        for (std::uint32_t i = 0; i < s; i++) r = k.frob(r);
        return r;
    };
    std::map<Rational, Fq::Elem> w;
    // constant part
    auto c0 = c.find(Rational(0));
    if (c0 != c.end() && !k.is_zero(c0->second)) {
        // row-reduce (I - frobq) x = c0 over F_p
        std::vector<std::vector<std::uint32_t>> A(d, std::vector<std::uint32_t>(d + 1, 0));
        for (std::uint32_t j = 0; j < d; j++) {
            Fq::Elem b(d, 0);
            b[j] = 1;
            Fq::Elem img = k.sub(b, frobq(b));
            for (std::uint32_t i = 0; i < d; i++) A[i][j] = img[i];
        }
        for (std::uint32_t i = 0; i < d; i++) A[i][d] = c0->second[i];
        std::uint32_t row = 0;
        std::vector<std::int64_t> pivot_of_col(d, -1);
        for (std::uint32_t col = 0; col < d && row < d; col++) {
            std::uint32_t sel = row;
            while (sel < d && A[sel][col] == 0) sel++;
            if (sel == d) continue;
            std::swap(A[sel], A[row]);
            std::uint32_t inv = 1;
            for (std::uint32_t t = 1; t < p; t++)
                if (t * A[row][col] % p == 1) { inv = t; break; }
            for (std::uint32_t j = 0; j <= d; j++) A[row][j] = A[row][j] * inv % p;
            for (std::uint32_t i = 0; i < d; i++) {
                if (i == row || A[i][col] == 0) continue;
                std::uint32_t f = A[i][col];
                for (std::uint32_t j = 0; j <= d; j++)
                    A[i][j] = (A[i][j] + (p - f) * A[row][j]) % p;
            }
            pivot_of_col[col] = row;
            row++;
        }
        for (std::uint32_t i = row; i < d; i++)
            if (A[i][d] != 0) return std::nullopt; // inconsistent: obstruction
        Fq::Elem x(d, 0);
        for (std::uint32_t col = 0; col < d; col++)
            if (pivot_of_col[col] >= 0) x[col] = A[std::size_t(pivot_of_col[col])][d];
        w[Rational(0)] = x;
    }
    // nonconstant exponents, |e| ascending
    std::vector<Rational> exps;
    for (const auto& [e, ce] : c)
        if (!(e == Rational(0))) exps.push_back(e);
    // also walk forward the orbits of solved exponents so sigma(w) cancels fully
    std::sort(exps.begin(), exps.end(), [](const Rational& a, const Rational& b) {
        Rational aa = a < Rational(0) ? -a : a, bb = b < Rational(0) ? -b : b;
        if (!(aa == bb)) return aa < bb;
        return a < b;
    });
    std::function<void(const Rational&)> solve_at = [&](const Rational& e) {
        if (w.count(e)) return;
        Fq::Elem val = k.zero();
        auto ce = c.find(e);
        if (ce != c.end()) val = ce->second;
        Rational prev = e / Rational(q);
        if (ring.in_lattice(prev) && ring.in_window(prev)) {
            solve_at(prev);
            auto it = w.find(prev);
            if (it != w.end()) val = k.add(val, frobq(it->second));
        }
        if (!k.is_zero(val)) w[e] = val;
    };
    for (const auto& e : exps) solve_at(e);
    // forward orbit closure within the window: w at e forces the equation at q e
    bool grew = true;
    while (grew) {
        grew = false;
        std::vector<Rational> have;
        for (const auto& [e, v] : w)
            if (!(e == Rational(0))) have.push_back(e);
        for (const auto& e : have) {
            Rational nxt = e * Rational(q);
            if (!ring.in_window(nxt) || w.count(nxt)) continue;
            Fq::Elem val = k.zero();
            auto ce = c.find(nxt);
            if (ce != c.end()) val = ce->second;
            val = k.add(val, frobq(w[e]));
            if (!k.is_zero(val)) {
                w[nxt] = val;
                grew = true;
            }
        }
    }
    return w;
}

} // namespace detail

// Solve F phi(Y) = Y with Y invertible, for F in GL over the integer ring
// with F = I mod p (after a constant-diagonal residue normalization). Digit
// by digit: the correction at each p-digit solves the additive equation
// w - sigma(w) = e on residues. A digit whose constant part is obstructed in
// the finite residue field is reported, mirroring the degree cap on Lang's
// theorem at desk scale.
inline SeriesMatrix trivialize_unit_root(const PhiModule& M) {
    auto g = matrix_gauss_ord(M.F);
    auto dg = M.F.det().gauss_ord();
    if (!g || *g < Rational(0) || !dg || !(*dg == Rational(0)))
        throw NotUnitRoot("trivialize_unit_root: F is not in GL over the integer ring");

    const Fq& k = M.ctx->residue_field();
    SeriesMatrix F = M.F;
    auto needs_norm = [&]() {
        SeriesMatrix D = F - M.id();
        auto o = matrix_gauss_ord(D);
        return o && !(Rational(0) < *o);
    };
    SeriesMatrix Y0 = M.id();
    bool normalized = false;
    if (needs_norm()) {
        // only constant diagonal residues are searched
        for (std::size_t i = 0; i < M.rank; i++)
            for (std::size_t j = 0; j < M.rank; j++)
                for (const auto& [e, c] : F.at(i, j).terms()) {
                    if (*c.ord() > Rational(0)) continue;
                    if (i != j || !(e == Rational(0)))
                        throw ResidueNotNormalized(
                            "trivialize_unit_root: residue not a constant diagonal matrix");
                }
        for (std::size_t i = 0; i < M.rank; i++) {
            Fq::Elem u = F.at(i, i).coeff(Rational(0)).unit_residue();
            if (k.is_zero(u)) throw NotUnitRoot("trivialize_unit_root: diagonal residue vanishes");
            std::optional<Fq::Elem> found;
            for (std::uint64_t idx = 1; idx < k.size(); idx++) {
                Fq::Elem y = k.from_index(idx);
                Fq::Elem fy = y;
                for (std::uint32_t t = 0; t < M.ctx->s(); t++) fy = k.frob(fy);
                if (fy == k.mul(u, y)) { found = y; break; }
            }
            if (!found)
                throw ResidueNotNormalized(
                    "trivialize_unit_root: no residue solution within the field (degree cap)");
            PadicScalar ty = PadicScalar::teichmuller(M.ctx, *found);
            Y0.at(i, i) = TruncatedSeries::constant(M.ctx, M.ring, ty);
        }
        F = Y0.inverse() * F * matrix_phi(Y0);
        if (needs_norm())
            throw ResidueNotNormalized(
                "trivialize_unit_root: normalization did not reach F = I mod p");
        normalized = true;
    }

    std::int64_t N = M.ctx->N();
    SeriesMatrix Y = M.id();
    for (std::uint32_t pass = 0; pass < 2 * M.ctx->N() + 4; pass++) {
        SeriesMatrix E = matrix_truncate_abs(F * matrix_phi(Y) - Y, N);
        auto h = matrix_gauss_ord(E);
        if (!h) break; // solved at precision
        if (!(Rational(0) < *h) || !h->is_integer())
            throw ResidueNotNormalized("trivialize_unit_root: error not divisible by p");
        std::int64_t hh = h->num;
        SeriesMatrix W(M.rank, M.rank, M.zero());
        for (std::size_t i = 0; i < M.rank; i++)
            for (std::size_t j = 0; j < M.rank; j++) {
                std::map<Rational, Fq::Elem> c;
                for (const auto& [e, co] : E.at(i, j).terms()) {
                    PadicScalar sc = co.pshift(-hh);
                    Fq::Elem r = sc.residue();
                    if (!k.is_zero(r)) c[e] = r;
                }
                if (c.empty()) continue;
                auto w = detail::artin_schreier_solve(c, k, M.ctx->s(), M.ring);
                if (!w)
                    throw ResidueNotNormalized(
                        "trivialize_unit_root: digit obstruction in the residue field (degree cap)");
                TruncatedSeries ws = M.zero();
                for (const auto& [e, v] : *w) {
                    std::vector<std::uint64_t> coords(v.begin(), v.end());
                    ws.add_term(e, PadicScalar::from_coords(M.ctx, coords, 0, M.ctx->N()).pshift(hh));
                }
                W.at(i, j) = ws;
            }
        Y = matrix_truncate_abs(Y + Y * W, N);
    }
    SeriesMatrix E = matrix_truncate_abs(F * matrix_phi(Y) - Y, N);
    if (!matrix_is_zero(E))
        throw ResidueNotNormalized("trivialize_unit_root: digit lifting stalled");
    return normalized ? Y0 * Y : Y;
}

// ---- slope splitting ----

// A phi(X) = X diag(A_11, ..., A_rr) with X unipotent upper-triangular.
// Diagonal blocks must be pure of pairwise distinct slopes, increasing down
// the diagonal (quotient numbering s^0 > s^1 > ... lists them from the top
// quotient). The iteration runs through phi^{-1} over the Hahn lattice; a
// solution demanding fractional exponents is the perfection phenomenon and
// reports NoBoundedSplitting.
inline SeriesMatrix split_by_slopes(const PhiModule& M, const std::vector<std::size_t>& sizes) {
    std::size_t n = M.rank, nb = sizes.size();
    std::vector<std::size_t> off(nb + 1, 0);
    for (std::size_t b = 0; b < nb; b++) off[b + 1] = off[b] + sizes[b];
    if (off[nb] != n) throw std::invalid_argument("split_by_slopes: block sizes mismatch");

    // working ring: allow Hahn denominators up to q^(N+1) during the iteration
    RingConfig hring = M.ring;
    if (!ring_fractional(hring.tag)) {
        hring.tag = RingTag::HAHN_DAGGER;
        std::uint64_t cap = 1;
        for (std::uint32_t i = 0; i <= M.ctx->N() && cap < (1u << 28); i++) cap *= M.ctx->q();
        hring.D_cap = std::uint32_t(std::min<std::uint64_t>(cap, 1u << 28));
    }
    auto lift = [&](const TruncatedSeries& x) {
        TruncatedSeries y = TruncatedSeries::zero(M.ctx, hring);
        for (const auto& [e, c] : x.terms()) y.set_term(e, c);
        if (x.clipped()) y.mark_clipped();
        return y;
    };

    auto block = [&](const SeriesMatrix& A, std::size_t bi, std::size_t bj) {
        SeriesMatrix B(sizes[bi], sizes[bj], TruncatedSeries::zero(M.ctx, hring));
        for (std::size_t i = 0; i < sizes[bi]; i++)
            for (std::size_t j = 0; j < sizes[bj]; j++) B.at(i, j) = lift(M.F.at(off[bi] + i, off[bj] + j));
        return B;
    };

    // verify purity and distinctness of the diagonal blocks
    std::vector<Rational> diag_slopes;
    for (std::size_t b = 0; b < nb; b++) {
        PhiModule Mb = make_phi_module(M.ctx, M.ring, [&] {
            SeriesMatrix B(sizes[b], sizes[b], M.zero());
            for (std::size_t i = 0; i < sizes[b]; i++)
                for (std::size_t j = 0; j < sizes[b]; j++) B.at(i, j) = M.F.at(off[b] + i, off[b] + j);
            return B;
        }());
        auto s = slopes(Mb);
        for (const auto& x : s)
            if (!(x == s[0])) throw SlopesNotDistinct("split_by_slopes: diagonal block not pure");
        diag_slopes.push_back(s[0]);
    }
    for (std::size_t a = 0; a < nb; a++)
        for (std::size_t b = a + 1; b < nb; b++)
            if (diag_slopes[a] == diag_slopes[b])
                throw SlopesNotDistinct("split_by_slopes: equal slopes in distinct blocks");

    // X starts as identity; solve superdiagonals outward (induction on j - i)
    std::vector<std::vector<SeriesMatrix>> X(nb);
    for (std::size_t i = 0; i < nb; i++) {
        X[i].resize(nb, SeriesMatrix(1, 1, TruncatedSeries::zero(M.ctx, hring)));
        for (std::size_t j = 0; j < nb; j++) {
            X[i][j] = SeriesMatrix(sizes[i], sizes[j], TruncatedSeries::zero(M.ctx, hring));
            if (i == j)
                for (std::size_t t = 0; t < sizes[i]; t++)
                    X[i][j].at(t, t) = TruncatedSeries::one(M.ctx, hring);
        }
    }
    std::uint32_t max_iters = 4 * M.ctx->N() + 64;
    // the iteration can only be meaningful at the input's effective precision
    std::int64_t floorN = std::int64_t(M.ctx->N()) - std::int64_t(matrix_loss(M.F));
    if (floorN < 1) throw PrecisionExhausted("split_by_slopes: input has no effective precision");

    try {
        for (std::size_t gap = 1; gap < nb; gap++)
            for (std::size_t i = 0; i + gap < nb; i++) {
                std::size_t j = i + gap;
                SeriesMatrix Aii = block(M.F, i, i), Ajj = block(M.F, j, j);
                SeriesMatrix AiiInv = Aii.inverse();
                SeriesMatrix C(sizes[i], sizes[j], TruncatedSeries::zero(M.ctx, hring));
                for (std::size_t k = i + 1; k <= j; k++)
                    C = C + block(M.F, i, k) * matrix_phi(X[k][j]);
                // fixed point of Z = (A_ii phi(Z) + C) A_jj^{-1}, solved backwards:
                // Z <- phi^{-1}( A_ii^{-1} (Z A_jj - C) ), working in O/p^N
                SeriesMatrix Z(sizes[i], sizes[j], TruncatedSeries::zero(M.ctx, hring));
                bool done = false;
                for (std::uint32_t it = 0; it < max_iters; it++) {
                    SeriesMatrix Znext = matrix_truncate_abs(
                        matrix_phi_inv(AiiInv * (Z * Ajj - C)), floorN);
                    SeriesMatrix resid =
                        matrix_truncate_abs(Aii * matrix_phi(Znext) + C - Znext * Ajj, floorN);
                    if (matrix_is_zero(resid) && matrix_is_zero(Znext - Z)) {
                        Z = Znext;
                        done = true;
                        break;
                    }
                    Z = Znext;
                }
                if (!done)
                    throw NoBoundedSplitting("split_by_slopes: iteration did not converge",
                                             Rational(0));
                X[i][j] = Z;
            }
    } catch (const LatticeOverflow& e) {
        throw NoBoundedSplitting(std::string("split_by_slopes: ") + e.what(), e.witness);
    }

    // integrality: a solution with genuinely fractional support lives only in
    // the perfection; report it with the witness exponent
    SeriesMatrix Xfull(n, n, M.zero());
    for (std::size_t bi = 0; bi < nb; bi++)
        for (std::size_t bj = 0; bj < nb; bj++)
            for (std::size_t i = 0; i < sizes[bi]; i++)
                for (std::size_t j = 0; j < sizes[bj]; j++) {
                    const TruncatedSeries& z = X[bi][bj].at(i, j);
                    for (const auto& [e, c] : z.terms())
                        if (!M.ring.in_lattice(e))
                            throw NoBoundedSplitting(
                                "split_by_slopes: solution needs fractional exponent " + e.str(),
                                e);
                    TruncatedSeries y = M.zero();
                    for (const auto& [e, c] : z.terms()) y.set_term(e, c);
                    if (z.clipped()) y.mark_clipped();
                    Xfull.at(off[bi] + i, off[bj] + j) = y;
                }
    return Xfull;
}

} // namespace isoslope
