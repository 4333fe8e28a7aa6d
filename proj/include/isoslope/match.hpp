#pragma once

#include "pbq.hpp"

namespace isoslope {

struct NotPBQ : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotSaturated : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RankObstruction : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gaussian elimination over K at precision; augmented rows (ncols + 1).
// Returns a particular solution with free unknowns at 0, or nullopt when
// inconsistent at precision.
inline std::optional<std::vector<PadicScalar>> padic_solve(
    std::vector<std::vector<PadicScalar>> rows, std::size_t ncols, const ScalarCtxPtr& ctx) {
    std::size_t m = rows.size();
    std::vector<std::int64_t> pivot_col;
    std::size_t r = 0;
    for (std::size_t col = 0; col < ncols && r < m; col++) {
        std::optional<std::size_t> best;
        std::optional<Rational> bo;
        for (std::size_t i = r; i < m; i++) {
            if (rows[i][col].is_zero()) continue;
            Rational o = *rows[i][col].ord();
            if (!best || o < *bo) best = i, bo = o;
        }
        if (!best) continue;
        std::swap(rows[r], rows[*best]);
        PadicScalar inv = rows[r][col].inv();
        for (std::size_t j = col; j <= ncols; j++) rows[r][j] = rows[r][j] * inv;
        for (std::size_t i = 0; i < m; i++) {
            if (i == r || rows[i][col].is_zero()) continue;
            PadicScalar f = rows[i][col];
            for (std::size_t j = col; j <= ncols; j++)
                rows[i][j] = rows[i][j] - f * rows[r][j];
        }
        pivot_col.push_back(std::int64_t(col));
        r++;
    }
    for (std::size_t i = r; i < m; i++)
        if (!rows[i][ncols].is_zero()) return std::nullopt;
    std::vector<PadicScalar> x(ncols, PadicScalar::zero(ctx));
    for (std::size_t k = 0; k < pivot_col.size(); k++)
        x[std::size_t(pivot_col[k])] = rows[k][ncols];
    return x;
}

// saturation at precision: the projection to the maximal-slope quotient has
// no kernel vector certifiable within the d_cap budget
inline bool is_saturated(const PhiModule& M, const Rational& d_cap = Rational(2)) {
    TopQuotient tq = top_slope_quotient(M);
    if (tq.sub_rank == 0) return true; // isoclinic: the projection is a bijection
    return !dagger_kernel_vector(tq.projection, d_cap).has_value();
}

struct MatchResult {
    SeriesMatrix g;     // rank_M x rank_N, commutes with F and C1
    std::uint32_t loss = 0;
    RankCheckReport rank_report;
};

// Theorem loc/locrel at desk scale: given PBQ saturated Md, Nd and a
// nontrivial h between the maximal-slope quotients, produce the unique g
// lifting h. The lift is found by solving the joint K-linear system
//   F_M phi(g) = g F_N,  C1_M g + g' = g C1_N,  pi_M g = h pi_N
// coefficientwise on the window (sigma must act trivially on K, i.e. r = 1).
inline MatchResult minimal_slope_match(const PhiModule& Md, const PhiModule& Nd,
                                       const SeriesMatrix& h, const Rational& d_cap = Rational(2)) {
    if (!Md.C1 || !Nd.C1)
        throw std::invalid_argument("minimal_slope_match: phi-nabla modules required");
    if (Md.ctx->r() != 1)
        throw std::invalid_argument("minimal_slope_match: only sigma = id coefficient fields are supported");
    if (!is_pbq(Md) || !is_pbq(Nd)) throw NotPBQ("minimal_slope_match: inputs must be PBQ");
    if (!is_saturated(Md, d_cap) || !is_saturated(Nd, d_cap))
        throw NotSaturated("minimal_slope_match: inputs must be saturated at precision");

    TopQuotient tqM = top_slope_quotient(Md), tqN = top_slope_quotient(Nd);
    std::size_t dM = tqM.quotient.rank, dN = tqN.quotient.rank;
    if (h.rows != dM || h.cols != dN)
        throw std::invalid_argument("minimal_slope_match: h has the wrong shape");
    if (matrix_is_zero(h)) throw std::invalid_argument("minimal_slope_match: h is trivial");
    {
        SeriesMatrix comm = tqM.quotient.F * matrix_phi(h) - h * tqN.quotient.F;
        std::int64_t fl = std::int64_t(Md.ctx->N()) -
                          std::int64_t(std::max(tqM.loss, tqN.loss)) - 1;
        if (!matrix_is_zero(matrix_truncate_abs(comm, fl)))
            throw std::invalid_argument("minimal_slope_match: h does not commute with Frobenius");
        SeriesMatrix hor =
            (*tqM.quotient.C1) * h + matrix_derivative(h) - h * (*tqN.quotient.C1);
        if (!matrix_is_zero(matrix_truncate_abs(hor, fl)))
            throw std::invalid_argument("minimal_slope_match: h is not horizontal");
    }

    MatchResult out;
    // Theorem-rkr bookkeeping: h . pi_N embeds Nd into the isoclinic M/M^1
    out.rank_report = maximal_quotient_rank_check(Nd, tqM.quotient, h * tqN.projection, d_cap);
    if (!out.rank_report.dims_equal)
        throw RankObstruction("minimal_slope_match: top quotient ranks differ");

    // unknown g on the lattice window
    const RingConfig& ring = Md.ring;
    std::vector<Rational> lattice;
    {
        Rational e = ring.e_min;
        Rational step = Rational(1, std::int64_t(ring.D));
        while (!(ring.e_max < e)) {
            lattice.push_back(e);
            e = e + step;
        }
    }
    std::size_t rM = Md.rank, rN = Nd.rank, W = lattice.size();
    std::size_t nunk = rM * rN * W;
    if (nunk > 4000)
        throw std::invalid_argument("minimal_slope_match: window too large for the solver");
    auto unk = [&](std::size_t i, std::size_t j, std::size_t w) { return (i * rN + j) * W + w; };

    // constraint rows are indexed by (block, entry, exponent)
    std::map<std::tuple<int, std::size_t, std::size_t, Rational>, std::size_t> rowidx;
    std::vector<std::vector<PadicScalar>> rows;
    auto row_of = [&](int blk, std::size_t i, std::size_t j, const Rational& e) -> std::vector<PadicScalar>& {
        auto key = std::make_tuple(blk, i, j, e);
        auto it = rowidx.find(key);
        if (it == rowidx.end()) {
            rowidx.emplace(key, rows.size());
            rows.emplace_back(nunk + 1, PadicScalar::zero(Md.ctx));
            return rows.back();
        }
        return rows[it->second];
    };
    auto add_series = [&](int blk, std::size_t i, std::size_t j, const TruncatedSeries& sx,
                          std::size_t col, bool rhs) {
        for (const auto& [e, c] : sx.terms()) {
            auto& row = row_of(blk, i, j, e);
            std::size_t target = rhs ? nunk : col;
            row[target] = row[target] + (rhs ? c : c);
        }
    };

    // columns: image of each unit monomial under the three constraint maps
    for (std::size_t i0 = 0; i0 < rM; i0++)
        for (std::size_t j0 = 0; j0 < rN; j0++)
            for (std::size_t w = 0; w < W; w++) {
                SeriesMatrix delta(rM, rN, Md.zero());
                delta.at(i0, j0) = TruncatedSeries::monomial(Md.ctx, ring, lattice[w],
                                                             PadicScalar::from_int(Md.ctx, 1));
                std::size_t col = unk(i0, j0, w);
                SeriesMatrix A = Md.F * matrix_phi(delta) - delta * Nd.F;
                for (std::size_t i = 0; i < rM; i++)
                    for (std::size_t j = 0; j < rN; j++) add_series(0, i, j, A.at(i, j), col, false);
                SeriesMatrix B = (*Md.C1) * delta + matrix_derivative(delta) - delta * (*Nd.C1);
                for (std::size_t i = 0; i < rM; i++)
                    for (std::size_t j = 0; j < rN; j++) add_series(1, i, j, B.at(i, j), col, false);
                SeriesMatrix C = tqM.projection * delta;
                for (std::size_t i = 0; i < dM; i++)
                    for (std::size_t j = 0; j < rN; j++) add_series(2, i, j, C.at(i, j), col, false);
            }
    // right-hand side from h pi_N in the projection block
    SeriesMatrix rhsM = h * tqN.projection;
    for (std::size_t i = 0; i < dM; i++)
        for (std::size_t j = 0; j < rN; j++) add_series(2, i, j, rhsM.at(i, j), 0, true);

    auto sol = padic_solve(std::move(rows), nunk, Md.ctx);
    if (!sol)
        throw RankObstruction("minimal_slope_match: lifting system inconsistent at precision");
    SeriesMatrix g(rM, rN, Md.zero());
    for (std::size_t i0 = 0; i0 < rM; i0++)
        for (std::size_t j0 = 0; j0 < rN; j0++) {
            TruncatedSeries sx = Md.zero();
            for (std::size_t w = 0; w < W; w++) {
                const PadicScalar& c = (*sol)[unk(i0, j0, w)];
                if (!c.is_zero()) sx.add_term(lattice[w], c);
            }
            g.at(i0, j0) = sx;
        }

    // verify the lift at precision
    std::uint32_t loss = std::max({matrix_loss(g), tqM.loss, tqN.loss});
    std::int64_t fl = std::int64_t(Md.ctx->N()) - std::int64_t(loss) - 1;
    if (!matrix_is_zero(matrix_truncate_abs(Md.F * matrix_phi(g) - g * Nd.F, fl)) ||
        !matrix_is_zero(matrix_truncate_abs(
            (*Md.C1) * g + matrix_derivative(g) - g * (*Nd.C1), fl)) ||
        !matrix_is_zero(matrix_truncate_abs(tqM.projection * g - rhsM, fl)))
        throw RankObstruction("minimal_slope_match: lift fails verification at precision");
    out.g = g;
    out.loss = loss;
    return out;
}

} // namespace isoslope
