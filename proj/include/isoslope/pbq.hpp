#pragma once

#include "filtration.hpp"
#include "taylor.hpp"

namespace isoslope {

struct IndeterminateAtPrecision : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SplittingUnavailable : std::runtime_error {
    Rational witness;
    SplittingUnavailable(const std::string& m, Rational w) : std::runtime_error(m), witness(w) {}
};

struct BoundedQuotient {
    std::size_t sub_rank = 0;     // rank of M^b
    SeriesMatrix sub_basis;       // rank x sub_rank columns spanning M^b
    SeriesMatrix to_basis;        // full basis change [sub_basis | completion]
    PhiModule quotient;           // M / M^b with induced Frobenius and connection
    SolutionSpace sol0;
    std::uint32_t loss = 0;
};

// M^b = the common kernel of the bounded solution functionals; certified by
// checking the full Taylor pairing, Frobenius stability and horizontality on
// the computed kernel. rank(M/M^b) = dim Sol_0.
inline BoundedQuotient maximally_bounded_quotient(const PhiModule& M, std::uint32_t order = 0) {
    if (!M.C1) throw std::invalid_argument("maximally_bounded_quotient: needs a connection");
    if (!order) order = 3 * M.ctx->N();
    std::size_t s = M.rank;
    TaylorData T = taylor_expand(M, order);
    SolutionSpace sol0 = bounded_solution_space(M, T);
    std::size_t d0 = sol0.dim;
    if (d0 == 0)
        throw IndeterminateAtPrecision(
            "maximally_bounded_quotient: no bounded solutions visible at precision");

    BoundedQuotient out;
    out.sol0 = sol0;
    if (d0 == s) {
        out.sub_rank = 0;
        out.sub_basis = SeriesMatrix(s, 0, M.zero());
        out.to_basis = M.id();
        out.quotient = M;
        return out;
    }

    // kernel of the evaluation pairing: a with (sol0 basis) . a = 0
    SeriesMatrix S(d0, s, M.zero());
    for (std::size_t k = 0; k < d0; k++)
        for (std::size_t i = 0; i < s; i++) S.at(k, i) = sol0.basis.at(i, k);
    std::vector<std::vector<TruncatedSeries>> ker;
    series_rank(S, &ker);
    if (ker.size() != s - d0)
        throw IndeterminateAtPrecision("maximally_bounded_quotient: kernel rank mismatch at precision");
    SeriesMatrix V(s, s - d0, M.zero());
    for (std::size_t j = 0; j < ker.size(); j++)
        for (std::size_t i = 0; i < s; i++) V.at(i, j) = ker[j][i];

    // certify: all Taylor pairings vanish on V
    std::int64_t p = M.ctx->p();
    for (std::size_t j = 0; j < ker.size(); j++) {
        // E_n = sum_{i<=n} (S C_i / i!) (V_j^{(n-i)} / (n-i)!) must vanish; scaled
        // by n! this is sum binom(n,i) (S C_i) V_j^{(n-i)} = 0
        std::vector<TruncatedSeries> derivs; // V_j, V_j', V_j'', ...
        std::vector<SeriesMatrix> dV;
        SeriesMatrix cur(s, 1, M.zero());
        for (std::size_t i = 0; i < s; i++) cur.at(i, 0) = V.at(i, j);
        dV.push_back(cur);
        for (std::uint32_t n = 1; n <= T.order; n++) dV.push_back(matrix_derivative(dV.back()));
        for (std::uint32_t n = 0; n <= T.order; n++) {
            SeriesMatrix E(d0, 1, M.zero());
            Rational binom(1);
            for (std::uint32_t i = 0; i <= n; i++) {
                SeriesMatrix term = (S * T.Cn[i]) * dV[n - i];
                E = E + term.scaled(TruncatedSeries::constant(
                        M.ctx, M.ring, PadicScalar::from_rational(M.ctx, binom)));
                binom = binom * Rational(std::int64_t(n) - i) / Rational(std::int64_t(i) + 1);
            }
            // compare against p-adic size of n! to stay meaningful after scaling
            std::int64_t floorN =
                std::int64_t(M.ctx->N()) - legendre_factorial_ord(n, p) - std::int64_t(matrix_loss(V)) - 1;
            if (floorN <= 0) continue;
            if (!matrix_is_zero(matrix_truncate_abs(E, floorN)))
                throw IndeterminateAtPrecision(
                    "maximally_bounded_quotient: kernel not horizontal under the pairing");
        }
    }

    SeriesMatrix T0 = complete_basis(M, V);
    PhiModule Mt = M.basis_change(T0);
    std::size_t rb = s - d0;
    std::uint32_t loss = std::max(matrix_loss(Mt.F), matrix_loss(V));
    SeriesMatrix Q(d0, d0, M.zero());
    SeriesMatrix Cq(d0, d0, M.zero());
    for (std::size_t i = rb; i < s; i++)
        for (std::size_t jj = 0; jj < s; jj++) {
            if (jj < rb) {
                auto g1 = Mt.F.at(i, jj).gauss_ord();
                auto g2 = Mt.C1->at(i, jj).gauss_ord();
                Rational fl = Rational(std::int64_t(M.ctx->N() - loss) - 1);
                if ((g1 && *g1 < fl) || (g2 && *g2 < fl))
                    throw IndeterminateAtPrecision(
                        "maximally_bounded_quotient: kernel is not a phi-nabla-submodule at precision");
            } else {
                Q.at(i - rb, jj - rb) = Mt.F.at(i, jj);
                Cq.at(i - rb, jj - rb) = Mt.C1->at(i, jj);
            }
        }
    out.sub_rank = rb;
    out.sub_basis = V;
    out.to_basis = T0;
    out.quotient = make_phi_module(M.ctx, M.ring, Q, Cq);
    out.loss = loss;
    return out;
}

inline bool is_pbq(const PhiModule& M) {
    BoundedQuotient b = maximally_bounded_quotient(M);
    auto sq = slopes(b.quotient);
    for (const auto& x : sq)
        if (!(x == sq.front())) return false;
    return sq.front() == max_slope(M);
}

// The PBQ filtration: increasing, graded pieces PBQ, maximal slopes of the
// steps strictly decreasing. Construction follows the inductive proof: find
// the maximal submodule mapping onto the top-slope summand of the bounded
// quotient, recurse inside it for the first step, then recurse on M/P_1.
inline Filtration pbq_filtration(const PhiModule& M) {
    if (!M.C1) throw std::invalid_argument("pbq_filtration: needs a connection");
    Filtration out;
    if (is_pbq(M)) {
        out.steps.push_back({max_slope(M), M.id()});
        return out;
    }
    BoundedQuotient b = maximally_bounded_quotient(M);
    // split the bounded quotient by slopes; the top summand pulls back
    SlopeFiltrationData sf = slope_filtration(b.quotient);
    PhiModule quot_tri = b.quotient.basis_change(sf.T);
    SeriesMatrix Xs;
    try {
        Xs = split_by_slopes(quot_tri, sf.sizes);
    } catch (const NoBoundedSplitting& e) {
        throw SplittingUnavailable(std::string("pbq_filtration: ") + e.what(), e.witness);
    }
    // the top-slope summand of M/M^b sits in the last block; its preimage in M
    std::size_t mtop = sf.sizes.back();
    std::size_t s = M.rank, rb = b.sub_rank, dq = b.quotient.rank;
    SeriesMatrix TX = sf.T * Xs; // columns: summand bases in quotient coordinates
    // lift: basis of M' = [ sub_basis | lift of last-block columns ]
    const SeriesMatrix& T0 = b.to_basis;
    SeriesMatrix Mprime_basis(s, rb + mtop, M.zero());
    for (std::size_t j = 0; j < rb; j++)
        for (std::size_t i = 0; i < s; i++) Mprime_basis.at(i, j) = b.sub_basis.at(i, j);
    for (std::size_t j = 0; j < mtop; j++)
        for (std::size_t i = 0; i < s; i++) {
            TruncatedSeries acc = M.zero();
            for (std::size_t k = 0; k < dq; k++)
                acc = acc + T0.at(i, rb + k) * TX.at(k, dq - mtop + j);
            Mprime_basis.at(i, rb + j) = acc;
        }
    // M' as a module: change basis by [Mprime | completion], take the block
    SeriesMatrix Tp = complete_basis(M, Mprime_basis);
    PhiModule Mt = M.basis_change(Tp);
    std::size_t rp = rb + mtop;
    SeriesMatrix Fp(rp, rp, M.zero());
    SeriesMatrix Cp(rp, rp, M.zero());
    for (std::size_t i = 0; i < rp; i++)
        for (std::size_t j = 0; j < rp; j++) {
            Fp.at(i, j) = Mt.F.at(i, j);
            Cp.at(i, j) = Mt.C1->at(i, j);
        }
    PhiModule Mp = make_phi_module(M.ctx, M.ring, Fp, Cp);
    Filtration first = pbq_filtration(Mp);
    // P_1 in original coordinates
    SeriesMatrix P1q = first.steps.front().basis; // rp x d1
    std::size_t d1 = P1q.cols;
    SeriesMatrix P1(s, d1, M.zero());
    for (std::size_t j = 0; j < d1; j++)
        for (std::size_t i = 0; i < s; i++) {
            TruncatedSeries acc = M.zero();
            for (std::size_t k = 0; k < rp; k++) acc = acc + Tp.at(i, k) * P1q.at(k, j);
            P1.at(i, j) = acc;
        }
    out.steps.push_back({first.steps.front().slope, P1});
    // recurse on M / P_1
    SeriesMatrix T1 = complete_basis(M, P1);
    PhiModule M1 = M.basis_change(T1);
    std::size_t dq1 = s - d1;
    SeriesMatrix Fq(dq1, dq1, M.zero());
    SeriesMatrix Cq(dq1, dq1, M.zero());
    for (std::size_t i = 0; i < dq1; i++)
        for (std::size_t j = 0; j < dq1; j++) {
            Fq.at(i, j) = M1.F.at(d1 + i, d1 + j);
            Cq.at(i, j) = M1.C1->at(d1 + i, d1 + j);
        }
    Filtration rest = pbq_filtration(make_phi_module(M.ctx, M.ring, Fq, Cq));
    for (const auto& st : rest.steps) {
        std::size_t dtot = d1 + st.basis.cols;
        SeriesMatrix basis(s, dtot, M.zero());
        for (std::size_t j = 0; j < d1; j++)
            for (std::size_t i = 0; i < s; i++) basis.at(i, j) = P1.at(i, j);
        for (std::size_t j = 0; j < st.basis.cols; j++)
            for (std::size_t i = 0; i < s; i++) {
                TruncatedSeries acc = M.zero();
                for (std::size_t k = 0; k < dq1; k++)
                    acc = acc + T1.at(i, d1 + k) * st.basis.at(k, j);
                basis.at(i, j + d1) = acc;
            }
        out.steps.push_back({st.slope, basis});
    }
    out.loss = std::max({first.loss, rest.loss, b.loss});
    return out;
}

} // namespace isoslope
