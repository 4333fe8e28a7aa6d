#include <catch2/catch_amalgamated.hpp>

#include <isoslope/series.hpp>
#include <isoslope/series_ops.hpp>

using namespace isoslope;

namespace {

ScalarCtxPtr ctx_qp(std::uint32_t p, std::uint32_t N) {
    return std::make_shared<ScalarContext>(p, 1, 1, N);
}

RingConfig amice(std::int64_t lo = -24, std::int64_t hi = 24) {
    RingConfig r;
    r.tag = RingTag::AMICE;
    r.e_min = Rational(lo);
    r.e_max = Rational(hi);
    return r;
}
RingConfig hahn(std::uint32_t D, std::int64_t lo = -24, std::int64_t hi = 24) {
    RingConfig r;
    r.tag = RingTag::HAHN_DAGGER;
    r.D = D;
    r.D_cap = 4096;
    r.e_min = Rational(lo);
    r.e_max = Rational(hi);
    return r;
}

TruncatedSeries mono(const ScalarCtxPtr& c, const RingConfig& r, Rational e, std::int64_t n) {
    return TruncatedSeries::monomial(c, r, e, PadicScalar::from_int(c, n));
}

// independent oracle for the Newton function: scan raw (exponent, ord) pairs
std::optional<Rational> newton_oracle(const TruncatedSeries& a, std::int64_t l) {
    std::optional<Rational> best;
    for (const auto& [e, c] : a.terms())
        if (*c.ord() <= Rational(l) && (!best || e < *best)) best = e;
    return best;
}

TruncatedSeries random_series(const ScalarCtxPtr& ctx, const RingConfig& ring, std::mt19937_64& rng,
                              int nterms = 6) {
    TruncatedSeries s = TruncatedSeries::zero(ctx, ring);
    std::int64_t lo = ring.e_min.num, hi = ring.e_max.num;
    for (int i = 0; i < nterms; i++) {
        std::int64_t e = lo + std::int64_t(rng() % std::uint64_t(hi - lo + 1));
        std::int64_t sh = std::int64_t(rng() % 5) - 1;
        s.add_term(Rational(e), PadicScalar::random_unit(ctx, rng).pshift(sh));
    }
    return s;
}

} // namespace

TEST_CASE("ring arithmetic: pinned products") {
    auto ctx = ctx_qp(3, 8);
    auto R = amice();
    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    TruncatedSeries t = mono(ctx, R, Rational(1), 1);
    REQUIRE(eq_at_precision((one + t) * (one - t), one - mono(ctx, R, Rational(2), 1)));

    auto H = hahn(2);
    TruncatedSeries half = mono(ctx, H, Rational(1, 2), 1);
    REQUIRE(eq_at_precision(half * half, mono(ctx, H, Rational(1), 1)));
}

TEST_CASE("geometric series against its annihilator") {
    auto ctx = ctx_qp(3, 7);
    auto R = amice();
    TruncatedSeries geo = TruncatedSeries::zero(ctx, R);
    for (std::int64_t n = 0; n <= 6; n++)
        geo.add_term(Rational(-n), PadicScalar::from_int(ctx, 1).pshift(n));
    TruncatedSeries a = TruncatedSeries::one(ctx, R) - mono(ctx, R, Rational(-1), 1).scaled(PadicScalar::from_int(ctx, 3));
    TruncatedSeries prod = (geo * a).truncate_abs(7);
    REQUIRE(eq_at_precision(prod, TruncatedSeries::one(ctx, R)));
}

TEST_CASE("ring axioms on randomized elements") {
    // supports stay small enough that triple products never clip: the axioms
    // hold exactly within the window
    auto ctx = ctx_qp(5, 6);
    auto R = amice(-12, 12);
    auto S = amice(-4, 4);
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 15; i++) {
        auto mk = [&] {
            auto s = random_series(ctx, S, rng, 4);
            TruncatedSeries w = TruncatedSeries::zero(ctx, R);
            for (const auto& [e, c] : s.terms()) w.add_term(e, c);
            return w;
        };
        auto a = mk(), b = mk(), c = mk();
        REQUIRE(eq_at_precision((a * b) * c, a * (b * c)));
        REQUIRE(eq_at_precision(a * (b + c), a * b + a * c));
        REQUIRE(eq_at_precision(a + b, b + a));
    }
}

TEST_CASE("Gauss norm is multiplicative") {
    auto ctx = ctx_qp(3, 8);
    auto R = amice(-10, 10);
    auto S = amice(-5, 5);
    std::mt19937_64 rng(77);
    for (int i = 0; i < 25; i++) {
        auto mk = [&] {
            auto s = random_series(ctx, S, rng, 4);
            TruncatedSeries w = TruncatedSeries::zero(ctx, R);
            for (const auto& [e, c] : s.terms()) w.add_term(e, c);
            return w;
        };
        auto a = mk(), b = mk();
        if (a.is_zero() || b.is_zero()) continue;
        REQUIRE(*(a * b).gauss_ord() == *a.gauss_ord() + *b.gauss_ord());
    }
}

TEST_CASE("tag joins") {
    REQUIRE(*ring_join(RingTag::BOUNDED_ROBBA, RingTag::AMICE) == RingTag::AMICE);
    REQUIRE(*ring_join(RingTag::AMICE, RingTag::HAHN_DAGGER) == RingTag::HAHN);
    REQUIRE(*ring_join(RingTag::BOUNDED_DISC, RingTag::ROBBA) == RingTag::ROBBA);
    REQUIRE_FALSE(ring_join(RingTag::AMICE, RingTag::ROBBA).has_value());

    auto ctx = ctx_qp(3, 6);
    RingConfig ra = amice();
    RingConfig rr = ra;
    rr.tag = RingTag::ROBBA;
    TruncatedSeries a = TruncatedSeries::one(ctx, ra), b = TruncatedSeries::one(ctx, rr);
    REQUIRE_THROWS_AS(a + b, IncompatibleRings);
}

TEST_CASE("invert: pinned cases") {
    auto ctx = ctx_qp(3, 8);
    auto R = amice(-12, 12);
    TruncatedSeries t = mono(ctx, R, Rational(1), 1);
    REQUIRE(eq_at_precision(t.invert(), mono(ctx, R, Rational(-1), 1)));

    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    TruncatedSeries ge = (one - t).invert();
    for (std::int64_t n = 0; n <= 12; n++)
        REQUIRE(eq_at_precision(ge.coeff(Rational(n)) * PadicScalar::from_int(ctx, 1),
                                PadicScalar::from_int(ctx, 1)));

    // (1 - p t^{-1})^{-1} = sum p^n t^{-n} with certificate (0, 1)
    TruncatedSeries u = one - mono(ctx, R, Rational(-1), 3);
    TruncatedSeries v = u.invert();
    for (std::int64_t n = 0; n <= 7; n++) {
        PadicScalar c = v.coeff(Rational(-n));
        REQUIRE_FALSE(c.is_zero());
        REQUIRE(*c.ord() == Rational(n));
    }
    REQUIRE(v.cert().has_value());
    REQUIRE(v.cert()->c == Rational(0));
    REQUIRE(v.cert()->d == Rational(1));
    REQUIRE_THROWS_AS(TruncatedSeries::zero(ctx, R).invert(), NotInvertibleAtPrecision);
}

TEST_CASE("phi: exponent scaling and coefficient sigma") {
    auto ctx = ctx_qp(3, 8);
    auto R = amice();
    TruncatedSeries t = mono(ctx, R, Rational(1), 1);
    REQUIRE(eq_at_precision(t.phi(), mono(ctx, R, Rational(3), 1)));
    TruncatedSeries c = TruncatedSeries::constant(ctx, R, PadicScalar::from_int(ctx, 7));
    REQUIRE(eq_at_precision(c.phi(), c));

    auto ctx2 = ctx_qp(2, 8);
    auto R2 = amice();
    TruncatedSeries a = mono(ctx2, R2, Rational(-1), 2);
    REQUIRE(eq_at_precision(a.phi(), mono(ctx2, R2, Rational(-2), 2)));
}

TEST_CASE("Newton function: pinned values and laws") {
    auto ctx = ctx_qp(3, 8);
    auto R = amice();
    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    NewtonProfile np = one.newton_profile();
    for (auto& e : np.entries) REQUIRE(*e == Rational(0));

    TruncatedSeries a = mono(ctx, R, Rational(1), 1) + mono(ctx, R, Rational(-1), 3);
    np = a.newton_profile();
    REQUIRE(*np.entries[0] == Rational(1));
    REQUIRE(*np.entries[1] == Rational(-1));

    std::mt19937_64 rng(31337);
    for (int i = 0; i < 30; i++) {
        auto x = random_series(ctx, R, rng), y = random_series(ctx, R, rng);
        NewtonProfile nx = x.newton_profile();
        // matches the definitional oracle, and is nonincreasing
        for (std::uint32_t l = 0; l < nx.entries.size(); l++) {
            REQUIRE(nx.entries[l] == newton_oracle(x, l));
            if (l > 0 && nx.entries[l - 1] && nx.entries[l])
                REQUIRE(*nx.entries[l] <= *nx.entries[l - 1]);
        }
        // N_{phi(x)}(l) = q N_x(l)
        NewtonProfile nf = x.phi().newton_profile();
        for (std::uint32_t l = 0; l < nx.entries.size(); l++) {
            if (!nx.entries[l]) { REQUIRE(!nf.entries[l]); continue; }
            Rational scaled = *nx.entries[l] * Rational(3);
            if (scaled >= x.ring().e_min && scaled <= x.ring().e_max)
                REQUIRE(*nf.entries[l] == scaled);
        }
        // product law: N_{xy}(l) >= min_{i+j=l} N_x(i)+N_y(j)
        if (x.is_zero() || y.is_zero()) continue;
        TruncatedSeries xy = x * y;
        if (xy.clipped()) continue;
        NewtonProfile ny = y.newton_profile(), nxy = xy.newton_profile();
        for (std::uint32_t l = 0; l < nxy.entries.size(); l++) {
            if (!nxy.entries[l]) continue;
            std::optional<Rational> bound;
            for (std::uint32_t i = 0; i <= l; i++) {
                if (!nx.entries[i] || !ny.entries[l - i]) continue;
                Rational v = *nx.entries[i] + *ny.entries[l - i];
                if (!bound || v < *bound) bound = v;
            }
            if (bound) REQUIRE(*nxy.entries[l] >= *bound);
        }
    }
}

TEST_CASE("overconvergence certification") {
    auto ctx = ctx_qp(3, 6);
    auto R = amice(-40, 40);
    TruncatedSeries geo = TruncatedSeries::zero(ctx, R);
    for (std::int64_t n = 0; n <= 6; n++)
        geo.add_term(Rational(-n), PadicScalar::from_int(ctx, 1).pshift(n));
    REQUIRE(geo.check_overconvergent(Rational(0), Rational(1)).certified);

    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    REQUIRE(one.check_overconvergent(Rational(0), Rational(1)).certified);
    REQUIRE(one.check_overconvergent(Rational(-2), Rational(1)).certified);

    TruncatedSeries sq = TruncatedSeries::zero(ctx, R);
    for (std::int64_t n = 0; n <= 6; n++)
        sq.add_term(Rational(-n * n), PadicScalar::from_int(ctx, 1).pshift(n));
    auto verdict = sq.check_overconvergent(Rational(0), Rational(1));
    REQUIRE_FALSE(verdict.certified);
    REQUIRE(*verdict.fails_at == 2); // first l with l^2 > l
}

TEST_CASE("strict mode rejects clipped inputs") {
    auto ctx = ctx_qp(3, 6);
    auto R = amice(-2, 2);
    TruncatedSeries t2 = mono(ctx, R, Rational(2), 1);
    TruncatedSeries clipped = t2 * t2; // t^4 falls off the window
    REQUIRE(clipped.clipped());
    REQUIRE_THROWS(clipped.check_overconvergent(Rational(0), Rational(1), true));
}

TEST_CASE("hensel_lift: square root of 1+t matches the binomial series") {
    auto ctx = ctx_qp(3, 7);
    auto R = amice(0, 16);
    R.tag = RingTag::BOUNDED_DISC;
    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    TruncatedSeries t = mono(ctx, R, Rational(1), 1);
    std::vector<TruncatedSeries> f = {-(one + t), TruncatedSeries::zero(ctx, R), one};
    auto res = hensel_lift(f, one);
    // oracle: binom(1/2, n) computed in exact rational arithmetic
    Rational binom(1);
    for (std::int64_t n = 0; n <= 16; n++) {
        PadicScalar expect = PadicScalar::from_rational(ctx, binom);
        REQUIRE(eq_at_precision(res.alpha.coeff(Rational(n)), expect));
        binom = binom * (Rational(1, 2) - Rational(n)) / Rational(n + 1);
    }
    REQUIRE(res.cert_verified);
    // f(alpha) = 0 mod p^N
    TruncatedSeries check = (res.alpha * res.alpha - (one + t)).truncate_abs(7);
    REQUIRE(check.is_zero());
}

TEST_CASE("hensel_lift: degenerate and linear cases") {
    auto ctx = ctx_qp(5, 6);
    auto R = amice(-8, 8);
    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    TruncatedSeries a = one + mono(ctx, R, Rational(1), 2);
    // x - a -> a
    std::vector<TruncatedSeries> lin = {-a, one};
    REQUIRE(eq_at_precision(hensel_lift(lin, a).alpha, a));
    // x^2 - x with alpha0 = 1 -> 1
    std::vector<TruncatedSeries> idem = {TruncatedSeries::zero(ctx, R), -one, one};
    REQUIRE(eq_at_precision(hensel_lift(idem, one).alpha, one));
    // double root is rejected
    std::vector<TruncatedSeries> dbl = {TruncatedSeries::zero(ctx, R), TruncatedSeries::zero(ctx, R), one};
    REQUIRE_THROWS_AS(hensel_lift(dbl, TruncatedSeries::zero(ctx, R)), NotSimpleRoot);
}

TEST_CASE("hensel_lift bound holds on randomized separable quadratics") {
    auto ctx = ctx_qp(3, 6);
    auto R = amice(-12, 12);
    auto S = amice(-3, 3); // roots stay narrow so coefficient products fit the window
    std::mt19937_64 rng(4242);
    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    auto widen = [&](const TruncatedSeries& s) {
        TruncatedSeries w = TruncatedSeries::zero(ctx, R);
        for (const auto& [e, c] : s.terms()) w.add_term(e, c);
        return w;
    };
    auto perturb = [&](std::int64_t base) {
        TruncatedSeries s = TruncatedSeries::constant(ctx, R, PadicScalar::from_int(ctx, base));
        for (int k = 0; k < 2; k++) {
            std::int64_t e = -3 + std::int64_t(rng() % 7);
            std::int64_t sh = 1 + std::int64_t(rng() % 3); // strictly positive ord
            s.add_term(Rational(e), PadicScalar::random_unit(ctx, rng).pshift(sh));
        }
        return s;
    };
    (void)widen;
    int tried = 0;
    for (int i = 0; i < 40 && tried < 12; i++) {
        // f = (x - u)(x - v) with distinct unit residues
        TruncatedSeries u = perturb(1), v = perturb(2);
        tried++;
        std::vector<TruncatedSeries> f = {u * v, -(u + v), one};
        auto res = hensel_lift(f, one);
        REQUIRE(res.cert_verified);
        REQUIRE(eq_at_precision(res.alpha, u));
    }
    REQUIRE(tried >= 8);
}

TEST_CASE("Frobenius equation verification") {
    auto ctx = ctx_qp(3, 6);
    auto R = hahn(1, -24, 24);

    // s = 1, a1 = -1, y = 1
    TruncatedSeries one = TruncatedSeries::one(ctx, R);
    TruncatedSeries y = one;
    auto v = verify_frobenius_solution({-one}, y);
    REQUIRE(v.certified);

    // y built as the convergent product prod_k phi^k((1 - p t^{-1})^{-1})
    TruncatedSeries u = one - mono(ctx, R, Rational(-1), 3);
    TruncatedSeries prod = one;
    for (int k = 0; k <= 6; k++) prod = (prod * u.invert().phi_pow(k)).truncate_abs(6);
    auto v2 = verify_frobenius_solution({-u}, prod);
    REQUIRE(v2.certified);
    REQUIRE(v2.witness.has_value());

    // y = t^{1/2}, a1 = -t^{(q-1)/2}
    auto H = hahn(2);
    TruncatedSeries yh = mono(ctx, H, Rational(1, 2), 1);
    TruncatedSeries a1 = -mono(ctx, H, Rational(1), 1);
    auto v3 = verify_frobenius_solution({a1}, yh);
    REQUIRE(v3.certified);

    // a corrupted equation fails at the right digit
    TruncatedSeries bad = one + mono(ctx, R, Rational(0), 9);
    auto v4 = verify_frobenius_solution({-bad}, y);
    REQUIRE_FALSE(v4.certified);
    REQUIRE(*v4.fails_at == Rational(2));
}
