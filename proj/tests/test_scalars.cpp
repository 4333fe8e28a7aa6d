#include <catch2/catch_amalgamated.hpp>

#include <isoslope/cyclo.hpp>
#include <isoslope/padic.hpp>

using namespace isoslope;

namespace {
ScalarCtxPtr ctx_qp(std::uint32_t p, std::uint32_t N) {
    return std::make_shared<ScalarContext>(p, 1, 1, N);
}
ScalarCtxPtr ctx_unram(std::uint32_t p, std::uint32_t r, std::uint32_t N) {
    return std::make_shared<ScalarContext>(p, 1, r, N);
}
} // namespace

TEST_CASE("sigma fixes the prime field when r = 1") {
    auto ctx = ctx_qp(5, 10);
    PadicScalar a = PadicScalar::from_int(ctx, 7);
    REQUIRE(eq_at_precision(a.sigma(), a));
}

TEST_CASE("Teichmuller generator: sigma acts as the q-power map") {
    for (std::uint32_t p : {2u, 3u, 5u}) {
        auto ctx = ctx_unram(p, 2, 8); // W(F_{q^2}), q = p
        const Fq& k = ctx->residue_field();
        PadicScalar omega = PadicScalar::teichmuller(ctx, k.gen());
        // omega^(q^2-1) = 1: the defining equation of the Teichmuller lift
        std::uint64_t q2 = ctx->q() * ctx->q();
        REQUIRE(eq_at_precision(omega.pow(q2 - 1), PadicScalar::from_int(ctx, 1)));
        // sigma(omega) = omega^q
        REQUIRE(eq_at_precision(omega.sigma(), omega.pow(ctx->q())));
    }
}

TEST_CASE("sigma^r is the identity") {
    auto ctx = ctx_unram(3, 2, 9);
    std::mt19937_64 rng(41);
    for (int i = 0; i < 20; i++) {
        PadicScalar a = PadicScalar::random(ctx, rng, -2, 3);
        REQUIRE(eq_at_precision(a.sigma().sigma(), a));
    }
}

TEST_CASE("sigma is a ring homomorphism mod p^N") {
    for (std::uint32_t p : {2u, 3u, 5u}) {
        auto ctx = ctx_unram(p, 3, 7);
        std::mt19937_64 rng(17 + p);
        for (int i = 0; i < 25; i++) {
            PadicScalar a = PadicScalar::random(ctx, rng), b = PadicScalar::random(ctx, rng);
            REQUIRE(eq_at_precision((a + b).sigma(), a.sigma() + b.sigma()));
            REQUIRE(eq_at_precision((a * b).sigma(), a.sigma() * b.sigma()));
        }
    }
}

TEST_CASE("sigma(a) = a^q mod p for integral a") {
    auto ctx = ctx_unram(3, 2, 8);
    std::mt19937_64 rng(99);
    for (int i = 0; i < 25; i++) {
        PadicScalar a = PadicScalar::random_unit(ctx, rng);
        PadicScalar d = a.sigma() - a.pow(ctx->q());
        REQUIRE((d.is_zero() || *d.ord() >= Rational(1)));
    }
}

TEST_CASE("ord: basic values") {
    auto ctx = ctx_qp(3, 10);
    PadicScalar p2 = PadicScalar::from_int(ctx, 9);
    REQUIRE(*p2.ord() == Rational(2));
    PadicScalar onep = PadicScalar::from_int(ctx, 4); // 1 + 3
    REQUIRE(*onep.ord() == Rational(0));
    std::mt19937_64 rng(5);
    PadicScalar u = PadicScalar::random_unit(ctx, rng);
    REQUIRE(*(u * PadicScalar::from_int(ctx, 3)).ord() == Rational(1));
    REQUIRE_FALSE(PadicScalar::zero(ctx).ord().has_value());
}

TEST_CASE("ord is a valuation") {
    auto ctx = ctx_unram(5, 2, 8);
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 40; i++) {
        PadicScalar a = PadicScalar::random(ctx, rng, -3, 4), b = PadicScalar::random(ctx, rng, -3, 4);
        REQUIRE(*(a * b).ord() == *a.ord() + *b.ord());
        PadicScalar s = a + b;
        Rational m = rat_min(*a.ord(), *b.ord());
        if (s.is_zero()) {
            REQUIRE(Rational(s.shift()) >= m);
        } else {
            REQUIRE(*s.ord() >= m);
            if (!(*a.ord() == *b.ord())) REQUIRE(*s.ord() == m);
        }
    }
}

TEST_CASE("precision loss on cancellation is tracked") {
    auto ctx = ctx_qp(3, 10);
    PadicScalar a = PadicScalar::from_int(ctx, 1 + 3);
    PadicScalar d = a - PadicScalar::from_int(ctx, 1); // = 3, one digit eaten
    REQUIRE(*d.ord() == Rational(1));
    REQUIRE(d.prec() == 9);
}

TEST_CASE("rationals embed and invert") {
    auto ctx = ctx_qp(3, 10);
    PadicScalar half = PadicScalar::from_rational(ctx, Rational(1, 2));
    REQUIRE(eq_at_precision(half + half, PadicScalar::from_int(ctx, 1)));
    PadicScalar x = PadicScalar::from_rational(ctx, Rational(-7, 4));
    REQUIRE(eq_at_precision(x * PadicScalar::from_int(ctx, -4), PadicScalar::from_int(ctx, 7)));
}

TEST_CASE("CycloScalar: the vanishing relation") {
    CycloScalar s = CycloScalar::zero(3);
    for (int k = 0; k <= 2; k++) s += CycloScalar::zeta_pow(3, k);
    REQUIRE(s.is_zero());
    REQUIRE_THROWS_AS(cyclo_ord(s, 8), ZeroInput);
}

TEST_CASE("CycloScalar arithmetic matches the complex embedding") {
    std::mt19937_64 rng(7);
    for (std::uint32_t p : {3u, 5u, 7u}) {
        for (int i = 0; i < 30; i++) {
            CycloScalar a(p), b(p);
            for (auto& c : a.coeffs) c = std::int64_t(rng() % 21) - 10;
            for (auto& c : b.coeffs) c = std::int64_t(rng() % 21) - 10;
            auto za = a.embed(), zb = b.embed();
            REQUIRE(std::abs((a + b).embed() - (za + zb)) < 1e-9);
            REQUIRE(std::abs((a * b).embed() - (za * zb)) < 1e-9);
        }
    }
}

TEST_CASE("cyclo_ord: pinned values at p = 3") {
    REQUIRE(cyclo_ord(CycloScalar::from_int(3, 3), 8) == Rational(1));
    CycloScalar pi = CycloScalar::zeta_pow(3, 1) - CycloScalar::from_int(3, 1);
    REQUIRE(cyclo_ord(pi, 8) == Rational(1, 2));
    // ord_pi(p) = p - 1 in ord_p units: ord_p = 1 checked above; also zeta itself is a unit
    REQUIRE(cyclo_ord(CycloScalar::zeta_pow(3, 1), 8) == Rational(0));
}

TEST_CASE("cyclo_ord: precision exhaustion is reported") {
    CycloScalar big = CycloScalar::from_int(3, 81); // 3^4, N = 3 digits cannot resolve
    REQUIRE_THROWS_AS(cyclo_ord(big, 3), PrecisionExhausted);
}
