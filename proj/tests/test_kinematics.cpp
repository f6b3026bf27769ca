#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <epr/kinematics.hpp>

using namespace epr;

TEST_CASE("on_shell energy")
{
    const FourMomentum q = on_shell(1.0, Vec3(1, 0, 0));
    CHECK(q.e == doctest::Approx(1.4142135623730951).epsilon(1e-15));
    CHECK(q.p == Vec3(1, 0, 0));

    const FourMomentum rest = on_shell(0.511, Vec3::Zero());
    CHECK(rest.e == 0.511);

    CHECK_THROWS_AS(on_shell(0.0, Vec3(1, 0, 0)), std::domain_error);
    CHECK_THROWS_AS(on_shell(-1.0, Vec3(1, 0, 0)), std::domain_error);
}

TEST_CASE("minkowski dot")
{
    const FourMomentum qa = on_shell(1.0, Vec3(1, 0, 0));
    const FourMomentum qb = on_shell(1.0, Vec3(0, 1, 0));
    CHECK(minkowski_dot(qa, qa) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(minkowski_dot(qb, qb) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(minkowski_dot(qa, qb) == doctest::Approx(2.0).epsilon(1e-14)); // sqrt(2)^2 - 0
}

TEST_CASE("on-shell predicate tolerance")
{
    const double m = 0.75;
    FourMomentum q = on_shell(m, Vec3(0.3, -0.2, 0.9));
    CHECK(is_on_shell(q, m));
    CHECK_NOTHROW(require_on_shell(q, m, "test"));

    q.e *= 1.0 + 1e-6;
    CHECK_FALSE(is_on_shell(q, m));
    CHECK_THROWS_AS(require_on_shell(q, m, "test"), std::domain_error);

    FourMomentum neg = on_shell(m, Vec3(0.3, -0.2, 0.9));
    neg.e = -neg.e;
    CHECK_FALSE(is_on_shell(neg, m));
}

TEST_CASE("direction normalizes and rejects zero")
{
    const Direction d(Vec3(3, 0, 4));
    CHECK(d.vec().norm() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.vec().x() == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(d.vec().z() == doctest::Approx(0.8).epsilon(1e-15));

    CHECK_THROWS_AS(Direction(Vec3::Zero()), std::domain_error);
}

TEST_CASE("require_unit")
{
    CHECK_NOTHROW(require_unit(Vec3(0, 0, 1), "test"));
    CHECK_NOTHROW(require_unit(Vec3(1, 1, 0).normalized(), "test"));
    CHECK_THROWS_AS(require_unit(Vec3(0, 0, 1.001), "test"), std::domain_error);
    CHECK_THROWS_AS(require_unit(Vec3(Vec3::Zero()), "test"), std::domain_error);
}
