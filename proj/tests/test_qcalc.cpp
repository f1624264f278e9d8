#include <qts/qcalc.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace qts;
using qts::qcalc::delta_integral;
using qts::qcalc::q_derivative;
using qts::qcalc::ts_exp;

namespace {

VecFn time_fn(const GridContext& ctx, double (*g)(double)) {
    return [ctx, g](std::int64_t k) { return scalar_vec(g(ctx.value(k))); };
}

// independent difference-quotient oracle, straight from the definition
double quotient_oracle(double q, double (*g)(double), double t) {
    return (g(q * t) - g(t)) / ((q - 1.0) * t);
}

} // namespace

TEST_CASE("jump operators and graininess") {
    auto ctx = GridContext::quantum(2.0);
    CHECK(qcalc::sigma(QPoint::exp(3)) == QPoint::exp(4));
    CHECK(qcalc::sigma(QPoint::zero()) == QPoint::zero());
    CHECK(qcalc::sigma(QPoint::exp(-5)) == QPoint::exp(-4));

    CHECK(qcalc::rho(QPoint::exp(0)) == QPoint::exp(-1));
    CHECK(qcalc::rho(QPoint::zero()) == QPoint::zero());
    CHECK(qcalc::rho(QPoint::exp(7)) == QPoint::exp(6));

    CHECK(qcalc::mu(ctx, QPoint::exp(0)) == 1.0);
    CHECK(qcalc::mu(GridContext::quantum(3.0), QPoint::exp(2)) == 18.0);
    CHECK(qcalc::mu(ctx, QPoint::zero()) == 0.0);

    // round trips
    std::mt19937 rng(7);
    std::uniform_int_distribution<std::int64_t> ks(-200, 200);
    for (int i = 0; i < 100; ++i) {
        const std::int64_t k = ks(rng);
        CHECK(qcalc::rho(qcalc::sigma(QPoint::exp(k))) == QPoint::exp(k));
        CHECK(qcalc::sigma(qcalc::rho(QPoint::exp(k))) == QPoint::exp(k));
    }

    CHECK_THROWS_AS(ctx.value(100000), RangeError);
    CHECK(QPoint::zero() < QPoint::exp(-1000000));
}

TEST_CASE("q-derivative at grid points and at zero") {
    auto ctx = GridContext::quantum(2.0);
    auto ident = time_fn(ctx, [](double t) { return t; });
    for (std::int64_t k : {-5LL, 0LL, 9LL})
        CHECK(q_derivative(ctx, ident, QPoint::exp(k))[0] == 1.0);

    auto square = time_fn(ctx, [](double t) { return t * t; });
    const double expected = quotient_oracle(2.0, [](double t) { return t * t; }, 2.0);
    CHECK(expected == 6.0);  // (16 - 4) / ((2-1)*2)
    CHECK(q_derivative(ctx, square, QPoint::exp(1))[0] == expected);

    // at 0 the derivative of t^2 is f'(0) = 0
    CHECK(std::fabs(q_derivative(ctx, square, QPoint::zero())[0]) < 1e-9);

    // linearity is exact at isolated points
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> coef(-3.0, 3.0);
    for (int i = 0; i < 50; ++i) {
        const double a = coef(rng), b = coef(rng);
        VecFn combo = [&, a, b](std::int64_t k) {
            return Vec(a * ident(k) + b * square(k));
        };
        const std::int64_t k = i % 7 - 3;
        const Vec lhs = q_derivative(ctx, combo, QPoint::exp(k));
        const Vec rhs = a * q_derivative(ctx, ident, QPoint::exp(k)) +
                        b * q_derivative(ctx, square, QPoint::exp(k));
        CHECK((lhs - rhs).norm() == 0.0);
    }

    // alternating samples have no limit at 0
    VecFn alternating = [](std::int64_t k) { return scalar_vec(k % 2 ? 1.0 : -1.0); };
    CHECK_THROWS_AS(q_derivative(ctx, alternating, QPoint::zero()), NonConvergentError);

    // GridFn input beyond its window
    GridFn g = sample(ident, Window(0, 4));
    CHECK_THROWS_AS(q_derivative(ctx, g, QPoint::exp(4)), OutOfWindowError);
}

TEST_CASE("classical limit of the q-derivative") {
    // for f = exp at t = 1 the error against f'(1) halves with q - 1
    double prev = 0.0;
    for (int j = 0; j <= 6; ++j) {
        const double q = 1.0 + 0.5 * std::pow(0.5, j);
        auto ctx = GridContext::quantum(q);
        auto f = time_fn(ctx, [](double t) { return std::exp(t); });
        const double err = std::fabs(q_derivative(ctx, f, QPoint::exp(0))[0] - std::exp(1.0));
        if (j > 0) {
            const double factor = prev / err;
            CHECK(factor > 1.5);
            CHECK(factor < 2.5);
        }
        prev = err;
    }
}

TEST_CASE("delta integral: exact sums and the series from zero") {
    auto ctx = GridContext::quantum(2.0);
    VecFn one = [](std::int64_t) { return scalar_vec(1.0); };
    CHECK(delta_integral(ctx, one, QPoint::exp(0), QPoint::exp(2))[0] == 3.0);

    // partial-sum oracle for sum_{n<0} (q-1) q^n
    double partial = 0.0;
    for (std::int64_t n = -1; n >= -80; --n) partial += 1.0 * std::pow(2.0, n);
    CHECK(partial == Catch::Approx(1.0).margin(1e-15));
    qcalc::IntegralDiag diag;
    CHECK(delta_integral(ctx, one, QPoint::zero(), QPoint::exp(0), 1e-12, &diag)[0] ==
          Catch::Approx(partial).margin(1e-12));
    CHECK(diag.truncated_at <= -30);

    auto ident = time_fn(ctx, [](double t) { return t; });
    // direct sum oracle: (q-1)(q^0 * 1 + q^1 * 2)
    CHECK(delta_integral(ctx, ident, QPoint::exp(0), QPoint::exp(2))[0] == 5.0);

    // degenerate and invalid ranges
    CHECK(delta_integral(ctx, one, QPoint::exp(3), QPoint::exp(3))[0] == 0.0);
    CHECK_THROWS_AS(delta_integral(ctx, one, QPoint::exp(3), QPoint::exp(2)),
                    InvalidArgumentError);

    // integrand unbounded near zero cannot be certified
    auto inv = time_fn(ctx, [](double t) { return 1.0 / t; });
    CHECK_THROWS_AS(delta_integral(ctx, inv, QPoint::zero(), QPoint::exp(0)),
                    NonConvergentError);
}

TEST_CASE("time-scale exponential") {
    auto zctx = GridContext::integers();
    ScalarFn pone = [](std::int64_t) { return 1.0; };
    // product oracle (1+1)^3
    CHECK(ts_exp(zctx, pone, QPoint::exp(3), QPoint::exp(0)) == 8.0);

    auto ctx = GridContext::quantum(2.0);
    ScalarFn zero = [](std::int64_t) { return 0.0; };
    CHECK(ts_exp(ctx, zero, QPoint::exp(17), QPoint::exp(-12)) == 1.0);

    ScalarFn pinv = [ctx](std::int64_t k) { return 1.0 / ctx.value(k); };
    CHECK(ts_exp(ctx, pinv, QPoint::exp(3), QPoint::exp(0)) == 8.0);

    // reciprocal for reversed endpoints
    CHECK(ts_exp(ctx, pinv, QPoint::exp(0), QPoint::exp(3)) == 0.125);

    ScalarFn bad = [ctx](std::int64_t k) { return -1.0 / ctx.graininess(k); };
    CHECK_THROWS_AS(ts_exp(ctx, bad, QPoint::exp(2), QPoint::exp(0)), NotRegressiveError);
}

TEST_CASE("circle minus") {
    CHECK(qcalc::circle_minus(1.0, 1.0) == -0.5);
    CHECK(qcalc::circle_minus(0.0, 5.0) == 0.0);
    CHECK(qcalc::circle_minus(1.0, 0.0) == -1.0);
    CHECK_THROWS_AS(qcalc::circle_minus(-1.0, 1.0), NotRegressiveError);
}

TEST_CASE("regressivity scan") {
    auto ctx = GridContext::quantum(2.0);
    ScalarFn p = [ctx](std::int64_t k) { return -1.0 / ctx.graininess(k); };
    auto rep = qcalc::regressive_check(ctx, p, Window(-4, 4));
    CHECK_FALSE(rep.ok);
    CHECK(rep.first_failure == -4);

    MatFn zero = [](std::int64_t) { return Mat(Mat::Zero(3, 3)); };
    CHECK(qcalc::regressive_check(ctx, zero, Window(-10, 10)).ok);

    auto zctx = GridContext::integers();
    ScalarFn minus_one = [](std::int64_t) { return -1.0; };
    CHECK_FALSE(qcalc::regressive_check(zctx, minus_one, Window(0, 5)).ok);
}

TEST_CASE("calculus identities on randomized cases") {
    std::mt19937 rng(20260810);
    std::uniform_real_distribution<double> qd(1.1, 3.0);
    std::uniform_int_distribution<std::int64_t> kd(-12, 12);
    std::uniform_real_distribution<double> cd(-2.0, 2.0);

    for (int trial = 0; trial < 100; ++trial) {
        const double q = qd(rng);
        auto ctx = GridContext::quantum(q);
        std::int64_t i = kd(rng), j = kd(rng);
        if (i > j) std::swap(i, j);
        if (i == j) j += 1;
        const double c0 = cd(rng), c1 = cd(rng), c2 = cd(rng);
        const bool trig = trial % 2;
        auto fval = [=](double t) {
            return trig ? c0 + c1 * std::cos(t) + c2 * std::sin(t)
                        : c0 + c1 * t + c2 * t * t;
        };
        VecFn f = [ctx, fval](std::int64_t k) { return scalar_vec(fval(ctx.value(k))); };

        // fundamental theorem: integrating the derivative telescopes
        VecFn df = [&](std::int64_t k) { return q_derivative(ctx, f, QPoint::exp(k)); };
        const double integral = delta_integral(ctx, df, QPoint::exp(i), QPoint::exp(j))[0];
        const double exact = fval(ctx.value(j)) - fval(ctx.value(i));
        double scale = std::max(1.0, std::fabs(exact));
        for (std::int64_t k = i; k <= j; ++k) scale = std::max(scale, std::fabs(fval(ctx.value(k))));
        CHECK(std::fabs(integral - exact) <= 1e-12 * scale);

        // additivity over a split point
        std::int64_t m = std::clamp(kd(rng), i, j);
        const double left = delta_integral(ctx, f, QPoint::exp(i), QPoint::exp(m))[0];
        const double right = delta_integral(ctx, f, QPoint::exp(m), QPoint::exp(j))[0];
        const double whole = delta_integral(ctx, f, QPoint::exp(i), QPoint::exp(j))[0];
        CHECK(std::fabs(left + right - whole) <=
              1e-10 * std::max({1.0, std::fabs(whole), std::fabs(left), std::fabs(right)}));

        // exponential semigroup e_p(t,s) e_p(s,r) = e_p(t,r)
        const double a = cd(rng) + 2.5;  // keeps 1 + mu p away from 0
        ScalarFn p = [ctx, a](std::int64_t k) { return a / ctx.graininess(k); };
        const std::int64_t r = kd(rng);
        const double e_ts = ts_exp(ctx, p, QPoint::exp(j), QPoint::exp(m));
        const double e_sr = ts_exp(ctx, p, QPoint::exp(m), QPoint::exp(r));
        const double e_tr = ts_exp(ctx, p, QPoint::exp(j), QPoint::exp(r));
        CHECK(std::fabs(e_ts * e_sr - e_tr) <= 1e-10 * std::fabs(e_tr));
    }
}
