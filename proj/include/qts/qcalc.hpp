#pragma once

#include <qts/errors.hpp>
#include <qts/grid.hpp>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qts::qcalc {

inline constexpr int kZeroLimitBudget = 512;   // exponents probed toward 0
inline constexpr int kZeroLimitAgree = 3;      // consecutive agreements required
inline constexpr double kDefaultTol = 1e-10;
inline constexpr double kConditionLimit = 1e12;

/// Forward jump: sigma(q^k) = q^{k+1}; 0 is right-dense.
inline QPoint sigma(const QPoint& p) {
    return p.is_zero() ? p : QPoint::exp(p.exponent() + 1);
}

/// Backward jump: rho(q^k) = q^{k-1}; nothing lies below 0.
inline QPoint rho(const QPoint& p) {
    return p.is_zero() ? p : QPoint::exp(p.exponent() - 1);
}

/// Graininess mu(t) = sigma(t) - t.
inline double mu(const GridContext& ctx, const QPoint& p) {
    return ctx.graininess(p);
}

namespace detail {

/// Difference quotient (f(q^{k+1}) - f(q^k)) / mu(q^k).
inline Vec quotient(const GridContext& ctx, const VecFn& f, std::int64_t k) {
    return (f(k + 1) - f(k)) / ctx.graininess(k);
}

/// Cauchy stopping rule: walk a sequence of iterates and accept once the
/// last `kZeroLimitAgree` values pairwise agree within tol.
inline std::optional<Vec> cauchy_limit(const std::function<Vec(int)>& iterate,
                                       int budget, double tol) {
    std::vector<Vec> tail;
    for (int step = 0; step < budget; ++step) {
        Vec v = iterate(step);
        tail.push_back(std::move(v));
        if (static_cast<int>(tail.size()) > kZeroLimitAgree) tail.erase(tail.begin());
        if (static_cast<int>(tail.size()) == kZeroLimitAgree) {
            double spread = 0.0;
            for (std::size_t i = 0; i < tail.size(); ++i)
                for (std::size_t j = i + 1; j < tail.size(); ++j)
                    spread = std::max(spread, (tail[i] - tail[j]).norm());
            if (spread <= tol) return tail.back();
        }
    }
    return std::nullopt;
}

} // namespace detail

/// q-derivative D_q f at a grid point (exact difference quotient) or at 0
/// (numerical limit of the quotient as the exponent runs to -inf).
inline Vec q_derivative(const GridContext& ctx, const VecFn& f, const QPoint& p,
                        double tol = kDefaultTol) {
    if (!p.is_zero()) return detail::quotient(ctx, f, p.exponent());
    if (!ctx.is_quantum())
        throw InvalidArgumentError("derivative at 0 requires the quantum grid");
    auto limit = detail::cauchy_limit(
        [&](int step) { return detail::quotient(ctx, f, -1 - step); },
        kZeroLimitBudget, tol);
    if (!limit)
        throw NonConvergentError("difference quotient did not settle within " +
                                 std::to_string(kZeroLimitBudget) + " exponents toward 0");
    return *limit;
}

/// GridFn overload; at 0 the limit is taken over the sampled window.
inline Vec q_derivative(const GridContext& ctx, const GridFn& f, const QPoint& p,
                        double tol = kDefaultTol) {
    if (!p.is_zero()) return detail::quotient(ctx, as_fn(f), p.exponent());
    if (!ctx.is_quantum())
        throw InvalidArgumentError("derivative at 0 requires the quantum grid");
    const int budget = static_cast<int>(std::min<std::int64_t>(
        kZeroLimitBudget, f.window().size() - 1));
    const std::int64_t top = std::min<std::int64_t>(-1, f.kmax() - 1);
    if (top - (budget - 1) < f.kmin())
        throw OutOfWindowError("window too short for the limit at 0");
    auto limit = detail::cauchy_limit(
        [&](int step) { return detail::quotient(ctx, as_fn(f), top - step); },
        budget, tol);
    if (!limit) throw NonConvergentError("difference quotient did not settle inside the window");
    return *limit;
}

/// Extra facts about a delta integral with lower endpoint 0.
struct IntegralDiag {
    std::int64_t truncated_at = 0;  // lowest exponent included in the sum
    double tail_bound = 0.0;        // certified bound on the dropped tail
};

/// Delta integral over [a, b): the graininess-weighted Riemann sum
/// sum mu(q^n) f(q^n). A lower endpoint 0 becomes a truncated series with a
/// certified geometric tail bound q^{1-M} sup||f|| <= tol.
inline Vec delta_integral(const GridContext& ctx, const VecFn& f, const QPoint& a,
                          const QPoint& b, double tol = kDefaultTol,
                          IntegralDiag* diag = nullptr) {
    if (b < a) throw InvalidArgumentError("delta_integral requires a <= b");
    const Eigen::Index dim = f(b.is_zero() ? 0 : b.exponent()).size();
    if (a == b) return Vec::Zero(dim);
    const std::int64_t hi = b.exponent();  // a < b, so b is a grid point
    std::int64_t lo;
    if (!a.is_zero()) {
        lo = a.exponent();
    } else {
        if (!ctx.is_quantum())
            throw InvalidArgumentError("integral from the compactified endpoint requires the quantum grid");
        // estimate sup||f|| below the upper endpoint, watching for growth
        double sup = 0.0, sup_shallow = 0.0, sup_deep = 0.0;
        for (std::int64_t n = hi - 1; n >= hi - 128; --n) {
            const double a_n = f(n).norm();
            sup = std::max(sup, a_n);
            if (n >= hi - 64)
                sup_shallow = std::max(sup_shallow, a_n);
            else
                sup_deep = std::max(sup_deep, a_n);
        }
        if (sup_deep > 4.0 * sup_shallow && sup_deep > tol)
            throw NonConvergentError("integrand grows toward 0; tail cannot be certified");
        // q^{1-M} sup <= tol  =>  M >= 1 + log_q(sup/tol)
        const double lq = std::log(ctx.q());
        std::int64_t M = 1;
        if (sup > 0.0)
            M = static_cast<std::int64_t>(std::ceil(1.0 + std::log(sup / tol) / lq));
        M = std::max<std::int64_t>(M, -(hi - 1));
        if (M > 100000)
            throw NonConvergentError("certified truncation exponent exceeds the budget");
        lo = -M;
        if (lo > hi) lo = hi;
        if (diag) {
            diag->truncated_at = lo;
            diag->tail_bound = sup * std::pow(ctx.q(), static_cast<double>(1 - M));
        }
    }
    Vec acc = Vec::Zero(dim);
    for (std::int64_t n = lo; n < hi; ++n) acc += ctx.graininess(n) * f(n);
    return acc;
}

inline Vec delta_integral(const GridContext& ctx, const GridFn& f, const QPoint& a,
                          const QPoint& b, double tol = kDefaultTol,
                          IntegralDiag* diag = nullptr) {
    return delta_integral(ctx, as_fn(f), a, b, tol, diag);
}

/// circle-minus: the additive inverse in the regressive group,
/// (circle_minus alpha)(t) = -alpha / (1 + mu(t) alpha).
inline double circle_minus(double alpha, double mu_val) {
    const double denom = 1.0 + mu_val * alpha;
    if (denom == 0.0 || !std::isfinite(denom))
        throw NotRegressiveError("1 + mu*alpha vanishes");
    return -alpha / denom;
}

/// Time-scale exponential e_p(t, s) as the product of one-step factors
/// 1 + mu p over [s, t) (reciprocal product for t < s).
inline double ts_exp(const GridContext& ctx, const ScalarFn& p, const QPoint& t,
                     const QPoint& s) {
    if (t.is_zero() || s.is_zero())
        throw InvalidArgumentError("ts_exp endpoints must be grid points");
    const std::int64_t kt = t.exponent(), ks = s.exponent();
    const std::int64_t lo = std::min(kt, ks), hi = std::max(kt, ks);
    double prod = 1.0;
    for (std::int64_t n = lo; n < hi; ++n) {
        const double factor = 1.0 + ctx.graininess(n) * p(n);
        if (factor == 0.0)
            throw NotRegressiveError("factor vanishes at exponent " + std::to_string(n));
        prod *= factor;
    }
    return kt >= ks ? prod : 1.0 / prod;
}

/// Verdict of a regressivity scan: I + mu A invertible across the window.
struct RegressivityReport {
    bool ok = true;
    std::optional<std::int64_t> first_failure;

    explicit operator bool() const { return ok; }
};

/// Condition-number-guarded invertibility of I + mu(t)A(t) on a window.
inline RegressivityReport regressive_check(const GridContext& ctx, const MatFn& A,
                                           const Window& w) {
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) {
        const Mat M = Mat::Identity(A(k).rows(), A(k).cols()) + ctx.graininess(k) * A(k);
        Eigen::JacobiSVD<Mat> svd(M);
        const auto& sv = svd.singularValues();
        const double smax = sv(0);
        const double smin = sv(sv.size() - 1);
        if (!(smax > 0.0) || smin * kConditionLimit < smax)
            return {false, k};
    }
    return {};
}

inline RegressivityReport regressive_check(const GridContext& ctx, const ScalarFn& p,
                                           const Window& w) {
    return regressive_check(
        ctx, [&p](std::int64_t k) { return Mat::Constant(1, 1, p(k)); }, w);
}

} // namespace qts::qcalc
