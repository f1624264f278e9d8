#pragma once

#include <qts/errors.hpp>
#include <qts/genseq.hpp>
#include <qts/grid.hpp>
#include <qts/lindyn.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qts::semlin {

inline constexpr double kDefaultTol = 1e-8;
inline constexpr int kDefaultMaxIter = 200;

using genseq::DelayFn;
using genseq::NonlinFn;

/// Semilinear delayed dynamic equation
///   x^Delta(t) = A(t) x(t) + g(t, x(t), x(t - tau(t)))
/// together with the dichotomy of its linear part and the working window.
struct SemilinearProblem {
    lindyn::LinearSystem sys;   // linear part, canonical one-step form
    NonlinFn g;                 // g(k, u, v), Lipschitz (L1, L2) in (u, v)
    double L1 = 0.0, L2 = 0.0;
    DelayFn tau;                // nonnegative delay exponents
    lindyn::DichotomyData dichotomy;
    Window window;
    double tol = kDefaultTol;

    void validate() const {
        if (L1 < 0 || L2 < 0) throw InvalidArgumentError("Lipschitz constants must be >= 0");
        if (window.include_zero)
            throw InvalidArgumentError("solver windows must not include the limit point");
        dichotomy.validate();
    }
};

/// c = ((K1+a1)/a1 + K2/a2) (L1 + L2); c < 1 is the contraction condition.
inline double contraction_constant(const SemilinearProblem& p) {
    return p.dichotomy.bound_factor() * (p.L1 + p.L2);
}

namespace detail {

/// Evaluate the iterate-driven forcing f_x(l) = g(l, x(l), x(l - tau(l))),
/// reading x through edge clamping so the Green margins stay evaluable.
inline VecFn iterate_forcing(const GridFn& x, const SemilinearProblem& p) {
    const std::int64_t lo = x.kmin(), hi = x.kmax();
    return [&x, &p, lo, hi](std::int64_t l) {
        const std::int64_t tl = p.tau(l);
        if (tl < 0) throw InvalidArgumentError("delay must be nonnegative");
        auto clamped = [&](std::int64_t k) -> const Vec& {
            return x.at(std::clamp(k, lo, hi));
        };
        return p.g(l, clamped(l), clamped(l - tl));
    };
}

} // namespace detail

/// One application of the mapping Psi: x -> bounded solution of the linear
/// system forced by g(., x(.), x(. - tau)). The iterate is extended by its
/// edge values where the Green sums reach outside its window.
inline GridFn psi_apply(const GridFn& x, const SemilinearProblem& p, const Window& out) {
    p.validate();
    VecFn f = detail::iterate_forcing(x, p);
    return lindyn::bounded_solution(p.sys, f, p.dichotomy, out, p.tol);
}
inline GridFn psi_apply(const GridFn& x, const SemilinearProblem& p) {
    return psi_apply(x, p, p.window);
}

/// Fixed-point iteration record.
struct PicardResult {
    GridFn x;                     // solution on the problem window
    std::vector<double> deltas;   // sup || x_{m+1} - x_m || per sweep
    std::vector<double> ratios;   // r_m = delta_{m+1} / delta_m
    double contraction = 0.0;     // the constant c
    bool guaranteed = false;      // c < 1
    std::int64_t enlargement = 0; // window widening by the max delay
    int iterations = 0;
};

/// Picard iteration x_{m+1} = Psi(x_m) to the unique almost automorphic
/// solution (Theorem-5.2 setting). Runs even when c >= 1, flagging that no
/// guarantee applies; stops when the sup difference drops below tol.
inline PicardResult picard_solve(const SemilinearProblem& p,
                                 std::optional<GridFn> x0 = std::nullopt,
                                 int max_iter = kDefaultMaxIter) {
    p.validate();
    const int n = p.sys.dim();

    // working window: enlarged by the largest delay nearby, so the reported
    // window never reads clamped samples directly
    std::int64_t tau_max = 0;
    for (std::int64_t k = p.window.kmin - 64; k <= p.window.kmax + 64; ++k)
        tau_max = std::max(tau_max, p.tau(k));
    const Window work = p.window.widened(tau_max, tau_max);

    auto lift = [&](const GridFn& seed) {
        std::vector<Vec> vals;
        vals.reserve(static_cast<std::size_t>(work.size()));
        for (std::int64_t k = work.kmin; k <= work.kmax; ++k)
            vals.push_back(seed.at(std::clamp(k, seed.kmin(), seed.kmax())));
        return GridFn(work, std::move(vals));
    };
    GridFn x = x0 ? lift(*x0)
                  : GridFn(work, std::vector<Vec>(static_cast<std::size_t>(work.size()),
                                                  Vec::Zero(n)));

    PicardResult res{x, {}, {}, contraction_constant(p), false, tau_max, 0};
    res.guaranteed = res.contraction < 1.0;

    int diverging = 0;
    for (int m = 0; m < max_iter; ++m) {
        GridFn next = psi_apply(x, p, work);
        double delta = 0.0;
        for (std::int64_t k = work.kmin; k <= work.kmax; ++k)
            delta = std::max(delta, (next.at(k) - x.at(k)).norm());
        if (!res.deltas.empty() && res.deltas.back() > 0.0) {
            const double r = delta / res.deltas.back();
            res.ratios.push_back(r);
            diverging = r > 1.0 ? diverging + 1 : 0;
            if (diverging >= 3)
                throw NonContractionError("successive-difference ratio exceeded 1 three times");
        }
        res.deltas.push_back(delta);
        x = std::move(next);
        res.iterations = m + 1;
        if (delta < p.tol) {
            std::vector<Vec> core;
            core.reserve(static_cast<std::size_t>(p.window.size()));
            for (std::int64_t k = p.window.kmin; k <= p.window.kmax; ++k)
                core.push_back(x.at(k));
            res.x = GridFn(p.window, std::move(core));
            return res;
        }
    }
    throw MaxIterError("no convergence within " + std::to_string(max_iter) + " sweeps");
}

/// Lower-bound Lipschitz estimates from difference quotients over a probe
/// set: L1 scans the second argument, L2 the third.
inline std::pair<double, double> lipschitz_probe(const NonlinFn& g,
                                                 const std::vector<std::int64_t>& ks,
                                                 const std::vector<Vec>& us,
                                                 const std::vector<Vec>& vs) {
    if (ks.empty() || us.empty() || vs.empty())
        throw InvalidArgumentError("probe set must be nonempty");
    double l1 = 0.0, l2 = 0.0;
    for (std::int64_t k : ks) {
        for (const Vec& v : vs)
            for (std::size_t i = 0; i < us.size(); ++i)
                for (std::size_t j = i + 1; j < us.size(); ++j) {
                    const double den = (us[i] - us[j]).norm();
                    if (den == 0.0) continue;
                    l1 = std::max(l1, (g(k, us[i], v) - g(k, us[j], v)).norm() / den);
                }
        for (const Vec& u : us)
            for (std::size_t i = 0; i < vs.size(); ++i)
                for (std::size_t j = i + 1; j < vs.size(); ++j) {
                    const double den = (vs[i] - vs[j]).norm();
                    if (den == 0.0) continue;
                    l2 = std::max(l2, (g(k, u, vs[i]) - g(k, u, vs[j])).norm() / den);
                }
    }
    return {l1, l2};
}

/// sup over interior points of || x^Delta - A x - g(., x, x_delayed) ||,
/// skipping points whose delayed sample falls outside the window.
inline double residual(const GridFn& x, const SemilinearProblem& p) {
    double r = 0.0;
    for (std::int64_t k = x.kmin(); k < x.kmax(); ++k) {
        const std::int64_t kd = k - p.tau(k);
        if (kd < x.kmin()) continue;
        const double m = p.sys.ctx().graininess(k);
        const Vec lhs = (x.at(k + 1) - x.at(k)) / m;
        const Vec rhs = p.sys.delta_coeff(k) * x.at(k) + p.g(k, x.at(k), x.at(kd));
        r = std::max(r, (lhs - rhs).norm());
    }
    return r;
}

} // namespace qts::semlin
