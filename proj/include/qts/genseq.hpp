#pragma once

#include <qts/errors.hpp>
#include <qts/grid.hpp>
#include <qts/qcalc.hpp>

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace qts::genseq {

/// Generalized integer: an ordinary integer or the compactification symbol
/// -inf_q standing for the exponent of q^{-inf_q} = 0. Arithmetic follows
/// the stipulations t +- (-inf_q) = t and, as a shift target,
/// -inf_q + s = -inf_q (the point 0 is fixed by every shift).
class GenInt {
public:
    static GenInt neg_inf() { return GenInt(true, 0); }
    static GenInt of(std::int64_t k) { return GenInt(false, k); }

    bool is_neg_inf() const { return neg_inf_; }
    std::int64_t value() const {
        if (neg_inf_) throw InvalidArgumentError("value() on -inf_q");
        return k_;
    }

    friend bool operator==(const GenInt& a, const GenInt& b) {
        return a.neg_inf_ == b.neg_inf_ && (a.neg_inf_ || a.k_ == b.k_);
    }
    friend std::strong_ordering operator<=>(const GenInt& a, const GenInt& b) {
        if (a.neg_inf_ && b.neg_inf_) return std::strong_ordering::equal;
        if (a.neg_inf_) return std::strong_ordering::less;
        if (b.neg_inf_) return std::strong_ordering::greater;
        return a.k_ <=> b.k_;
    }

    friend GenInt operator+(const GenInt& a, const GenInt& b) {
        if (a.neg_inf_) return a;          // 0 * q^s = 0
        if (b.neg_inf_) return a;          // t + (-inf_q) = t
        return of(a.k_ + b.k_);
    }
    friend GenInt operator-(const GenInt& a, const GenInt& b) {
        if (a.neg_inf_) return a;
        if (b.neg_inf_) return a;          // t - (-inf_q) = t
        return of(a.k_ - b.k_);
    }

    /// The corresponding point of the quantum scale (q^k, or 0).
    QPoint point() const { return neg_inf_ ? QPoint::zero() : QPoint::exp(k_); }

private:
    GenInt(bool neg_inf, std::int64_t k) : neg_inf_(neg_inf), k_(k) {}
    bool neg_inf_;
    std::int64_t k_;
};

/// Sequence on the generalized integers: mirrors GridFn with the value at
/// -inf_q in place of the limit at 0.
using SeqFn = detail::SampledFn<struct SeqTag>;

/// f~(k) = f(q^k); f~(-inf_q) = f(0). Index-for-index, bit-exact.
inline SeqFn to_sequence(const GridFn& f) {
    std::vector<Vec> vals(f.values());
    std::optional<Vec> tail;
    if (f.has_limit()) tail = f.limit_value();
    return SeqFn(f.window(), std::move(vals), std::move(tail));
}

/// Exact inverse of to_sequence.
inline GridFn from_sequence(const SeqFn& s) {
    std::vector<Vec> vals(s.values());
    std::optional<Vec> zero;
    if (s.has_limit()) zero = s.limit_value();
    return GridFn(s.window(), std::move(vals), std::move(zero));
}

/// Two-argument transform: f~(k, x) = f(q^k, x), f~(-inf_q, x) = f(0, x).
inline std::function<Vec(const GenInt&, const Vec&)>
to_sequence2(std::function<Vec(const QPoint&, const Vec&)> f) {
    return [f = std::move(f)](const GenInt& k, const Vec& x) { return f(k.point(), x); };
}

/// Nonlinearity g(t, u, v) sampled by exponent index; the Z-grid image of a
/// quantum-side problem uses the same signature.
using NonlinFn = std::function<Vec(std::int64_t, const Vec&, const Vec&)>;
using DelayFn = std::function<std::int64_t(std::int64_t)>;

/// A semilinear problem posed on the quantum grid:
///   D_q x(t) = B(t) x(t) + g(t, x(t), x(t q^{-tau})).
/// B and g are indexed by exponent (t = q^k); tau is the delay exponent.
struct QuantumProblem {
    GridContext ctx;   // must be quantum
    MatFn B;
    NonlinFn g;        // g(k, u, v); ignore u, v for a plain forcing
    DelayFn tau;       // nonnegative

    QuantumProblem(GridContext c, MatFn Bfun, NonlinFn gfun,
                   DelayFn delay = [](std::int64_t) { return 0; })
        : ctx(std::move(c)), B(std::move(Bfun)), g(std::move(gfun)), tau(std::move(delay)) {
        if (!ctx.is_quantum())
            throw InvalidArgumentError("QuantumProblem requires a quantum grid");
    }
};

/// The difference-equation image on Z:  Delta x~(n) = A(n) x~(n) + f(n, ., .)
struct DiscreteProblem {
    MatFn A;
    NonlinFn f;
    DelayFn tau;
};

/// Coefficient transform A(n) = (q-1) q^n B~(n); the nonlinearity picks up
/// the same graininess factor and the delay transfers index-for-index.
inline DiscreteProblem coeff_transform(const QuantumProblem& p) {
    const GridContext ctx = p.ctx;
    MatFn A = [ctx, B = p.B](std::int64_t n) { return Mat(ctx.graininess(n) * B(n)); };
    NonlinFn f = [ctx, g = p.g](std::int64_t n, const Vec& u, const Vec& v) {
        return Vec(ctx.graininess(n) * g(n, u, v));
    };
    return {std::move(A), std::move(f), p.tau};
}

/// Residuals of a candidate solution on both sides of the transform.
struct EquivalenceReport {
    double quantum_residual = 0.0;    // sup || D_q x - Bx - g ||
    double sequence_residual = 0.0;   // sup || Delta x~ - A x~ - f ||
    double weighting_mismatch = 0.0;  // sup || r_seq(n) - mu(n) r_q(n) ||
};

/// Checks "x solves the quantum equation iff x~ solves the transformed
/// difference equation" numerically: computes both residual fields and how
/// far they are from the exact mu-weighting relation.
inline EquivalenceReport solution_equivalence_check(const GridFn& x,
                                                    const QuantumProblem& p) {
    EquivalenceReport rep;
    const DiscreteProblem img = coeff_transform(p);
    const SeqFn xs = to_sequence(x);
    for (std::int64_t k = x.kmin(); k < x.kmax(); ++k) {
        const std::int64_t kd = k - p.tau(k);
        if (kd < x.kmin()) continue;  // delayed sample not available
        const Vec& delayed = x.at(kd);
        const double m = p.ctx.graininess(k);
        const Vec rq = (x.at(k + 1) - x.at(k)) / m - p.B(k) * x.at(k) -
                       p.g(k, x.at(k), delayed);
        const Vec rs = xs.at(k + 1) - xs.at(k) - img.A(k) * xs.at(k) -
                       img.f(k, xs.at(k), xs.at(kd));
        rep.quantum_residual = std::max(rep.quantum_residual, rq.norm());
        rep.sequence_residual = std::max(rep.sequence_residual, rs.norm());
        rep.weighting_mismatch = std::max(rep.weighting_mismatch, (rs - m * rq).norm());
    }
    return rep;
}

} // namespace qts::genseq
