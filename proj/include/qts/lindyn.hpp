#pragma once

#include <qts/errors.hpp>
#include <qts/grid.hpp>
#include <qts/qcalc.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qts::lindyn {

inline constexpr double kDefaultTol = 1e-10;
inline constexpr double kDefaultSlack = 1e-6;
inline constexpr double kUnitCircleGap = 1e-8;
inline constexpr double kCommutationRelTol = 1e-8;
inline constexpr std::int64_t kTailBudget = 200000;

/// Spectral norm (largest singular value).
inline double op_norm(const Mat& m) {
    return Eigen::JacobiSVD<Mat>(m).singularValues()(0);
}

/// A linear system in canonical one-step form x(sigma(t)) = C(k) x(t);
/// Delta-form coefficients A convert via C = I + mu A.
class LinearSystem {
public:
    static LinearSystem one_step(GridContext ctx, int dim, MatFn C) {
        return LinearSystem(std::move(ctx), dim, std::move(C));
    }
    static LinearSystem delta_form(GridContext ctx, int dim, MatFn A) {
        GridContext c = ctx;
        MatFn step = [c, A = std::move(A), dim](std::int64_t k) {
            return Mat(Mat::Identity(dim, dim) + c.graininess(k) * A(k));
        };
        return LinearSystem(std::move(ctx), dim, std::move(step));
    }

    const GridContext& ctx() const { return ctx_; }
    int dim() const { return dim_; }
    Mat step(std::int64_t k) const { return step_(k); }
    /// Delta-form coefficient A(k) = (C(k) - I) / mu(k).
    Mat delta_coeff(std::int64_t k) const {
        return (step_(k) - Mat::Identity(dim_, dim_)) / ctx_.graininess(k);
    }

private:
    LinearSystem(GridContext ctx, int dim, MatFn step)
        : ctx_(std::move(ctx)), dim_(dim), step_(std::move(step)) {
        if (dim < 1) throw InvalidArgumentError("system dimension must be >= 1");
    }
    GridContext ctx_;
    int dim_;
    MatFn step_;
};

/// Principal fundamental matrix on a window: X(t0) = I,
/// X(k+1) = C(k) X(k), every factor invertible.
class FundamentalMatrix {
public:
    FundamentalMatrix(GridContext ctx, Window w, std::int64_t t0, std::vector<Mat> x,
                      std::vector<Mat> c)
        : ctx_(std::move(ctx)), w_(w), t0_(t0), x_(std::move(x)), c_(std::move(c)) {}

    const GridContext& ctx() const { return ctx_; }
    const Window& window() const { return w_; }
    std::int64_t anchor() const { return t0_; }
    int dim() const { return static_cast<int>(x_.front().rows()); }

    const Mat& X(std::int64_t k) const {
        if (!w_.contains(k)) throw OutOfWindowError("X at " + std::to_string(k));
        return x_[static_cast<std::size_t>(k - w_.kmin)];
    }
    /// One-step factor C(k), defined for k in [kmin, kmax).
    const Mat& C(std::int64_t k) const {
        if (k < w_.kmin || k >= w_.kmax) throw OutOfWindowError("C at " + std::to_string(k));
        return c_[static_cast<std::size_t>(k - w_.kmin)];
    }
    Mat Xinv(std::int64_t k) const {
        Eigen::FullPivLU<Mat> lu(X(k));
        if (!lu.isInvertible()) throw SingularMatrixError("X(" + std::to_string(k) + ")");
        return lu.inverse();
    }

private:
    GridContext ctx_;
    Window w_;
    std::int64_t t0_;
    std::vector<Mat> x_;
    std::vector<Mat> c_;
};

/// Builds the principal fundamental matrix by forward/backward sweeps of the
/// one-step factors, anchored at X(t0) = I.
inline FundamentalMatrix fundamental_matrix(const LinearSystem& sys, const Window& w,
                                            std::int64_t t0) {
    if (!w.contains(t0)) throw InvalidArgumentError("anchor t0 outside the window");
    const int n = sys.dim();
    std::vector<Mat> c;
    c.reserve(static_cast<std::size_t>(w.size() - 1));
    for (std::int64_t k = w.kmin; k < w.kmax; ++k) {
        Mat ck = sys.step(k);
        Eigen::JacobiSVD<Mat> svd(ck);
        const auto& sv = svd.singularValues();
        if (!(sv(0) > 0.0) || sv(sv.size() - 1) * qcalc::kConditionLimit < sv(0))
            throw NotRegressiveError("one-step factor at exponent " + std::to_string(k));
        c.push_back(std::move(ck));
    }
    std::vector<Mat> x(static_cast<std::size_t>(w.size()));
    auto slot = [&](std::int64_t k) -> Mat& {
        return x[static_cast<std::size_t>(k - w.kmin)];
    };
    auto guard = [&](std::int64_t k) {
        if (!slot(k).allFinite() || slot(k).cwiseAbs().maxCoeff() > 1e280)
            throw RangeError("fundamental matrix overflow at exponent " + std::to_string(k));
    };
    slot(t0) = Mat::Identity(n, n);
    for (std::int64_t k = t0 + 1; k <= w.kmax; ++k) {
        slot(k) = c[static_cast<std::size_t>(k - 1 - w.kmin)] * slot(k - 1);
        guard(k);
    }
    for (std::int64_t k = t0 - 1; k >= w.kmin; --k) {
        slot(k) = Eigen::FullPivLU<Mat>(c[static_cast<std::size_t>(k - w.kmin)]).solve(slot(k + 1));
        guard(k);
    }
    return FundamentalMatrix(sys.ctx(), w, t0, std::move(x), std::move(c));
}

/// Projection P and constants (K1, alpha1), (K2, alpha2) of an exponential
/// dichotomy. Alphas use the regressive convention: decay (1+alpha)^{-d}
/// over index distance d, equivalently e-folding rate ln(1+alpha). K = 0
/// marks a side whose kernel vanishes identically (P = 0 or P = I).
struct DichotomyData {
    Mat P;
    double K1 = 1.0, K2 = 1.0;
    double alpha1 = 1.0, alpha2 = 1.0;

    void validate() const {
        if (P.rows() != P.cols()) throw InvalidArgumentError("P must be square");
        if (op_norm(Mat(P * P - P)) > 1e-10)
            throw InvalidArgumentError("P is not a projection (P^2 != P)");
        if (K1 < 0 || K2 < 0 || !(alpha1 > 0) || !(alpha2 > 0))
            throw InvalidArgumentError("dichotomy constants must be positive (K may be 0)");
    }
    /// Norm factor (K1+a1)/a1 + K2/a2 of the bounded-solution estimate.
    double bound_factor() const { return (K1 + alpha1) / alpha1 + K2 / alpha2; }
};

inline double efolding_rate(double alpha) { return std::log1p(alpha); }
inline double alpha_from_efolding(double c) { return std::expm1(c); }

/// Outcome of checking both kernel bounds over every ordered pair.
struct DichotomyReport {
    bool pass = false;
    double max_ratio = 0.0;  // worst kernel-norm / allowed-bound
    std::int64_t worst_k = 0, worst_l = 0;
    double commutation_defect = 0.0;  // sup ||X P - P X|| / sup ||X P||
};

/// Verifies || X(k) P X^{-1}(l) || <= K1 (1+a1)^{-(k-l)} for k >= l and
/// || X(k) (I-P) X^{-1}(l) || <= K2 (1+a2)^{-(l-k)} for l >= k. On the
/// integer grid the bound coincides with K e_{circ-minus alpha}(k, l); it is
/// the discrete Def-5.3 form with e-folding ln(1+alpha) on either grid.
inline DichotomyReport dichotomy_verify(const FundamentalMatrix& X, const DichotomyData& d,
                                        double slack = kDefaultSlack) {
    d.validate();
    const Window& w = X.window();
    const int n = X.dim();
    const Mat Q = Mat::Identity(n, n) - d.P;

    DichotomyReport rep;
    double xp_scale = 0.0;
    std::vector<Mat> xinv(static_cast<std::size_t>(w.size()));
    for (std::int64_t l = w.kmin; l <= w.kmax; ++l)
        xinv[static_cast<std::size_t>(l - w.kmin)] = X.Xinv(l);
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) {
        const Mat XP = X.X(k) * d.P;
        rep.commutation_defect =
            std::max(rep.commutation_defect, op_norm(Mat(XP - d.P * X.X(k))));
        xp_scale = std::max(xp_scale, op_norm(XP));
    }
    auto ratio = [](double used, double allowed) {
        if (allowed > 0.0) return used / allowed;
        return used <= 1e-250 ? 0.0 : std::numeric_limits<double>::infinity();
    };
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) {
        for (std::int64_t l = w.kmin; l <= w.kmax; ++l) {
            const Mat& xi = xinv[static_cast<std::size_t>(l - w.kmin)];
            double r;
            if (k >= l) {
                const double used = op_norm(Mat(X.X(k) * d.P * xi));
                const double allowed =
                    d.K1 * std::exp(-efolding_rate(d.alpha1) * static_cast<double>(k - l));
                r = ratio(used, allowed);
            } else {
                const double used = op_norm(Mat(X.X(k) * Q * xi));
                const double allowed =
                    d.K2 * std::exp(-efolding_rate(d.alpha2) * static_cast<double>(l - k));
                r = ratio(used, allowed);
            }
            if (r > rep.max_ratio) {
                rep.max_ratio = r;
                rep.worst_k = k;
                rep.worst_l = l;
            }
        }
    }
    const bool commutes = rep.commutation_defect <= kCommutationRelTol * std::max(xp_scale, 1.0);
    rep.pass = commutes && rep.max_ratio <= 1.0 + slack;
    return rep;
}

/// Decay envelopes of the two kernels by index distance.
struct KernelEnvelopes {
    std::vector<double> stable;    // d -> max_{k-l=d} ||X(k) P X^{-1}(l)||
    std::vector<double> unstable;  // d -> max_{l-k=d} ||X(k) (I-P) X^{-1}(l)||
};

inline KernelEnvelopes kernel_envelopes(const FundamentalMatrix& X, const Mat& P) {
    const Window& w = X.window();
    const int n = X.dim();
    const Mat Q = Mat::Identity(n, n) - P;
    std::vector<Mat> xinv(static_cast<std::size_t>(w.size()));
    for (std::int64_t l = w.kmin; l <= w.kmax; ++l)
        xinv[static_cast<std::size_t>(l - w.kmin)] = X.Xinv(l);
    KernelEnvelopes env;
    env.stable.assign(static_cast<std::size_t>(w.size()), 0.0);
    env.unstable.assign(static_cast<std::size_t>(w.size()), 0.0);
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) {
        for (std::int64_t l = w.kmin; l <= w.kmax; ++l) {
            const Mat& xi = xinv[static_cast<std::size_t>(l - w.kmin)];
            if (k >= l) {
                auto& slot = env.stable[static_cast<std::size_t>(k - l)];
                slot = std::max(slot, op_norm(Mat(X.X(k) * P * xi)));
            }
            if (l >= k) {
                auto& slot = env.unstable[static_cast<std::size_t>(l - k)];
                slot = std::max(slot, op_norm(Mat(X.X(k) * Q * xi)));
            }
        }
    }
    return env;
}

namespace detail {

/// Least-squares fit of log E(d) ~ log K - c d, with K inflated so the line
/// dominates the whole envelope. Returns (K, alpha) with alpha = e^c - 1.
inline std::pair<double, double> fit_envelope(const std::vector<double>& env,
                                              const char* side) {
    double emax = 0.0;
    for (double e : env) emax = std::max(emax, e);
    if (emax <= 1e-250) return {0.0, 1.0};  // identically-zero kernel side
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (std::size_t d = 0; d < env.size(); ++d) {
        if (env[d] <= 0.0) continue;
        const double x = static_cast<double>(d), y = std::log(env[d]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m < 2) throw NoDecayError(std::string(side) + ": envelope too short to fit");
    const double denom = static_cast<double>(m) * sxx - sx * sx;
    const double c = -(static_cast<double>(m) * sxy - sx * sy) / denom;
    if (!(c > 0.0)) throw NoDecayError(std::string(side) + ": fitted rate is not positive");
    double K = 0.0;
    for (std::size_t d = 0; d < env.size(); ++d)
        K = std::max(K, env[d] * std::exp(c * static_cast<double>(d)));
    return {K, std::expm1(c)};
}

} // namespace detail

/// Fits (K1, alpha1, K2, alpha2) from the kernel decay envelopes of a given
/// projection. Requires P to satisfy the projection/commutation invariants.
inline DichotomyData dichotomy_estimate(const FundamentalMatrix& X, const Mat& P) {
    if (op_norm(Mat(P * P - P)) > 1e-10)
        throw InvalidArgumentError("P is not a projection (P^2 != P)");
    double defect = 0.0, scale = 0.0;
    for (std::int64_t k = X.window().kmin; k <= X.window().kmax; ++k) {
        defect = std::max(defect, op_norm(Mat(X.X(k) * P - P * X.X(k))));
        scale = std::max(scale, op_norm(Mat(X.X(k) * P)));
    }
    if (defect > kCommutationRelTol * std::max(scale, 1.0))
        throw InvalidArgumentError("P does not commute with X on the window");
    const KernelEnvelopes env = kernel_envelopes(X, P);
    DichotomyData d;
    d.P = P;
    std::tie(d.K1, d.alpha1) = detail::fit_envelope(env.stable, "stable side");
    std::tie(d.K2, d.alpha2) = detail::fit_envelope(env.unstable, "unstable side");
    return d;
}

namespace detail {

/// Swap the adjacent diagonal entries (j, j+1) of a complex Schur form with
/// a unitary similarity, accumulating the transform into U.
inline void schur_swap(Eigen::MatrixXcd& T, Eigen::MatrixXcd& U, Eigen::Index j) {
    using Cplx = std::complex<double>;
    const Cplx t11 = T(j, j), t12 = T(j, j + 1), t22 = T(j + 1, j + 1);
    // Eigenvector of [[t11, t12], [0, t22]] for t22 is (t12, t22 - t11).
    Eigen::JacobiRotation<Cplx> rot;
    rot.makeGivens(t12, t22 - t11);
    T.applyOnTheLeft(j, j + 1, rot.adjoint());
    T.applyOnTheRight(j, j + 1, rot);
    U.applyOnTheRight(j, j + 1, rot);
    T(j + 1, j) = Cplx(0, 0);
}

} // namespace detail

/// Spectral projection of a constant one-step matrix onto the span of
/// generalized eigenvectors with |lambda| < 1, along the complementary
/// invariant subspace. Built from an ordered complex Schur form and a
/// triangular Sylvester solve, so defective matrices are handled.
inline Mat spectral_projection(const Mat& C) {
    using CMat = Eigen::MatrixXcd;
    const Eigen::Index n = C.rows();
    if (C.cols() != n) throw InvalidArgumentError("one-step matrix must be square");
    Eigen::ComplexSchur<Mat> schur(C);
    if (schur.info() != Eigen::Success) throw SingularMatrixError("Schur factorization failed");
    CMat T = schur.matrixT();
    CMat U = schur.matrixU();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double gap = std::abs(std::abs(T(i, i)) - 1.0);
        if (gap < kUnitCircleGap)
            throw UnitCircleError("eigenvalue of modulus " + std::to_string(std::abs(T(i, i))));
    }
    auto stable = [&](Eigen::Index i) { return std::abs(T(i, i)) < 1.0; };
    // bubble the stable eigenvalues into the leading block
    for (Eigen::Index pass = 0; pass + 1 < n; ++pass)
        for (Eigen::Index j = 0; j + 1 < n; ++j)
            if (!stable(j) && stable(j + 1)) detail::schur_swap(T, U, j);
    Eigen::Index s = 0;
    while (s < n && stable(s)) ++s;
    if (s == 0) return Mat::Zero(n, n);
    if (s == n) return Mat::Identity(n, n);

    // solve T11 Y - Y T22 = T12 column by column (both blocks triangular)
    const CMat T11 = T.topLeftCorner(s, s);
    const CMat T22 = T.bottomRightCorner(n - s, n - s);
    const CMat T12 = T.topRightCorner(s, n - s);
    CMat Y(s, n - s);
    for (Eigen::Index j = 0; j < n - s; ++j) {
        Eigen::VectorXcd rhs = T12.col(j);
        for (Eigen::Index i = 0; i < j; ++i) rhs += Y.col(i) * T22(i, j);
        CMat M = T11 - T22(j, j) * CMat::Identity(s, s);
        Y.col(j) = M.triangularView<Eigen::Upper>().solve(rhs);
    }
    CMat R = CMat::Zero(n, n);
    R.topLeftCorner(s, s).setIdentity();
    R.topRightCorner(s, n - s) = Y;
    const CMat P = U * R * U.adjoint();
    return P.real();
}

/// Diagnostics of a Green-operator evaluation.
struct GreenDiag {
    std::int64_t margin_past = 0;    // extra exponents summed below kmin
    std::int64_t margin_future = 0;  // extra exponents summed above kmax
    double forcing_scale = 0.0;      // sup || mu(l) f(l) || over the sampled range
    double tail_bound = 0.0;         // certified bound on both dropped tails
};

namespace detail {

/// Margin needed so that K (1+alpha)^{-m} (1+alpha)/alpha * scale <= tol.
inline std::int64_t kernel_margin(double K, double alpha, double scale, double tol) {
    if (K <= 0.0 || scale <= 0.0) return 0;
    const double c = std::log1p(alpha);
    const double need = std::log(K * scale * (1.0 + alpha) / (alpha * tol));
    if (need <= 0.0) return 0;
    return static_cast<std::int64_t>(std::ceil(need / c)) + 1;
}

} // namespace detail

/// Bounded solution of x^Delta = A x + f through the dichotomy projection:
///   x(k) = sum_{l<k} X(k) P X^{-1}(l+1) f(l) mu(l)
///        - sum_{l>=k} X(k) (I-P) X^{-1}(l+1) f(l) mu(l),
/// realized by stable forward/backward recursions with tails truncated where
/// the dichotomy bound certifies the remainder <= tol.
inline GridFn bounded_solution(const LinearSystem& sys, const VecFn& f,
                               const DichotomyData& d, const Window& w,
                               double tol = kDefaultTol, GreenDiag* diag = nullptr) {
    d.validate();
    if (w.include_zero)
        throw InvalidArgumentError("solver windows must not include the limit point");
    const int n = sys.dim();
    const GridContext& ctx = sys.ctx();
    const Mat P = d.P;
    const Mat Q = Mat::Identity(n, n) - P;
    const std::int64_t safe = ctx.max_safe_exponent() - 1;

    // effective forcing scale sup || mu f ||, sampled on the window plus probes
    double scale = 0.0, supf = 0.0, supf_deep = 0.0, supf_shallow = 0.0;
    const std::int64_t probe_lo = std::max(w.kmin - 256, -safe);
    const std::int64_t probe_hi = std::min(w.kmax + 256, safe);
    for (std::int64_t l = probe_lo; l <= probe_hi; ++l) {
        const double a = f(l).norm();
        scale = std::max(scale, ctx.graininess(l) * a);
        supf = std::max(supf, a);
        if (l < probe_lo + 64)
            supf_deep = std::max(supf_deep, a);
        else
            supf_shallow = std::max(supf_shallow, a);
    }
    const bool f_bounded_below = supf_deep <= 2.0 * supf_shallow || supf_deep <= tol;

    std::int64_t m1 = detail::kernel_margin(d.K1, d.alpha1, scale, tol);
    std::int64_t m2 = detail::kernel_margin(d.K2, d.alpha2, scale, tol);
    if (ctx.is_quantum() && d.K1 > 0.0 && f_bounded_below && supf > 0.0) {
        // geometric-weight alternative for the past tail:
        // sum_{l < l0} mu(l) = q^{l0}, so tail <= K1 sup||f|| q^{l0} <= tol
        const double l0 = std::floor(std::log(tol / (d.K1 * supf)) / std::log(ctx.q()));
        if (l0 > -static_cast<double>(safe)) {
            const std::int64_t mu_margin =
                std::max<std::int64_t>(0, w.kmin - static_cast<std::int64_t>(l0));
            m1 = std::min(m1, mu_margin);
        }
    }
    // below the representable range, mu underflows: the quantum past tail
    // there is certified for any sampled-bounded forcing
    if (ctx.is_quantum() && w.kmin - m1 < -safe && f_bounded_below) m1 = w.kmin + safe;
    if (m1 > kTailBudget || m2 > kTailBudget || w.kmin - m1 < -safe || w.kmax + m2 > safe)
        throw TailNotCertifiedError("needed margins " + std::to_string(m1) + "/" +
                                    std::to_string(m2) + " exceed the step budget");

    const std::int64_t lo = w.kmin - m1;
    const std::int64_t hi = w.kmax + m2;

    // Past part: S(k+1) = C(k) S(k) + P f(k) mu(k), S(lo) = 0. Reprojecting
    // onto range(P) each step keeps roundoff out of the growing subspace.
    std::vector<Vec> past(static_cast<std::size_t>(hi - lo + 1), Vec::Zero(n));
    for (std::int64_t k = lo; k < hi; ++k) {
        const Vec& prev = past[static_cast<std::size_t>(k - lo)];
        Vec next = P * (sys.step(k) * prev + ctx.graininess(k) * f(k));
        if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e250)
            throw RangeError("past recursion overflow at exponent " + std::to_string(k + 1));
        past[static_cast<std::size_t>(k + 1 - lo)] = std::move(next);
    }
    // future part: S(k) = C(k)^{-1} (Q f(k) mu(k) + S(k+1)), S(hi+1) = 0
    std::vector<Vec> future(static_cast<std::size_t>(hi - lo + 2), Vec::Zero(n));
    for (std::int64_t k = hi; k >= lo; --k) {
        const Vec& nxt = future[static_cast<std::size_t>(k + 1 - lo)];
        Vec rhs = ctx.graininess(k) * f(k) + nxt;
        Eigen::FullPivLU<Mat> lu(sys.step(k));
        if (!lu.isInvertible())
            throw NotRegressiveError("one-step factor at exponent " + std::to_string(k));
        Vec cur = Q * lu.solve(rhs);
        if (!cur.allFinite() || cur.cwiseAbs().maxCoeff() > 1e250)
            throw RangeError("future recursion overflow at exponent " + std::to_string(k));
        future[static_cast<std::size_t>(k - lo)] = std::move(cur);
    }

    std::vector<Vec> xs;
    xs.reserve(static_cast<std::size_t>(w.size()));
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k)
        xs.push_back(past[static_cast<std::size_t>(k - lo)] -
                     future[static_cast<std::size_t>(k - lo)]);
    if (diag) {
        diag->margin_past = m1;
        diag->margin_future = m2;
        diag->forcing_scale = scale;
        diag->tail_bound = tol;
    }
    return GridFn(w, std::move(xs));
}

/// One-sided check of the paper's estimate
/// ||x|| <= ((K1+a1)/a1 + K2/a2) ||f||.
inline bool solution_bound_check(const GridFn& x, const GridFn& f, const DichotomyData& d) {
    double nx = 0.0, nf = 0.0;
    for (std::int64_t k = x.kmin(); k <= x.kmax(); ++k) nx = std::max(nx, x.at(k).norm());
    for (std::int64_t k = f.kmin(); k <= f.kmax(); ++k) nf = std::max(nf, f.at(k).norm());
    return nx <= d.bound_factor() * nf * (1.0 + 1e-12) + 1e-300;
}

/// sup over interior points of || x^Delta - A x - f ||.
inline double residual(const GridFn& x, const LinearSystem& sys, const VecFn& f) {
    double r = 0.0;
    for (std::int64_t k = x.kmin(); k < x.kmax(); ++k) {
        const double m = sys.ctx().graininess(k);
        const Vec lhs = (x.at(k + 1) - x.at(k)) / m;
        r = std::max(r, (lhs - sys.delta_coeff(k) * x.at(k) - f(k)).norm());
    }
    return r;
}

} // namespace qts::lindyn
