#pragma once

#include <qts/errors.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace qts {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Functions sampled on the exponent lattice (k represents q^k, or the
/// integer k itself on the Z-grid).
using VecFn = std::function<Vec(std::int64_t)>;
using MatFn = std::function<Mat(std::int64_t)>;
using ScalarFn = std::function<double(std::int64_t)>;

/// A point of the quantum time scale: 0 or q^k, stored by exponent so that
/// grid membership and the jump operators stay exact.
class QPoint {
public:
    static QPoint zero() { return QPoint(true, 0); }
    static QPoint exp(std::int64_t k) { return QPoint(false, k); }

    bool is_zero() const { return zero_; }
    std::int64_t exponent() const {
        if (zero_) throw InvalidArgumentError("exponent() on the zero point");
        return k_;
    }

    friend bool operator==(const QPoint& a, const QPoint& b) {
        return a.zero_ == b.zero_ && (a.zero_ || a.k_ == b.k_);
    }
    /// Zero precedes every q^k; otherwise order by exponent.
    friend std::strong_ordering operator<=>(const QPoint& a, const QPoint& b) {
        if (a.zero_ && b.zero_) return std::strong_ordering::equal;
        if (a.zero_) return std::strong_ordering::less;
        if (b.zero_) return std::strong_ordering::greater;
        return a.k_ <=> b.k_;
    }

private:
    QPoint(bool zero, std::int64_t k) : zero_(zero), k_(k) {}
    bool zero_;
    std::int64_t k_;
};

/// Finite exponent window [kmin, kmax], optionally carrying the point 0.
struct Window {
    std::int64_t kmin = 0;
    std::int64_t kmax = 0;
    bool include_zero = false;

    Window() = default;
    Window(std::int64_t lo, std::int64_t hi, bool with_zero = false)
        : kmin(lo), kmax(hi), include_zero(with_zero) {
        if (kmin > kmax) throw InvalidArgumentError("window kmin > kmax");
    }

    std::int64_t size() const { return kmax - kmin + 1; }
    bool contains(std::int64_t k) const { return k >= kmin && k <= kmax; }
    Window widened(std::int64_t below, std::int64_t above) const {
        return Window(kmin - below, kmax + above, include_zero);
    }

    friend bool operator==(const Window&, const Window&) = default;
};

/// The grid a computation runs on: the quantum scale q^Z (q > 1) or the
/// integer lattice Z with graininess 1.
class GridContext {
public:
    static GridContext quantum(double q) {
        if (!(q > 1.0) || !std::isfinite(q))
            throw InvalidArgumentError("quantum grid requires q > 1");
        return GridContext(q);
    }
    static GridContext integers() { return GridContext(); }

    bool is_quantum() const { return quantum_; }
    double q() const {
        if (!quantum_) throw InvalidArgumentError("q() on the integer grid");
        return q_;
    }

    /// Largest |k| for which q^k (and (q-1)q^k) stays inside binary64.
    std::int64_t max_safe_exponent() const {
        if (!quantum_) return (std::int64_t{1} << 53);
        return safe_exp_;
    }

    /// Numeric value of the grid point with exponent k.
    double value(std::int64_t k) const {
        if (!quantum_) return static_cast<double>(k);
        check_exponent(k);
        return std::pow(q_, static_cast<double>(k));
    }
    double value(const QPoint& p) const {
        if (p.is_zero()) {
            if (!quantum_)
                throw InvalidArgumentError("the integer grid has no point 0 (-inf_q has no value)");
            return 0.0;
        }
        return value(p.exponent());
    }

    /// Graininess mu at exponent k: (q-1)q^k, or 1 on the integer grid.
    double graininess(std::int64_t k) const {
        if (!quantum_) return 1.0;
        check_exponent(k);
        return (q_ - 1.0) * value(k);
    }
    /// mu(0) = 0: the point 0 is right-dense.
    double graininess(const QPoint& p) const {
        return p.is_zero() ? 0.0 : graininess(p.exponent());
    }

private:
    GridContext() : quantum_(false), q_(0), log2q_(0), safe_exp_(0) {}
    explicit GridContext(double q)
        : quantum_(true), q_(q), log2q_(std::log2(q)) {
        // leave headroom for the (q-1) factor of the graininess
        const double cap = 1000.0 - std::fabs(std::log2(q - 1.0));
        safe_exp_ = static_cast<std::int64_t>(cap / log2q_);
    }

    void check_exponent(std::int64_t k) const {
        if (k > safe_exp_ || k < -safe_exp_)
            throw RangeError("exponent " + std::to_string(k) +
                             " is outside the representable range for q = " + std::to_string(q_));
    }

    bool quantum_;
    double q_;
    double log2q_;
    std::int64_t safe_exp_;
};

namespace detail {

/// Vector-valued samples over an exponent window, with an optional value at
/// the compactified endpoint. GridFn and SeqFn share this layout.
template <class Tag>
class SampledFn {
public:
    SampledFn() : window_(0, 0), values_(1, Vec::Zero(1)) {}

    SampledFn(Window w, std::vector<Vec> values, std::optional<Vec> endpoint = std::nullopt)
        : window_(w), values_(std::move(values)), endpoint_(std::move(endpoint)) {
        if (static_cast<std::int64_t>(values_.size()) != window_.size())
            throw InvalidArgumentError("sample count does not match window size");
        if (values_.empty()) throw InvalidArgumentError("empty sample array");
        const Eigen::Index n = values_.front().size();
        if (n < 1) throw InvalidArgumentError("samples must have dimension >= 1");
        for (const Vec& v : values_)
            if (v.size() != n) throw InvalidArgumentError("samples have mixed dimensions");
        if (window_.include_zero && !endpoint_)
            throw InvalidArgumentError("window carries the limit point but no value was given");
        if (!window_.include_zero && endpoint_) window_.include_zero = true;
        if (endpoint_ && endpoint_->size() != n)
            throw InvalidArgumentError("limit value has mismatched dimension");
    }

    const Window& window() const { return window_; }
    std::int64_t kmin() const { return window_.kmin; }
    std::int64_t kmax() const { return window_.kmax; }
    int dim() const { return static_cast<int>(values_.front().size()); }

    const Vec& at(std::int64_t k) const {
        if (!window_.contains(k))
            throw OutOfWindowError("index " + std::to_string(k) + " outside [" +
                                   std::to_string(window_.kmin) + ", " +
                                   std::to_string(window_.kmax) + "]");
        return values_[static_cast<std::size_t>(k - window_.kmin)];
    }
    Vec& at(std::int64_t k) {
        return const_cast<Vec&>(std::as_const(*this).at(k));
    }

    bool has_limit() const { return endpoint_.has_value(); }
    const Vec& limit_value() const {
        if (!endpoint_) throw InvalidArgumentError("no limit value present");
        return *endpoint_;
    }

    const std::vector<Vec>& values() const { return values_; }

    friend bool operator==(const SampledFn& a, const SampledFn& b) {
        if (a.window_ != b.window_) return false;
        for (std::size_t i = 0; i < a.values_.size(); ++i)
            if (a.values_[i] != b.values_[i]) return false;
        if (a.endpoint_.has_value() != b.endpoint_.has_value()) return false;
        if (a.endpoint_ && *a.endpoint_ != *b.endpoint_) return false;
        return true;
    }

private:
    Window window_;
    std::vector<Vec> values_;
    std::optional<Vec> endpoint_;
};

} // namespace detail

/// Function sampled on the quantum grid: values[k] = f(q^k), with the limit
/// f(0) when the window includes zero.
using GridFn = detail::SampledFn<struct GridTag>;

/// Pointwise combinations (windows must agree).
inline GridFn grid_zip(const GridFn& a, const GridFn& b,
                       const std::function<Vec(const Vec&, const Vec&)>& op) {
    if (a.window() != b.window()) throw InvalidArgumentError("window mismatch");
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(a.window().size()));
    for (std::int64_t k = a.kmin(); k <= a.kmax(); ++k) out.push_back(op(a.at(k), b.at(k)));
    std::optional<Vec> z;
    if (a.has_limit()) z = op(a.limit_value(), b.limit_value());
    return GridFn(a.window(), std::move(out), std::move(z));
}

inline GridFn operator+(const GridFn& a, const GridFn& b) {
    return grid_zip(a, b, [](const Vec& x, const Vec& y) { return Vec(x + y); });
}
inline GridFn operator-(const GridFn& a, const GridFn& b) {
    return grid_zip(a, b, [](const Vec& x, const Vec& y) { return Vec(x - y); });
}
inline GridFn operator*(double c, const GridFn& f) {
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(f.window().size()));
    for (std::int64_t k = f.kmin(); k <= f.kmax(); ++k) out.push_back(c * f.at(k));
    std::optional<Vec> z;
    if (f.has_limit()) z = Vec(c * f.limit_value());
    return GridFn(f.window(), std::move(out), std::move(z));
}

/// Materialize an exponent-indexed callable on a window.
inline GridFn sample(const VecFn& f, const Window& w,
                     std::optional<Vec> zero_value = std::nullopt) {
    std::vector<Vec> vals;
    vals.reserve(static_cast<std::size_t>(w.size()));
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) vals.push_back(f(k));
    return GridFn(w, std::move(vals), std::move(zero_value));
}

/// Materialize a function of the time value t (scalar-valued components).
inline GridFn sample_time(const GridContext& ctx, const std::function<Vec(double)>& f,
                          const Window& w) {
    std::vector<Vec> vals;
    vals.reserve(static_cast<std::size_t>(w.size()));
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) vals.push_back(f(ctx.value(k)));
    std::optional<Vec> z;
    if (w.include_zero) z = f(ctx.value(QPoint::zero()));
    return GridFn(w, std::move(vals), std::move(z));
}

/// View a GridFn as an exponent-indexed callable (OutOfWindow beyond it).
inline VecFn as_fn(const GridFn& f) {
    return [f](std::int64_t k) { return f.at(k); };
}

inline Vec scalar_vec(double x) {
    Vec v(1);
    v[0] = x;
    return v;
}

} // namespace qts
