#pragma once

#include <qts/errors.hpp>
#include <qts/genseq.hpp>
#include <qts/grid.hpp>
#include <qts/lindyn.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace qts::spec_io {

using nlohmann::json;

/// Spec-file validation failure (CLI exit code 2).
class SpecError : public Error {
public:
    explicit SpecError(const std::string& path, const std::string& what)
        : Error("spec error at " + path + ": " + what) {}
};

namespace detail {

inline void check_keys(const json& obj, const std::string& path,
                       const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw SpecError(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw SpecError(path + "/" + it.key(), "unknown key");
}

inline const json& require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) throw SpecError(path + "/" + key, "missing required field");
    return obj.at(key);
}

inline double number_at(const json& v, const std::string& path) {
    if (!v.is_number()) throw SpecError(path, "expected a number");
    return v.get<double>();
}

inline std::int64_t integer_at(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw SpecError(path, "expected an integer");
    return v.get<std::int64_t>();
}

inline bool boolean_at(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw SpecError(path, "expected a boolean");
    return v.get<bool>();
}

inline std::string string_at(const json& v, const std::string& path) {
    if (!v.is_string()) throw SpecError(path, "expected a string");
    return v.get<std::string>();
}

/// number -> 1-vector; [a, b, ...] -> vector
inline Vec vec_at(const json& v, const std::string& path, int dim) {
    if (v.is_number()) {
        if (dim != 1) throw SpecError(path, "scalar given but dim is " + std::to_string(dim));
        return scalar_vec(v.get<double>());
    }
    if (!v.is_array() || v.empty()) throw SpecError(path, "expected a number or array");
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = number_at(v[i], path + "[" + std::to_string(i) + "]");
    if (out.size() != dim)
        throw SpecError(path, "expected " + std::to_string(dim) + " components, got " +
                                  std::to_string(out.size()));
    return out;
}

/// number -> 1x1; [[...], ...] -> matrix
inline Mat mat_at(const json& v, const std::string& path, int dim) {
    if (v.is_number()) {
        if (dim != 1) throw SpecError(path, "scalar given but dim is " + std::to_string(dim));
        return Mat::Constant(1, 1, v.get<double>());
    }
    if (!v.is_array() || v.empty() || !v[0].is_array())
        throw SpecError(path, "expected a number or array of rows");
    const std::size_t rows = v.size(), cols = v[0].size();
    Mat out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (!v[i].is_array() || v[i].size() != cols) throw SpecError(rp, "ragged matrix rows");
        for (std::size_t j = 0; j < cols; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                number_at(v[i][j], rp + "[" + std::to_string(j) + "]");
    }
    if (out.rows() != dim || out.cols() != dim)
        throw SpecError(path, "expected a " + std::to_string(dim) + "x" + std::to_string(dim) +
                                  " matrix");
    return out;
}

} // namespace detail

/// Behavior of table families outside their own window: reject, repeat the
/// edge sample (coefficients), or extend by zero (forcings).
enum class TableEdge { strict, clamp, zero };

/// Parametric family for coefficients, forcings and diagnostic functions.
/// Tables carry their own window; families evaluate anywhere.
struct ValueSpec {
    enum class Family { constant, qinv_scaled, trig_ap, linear, table };
    Family family = Family::constant;
    Mat value;                 // constant / qinv_scaled / linear payload
    Mat base, amp;             // trig_ap
    double freq = 1.4142135623730951;  // trig_ap cycles per index step
    std::int64_t table_kmin = 0;
    std::vector<Mat> table;
    std::optional<Mat> table_zero;

    bool is_table() const { return family == Family::table; }
    Window table_window() const {
        return Window(table_kmin, table_kmin + static_cast<std::int64_t>(table.size()) - 1,
                      table_zero.has_value());
    }
    /// True when every sample over [lo, hi] is defined (tables may not be).
    bool covers(std::int64_t lo, std::int64_t hi) const {
        if (!is_table()) return true;
        return table_kmin <= lo && table_window().kmax >= hi;
    }

    Mat eval(const GridContext& ctx, std::int64_t k, TableEdge edge) const {
        switch (family) {
            case Family::constant: return value;
            case Family::qinv_scaled: return Mat(value / ctx.graininess(k));
            case Family::trig_ap:
                return Mat(base + amp * std::cos(2.0 * M_PI * freq * static_cast<double>(k)));
            case Family::linear: return Mat(value * static_cast<double>(k));
            case Family::table: {
                const std::int64_t hi = table_kmin + static_cast<std::int64_t>(table.size()) - 1;
                if (k < table_kmin || k > hi) {
                    switch (edge) {
                        case TableEdge::strict:
                            throw OutOfWindowError("table sample at " + std::to_string(k));
                        case TableEdge::clamp: k = std::clamp(k, table_kmin, hi); break;
                        case TableEdge::zero:
                            return Mat(Mat::Zero(table[0].rows(), table[0].cols()));
                    }
                }
                return table[static_cast<std::size_t>(k - table_kmin)];
            }
        }
        throw Error("unreachable");
    }

    MatFn as_mat_fn(const GridContext& ctx) const {
        return [*this, ctx](std::int64_t k) { return eval(ctx, k, TableEdge::clamp); };
    }
    VecFn as_vec_fn(const GridContext& ctx) const {
        return [*this, ctx](std::int64_t k) { return Vec(eval(ctx, k, TableEdge::strict).col(0)); };
    }
    VecFn as_forcing_fn(const GridContext& ctx) const {
        return [*this, ctx](std::int64_t k) { return Vec(eval(ctx, k, TableEdge::zero).col(0)); };
    }
    ScalarFn as_scalar_fn(const GridContext& ctx) const {
        return [*this, ctx](std::int64_t k) { return eval(ctx, k, TableEdge::clamp)(0, 0); };
    }
    /// The limit at t = 0, when the family determines one.
    std::optional<Vec> zero_value() const {
        if (family == Family::constant) return Vec(value.col(0));
        if (table_zero) return Vec(table_zero->col(0));
        return std::nullopt;
    }
};

namespace detail {

/// shaped = true parses matrices (dim x dim); false parses vectors (dim).
inline Mat payload_at(const json& v, const std::string& path, int dim, bool shaped) {
    if (shaped) return mat_at(v, path, dim);
    return vec_at(v, path, dim);
}

} // namespace detail

inline ValueSpec parse_value_spec(const json& v, const std::string& path, int dim, bool shaped) {
    using detail::check_keys;
    using detail::integer_at;
    using detail::number_at;
    using detail::payload_at;
    using detail::require;
    using detail::string_at;
    if (!v.is_object()) throw SpecError(path, "expected an object with a \"name\"");
    const std::string name = string_at(require(v, path, "name"), path + "/name");
    ValueSpec out;
    if (name == "const") {
        check_keys(v, path, {"name", "value"});
        out.family = ValueSpec::Family::constant;
        out.value = payload_at(require(v, path, "value"), path + "/value", dim, shaped);
    } else if (name == "qinv_scaled") {
        check_keys(v, path, {"name", "value"});
        out.family = ValueSpec::Family::qinv_scaled;
        out.value = payload_at(require(v, path, "value"), path + "/value", dim, shaped);
    } else if (name == "trig_ap") {
        check_keys(v, path, {"name", "base", "amp", "freq"});
        out.family = ValueSpec::Family::trig_ap;
        out.base = payload_at(require(v, path, "base"), path + "/base", dim, shaped);
        out.amp = payload_at(require(v, path, "amp"), path + "/amp", dim, shaped);
        if (v.contains("freq")) out.freq = number_at(v.at("freq"), path + "/freq");
    } else if (name == "linear") {
        check_keys(v, path, {"name", "slope"});
        out.family = ValueSpec::Family::linear;
        out.value = payload_at(require(v, path, "slope"), path + "/slope", dim, shaped);
    } else if (name == "table") {
        check_keys(v, path, {"name", "kmin", "values", "zero_value"});
        out.family = ValueSpec::Family::table;
        out.table_kmin = integer_at(require(v, path, "kmin"), path + "/kmin");
        const json& vals = require(v, path, "values");
        if (!vals.is_array() || vals.empty()) throw SpecError(path + "/values", "expected a nonempty array");
        for (std::size_t i = 0; i < vals.size(); ++i)
            out.table.push_back(
                payload_at(vals[i], path + "/values[" + std::to_string(i) + "]", dim, shaped));
        if (v.contains("zero_value"))
            out.table_zero = payload_at(v.at("zero_value"), path + "/zero_value", dim, shaped);
    } else {
        throw SpecError(path + "/name", "unknown family \"" + name + "\"");
    }
    return out;
}

/// Nonlinearity families for the semilinear solver.
struct NonlinSpec {
    enum class Kind { zero, cos_first, linear_first, linear_delay, cos_first_ap };
    Kind kind = Kind::zero;
    double scale = 0.0, amp = 0.0, gamma = 0.0;
    double freq = 1.4142135623730951;
    double L1 = 0.0, L2 = 0.0;

    genseq::NonlinFn as_fn() const {
        switch (kind) {
            case Kind::zero:
                return [](std::int64_t, const Vec& u, const Vec&) { return Vec(Vec::Zero(u.size())); };
            case Kind::cos_first:
                return [s = scale](std::int64_t, const Vec& u, const Vec&) {
                    return Vec(s * u.array().cos().matrix());
                };
            case Kind::linear_first:
                return [g = gamma](std::int64_t, const Vec& u, const Vec&) { return Vec(g * u); };
            case Kind::linear_delay:
                return [g = gamma](std::int64_t, const Vec&, const Vec& v) { return Vec(g * v); };
            case Kind::cos_first_ap:
                return [s = scale, a = amp, f = freq](std::int64_t k, const Vec& u, const Vec&) {
                    const double c = s + a * std::cos(2.0 * M_PI * f * static_cast<double>(k));
                    return Vec(c * u.array().cos().matrix());
                };
        }
        throw Error("unreachable");
    }
};

inline NonlinSpec parse_nonlin_spec(const json& v, const std::string& path) {
    using detail::check_keys;
    using detail::number_at;
    using detail::require;
    using detail::string_at;
    if (!v.is_object()) throw SpecError(path, "expected an object with a \"name\"");
    const std::string name = string_at(require(v, path, "name"), path + "/name");
    NonlinSpec out;
    auto l12 = [&](double l1, double l2) {
        out.L1 = v.contains("L1") ? number_at(v.at("L1"), path + "/L1") : l1;
        out.L2 = v.contains("L2") ? number_at(v.at("L2"), path + "/L2") : l2;
        if (out.L1 < 0 || out.L2 < 0) throw SpecError(path, "Lipschitz constants must be >= 0");
    };
    if (name == "zero") {
        check_keys(v, path, {"name", "L1", "L2"});
        out.kind = NonlinSpec::Kind::zero;
        l12(0.0, 0.0);
    } else if (name == "cos_first") {
        check_keys(v, path, {"name", "scale", "L1", "L2"});
        out.kind = NonlinSpec::Kind::cos_first;
        out.scale = number_at(require(v, path, "scale"), path + "/scale");
        l12(std::fabs(out.scale), 0.0);
    } else if (name == "linear_first") {
        check_keys(v, path, {"name", "gamma", "L1", "L2"});
        out.kind = NonlinSpec::Kind::linear_first;
        out.gamma = number_at(require(v, path, "gamma"), path + "/gamma");
        l12(std::fabs(out.gamma), 0.0);
    } else if (name == "linear_delay") {
        check_keys(v, path, {"name", "gamma", "L1", "L2"});
        out.kind = NonlinSpec::Kind::linear_delay;
        out.gamma = number_at(require(v, path, "gamma"), path + "/gamma");
        l12(0.0, std::fabs(out.gamma));
    } else if (name == "cos_first_ap") {
        check_keys(v, path, {"name", "scale", "amp", "freq", "L1", "L2"});
        out.kind = NonlinSpec::Kind::cos_first_ap;
        out.scale = number_at(require(v, path, "scale"), path + "/scale");
        out.amp = number_at(require(v, path, "amp"), path + "/amp");
        if (v.contains("freq")) out.freq = number_at(v.at("freq"), path + "/freq");
        l12(std::fabs(out.scale) + std::fabs(out.amp), 0.0);
    } else {
        throw SpecError(path + "/name", "unknown nonlinearity \"" + name + "\"");
    }
    return out;
}

/// Delay families: constant or a periodic table (almost automorphic in t).
struct DelaySpec {
    std::vector<std::int64_t> values{0};  // cycled by index mod period

    genseq::DelayFn as_fn() const {
        return [vals = values](std::int64_t k) {
            const auto p = static_cast<std::int64_t>(vals.size());
            std::int64_t r = k % p;
            if (r < 0) r += p;
            return vals[static_cast<std::size_t>(r)];
        };
    }
};

inline DelaySpec parse_delay_spec(const json& v, const std::string& path) {
    using detail::check_keys;
    using detail::integer_at;
    using detail::require;
    using detail::string_at;
    if (!v.is_object()) throw SpecError(path, "expected an object with a \"name\"");
    const std::string name = string_at(require(v, path, "name"), path + "/name");
    DelaySpec out;
    if (name == "const") {
        check_keys(v, path, {"name", "value"});
        out.values = {integer_at(require(v, path, "value"), path + "/value")};
    } else if (name == "periodic") {
        check_keys(v, path, {"name", "values"});
        const json& vals = require(v, path, "values");
        if (!vals.is_array() || vals.empty())
            throw SpecError(path + "/values", "expected a nonempty array");
        out.values.clear();
        for (std::size_t i = 0; i < vals.size(); ++i)
            out.values.push_back(integer_at(vals[i], path + "/values[" + std::to_string(i) + "]"));
    } else {
        throw SpecError(path + "/name", "unknown delay family \"" + name + "\"");
    }
    for (std::int64_t t : out.values)
        if (t < 0) throw SpecError(path, "delays must be nonnegative");
    return out;
}

/// How the dichotomy data is obtained: an inline projection or the spectral
/// construction; inline constants or an envelope fit.
struct DichotomySpec {
    std::optional<Mat> projection;  // nullopt => spectral
    std::optional<double> K1, alpha1, K2, alpha2;  // nullopt => estimate

    bool wants_spectral() const { return !projection.has_value(); }
    bool wants_estimate() const { return !K1.has_value(); }
};

inline DichotomySpec parse_dichotomy_spec(const json& v, const std::string& path, int dim) {
    using detail::check_keys;
    using detail::number_at;
    using detail::require;
    check_keys(v, path, {"projection", "constants"});
    DichotomySpec out;
    const json& proj = require(v, path, "projection");
    if (proj.is_string()) {
        if (proj.get<std::string>() != "spectral")
            throw SpecError(path + "/projection", "expected \"spectral\" or a matrix");
    } else {
        out.projection = detail::mat_at(proj, path + "/projection", dim);
    }
    const json& cons = require(v, path, "constants");
    if (cons.is_string()) {
        if (cons.get<std::string>() != "estimate")
            throw SpecError(path + "/constants", "expected \"estimate\" or an object");
    } else {
        check_keys(cons, path + "/constants", {"K1", "alpha1", "K2", "alpha2"});
        out.K1 = number_at(require(cons, path + "/constants", "K1"), path + "/constants/K1");
        out.alpha1 =
            number_at(require(cons, path + "/constants", "alpha1"), path + "/constants/alpha1");
        out.K2 = number_at(require(cons, path + "/constants", "K2"), path + "/constants/K2");
        out.alpha2 =
            number_at(require(cons, path + "/constants", "alpha2"), path + "/constants/alpha2");
    }
    return out;
}

/// Fully parsed problem specification (the union of all command inputs).
struct ProblemSpec {
    GridContext ctx = GridContext::integers();
    Window window;
    int dim = 1;
    std::optional<double> tol;
    std::optional<ValueSpec> coefficient;   // matrix-valued
    std::optional<ValueSpec> forcing;       // vector-valued
    std::optional<ValueSpec> function;      // vector-valued (deriv/integral/transform/aa)
    std::optional<ValueSpec> p;             // scalar-valued (ts_exp)
    std::optional<NonlinSpec> nonlinearity;
    DelaySpec delay;
    std::optional<DichotomySpec> dichotomy;
    std::string form = "delta";             // coefficient convention
    std::optional<QPoint> point_a, point_b; // integral endpoints
    std::int64_t t0 = 0;
    int pool_size = 64;
    double epsilon = 1e-6;
    bool weighted = false;
    std::optional<std::vector<std::int64_t>> shifts;
    int max_iter = 200;
};

namespace detail {

inline QPoint point_at(const json& v, const std::string& path) {
    if (v.is_string()) {
        if (v.get<std::string>() == "zero") return QPoint::zero();
        throw SpecError(path, "expected an integer exponent or \"zero\"");
    }
    return QPoint::exp(integer_at(v, path));
}

} // namespace detail

/// Parses and validates a spec file for one command; unknown keys and
/// malformed fields are rejected with field-specific messages.
inline ProblemSpec parse_spec(const json& root, const std::string& command) {
    using namespace detail;
    std::set<std::string> allowed = {"grid", "window", "dim", "tol"};
    const bool needs_function =
        command == "deriv" || command == "integral" || command == "aa-test";
    if (needs_function) allowed.insert("function");
    if (command == "transform") allowed.insert({"function", "coefficient"});
    if (command == "exp") allowed.insert({"p", "t0"});
    if (command == "integral") allowed.insert("points");
    if (command == "fundmat") allowed.insert({"coefficient", "form", "t0"});
    if (command == "dichotomy") allowed.insert({"coefficient", "form", "t0", "dichotomy"});
    if (command == "solve-linear")
        allowed.insert({"coefficient", "form", "forcing", "dichotomy"});
    if (command == "solve-semilinear")
        allowed.insert({"coefficient", "form", "nonlinearity", "delay", "dichotomy", "max_iter"});
    if (command == "aa-test") allowed.insert({"pool_size", "epsilon", "weighted", "shifts"});
    check_keys(root, "", allowed);

    ProblemSpec out;
    const json& grid = require(root, "", "grid");
    if (!grid.is_object()) throw SpecError("/grid", "expected an object");
    if (grid.contains("q")) {
        check_keys(grid, "/grid", {"q"});
        const double q = number_at(grid.at("q"), "/grid/q");
        if (!(q > 1.0)) throw SpecError("/grid/q", "q must exceed 1");
        out.ctx = GridContext::quantum(q);
    } else {
        check_keys(grid, "/grid", {"kind"});
        if (string_at(require(grid, "/grid", "kind"), "/grid/kind") != "integer")
            throw SpecError("/grid/kind", "expected \"integer\" (or give q)");
        out.ctx = GridContext::integers();
    }

    const json& win = require(root, "", "window");
    check_keys(win, "/window", {"kmin", "kmax", "include_zero"});
    const std::int64_t kmin = integer_at(require(win, "/window", "kmin"), "/window/kmin");
    const std::int64_t kmax = integer_at(require(win, "/window", "kmax"), "/window/kmax");
    if (kmin > kmax) throw SpecError("/window", "kmin exceeds kmax");
    bool with_zero = false;
    if (win.contains("include_zero"))
        with_zero = boolean_at(win.at("include_zero"), "/window/include_zero");
    if (with_zero && !out.ctx.is_quantum())
        throw SpecError("/window/include_zero", "the integer grid has no limit point");
    out.window = Window(kmin, kmax, with_zero);

    if (root.contains("dim")) {
        out.dim = static_cast<int>(integer_at(root.at("dim"), "/dim"));
        if (out.dim < 1 || out.dim > 64) throw SpecError("/dim", "dim must be in [1, 64]");
    }
    if (root.contains("tol")) {
        out.tol = number_at(root.at("tol"), "/tol");
        if (!(*out.tol > 0)) throw SpecError("/tol", "tol must be positive");
    }

    if (root.contains("coefficient"))
        out.coefficient = parse_value_spec(root.at("coefficient"), "/coefficient", out.dim, true);
    if (root.contains("forcing"))
        out.forcing = parse_value_spec(root.at("forcing"), "/forcing", out.dim, false);
    if (root.contains("function"))
        out.function = parse_value_spec(root.at("function"), "/function", out.dim, false);
    if (root.contains("p")) out.p = parse_value_spec(root.at("p"), "/p", 1, false);
    if (root.contains("nonlinearity"))
        out.nonlinearity = parse_nonlin_spec(root.at("nonlinearity"), "/nonlinearity");
    if (root.contains("delay")) out.delay = parse_delay_spec(root.at("delay"), "/delay");
    if (root.contains("dichotomy"))
        out.dichotomy = parse_dichotomy_spec(root.at("dichotomy"), "/dichotomy", out.dim);
    if (root.contains("form")) {
        out.form = string_at(root.at("form"), "/form");
        if (out.form != "delta" && out.form != "one-step")
            throw SpecError("/form", "expected \"delta\" or \"one-step\"");
    }
    if (root.contains("points")) {
        const json& pts = root.at("points");
        check_keys(pts, "/points", {"a", "b"});
        out.point_a = point_at(require(pts, "/points", "a"), "/points/a");
        out.point_b = point_at(require(pts, "/points", "b"), "/points/b");
    }
    if (root.contains("t0")) out.t0 = integer_at(root.at("t0"), "/t0");
    if (root.contains("pool_size")) {
        out.pool_size = static_cast<int>(integer_at(root.at("pool_size"), "/pool_size"));
        if (out.pool_size < 3 || out.pool_size > 4096)
            throw SpecError("/pool_size", "pool_size must be in [3, 4096]");
    }
    if (root.contains("epsilon")) {
        out.epsilon = number_at(root.at("epsilon"), "/epsilon");
        if (!(out.epsilon > 0)) throw SpecError("/epsilon", "epsilon must be positive");
    }
    if (root.contains("weighted")) out.weighted = boolean_at(root.at("weighted"), "/weighted");
    if (root.contains("shifts")) {
        const json& sh = root.at("shifts");
        if (!sh.is_array() || sh.empty())
            throw SpecError("/shifts", "expected a nonempty array of integers");
        std::vector<std::int64_t> vals;
        for (std::size_t i = 0; i < sh.size(); ++i)
            vals.push_back(integer_at(sh[i], "/shifts[" + std::to_string(i) + "]"));
        out.shifts = std::move(vals);
    }
    if (root.contains("max_iter")) {
        out.max_iter = static_cast<int>(integer_at(root.at("max_iter"), "/max_iter"));
        if (out.max_iter < 1) throw SpecError("/max_iter", "max_iter must be positive");
    }

    // per-command required fields
    auto need = [&](bool ok, const char* field) {
        if (!ok) throw SpecError(std::string("/") + field, "required by " + command);
    };
    if (command == "deriv" || command == "integral") need(out.function.has_value(), "function");
    if (command == "integral") need(out.point_a.has_value(), "points");
    if (command == "exp") need(out.p.has_value(), "p");
    if (command == "transform") need(out.function || out.coefficient, "function");
    if (command == "fundmat" || command == "dichotomy" || command == "solve-linear" ||
        command == "solve-semilinear")
        need(out.coefficient.has_value(), "coefficient");
    if (command == "dichotomy" || command == "solve-linear" || command == "solve-semilinear")
        need(out.dichotomy.has_value(), "dichotomy");
    if (command == "solve-linear") need(out.forcing.has_value(), "forcing");
    if (command == "solve-semilinear") need(out.nonlinearity.has_value(), "nonlinearity");
    if (command == "aa-test") need(out.function.has_value(), "function");
    return out;
}

inline ProblemSpec load_spec(const std::string& path, const std::string& command) {
    std::ifstream in(path);
    if (!in) throw SpecError(path, "cannot open spec file");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SpecError(path, std::string("JSON parse failure: ") + e.what());
    }
    return parse_spec(root, command);
}

/// Builds the linear system named by the spec (delta or one-step form).
inline lindyn::LinearSystem make_system(const ProblemSpec& spec) {
    if (!spec.coefficient) throw SpecError("/coefficient", "missing");
    MatFn cf = spec.coefficient->as_mat_fn(spec.ctx);
    if (spec.form == "one-step")
        return lindyn::LinearSystem::one_step(spec.ctx, spec.dim, std::move(cf));
    return lindyn::LinearSystem::delta_form(spec.ctx, spec.dim, std::move(cf));
}

/// Resolves the dichotomy spec: spectral projection and/or envelope fit need
/// the fundamental matrix of the linear part on the window.
inline lindyn::DichotomyData resolve_dichotomy(const ProblemSpec& spec,
                                               const lindyn::LinearSystem& sys) {
    if (!spec.dichotomy) throw SpecError("/dichotomy", "missing");
    const DichotomySpec& ds = *spec.dichotomy;
    Mat P;
    if (ds.wants_spectral()) {
        const std::int64_t mid = (spec.window.kmin + spec.window.kmax) / 2;
        P = lindyn::spectral_projection(sys.step(mid));
    } else {
        P = *ds.projection;
    }
    if (!ds.wants_estimate()) {
        lindyn::DichotomyData d;
        d.P = P;
        d.K1 = *ds.K1;
        d.alpha1 = *ds.alpha1;
        d.K2 = *ds.K2;
        d.alpha2 = *ds.alpha2;
        d.validate();
        return d;
    }
    Window w(spec.window.kmin, spec.window.kmax, false);
    const std::int64_t t0 = std::clamp<std::int64_t>(spec.t0, w.kmin, w.kmax);
    return lindyn::dichotomy_estimate(lindyn::fundamental_matrix(sys, w, t0), P);
}

} // namespace qts::spec_io
