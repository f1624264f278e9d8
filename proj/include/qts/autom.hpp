#pragma once

#include <qts/errors.hpp>
#include <qts/grid.hpp>
#include <qts/qcalc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qts::autom {

inline constexpr double kDefaultEps = 1e-6;
inline constexpr int kDefaultPool = 64;
inline constexpr int kMinSubsequence = 3;

/// Candidate integer shifts for a Bochner-type extraction.
struct ShiftSequence {
    enum class Source { user, pool };
    std::vector<std::int64_t> shifts;
    Source source = Source::user;

    static ShiftSequence pool(int n) {
        ShiftSequence s;
        s.source = Source::pool;
        s.shifts.reserve(static_cast<std::size_t>(n));
        for (int i = 1; i <= n; ++i) s.shifts.push_back(i);
        return s;
    }
    static ShiftSequence of(std::vector<std::int64_t> v) {
        if (v.empty()) throw InvalidArgumentError("shift sequence must be nonempty");
        ShiftSequence s;
        s.shifts = std::move(v);
        return s;
    }
};

/// sup-norm over the window (and the limit value when present).
inline double sup_norm(const GridFn& f) {
    double m = 0.0;
    for (std::int64_t k = f.kmin(); k <= f.kmax(); ++k) m = std::max(m, f.at(k).norm());
    if (f.has_limit()) m = std::max(m, f.limit_value().norm());
    return m;
}

/// f_a(t) = f(t q^a). On sampled data this is an exact window relabeling;
/// the value at 0 is fixed (0 q^a = 0).
inline GridFn shift(const GridFn& f, std::int64_t a) {
    std::vector<Vec> vals(f.values());
    std::optional<Vec> z;
    if (f.has_limit()) z = f.limit_value();
    Window w(f.kmin() - a, f.kmax() - a, f.window().include_zero);
    return GridFn(w, std::move(vals), std::move(z));
}
inline VecFn shift_fn(VecFn f, std::int64_t a) {
    return [f = std::move(f), a](std::int64_t k) { return f(k + a); };
}

/// f*(t) = f(1/t): window mirrors, samples reverse.
inline GridFn reflect(const GridFn& f) {
    std::vector<Vec> vals(f.values());
    std::reverse(vals.begin(), vals.end());
    return GridFn(Window(-f.kmax(), -f.kmin(), false), std::move(vals));
}

/// Reflection carrying a value at 0: f*(0) = lim_{n -> -inf} f*(q^n), taken
/// by the Cauchy rule over the top tail of f's window.
inline GridFn reflect(const GridFn& f, double tol) {
    std::vector<Vec> tail;
    std::optional<Vec> limit;
    for (std::int64_t k = f.kmax(); k >= f.kmin(); --k) {
        tail.push_back(f.at(k));
        if (static_cast<int>(tail.size()) > kMinSubsequence) tail.erase(tail.begin());
        if (static_cast<int>(tail.size()) == kMinSubsequence) {
            double spread = 0.0;
            for (std::size_t i = 0; i < tail.size(); ++i)
                for (std::size_t j = i + 1; j < tail.size(); ++j)
                    spread = std::max(spread, (tail[i] - tail[j]).norm());
            if (spread <= tol) {
                limit = tail.back();
                break;
            }
        }
    }
    if (!limit)
        throw NonConvergentError("f*(0) limit failed the Cauchy rule over the window");
    std::vector<Vec> vals(f.values());
    std::reverse(vals.begin(), vals.end());
    return GridFn(Window(-f.kmax(), -f.kmin(), true), std::move(vals), std::move(limit));
}
inline VecFn reflect_fn(VecFn f) {
    return [f = std::move(f)](std::int64_t k) { return f(-k); };
}

/// Pointwise composition phi(f); phi may change the dimension.
inline GridFn compose(const std::function<Vec(const Vec&)>& phi, const GridFn& f) {
    std::vector<Vec> vals;
    vals.reserve(f.values().size());
    for (const Vec& v : f.values()) vals.push_back(phi(v));
    std::optional<Vec> z;
    if (f.has_limit()) z = phi(f.limit_value());
    return GridFn(f.window(), std::move(vals), std::move(z));
}
inline VecFn compose_fn(std::function<Vec(const Vec&)> phi, VecFn f) {
    return [phi = std::move(phi), f = std::move(f)](std::int64_t k) { return phi(f(k)); };
}

namespace detail {

/// Window points ordered center-outward (ties: smaller exponent first).
inline std::vector<std::int64_t> center_out_order(const Window& w) {
    std::vector<std::int64_t> ks;
    ks.reserve(static_cast<std::size_t>(w.size()));
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) ks.push_back(k);
    const double c = 0.5 * static_cast<double>(w.kmin + w.kmax);
    std::stable_sort(ks.begin(), ks.end(), [c](std::int64_t a, std::int64_t b) {
        const double da = std::fabs(static_cast<double>(a) - c);
        const double db = std::fabs(static_cast<double>(b) - c);
        if (da != db) return da < db;
        return a < b;
    });
    return ks;
}

/// Largest sub-cluster of pairwise distance <= tol, greedily: every value is
/// tried as a center, values within tol/2 of it join; the most populous
/// center wins, earliest center on ties.
inline std::vector<std::size_t> largest_cluster(const std::vector<Vec>& vals, double tol) {
    std::vector<std::size_t> best;
    for (std::size_t c = 0; c < vals.size(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < vals.size(); ++i)
            if ((vals[i] - vals[c]).norm() <= 0.5 * tol) members.push_back(i);
        if (members.size() > best.size()) best = std::move(members);
    }
    return best;
}

} // namespace detail

/// Result of a Bochner-type extraction: the surviving shifts and the limit
/// table g on the requested window.
struct Extraction {
    std::vector<std::int64_t> subsequence;
    GridFn limit;
    double forward_error = 0.0;  // sup over window and surviving shifts
};

namespace detail {

/// Shared extraction core. weight_exponent = 0 gives Definition-type-I
/// samples f(t q^s); weight_exponent = 1 weighs them by q^s (type II).
inline Extraction extract_impl(const GridContext& ctx, const VecFn& f,
                               const std::optional<Vec>& f_zero,
                               const ShiftSequence& shifts, const Window& w,
                               double tol, int weight_exponent) {
    if (shifts.shifts.empty()) throw InvalidArgumentError("empty shift pool");
    auto weighted = [&](std::int64_t k, std::int64_t s) -> Vec {
        if (weight_exponent == 0) return f(k + s);
        if (!ctx.is_quantum())
            throw InvalidArgumentError("weighted extraction requires the quantum grid");
        return Vec(ctx.value(s) * f(k + s));
    };

    std::vector<std::int64_t> survivors = shifts.shifts;
    for (std::int64_t k : center_out_order(w)) {
        std::vector<Vec> vals;
        vals.reserve(survivors.size());
        for (std::int64_t s : survivors) vals.push_back(weighted(k, s));
        const std::vector<std::size_t> keep = largest_cluster(vals, tol);
        if (static_cast<int>(keep.size()) < kMinSubsequence)
            throw ExtractionFailedError("no subsequence of length >= " +
                                        std::to_string(kMinSubsequence) +
                                        " is Cauchy within tol at exponent " +
                                        std::to_string(k));
        std::vector<std::int64_t> next;
        next.reserve(keep.size());
        for (std::size_t i : keep) next.push_back(survivors[i]);
        survivors = std::move(next);
    }

    // limit table: the sample along the last surviving shift
    const std::int64_t s_last = survivors.back();
    std::vector<Vec> table;
    table.reserve(static_cast<std::size_t>(w.size()));
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) table.push_back(weighted(k, s_last));
    std::optional<Vec> zero;
    if (w.include_zero) {
        if (!f_zero) throw InvalidArgumentError("window includes 0 but f has no value there");
        // f(0 q^s) = f(0): the shifted samples at 0 are constant
        zero = (weight_exponent == 0) ? *f_zero : Vec(ctx.value(s_last) * (*f_zero));
    }
    Extraction out{std::move(survivors), GridFn(w, std::move(table), std::move(zero)), 0.0};
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k)
        for (std::int64_t s : out.subsequence)
            out.forward_error =
                std::max(out.forward_error, (weighted(k, s) - out.limit.at(k)).norm());
    return out;
}

} // namespace detail

/// Greedy diagonal extraction for Definition-type-I almost automorphy:
/// refines the candidate shifts point by point (center outward) until the
/// sampled values are Cauchy within tol everywhere on the window.
inline Extraction bochner_extract(const GridContext& ctx, const VecFn& f,
                                  const ShiftSequence& shifts, const Window& w,
                                  double tol = kDefaultEps) {
    Window lattice(w.kmin, w.kmax, false);
    return detail::extract_impl(ctx, f, std::nullopt, shifts, lattice, tol, 0);
}

inline Extraction bochner_extract(const GridContext& ctx, const GridFn& f,
                                  const ShiftSequence& shifts, const Window& w,
                                  double tol = kDefaultEps) {
    std::optional<Vec> z;
    if (f.has_limit()) z = f.limit_value();
    return detail::extract_impl(ctx, as_fn(f), z, shifts, w, tol, 0);
}

/// Type-II (weighted) extraction on samples q^s f(t q^s).
inline Extraction weighted_bochner_extract(const GridContext& ctx, const VecFn& f,
                                           const ShiftSequence& shifts, const Window& w,
                                           double tol = kDefaultEps) {
    Window lattice(w.kmin, w.kmax, false);
    return detail::extract_impl(ctx, f, std::nullopt, shifts, lattice, tol, 1);
}

/// Return check of Definition type I: sup_t || g(t q^{-s_n}) - f(t) || over
/// the terminal segment (last 3 survivors) of the subsequence. g must cover
/// the down-shifted window. When g is the table extracted along the final
/// shift, the final shift's own term vanishes; the earlier terminal shifts
/// carry the content of the check.
inline double return_check(const GridContext& ctx, const VecFn& f, const GridFn& g,
                           const std::vector<std::int64_t>& subsequence, const Window& w) {
    (void)ctx;
    if (subsequence.empty()) throw InvalidArgumentError("empty subsequence");
    double err = 0.0;
    const std::size_t tail = std::min<std::size_t>(subsequence.size(), kMinSubsequence);
    for (std::size_t j = subsequence.size() - tail; j < subsequence.size(); ++j) {
        const std::int64_t s = subsequence[j];
        for (std::int64_t k = w.kmin; k <= w.kmax; ++k)
            err = std::max(err, (g.at(k - s) - f(k)).norm());
    }
    return err;
}

/// Weighted (type II) return check: sup_t || q^{-s_n} g(t q^{-s_n}) - f(t) ||.
inline double weighted_return_check(const GridContext& ctx, const VecFn& f, const GridFn& g,
                                    const std::vector<std::int64_t>& subsequence,
                                    const Window& w) {
    if (subsequence.empty()) throw InvalidArgumentError("empty subsequence");
    double err = 0.0;
    const std::size_t tail = std::min<std::size_t>(subsequence.size(), kMinSubsequence);
    for (std::size_t j = subsequence.size() - tail; j < subsequence.size(); ++j) {
        const std::int64_t s = subsequence[j];
        const double wgt = 1.0 / ctx.value(s);
        for (std::int64_t k = w.kmin; k <= w.kmax; ++k)
            err = std::max(err, (wgt * g.at(k - s) - f(k)).norm());
    }
    return err;
}

/// Two-variable extraction (Definition 3.4 style): one subsequence must work
/// for every probe point x simultaneously; limits are tabulated per probe.
struct TwoVarExtraction {
    std::vector<std::int64_t> subsequence;
    std::vector<GridFn> limits;  // one table per probe
    double forward_error = 0.0;
};

inline TwoVarExtraction bochner_extract2(const GridContext& ctx,
                                         const std::function<Vec(std::int64_t, const Vec&)>& f,
                                         const std::vector<Vec>& probes,
                                         const ShiftSequence& shifts, const Window& w,
                                         double tol = kDefaultEps) {
    if (probes.empty()) throw InvalidArgumentError("probe set must be nonempty");
    // stack the probes into one long vector so the scalar machinery applies
    const Eigen::Index dim = f(w.kmin, probes.front()).size();
    VecFn stacked = [&](std::int64_t k) {
        Vec out(dim * static_cast<Eigen::Index>(probes.size()));
        for (std::size_t j = 0; j < probes.size(); ++j)
            out.segment(static_cast<Eigen::Index>(j) * dim, dim) = f(k, probes[j]);
        return out;
    };
    Extraction flat = bochner_extract(ctx, stacked, shifts, w, tol);
    TwoVarExtraction out;
    out.subsequence = std::move(flat.subsequence);
    out.forward_error = flat.forward_error;
    for (std::size_t j = 0; j < probes.size(); ++j) {
        std::vector<Vec> vals;
        vals.reserve(static_cast<std::size_t>(w.size()));
        for (std::int64_t k = w.kmin; k <= w.kmax; ++k)
            vals.push_back(flat.limit.at(k).segment(static_cast<Eigen::Index>(j) * dim, dim));
        out.limits.emplace_back(Window(w.kmin, w.kmax, false), std::move(vals));
    }
    return out;
}

/// Diagnostic verdict and its evidence. Verdicts are statements about the
/// sampled orbit at (window, eps, pool), never proofs.
struct AAReport {
    enum class Verdict { consistent, inconsistent, unbounded };
    Verdict verdict = Verdict::inconsistent;
    std::vector<std::int64_t> subsequence;
    std::optional<GridFn> limit;
    double forward_error = std::numeric_limits<double>::quiet_NaN();
    double return_error = std::numeric_limits<double>::quiet_NaN();
    std::vector<int> covering;        // greedy eps-covering number per pool size
    std::vector<double> sup_by_shift; // windowed sup of each shifted copy
    bool covering_stable = false;
    bool extraction_ok = false;

    static const char* name(Verdict v) {
        switch (v) {
            case Verdict::consistent: return "consistent";
            case Verdict::inconsistent: return "inconsistent";
            default: return "unbounded";
        }
    }
};

/// Orbit-based almost-automorphy diagnostic: windowed sup-distances among
/// the shifted copies f(. q^s), s = 1..pool. Consistent when the greedy
/// eps-covering of the orbit stops growing, extraction succeeds and the
/// return error stays small; unbounded when the windowed sup keeps growing.
inline AAReport aa_diagnostic(const GridContext& ctx, const VecFn& f, int pool_size,
                              const Window& w, double eps = kDefaultEps) {
    if (pool_size < kMinSubsequence)
        throw InvalidArgumentError("pool must allow a subsequence of length 3");
    AAReport rep;

    // windowed sup per shift and pairwise sup-distances
    std::vector<std::vector<Vec>> copies(static_cast<std::size_t>(pool_size));
    for (int s = 1; s <= pool_size; ++s) {
        auto& c = copies[static_cast<std::size_t>(s - 1)];
        c.reserve(static_cast<std::size_t>(w.size()));
        double m = 0.0;
        for (std::int64_t k = w.kmin; k <= w.kmax; ++k) {
            c.push_back(f(k + s));
            m = std::max(m, c.back().norm());
        }
        rep.sup_by_shift.push_back(m);
    }
    auto orbit_dist = [&](int i, int j) {
        double d = 0.0;
        const auto& a = copies[static_cast<std::size_t>(i)];
        const auto& b = copies[static_cast<std::size_t>(j)];
        for (std::size_t t = 0; t < a.size(); ++t) d = std::max(d, (a[t] - b[t]).norm());
        return d;
    };

    // unboundedness: monotone growth of the sup, or late record-breaking
    {
        const auto& M = rep.sup_by_shift;
        bool monotone = true;
        for (std::size_t i = 1; i < M.size(); ++i)
            if (M[i] < M[i - 1] - eps) monotone = false;
        const bool grew = M.back() > M.front() + eps;
        double record = 0.0;
        std::size_t last_record = 0;
        for (std::size_t i = 0; i < M.size(); ++i)
            if (M[i] > record) record = M[i], last_record = i;
        const double half_record =
            *std::max_element(M.begin(), M.begin() + static_cast<std::ptrdiff_t>(M.size() / 2 + 1));
        const bool late_records = last_record >= M.size() - M.size() / 4 &&
                                  record > 1.2 * half_record + eps;
        if ((monotone && grew) || late_records) {
            rep.verdict = AAReport::Verdict::unbounded;
            return rep;
        }
    }

    // greedy covering numbers per pool prefix
    std::vector<int> centers;
    for (int s = 0; s < pool_size; ++s) {
        bool covered = false;
        for (int c : centers)
            if (orbit_dist(s, c) <= eps) {
                covered = true;
                break;
            }
        if (!covered) centers.push_back(s);
        rep.covering.push_back(static_cast<int>(centers.size()));
    }
    rep.covering_stable =
        rep.covering.back() == rep.covering[static_cast<std::size_t>(pool_size - 1 - pool_size / 4)];

    // extraction + return check on a window enlarged so down-shifts stay inside
    try {
        Window enlarged(w.kmin - pool_size, w.kmax, false);
        Extraction ex = bochner_extract(ctx, f, ShiftSequence::pool(pool_size), enlarged, eps);
        rep.extraction_ok = true;
        rep.forward_error = ex.forward_error;
        rep.return_error = return_check(ctx, f, ex.limit, ex.subsequence, w);
        rep.subsequence = std::move(ex.subsequence);
        rep.limit = std::move(ex.limit);
    } catch (const ExtractionFailedError&) {
        rep.extraction_ok = false;
    }

    const bool returns = rep.extraction_ok && rep.return_error <= 10.0 * eps;
    rep.verdict = (rep.covering_stable && returns) ? AAReport::Verdict::consistent
                                                   : AAReport::Verdict::inconsistent;
    return rep;
}

} // namespace qts::autom
