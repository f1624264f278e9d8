// Batch front end: parses JSON problem specs, dispatches to the library and
// emits CSV traces plus JSON run reports. Exit codes: 0 success, 2 spec
// validation failure, 3 numerical failure (message names the library error).

#include <qts/csv.hpp>
#include <qts/qts.hpp>
#include <qts/spec_io.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qts;

namespace {

struct Options {
    std::string spec_path;
    std::string out_dir = ".";
    std::optional<double> tol;
    bool inverse = false;  // transform: also write the round trip
    bool coeff = false;    // transform: apply the coefficient transform
};

class Stopwatch {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(clock::now() - start_).count();
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_ = clock::now();
};

json window_json(const Window& w) {
    json j{{"kmin", w.kmin}, {"kmax", w.kmax}};
    if (w.include_zero) j["include_zero"] = true;
    return j;
}

json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

void write_report(const Options& opt, const std::string& command, const spec_io::ProblemSpec& spec,
                  json results, double wall_ms) {
    json rep{{"command", command},
             {"spec", opt.spec_path},
             {"resolved",
              {{"grid", spec.ctx.is_quantum() ? json{{"q", spec.ctx.q()}}
                                              : json{{"kind", "integer"}}},
               {"window", window_json(spec.window)},
               {"dim", spec.dim}}},
             {"results", std::move(results)},
             {"wall_time_ms", wall_ms}};
    std::ofstream out(fs::path(opt.out_dir) / "report.json");
    out << rep.dump(2) << '\n';
}

std::vector<std::string> value_header(const std::string& stem, int dim) {
    std::vector<std::string> h;
    if (dim == 1) {
        h.push_back(stem);
    } else {
        for (int i = 0; i < dim; ++i) h.push_back(stem + std::to_string(i));
    }
    return h;
}

void write_grid_csv(const std::string& path, const GridContext& ctx, const GridFn& f,
                    const std::string& stem, bool with_time = true,
                    const std::string& index_label = "k") {
    csv::Writer w(path);
    std::vector<std::string> head{index_label};
    if (with_time) head.push_back("t");
    for (const auto& name : value_header(stem, f.dim())) head.push_back(name);
    w.header(head);
    if (f.has_limit()) {
        std::vector<std::string> row{"-inf_q"};
        if (with_time) row.push_back("0");
        for (Eigen::Index i = 0; i < f.limit_value().size(); ++i)
            row.push_back(csv::format(f.limit_value()[i]));
        w.row(row);
    }
    for (std::int64_t k = f.kmin(); k <= f.kmax(); ++k) {
        std::vector<std::string> row{std::to_string(k)};
        if (with_time) row.push_back(csv::format(ctx.value(k)));
        for (Eigen::Index i = 0; i < f.at(k).size(); ++i) row.push_back(csv::format(f.at(k)[i]));
        w.row(row);
    }
}

void require_cover(const std::optional<spec_io::ValueSpec>& vs, std::int64_t lo, std::int64_t hi,
                   const std::string& field) {
    if (vs && !vs->covers(lo, hi))
        throw spec_io::SpecError(field, "table must cover exponents [" + std::to_string(lo) +
                                            ", " + std::to_string(hi) + "]");
}

double resolve_tol(const Options& opt, const spec_io::ProblemSpec& spec, double fallback) {
    if (opt.tol) return *opt.tol;
    if (spec.tol) return *spec.tol;
    return fallback;
}

int cmd_deriv(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "deriv");
    const double tol = resolve_tol(opt, spec, qcalc::kDefaultTol);
    require_cover(spec.function, spec.window.kmin, spec.window.kmax + 1, "/function");
    VecFn f = spec.function->as_vec_fn(spec.ctx);
    Window lattice(spec.window.kmin, spec.window.kmax - 1, false);
    GridFn d = sample([&](std::int64_t k) {
        return qcalc::q_derivative(spec.ctx, f, QPoint::exp(k), tol);
    }, lattice);
    if (spec.window.include_zero) {
        Vec at_zero;
        if (spec.function->is_table()) {
            GridFn g = sample(f, spec.function->table_window(), spec.function->zero_value());
            at_zero = qcalc::q_derivative(spec.ctx, g, QPoint::zero(), tol);
        } else {
            at_zero = qcalc::q_derivative(spec.ctx, f, QPoint::zero(), tol);
        }
        d = GridFn(Window(lattice.kmin, lattice.kmax, true), d.values(), at_zero);
    }
    write_grid_csv((fs::path(opt.out_dir) / "deriv.csv").string(), spec.ctx, d, "d");
    write_report(opt, "deriv", spec, json{{"rows", d.window().size()}}, clock.ms());
    return 0;
}

int cmd_integral(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "integral");
    const double tol = resolve_tol(opt, spec, qcalc::kDefaultTol);
    VecFn f = spec.function->as_vec_fn(spec.ctx);
    qcalc::IntegralDiag diag;
    const Vec v = qcalc::delta_integral(spec.ctx, f, *spec.point_a, *spec.point_b, tol, &diag);
    {
        csv::Writer w((fs::path(opt.out_dir) / "integral.csv").string());
        w.header(value_header("value", static_cast<int>(v.size())));
        std::vector<std::string> row;
        for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(csv::format(v[i]));
        w.row(row);
    }
    json res{{"value", vec_json(v)}};
    if (spec.point_a->is_zero()) {
        res["truncated_at"] = diag.truncated_at;
        res["tail_bound"] = diag.tail_bound;
    }
    write_report(opt, "integral", spec, res, clock.ms());
    return 0;
}

int cmd_exp(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "exp");
    ScalarFn p = spec.p->as_scalar_fn(spec.ctx);
    GridFn e = sample([&](std::int64_t k) {
        return scalar_vec(qcalc::ts_exp(spec.ctx, p, QPoint::exp(k), QPoint::exp(spec.t0)));
    }, Window(spec.window.kmin, spec.window.kmax, false));
    write_grid_csv((fs::path(opt.out_dir) / "exp.csv").string(), spec.ctx, e, "e");
    write_report(opt, "exp", spec, json{{"t0", spec.t0}}, clock.ms());
    return 0;
}

int cmd_transform(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "transform");
    json res;
    if (opt.coeff) {
        if (!spec.coefficient)
            throw spec_io::SpecError("/coefficient", "--coeff requires a coefficient spec");
        genseq::QuantumProblem qp(
            spec.ctx, spec.coefficient->as_mat_fn(spec.ctx),
            [dim = spec.dim](std::int64_t, const Vec&, const Vec&) {
                return Vec(Vec::Zero(dim));
            });
        genseq::DiscreteProblem img = genseq::coeff_transform(qp);
        csv::Writer w((fs::path(opt.out_dir) / "coeff.csv").string());
        std::vector<std::string> head{"n"};
        for (int i = 0; i < spec.dim; ++i)
            for (int j = 0; j < spec.dim; ++j)
                head.push_back("A" + std::to_string(i) + std::to_string(j));
        w.header(head);
        for (std::int64_t n = spec.window.kmin; n <= spec.window.kmax; ++n) {
            const Mat A = img.A(n);
            std::vector<std::string> row{std::to_string(n)};
            for (Eigen::Index i = 0; i < A.rows(); ++i)
                for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(csv::format(A(i, j)));
            w.row(row);
        }
        res["coeff_rows"] = spec.window.size();
    } else {
        if (!spec.function)
            throw spec_io::SpecError("/function", "transform without --coeff needs a function");
        require_cover(spec.function, spec.window.kmin, spec.window.kmax, "/function");
        std::optional<Vec> z;
        if (spec.window.include_zero) {
            z = spec.function->zero_value();
            if (!z)
                throw spec_io::SpecError(
                    "/window/include_zero",
                    "this function family carries no limit value at 0");
        }
        VecFn f = spec.function->as_vec_fn(spec.ctx);
        GridFn g = sample(f, spec.window, z);
        genseq::SeqFn s = genseq::to_sequence(g);
        write_grid_csv((fs::path(opt.out_dir) / "sequence.csv").string(), spec.ctx,
                       genseq::from_sequence(s), "v", /*with_time=*/false, "n");
        if (opt.inverse) {
            GridFn back = genseq::from_sequence(s);
            write_grid_csv((fs::path(opt.out_dir) / "roundtrip.csv").string(), spec.ctx, back,
                           "v");
            res["roundtrip_exact"] = (back == g);
        }
    }
    write_report(opt, "transform", spec, res, clock.ms());
    return 0;
}

int cmd_fundmat(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "fundmat");
    auto sys = spec_io::make_system(spec);
    Window w(spec.window.kmin, spec.window.kmax, false);
    const std::int64_t t0 = std::clamp<std::int64_t>(spec.t0, w.kmin, w.kmax);
    auto X = lindyn::fundamental_matrix(sys, w, t0);
    csv::Writer out((fs::path(opt.out_dir) / "fundmat.csv").string());
    std::vector<std::string> head{"k"};
    for (int i = 0; i < spec.dim; ++i)
        for (int j = 0; j < spec.dim; ++j)
            head.push_back("X" + std::to_string(i) + std::to_string(j));
    out.header(head);
    for (std::int64_t k = w.kmin; k <= w.kmax; ++k) {
        std::vector<std::string> row{std::to_string(k)};
        for (Eigen::Index i = 0; i < spec.dim; ++i)
            for (Eigen::Index j = 0; j < spec.dim; ++j) row.push_back(csv::format(X.X(k)(i, j)));
        out.row(row);
    }
    write_report(opt, "fundmat", spec, json{{"t0", t0}}, clock.ms());
    return 0;
}

int cmd_dichotomy(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "dichotomy");
    auto sys = spec_io::make_system(spec);
    auto d = spec_io::resolve_dichotomy(spec, sys);
    Window w(spec.window.kmin, spec.window.kmax, false);
    const std::int64_t t0 = std::clamp<std::int64_t>(spec.t0, w.kmin, w.kmax);
    auto X = lindyn::fundamental_matrix(sys, w, t0);
    auto verify = lindyn::dichotomy_verify(X, d);
    auto env = lindyn::kernel_envelopes(X, d.P);
    {
        csv::Writer out((fs::path(opt.out_dir) / "envelopes.csv").string());
        out.header({"d", "stable", "unstable"});
        for (std::size_t i = 0; i < env.stable.size(); ++i)
            out.row({std::to_string(i), csv::format(env.stable[i]),
                     csv::format(env.unstable[i])});
    }
    json dj{{"P", mat_json(d.P)},
            {"K1", d.K1},
            {"alpha1", d.alpha1},
            {"K2", d.K2},
            {"alpha2", d.alpha2},
            {"verify",
             {{"pass", verify.pass},
              {"max_ratio", verify.max_ratio},
              {"worst_pair", {verify.worst_k, verify.worst_l}},
              {"commutation_defect", verify.commutation_defect}}}};
    std::ofstream(fs::path(opt.out_dir) / "dichotomy.json") << dj.dump(2) << '\n';
    write_report(opt, "dichotomy", spec, dj, clock.ms());
    return 0;
}

int cmd_solve_linear(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "solve-linear");
    const double tol = resolve_tol(opt, spec, lindyn::kDefaultTol);
    auto sys = spec_io::make_system(spec);
    auto d = spec_io::resolve_dichotomy(spec, sys);
    VecFn f = spec.forcing->as_forcing_fn(spec.ctx);
    Window w(spec.window.kmin, spec.window.kmax, false);
    lindyn::GreenDiag diag;
    GridFn x = lindyn::bounded_solution(sys, f, d, w, tol, &diag);
    write_grid_csv((fs::path(opt.out_dir) / "solution.csv").string(), spec.ctx, x, "x");
    const double resid = lindyn::residual(x, sys, f);
    const GridFn fgrid = sample(f, w);
    json res{{"residual", resid},
             {"bound_check", lindyn::solution_bound_check(x, fgrid, d)},
             {"bound_factor", d.bound_factor()},
             {"constants",
              {{"K1", d.K1}, {"alpha1", d.alpha1}, {"K2", d.K2}, {"alpha2", d.alpha2}}},
             {"margins", {diag.margin_past, diag.margin_future}},
             {"sup_x", autom::sup_norm(x)},
             {"sup_f", autom::sup_norm(fgrid)}};
    write_report(opt, "solve-linear", spec, res, clock.ms());
    return 0;
}

int cmd_solve_semilinear(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "solve-semilinear");
    const double tol = resolve_tol(opt, spec, semlin::kDefaultTol);
    auto sys = spec_io::make_system(spec);
    auto d = spec_io::resolve_dichotomy(spec, sys);
    semlin::SemilinearProblem p{sys,
                                spec.nonlinearity->as_fn(),
                                spec.nonlinearity->L1,
                                spec.nonlinearity->L2,
                                spec.delay.as_fn(),
                                d,
                                Window(spec.window.kmin, spec.window.kmax, false),
                                tol};
    auto res = semlin::picard_solve(p, std::nullopt, spec.max_iter);
    write_grid_csv((fs::path(opt.out_dir) / "solution.csv").string(), spec.ctx, res.x, "x");
    {
        csv::Writer out((fs::path(opt.out_dir) / "iterations.csv").string());
        out.header({"m", "delta", "ratio"});
        for (std::size_t m = 0; m < res.deltas.size(); ++m)
            out.row({std::to_string(m + 1), csv::format(res.deltas[m]),
                     m > 0 ? csv::format(res.ratios[m - 1]) : std::string("")});
    }
    json rj{{"contraction_constant", res.contraction},
            {"contraction_guaranteed", res.guaranteed},
            {"iterations", res.iterations},
            {"enlargement", res.enlargement},
            {"residual", semlin::residual(res.x, p)},
            {"sup_x", autom::sup_norm(res.x)}};
    if (!res.guaranteed) rj["warning"] = "contraction constant >= 1: no guarantee";
    write_report(opt, "solve-semilinear", spec, rj, clock.ms());
    return 0;
}

int cmd_aa_test(const Options& opt) {
    Stopwatch clock;
    auto spec = spec_io::load_spec(opt.spec_path, "aa-test");
    Window w(spec.window.kmin, spec.window.kmax, false);
    {
        std::int64_t reach = spec.pool_size;
        if (spec.shifts)
            for (std::int64_t s : *spec.shifts) reach = std::max<std::int64_t>(reach, s < 0 ? -s : s);
        require_cover(spec.function, w.kmin - 2 * reach, w.kmax + reach, "/function");
    }
    VecFn f = spec.function->as_vec_fn(spec.ctx);
    json rj;
    if (spec.shifts) {
        // explicit shifts: plain extraction + return check
        auto sh = autom::ShiftSequence::of(*spec.shifts);
        std::int64_t smax = 0;
        for (std::int64_t s : sh.shifts) smax = std::max<std::int64_t>(smax, s < 0 ? -s : s);
        Window enlarged(w.kmin - smax, w.kmax, false);
        autom::Extraction ex =
            spec.weighted ? autom::weighted_bochner_extract(spec.ctx, f, sh, enlarged, spec.epsilon)
                          : autom::bochner_extract(spec.ctx, f, sh, enlarged, spec.epsilon);
        const double ret =
            spec.weighted
                ? autom::weighted_return_check(spec.ctx, f, ex.limit, ex.subsequence, w)
                : autom::return_check(spec.ctx, f, ex.limit, ex.subsequence, w);
        write_grid_csv((fs::path(opt.out_dir) / "extracted_g.csv").string(), spec.ctx, ex.limit,
                       "g");
        rj = json{{"subsequence", ex.subsequence},
                  {"forward_error", ex.forward_error},
                  {"return_error", ret}};
    } else {
        autom::AAReport rep = autom::aa_diagnostic(spec.ctx, f, spec.pool_size, w, spec.epsilon);
        rj = json{{"verdict", autom::AAReport::name(rep.verdict)},
                  {"covering", rep.covering},
                  {"covering_stable", rep.covering_stable},
                  {"sup_by_shift", rep.sup_by_shift},
                  {"extraction_ok", rep.extraction_ok}};
        if (rep.extraction_ok) {
            rj["subsequence"] = rep.subsequence;
            rj["forward_error"] = rep.forward_error;
            rj["return_error"] = rep.return_error;
            write_grid_csv((fs::path(opt.out_dir) / "extracted_g.csv").string(), spec.ctx,
                           *rep.limit, "g");
        }
    }
    std::ofstream(fs::path(opt.out_dir) / "aa_report.json") << rj.dump(2) << '\n';
    write_report(opt, "aa-test", spec, rj, clock.ms());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum time-scale toolkit: calculus, transforms, almost-automorphy "
                 "diagnostics and dynamic-equation solvers on q^Z and Z"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--spec", opt.spec_path, "path to the JSON problem spec")->required();
        sub->add_option("--out", opt.out_dir, "output directory (default .)");
        sub->add_option("--tol", opt.tol, "tolerance override");
    };

    std::string command;
    struct Entry {
        const char* name;
        int (*run)(const Options&);
    };
    const Entry entries[] = {
        {"deriv", cmd_deriv},       {"integral", cmd_integral},
        {"exp", cmd_exp},           {"transform", cmd_transform},
        {"fundmat", cmd_fundmat},   {"dichotomy", cmd_dichotomy},
        {"solve-linear", cmd_solve_linear}, {"solve-semilinear", cmd_solve_semilinear},
        {"aa-test", cmd_aa_test},
    };
    int (*run)(const Options&) = nullptr;
    for (const Entry& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name);
        add_common(sub);
        if (std::string(e.name) == "transform") {
            sub->add_flag("--inverse", opt.inverse, "also write the inverse round trip");
            sub->add_flag("--coeff", opt.coeff, "apply the coefficient transform");
        }
        sub->callback([&run, &command, e] {
            run = e.run;
            command = e.name;
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    }

    try {
        fs::create_directories(opt.out_dir);
        return run(opt);
    } catch (const spec_io::SpecError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const qts::Error& e) {
        std::cerr << command << " failed: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << command << " failed: " << e.what() << '\n';
        return 3;
    }
}
