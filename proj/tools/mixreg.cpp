// mixreg: command-line front end.
//   generate | fit | select | kl | slope | theory {constants,verify-bracket,sigma} | experiment
// Exit codes: 0 ok, 1 data error, 2 usage error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixreg/divergence.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/experiment.hpp"
#include "mixreg/init.hpp"
#include "mixreg/io.hpp"
#include "mixreg/newton_em.hpp"
#include "mixreg/selection.hpp"
#include "mixreg/theory.hpp"

namespace fs = std::filesystem;
using namespace mixreg;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output_dir;
};

fs::path resolve_out(const Globals& g, const std::string& out) {
    fs::path p(out);
    if (!g.output_dir.empty() && p.is_relative()) p = fs::path(g.output_dir) / p;
    return p;
}

// Writes to --out when given, else stdout.
void emit(const Globals& g, const std::string& out, const std::string& text) {
    if (out.empty()) {
        std::cout << text;
        std::cout.flush();
    } else {
        save_text(resolve_out(g, out), text);
    }
}

// "1..20", "1,2,5" or a mix "1..3,7"
std::vector<long> parse_range(const std::string& s) {
    std::vector<long> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        try {
            const auto dots = part.find("..");
            if (dots == std::string::npos) {
                std::size_t pos = 0;
                out.push_back(std::stol(part, &pos));
                if (pos != part.size()) throw std::invalid_argument(part);
            } else {
                std::size_t p1 = 0, p2 = 0;
                const std::string a = part.substr(0, dots), b = part.substr(dots + 2);
                const long lo = std::stol(a, &p1), hi = std::stol(b, &p2);
                if (p1 != a.size() || p2 != b.size() || hi < lo) throw std::invalid_argument(part);
                for (long v = lo; v <= hi; ++v) out.push_back(v);
            }
        } catch (const std::exception&) {
            throw UsageError("bad range '" + s + "' (use a..b or a,b,c)");
        }
    }
    if (out.empty()) throw UsageError("empty range '" + s + "'");
    return out;
}

struct FitFlags {
    int max_em_iters = 200;
    int newton_steps = 5;
    std::string floor = "fixed";
    double alpha = 0.05;
    std::string stop = "tol";
    bool enforce_bounds = false;
    std::string init = "regular";
    int init_trials = 50;
    int race_steps = 3;
    int final_steps = 10;
    int weight_degree = 1;
    int mean_degree = 1;

    void add(CLI::App* app) {
        app->add_option("--max-em-iters", max_em_iters, "EM iteration cap")->capture_default_str();
        app->add_option("--newton-steps", newton_steps, "Newton steps per EM iteration")->capture_default_str();
        app->add_option("--variance-floor", floor, "fixed | data | <value>")->capture_default_str();
        app->add_option("--alpha", alpha, "level of the data-driven floor")->capture_default_str();
        app->add_option("--stop", stop, "tol | fixed (final fit of --final-steps iterations)")->capture_default_str();
        app->add_flag("--enforce-bounds", enforce_bounds, "clamp coefficients to their bounds after each M-step");
        app->add_option("--init", init, "regular | naive | clever")->capture_default_str();
        app->add_option("--init-trials", init_trials, "initialization trials")->capture_default_str();
        app->add_option("--race-steps", race_steps, "EM steps per trial race")->capture_default_str();
        app->add_option("--final-steps", final_steps, "EM steps of the final fit with --stop fixed")->capture_default_str();
        app->add_option("--weight-degree", weight_degree, "degree of the weight polynomials")->capture_default_str();
        app->add_option("--mean-degree", mean_degree, "degree of the mean polynomials")->capture_default_str();
    }

    FitConfig fit_config() const {
        FitConfig c;
        c.max_em_iters = max_em_iters;
        c.newton_steps = newton_steps;
        try {
            c.floor = VarianceFloor::parse(floor);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        c.alpha = alpha;
        if (stop == "tol") c.stop_rule = FitConfig::StopRule::tolerance;
        else if (stop == "fixed") c.stop_rule = FitConfig::StopRule::fixed_steps;
        else throw UsageError("--stop must be tol or fixed");
        c.enforce_coeff_bounds = enforce_bounds;
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return c;
    }

    InitConfig init_config(std::uint64_t seed) const {
        InitConfig c;
        try {
            c.strategy = init_strategy_from_string(init);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        c.n_trials = init_trials;
        c.race_steps = race_steps;
        c.final_steps = final_steps;
        c.seed = seed;
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return c;
    }

    ModelSpec spec(const Dataset& data, int K) const {
        ModelSpec s;
        s.K = K;
        s.d = data.d();
        s.p = data.p();
        s.weight_degree = weight_degree;
        s.mean_degree = mean_degree;
        try {
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return s;
    }
};

struct KappaFlags {
    std::string kappa = "1";
    std::string penalty = "dim";
    double grid_min = 0.01;
    double grid_max = 10.0;
    int grid_size = 100;

    void add(CLI::App* app, bool with_kappa) {
        if (with_kappa) app->add_option("--kappa", kappa, "penalty multiplier or 'slope'")->capture_default_str();
        app->add_option("--penalty", penalty, "dim | dim+xm | theory:<C>")->capture_default_str();
        app->add_option("--kappa-min", grid_min, "smallest kappa of the slope grid")->capture_default_str();
        app->add_option("--kappa-max", grid_max, "largest kappa of the slope grid")->capture_default_str();
        app->add_option("--grid-size", grid_size, "number of log-spaced grid points")->capture_default_str();
    }

    void apply(SelectConfig& sc) const {
        try {
            sc.penalty = PenaltyMode::parse(penalty);
            sc.kappa_grid = log_grid(grid_min, grid_max, grid_size);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (kappa == "slope") {
            sc.kappa_mode = SelectConfig::KappaMode::slope;
        } else {
            sc.kappa_mode = SelectConfig::KappaMode::fixed;
            try {
                sc.kappa = parse_double(kappa);
            } catch (const FormatError&) {
                throw UsageError("--kappa must be a number or 'slope'");
            }
            if (!(sc.kappa >= 0.0)) throw UsageError("--kappa must be >= 0");
        }
    }
};

std::vector<int> to_int(const std::vector<long>& v) { return {v.begin(), v.end()}; }

MixtureParams load_params_or_fit(const fs::path& path) {
    const json j = load_json(path);
    if (j.is_object() && j.contains("params")) return params_from_json(j.at("params"));
    return params_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional density estimation with mixtures of Gaussian regressions"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--output-dir", g.output_dir, "directory for output files");

    // generate
    auto* gen = app.add_subcommand("generate", "sample a dataset from a known conditional density");
    std::string gen_example = "P", gen_truth, gen_out;
    long gen_n = 2000;
    gen->add_option("--example", gen_example, "P or NP")->capture_default_str();
    gen->add_option("--truth", gen_truth, "MixtureParams JSON instead of a built-in example");
    gen->add_option("--n", gen_n, "sample size")->capture_default_str();
    gen->add_option("--out", gen_out, "output CSV (default stdout)");

    // fit
    auto* fitc = app.add_subcommand("fit", "fit one mixture with K components");
    std::string fit_data, fit_out, fit_init_params;
    int fit_k = 2;
    FitFlags fit_flags;
    fitc->add_option("--data", fit_data, "dataset CSV")->required();
    fitc->add_option("--k", fit_k, "number of components")->capture_default_str();
    fitc->add_option("--init-params", fit_init_params, "start from these MixtureParams instead of initializing");
    fitc->add_option("--out", fit_out, "output JSON (default stdout)");
    fit_flags.add(fitc);

    // select
    auto* sel = app.add_subcommand("select", "fit a range of K and select by penalized likelihood");
    std::string sel_data, sel_out, sel_range = "1..10", sel_dim_path;
    bool sel_no_fits = false;
    FitFlags sel_flags;
    KappaFlags sel_kappa;
    sel->add_option("--data", sel_data, "dataset CSV")->required();
    sel->add_option("--k-range", sel_range, "K values, e.g. 1..20")->capture_default_str();
    sel->add_option("--out", sel_out, "output JSON (default stdout)");
    sel->add_option("--dim-path", sel_dim_path, "write the (kappa, dimension) path CSV here");
    sel->add_flag("--no-fits", sel_no_fits, "omit per-K fits from the JSON");
    sel_flags.add(sel);
    sel_kappa.add(sel, true);

    // kl
    auto* klc = app.add_subcommand("kl", "Monte-Carlo divergence between the truth and a fit");
    std::string kl_truth, kl_fit, kl_data, kl_out, kl_kind = "kl";
    int kl_my = 1000;
    double kl_rho = 0.5;
    klc->add_option("--truth", kl_truth, "truth JSON: {\"example\": \"P\"} or MixtureParams")->required();
    klc->add_option("--fit", kl_fit, "MixtureParams or FitResult JSON")->required();
    klc->add_option("--data", kl_data, "CSV whose x columns give the design points")->required();
    klc->add_option("--my", kl_my, "draws per design point")->capture_default_str();
    klc->add_option("--divergence", kl_kind, "kl | jkl | hellinger")->capture_default_str();
    klc->add_option("--rho", kl_rho, "mixing weight of jkl")->capture_default_str();
    klc->add_option("--out", kl_out, "output JSON (default stdout)");

    // slope
    auto* slope = app.add_subcommand("slope", "slope heuristic from a selection result");
    std::string slope_in, slope_out, slope_dim_path;
    long slope_n = 0;
    KappaFlags slope_kappa;
    slope->add_option("--selection", slope_in, "SelectionResult JSON with fits")->required();
    slope->add_option("--n", slope_n, "sample size (theory penalty only)");
    slope->add_option("--out", slope_out, "output JSON (default stdout)");
    slope->add_option("--dim-path", slope_dim_path, "write the (kappa, dimension) path CSV here");
    slope_kappa.add(slope, false);

    // theory
    auto* theory = app.add_subcommand("theory", "entropy constants and bracket checks");
    theory->require_subcommand(1);
    auto* constants = theory->add_subcommand("constants", "constants of a model collection");
    std::string c_spec, c_out;
    int c_kmax = 20;
    double c_kappa = 1.0, c_cu = 1.0;
    long c_n = 0;
    constants->add_option("--spec", c_spec, "ModelSpec JSON")->required();
    constants->add_option("--kmax", c_kmax, "largest K of the collection")->capture_default_str();
    constants->add_option("--kappa", c_kappa, "bracket kappa (>= 17/29)")->capture_default_str();
    constants->add_option("--c-u", c_cu, "covering constant of SO(p)")->capture_default_str();
    constants->add_option("--n", c_n, "sample size for sigma_m and penalty values");
    constants->add_option("--out", c_out, "output JSON (default stdout)");
    auto* bracket = theory->add_subcommand("verify-bracket", "randomized check of the Gaussian bracket");
    int b_trials = 200, b_p = 1;
    double b_delta = 0.5, b_kappa = 1.0, b_factor = 1.0;
    std::string b_out;
    bracket->add_option("--trials", b_trials, "random instances")->capture_default_str();
    bracket->add_option("--p", b_p, "response dimension")->capture_default_str();
    bracket->add_option("--delta", b_delta, "bracket width target")->capture_default_str();
    bracket->add_option("--kappa", b_kappa, "bracket kappa")->capture_default_str();
    bracket->add_option("--mean-gap-factor", b_factor, "scale the mean gap beyond its bound (negative control)")
        ->capture_default_str();
    bracket->add_option("--out", b_out, "output JSON (default stdout)");
    auto* sigma = theory->add_subcommand("sigma", "sigma_m root and its bound");
    long s_D = 8, s_n = 2000;
    double s_C = 5.0;
    std::string s_out;
    sigma->add_option("--D", s_D, "model dimension")->capture_default_str();
    sigma->add_option("--C", s_C, "entropy constant")->capture_default_str();
    sigma->add_option("--n", s_n, "sample size")->capture_default_str();
    sigma->add_option("--out", s_out, "output JSON (default stdout)");

    // experiment
    auto* exp = app.add_subcommand("experiment", "simulation study: boxplots, histograms, slope paths, risk ladder");
    std::string e_example = "P", e_truth, e_range = "1..20", e_seeds = "1..55", e_ladder;
    long e_n = 2000;
    int e_my = 1000;
    FitFlags e_flags;
    KappaFlags e_kappa;
    exp->add_option("--example", e_example, "P, NP or custom")->capture_default_str();
    exp->add_option("--truth", e_truth, "truth JSON for --example custom");
    exp->add_option("--n", e_n, "sample size")->capture_default_str();
    exp->add_option("--k-range", e_range, "K values")->capture_default_str();
    exp->add_option("--seeds", e_seeds, "seed list, e.g. 1..55")->capture_default_str();
    exp->add_option("--my", e_my, "KL draws per design point")->capture_default_str();
    exp->add_option("--ladder", e_ladder, "sizes for the risk-vs-n runs, or 'default'");
    e_flags.add(exp);
    e_kappa.add(exp, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            if (gen_n < 1) throw UsageError("--n must be >= 1");
            const MixtureParams truth = gen_truth.empty() ? [&] {
                try {
                    return example_truth(example_from_string(gen_example));
                } catch (const std::invalid_argument& e) {
                    throw UsageError(e.what());
                }
            }()
                                                          : truth_from_json(load_json(gen_truth));
            const Dataset data = experiment_data(truth, gen_n, g.seed);
            std::ostringstream os;
            write_dataset_csv(os, data);
            emit(g, gen_out, os.str());
        } else if (*fitc) {
            if (fit_k < 1) throw UsageError("--k must be >= 1");
            const Dataset data = load_dataset(fit_data);
            const ModelSpec spec = fit_flags.spec(data, fit_k);
            FitConfig fc = fit_flags.fit_config();
            const InitConfig ic = fit_flags.init_config(g.seed);
            FitResult r;
            if (!fit_init_params.empty()) {
                if (fc.stop_rule == FitConfig::StopRule::fixed_steps) fc.max_em_iters = ic.final_steps;
                r = fit(data, spec, load_params_or_fit(fit_init_params), fc);
            } else {
                r = fit_with_restarts(data, spec, ic, fc, 10);
            }
            emit(g, fit_out, to_json(r).dump(2) + "\n");
        } else if (*sel) {
            const Dataset data = load_dataset(sel_data);
            const auto Ks = to_int(parse_range(sel_range));
            SelectConfig sc;
            sc.fit = sel_flags.fit_config();
            sc.init = sel_flags.init_config(g.seed);
            sc.threads = g.threads;
            sel_kappa.apply(sc);
            for (int K : Ks) {
                if (K < 1) throw UsageError("K values must be >= 1");
            }
            SelectionResult r = select(data, Ks, sel_flags.spec(data, 1), sc);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
            if (!sel_dim_path.empty()) {
                std::ostringstream os;
                write_dim_path_csv(os, r.dim_path);
                save_text(resolve_out(g, sel_dim_path), os.str());
            }
            if (sel_no_fits) r.fits.clear();
            emit(g, sel_out, to_json(r).dump(2) + "\n");
        } else if (*klc) {
            if (kl_my < 2) throw UsageError("--my must be >= 2");
            if (kl_kind != "kl" && kl_kind != "jkl" && kl_kind != "hellinger") {
                throw UsageError("--divergence must be kl, jkl or hellinger");
            }
            const MixtureDensity truth(truth_from_json(load_json(kl_truth)));
            const MixtureDensity fitted(load_params_or_fit(kl_fit));
            const Dataset data = load_dataset(kl_data);
            DivergenceEstimate est;
            if (kl_kind == "kl") {
                est = kl_tensorized(truth, fitted, data.x, kl_my, g.seed, g.threads);
            } else if (kl_kind == "jkl") {
                if (!(kl_rho > 0.0 && kl_rho < 1.0)) throw UsageError("--rho must lie in (0,1)");
                est = jkl_tensorized(truth, fitted, kl_rho, data.x, kl_my, g.seed, g.threads);
            } else if (kl_kind == "hellinger") {
                est = hellinger_tensorized(truth, fitted, data.x, kl_my, g.seed, g.threads);
            } else {
                throw UsageError("--divergence must be kl, jkl or hellinger");
            }
            json j = to_json(est);
            j["divergence"] = kl_kind;
            emit(g, kl_out, j.dump(2) + "\n");
        } else if (*slope) {
            const SelectionResult in = selection_result_from_json(load_json(slope_in));
            if (in.fits.empty()) throw FormatError("selection result has no fits");
            SelectConfig sc;
            slope_kappa.apply(sc);
            if (sc.penalty.kind == PenaltyMode::Kind::theory && slope_n < 1) {
                throw UsageError("--n is required with the theory penalty");
            }
            std::vector<Candidate> cands;
            for (const auto& [K, f] : in.fits) {
                ModelSpec spec;
                spec.K = K;
                spec.d = f.params.d;
                spec.p = f.params.p;
                spec.weight_degree = f.params.weight_degree();
                spec.mean_degree = f.params.mean_degree();
                cands.push_back({K, model_dim(spec), penalty_shape(spec, sc.penalty, slope_n), f.final_loglik()});
            }
            json j;
            std::vector<DimPathPoint> path;
            try {
                const SlopeHeuristic sh = slope_heuristic(cands, sc.kappa_grid);
                j["kappa_hat"] = sh.kappa_hat;
                j["kappa_prescribed"] = sh.kappa_prescribed;
                path = sh.path;
            } catch (const NoJump& e) {
                std::cerr << "warning: " << e.what() << "; falling back to kappa = 1\n";
                j["kappa_hat"] = nullptr;
                j["kappa_prescribed"] = 1.0;
                path = dimension_path(cands, sc.kappa_grid);
            } catch (const std::invalid_argument& e) {
                throw FormatError(e.what());
            }
            json pj = json::array();
            for (const auto& pt : path) pj.push_back({{"kappa", pt.kappa}, {"dimension", pt.dimension}, {"K", pt.K}});
            j["dim_path"] = pj;
            if (!slope_dim_path.empty()) {
                std::ostringstream os;
                write_dim_path_csv(os, path);
                save_text(resolve_out(g, slope_dim_path), os.str());
            }
            emit(g, slope_out, j.dump(2) + "\n");
        } else if (*theory) {
            if (*constants) {
                const ModelSpec spec = model_spec_from_json(load_json(c_spec));
                EntropyConstants c;
                try {
                    c = entropy_constants(spec, c_kmax, c_kappa, c_cu);
                } catch (const std::invalid_argument& e) {
                    throw UsageError(e.what());
                }
                json j = to_json(c);
                const StructureDims z = structure_dims(spec);
                j["structure"] = {{"Z_upsilon", z.Z_upsilon}, {"Z_L", z.Z_L}, {"Z_D", z.Z_D}, {"Z_A", z.Z_A},
                                  {"D_script", z.D_script}};
                j["gaussian_C"] = gaussian_entropy_C(spec, c_kappa, c_cu);
                j["model_dim"] = model_dim(spec);
                j["kraft_bound"] = kraft_bound();
                j["c_U_note"] = "c_U is not given numerically; value as configured";
                if (c_n > 0) {
                    const SigmaBound sb = sigma_m_bound(model_dim(spec), c.frakC, c_n);
                    j["n"] = c_n;
                    j["sigma_m"] = sb.sigma_m;
                    j["n_sigma_sq"] = sb.n_sigma_sq;
                    j["n_sigma_sq_bound"] = sb.bound;
                    j["theoretical_penalty"] = theoretical_penalty(spec, c_n, c, 1.0);
                    j["milder_penalty"] = milder_penalty(spec, c_n, c, 1.0);
                }
                emit(g, c_out, j.dump(2) + "\n");
            } else if (*bracket) {
                if (b_trials < 1 || b_p < 1) throw UsageError("--trials and --p must be >= 1");
                if (!(b_delta > 0.0 && b_delta <= std::sqrt(2.0))) throw UsageError("--delta must lie in (0, sqrt 2]");
                if (!(b_kappa >= kKappaMin)) throw UsageError("--kappa must be >= 17/29");
                BracketConfig bc;
                bc.strict = false;
                bc.box = CovBox{0.5, 2.0, 0.5, 2.0};
                const double ds = delta_sigma_cap(b_delta, b_kappa, b_p);
                int violations = 0, precondition_failures = 0;
                double max_size = 0.0;
                json first = nullptr;
                for (int t = 0; t < b_trials; ++t) {
                    Rng rng = make_rng(g.seed, static_cast<std::uint64_t>(t));
                    const auto inst = random_bracket_instance(b_p, ds, b_kappa, bc.box, rng, b_factor);
                    const BracketReport rep = verify_gaussian_bracket(inst.truth, inst.tilde, b_delta, b_kappa, bc);
                    if (!rep.preconditions_ok()) ++precondition_failures;
                    if (rep.violated()) {
                        ++violations;
                        if (first.is_null()) {
                            first = to_json(rep);
                            first["trial"] = t;
                        }
                    }
                    max_size = std::max(max_size, rep.size_sq);
                }
                json j = {{"trials", b_trials},
                          {"p", b_p},
                          {"delta", b_delta},
                          {"kappa", b_kappa},
                          {"delta_sigma", ds},
                          {"mean_gap_factor", b_factor},
                          {"violations", violations},
                          {"precondition_failures", precondition_failures},
                          {"size_sq", max_size},
                          {"size_bound_sq", (b_delta / 5.0) * (b_delta / 5.0)},
                          {"containment_checked", b_p <= 2},
                          {"first_violation", first}};
                emit(g, b_out, j.dump(2) + "\n");
            } else if (*sigma) {
                if (s_D < 1 || s_n < 1 || !(s_C > 0.0)) throw UsageError("need --D >= 1, --n >= 1, --C > 0");
                const SigmaBound sb = sigma_m_bound(s_D, s_C, s_n);
                json j = {{"D", s_D}, {"C", s_C}, {"n", s_n}, {"sigma_m", sb.sigma_m}, {"n_sigma_sq", sb.n_sigma_sq},
                          {"bound", sb.bound}};
                emit(g, s_out, j.dump(2) + "\n");
            }
        } else if (*exp) {
            ExperimentConfig ec;
            ec.example = e_example;
            if (e_example == "custom") {
                if (e_truth.empty()) throw UsageError("--example custom needs --truth");
                ec.custom_truth = truth_from_json(load_json(e_truth));
            }
            ec.n = e_n;
            ec.K_range = to_int(parse_range(e_range));
            for (long s : parse_range(e_seeds)) {
                if (s < 0) throw UsageError("seeds must be >= 0");
                ec.seeds.push_back(static_cast<std::uint64_t>(s));
            }
            ec.m_y = e_my;
            if (e_ladder == "default") ec.ladder = default_ladder();
            else if (!e_ladder.empty()) ec.ladder = parse_range(e_ladder);
            ec.select.fit = e_flags.fit_config();
            ec.select.init = e_flags.init_config(g.seed);
            e_kappa.apply(ec.select);
            ec.spec_template = example_template();
            ec.spec_template.weight_degree = e_flags.weight_degree;
            ec.spec_template.mean_degree = e_flags.mean_degree;
            if (ec.custom_truth) {
                ec.spec_template.d = ec.custom_truth->d;
                ec.spec_template.p = ec.custom_truth->p;
            }
            ec.output_dir = g.output_dir.empty() ? fs::path("experiment_out") : fs::path(g.output_dir);
            ec.threads = g.threads;
            try {
                ec.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            const ExperimentOutcome out = run_experiment(ec, [](const std::string& m) { std::cerr << m << '\n'; });
            std::cout << "wrote " << ec.output_dir.string() << " (" << out.seeds_total - out.seeds_failed << "/"
                      << out.seeds_total << " seeds ok)\n";
            if (2 * out.seeds_failed > out.seeds_total) {
                std::cerr << "more than half of the seeds failed\n";
                return 1;
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
