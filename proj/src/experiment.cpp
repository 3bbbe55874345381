#include "mixreg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mixreg/errors.hpp"
#include "mixreg/parallel.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDivergenceStream = 2;

PolyFn poly1(std::initializer_list<double> c) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(c.size()));
    Eigen::Index i = 0;
    for (double x : c) v[i++] = x;
    return PolyFn(1, static_cast<int>(c.size()) - 1, v);
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// sqrt(sum se^2) / count: MC error of an average of independent estimates.
double combined_se(const std::vector<double>& se) {
    double s = 0.0;
    for (double e : se) s += e * e;
    return se.empty() ? 0.0 : std::sqrt(s) / static_cast<double>(se.size());
}

}  // namespace

std::string to_string(Example e) { return e == Example::P ? "P" : "NP"; }

Example example_from_string(const std::string& s) {
    if (s == "P") return Example::P;
    if (s == "NP") return Example::NP;
    throw std::invalid_argument("unknown example '" + s + "' (expected P or NP)");
}

MixtureParams example_truth(Example e) {
    MixtureParams t;
    t.K = 2;
    t.d = 1;
    t.p = 1;
    t.weights = {PolyFn::zero(1, 1), poly1({-7.0, 15.0})};
    if (e == Example::P) {
        t.means = {{poly1({8.0, -15.0})}, {poly1({0.6, 0.4})}};
    } else {
        t.means = {{poly1({7.4, -22.0, 15.0})}, {poly1({0.0, 0.0, -0.4})}};
    }
    t.covs = {Eigen::MatrixXd::Constant(1, 1, 0.3), Eigen::MatrixXd::Constant(1, 1, 0.4)};
    return t;
}

ModelSpec example_template() {
    ModelSpec s;
    s.weight_degree = 1;
    s.mean_degree = 1;
    s.d = 1;
    s.p = 1;
    return s;
}

MixtureParams truth_from_json(const json& j) {
    if (j.is_object() && j.contains("example")) {
        try {
            return example_truth(example_from_string(j.at("example").get<std::string>()));
        } catch (const std::invalid_argument& e) {
            throw FormatError(e.what());
        } catch (const json::exception& e) {
            throw FormatError(e.what());
        }
    }
    return params_from_json(j);
}

std::vector<long> default_ladder() { return {500, 1000, 2000, 5000, 10000}; }

void ExperimentConfig::validate() const {
    if (n < 10) throw std::invalid_argument("experiment: n must be >= 10");
    for (int K : k_range()) {
        if (K < 1 || K > 50) throw std::invalid_argument("experiment: K values must lie in [1, 50]");
    }
    for (long m : ladder) {
        if (m < 10) throw std::invalid_argument("experiment: ladder sizes must be >= 10");
    }
    if (m_y < 2) throw std::invalid_argument("experiment: m_y must be >= 2");
    if (example == "custom" && !custom_truth) throw std::invalid_argument("experiment: custom example needs a truth");
    if (example != "custom") example_from_string(example);
}

MixtureParams ExperimentConfig::truth() const {
    if (example == "custom") {
        if (!custom_truth) throw std::invalid_argument("experiment: custom example needs a truth");
        return *custom_truth;
    }
    return example_truth(example_from_string(example));
}

std::vector<int> ExperimentConfig::k_range() const {
    if (!K_range.empty()) return K_range;
    std::vector<int> r(20);
    std::iota(r.begin(), r.end(), 1);
    return r;
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> s(55);
    std::iota(s.begin(), s.end(), std::uint64_t{1});
    return s;
}

Dataset experiment_data(const MixtureParams& truth, long n, std::uint64_t seed) {
    return sample(truth, uniform_hypercube(truth.d), n, seed);
}

SeedRun run_seed(const MixtureParams& truth, long n, std::uint64_t seed, const std::vector<int>& K_range,
                 const ModelSpec& spec_template, const SelectConfig& select_cfg, int m_y, bool per_K_kl) {
    SeedRun run;
    run.seed = seed;
    run.n = n;
    try {
        const Dataset data = experiment_data(truth, n, seed);
        SelectConfig sc = select_cfg;
        sc.init.seed = derive_seed(seed, kInitStream);
        sc.threads = 1;
        run.selection = select(data, K_range, spec_template, sc);

        const MixtureDensity s0(truth);
        std::vector<int> Ks;
        std::vector<MixtureDensity> fitted;
        for (const auto& [K, f] : run.selection.fits) {
            if (!per_K_kl && K != run.selection.chosen_K) continue;
            Ks.push_back(K);
            fitted.emplace_back(f.params);
        }
        std::vector<const ConditionalDensity*> ts;
        for (const auto& f : fitted) ts.push_back(&f);
        const auto est = kl_tensorized_many(s0, ts, data.x, m_y, derive_seed(seed, kDivergenceStream));
        for (std::size_t i = 0; i < Ks.size(); ++i) run.kl[Ks[i]] = est[i];
        run.kl_selected = run.kl.at(run.selection.chosen_K);
        if (!per_K_kl) run.kl.clear();
        run.ok = true;
    } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
    }
    return run;
}

double loglog_slope(const std::vector<double>& n, const std::vector<double>& value) {
    if (n.size() != value.size() || n.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired points");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < n.size(); ++i) {
        if (!(n[i] > 0.0) || !(value[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
        lx.push_back(std::log(n[i]));
        ly.push_back(std::log(value[i]));
    }
    const double mx = mean_of(lx), my = mean_of(ly);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("loglog_slope: all sizes equal");
    return sxy / sxx;
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& log) {
    cfg.validate();
    const MixtureParams truth = cfg.truth();
    const auto Ks = cfg.k_range();
    const auto seeds = cfg.seed_list();

    // jobs: every seed at the main size (per-K KL), then every ladder size
    // that differs from it (selected KL only)
    struct Job {
        long n;
        std::uint64_t seed;
        bool per_K;
    };
    std::vector<Job> jobs;
    for (auto s : seeds) jobs.push_back({cfg.n, s, true});
    std::vector<long> ladder = cfg.ladder;
    std::sort(ladder.begin(), ladder.end());
    ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());
    for (long m : ladder) {
        if (m == cfg.n) continue;
        for (auto s : seeds) jobs.push_back({m, s, false});
    }
    std::vector<SeedRun> runs(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
        runs[i] = run_seed(truth, jobs[i].n, jobs[i].seed, Ks, cfg.spec_template, cfg.select, cfg.m_y, jobs[i].per_K);
    });

    std::filesystem::create_directories(cfg.output_dir);
    ExperimentOutcome out;
    out.seeds_total = static_cast<int>(seeds.size());
    json failures = json::array();
    for (const auto& r : runs) {
        if (r.ok) continue;
        if (r.n == cfg.n) ++out.seeds_failed;
        failures.push_back({{"n", r.n}, {"seed", r.seed}, {"error", r.error}});
        if (log) log("seed " + std::to_string(r.seed) + " (n=" + std::to_string(r.n) + ") failed: " + r.error);
    }

    std::ostringstream box, hist, path, trace, risk;
    box << "n,seed,K,kl,mc_std_error,selected\n";
    path << "n,seed,kappa,dimension,K\n";
    trace << "n,seed,K,iteration,loglik\n";
    std::map<int, std::vector<double>> kl_by_K, se_by_K;
    std::vector<double> kl_sel, se_sel, kappa_hats;
    std::map<int, int> hist_counts;
    json per_seed = json::array();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto& r = runs[i];
        if (!r.ok) continue;
        for (const auto& [K, e] : r.kl) {
            box << r.n << ',' << r.seed << ',' << K << ',' << format_double(e.value) << ','
                << format_double(e.mc_std_error) << ',' << (K == r.selection.chosen_K ? 1 : 0) << '\n';
            kl_by_K[K].push_back(e.value);
            se_by_K[K].push_back(e.mc_std_error);
        }
        kl_sel.push_back(r.kl_selected.value);
        se_sel.push_back(r.kl_selected.mc_std_error);
        ++hist_counts[r.selection.chosen_K];
        if (r.selection.kappa_hat) kappa_hats.push_back(*r.selection.kappa_hat);
        for (const auto& pt : r.selection.dim_path) {
            path << r.n << ',' << r.seed << ',' << format_double(pt.kappa) << ',' << pt.dimension << ',' << pt.K << '\n';
        }
        for (const auto& [K, f] : r.selection.fits) {
            for (std::size_t it = 0; it < f.loglik_trace.size(); ++it) {
                trace << r.n << ',' << r.seed << ',' << K << ',' << it << ',' << format_double(f.loglik_trace[it]) << '\n';
            }
        }
        per_seed.push_back({{"seed", r.seed},
                            {"chosen_K", r.selection.chosen_K},
                            {"kappa_hat", r.selection.kappa_hat ? json(*r.selection.kappa_hat) : json(nullptr)},
                            {"kappa_used", r.selection.kappa_used},
                            {"kl_selected", r.kl_selected.value}});
    }
    hist << "n,K,count\n";
    for (int K : Ks) hist << cfg.n << ',' << K << ',' << (hist_counts.count(K) ? hist_counts.at(K) : 0) << '\n';

    json hist_json = json::object();
    for (const auto& [K, c] : hist_counts) hist_json[std::to_string(K)] = c;
    json per_K = json::array();
    int argmin_K = 0;
    double argmin_val = std::numeric_limits<double>::infinity();
    for (const auto& [K, v] : kl_by_K) {
        const double m = mean_of(v);
        per_K.push_back({{"K", K}, {"mean_kl", m}, {"mc_std_error", combined_se(se_by_K[K])}, {"fits", v.size()}});
        if (v.size() == kl_sel.size() && m < argmin_val) {
            argmin_val = m;
            argmin_K = K;
        }
    }

    json summary = {
        {"example", cfg.example},
        {"n", cfg.n},
        {"seeds", seeds},
        {"K_range", Ks},
        {"kappa_mode", cfg.select.kappa_mode == SelectConfig::KappaMode::slope ? "slope" : "fixed"},
        {"kappa", cfg.select.kappa},
        {"penalty", cfg.select.penalty.to_string()},
        {"m_y", cfg.m_y},
        {"per_K", per_K},
        {"selected",
         {{"mean_kl", mean_of(kl_sel)}, {"mc_std_error", combined_se(se_sel)}, {"runs", kl_sel.size()}}},
        {"argmin_K_of_mean_kl", argmin_K > 0 ? json(argmin_K) : json(nullptr)},
        {"reference", {{"dim", kReferenceDim}, {"dim_over_2n", static_cast<double>(kReferenceDim) / (2.0 * cfg.n)}}},
        {"selected_K_histogram", hist_json},
        {"kappa_hat", {{"values", kappa_hats}, {"median", kappa_hats.empty() ? json(nullptr) : json(median_of(kappa_hats))}}},
        {"per_seed", per_seed},
        {"failures", failures},
        {"seeds_failed", out.seeds_failed},
    };

    if (!ladder.empty()) {
        risk << "n,seed,chosen_K,kl,mc_std_error\n";
        std::vector<double> sizes, means;
        json rows = json::array();
        for (long m : ladder) {
            std::vector<double> v, se;
            for (const auto& r : runs) {
                if (r.n != m || !r.ok) continue;
                risk << r.n << ',' << r.seed << ',' << r.selection.chosen_K << ',' << format_double(r.kl_selected.value)
                     << ',' << format_double(r.kl_selected.mc_std_error) << '\n';
                v.push_back(r.kl_selected.value);
                se.push_back(r.kl_selected.mc_std_error);
            }
            if (v.empty()) continue;
            sizes.push_back(static_cast<double>(m));
            means.push_back(mean_of(v));
            rows.push_back({{"n", m},
                            {"mean_kl", mean_of(v)},
                            {"mc_std_error", combined_se(se)},
                            {"runs", v.size()},
                            {"dim_over_2n", static_cast<double>(kReferenceDim) / (2.0 * m)}});
        }
        json ladder_json = {{"note", "ladder sizes are a default choice"}, {"points", rows}};
        if (sizes.size() >= 2 && std::all_of(means.begin(), means.end(), [](double x) { return x > 0.0; })) {
            ladder_json["loglog_slope"] = loglog_slope(sizes, means);
        } else {
            ladder_json["loglog_slope"] = nullptr;
        }
        summary["ladder"] = ladder_json;
        save_text(cfg.output_dir / "risk_vs_n.csv", risk.str());
    }

    save_text(cfg.output_dir / "boxplot.csv", box.str());
    save_text(cfg.output_dir / "selected_k.csv", hist.str());
    save_text(cfg.output_dir / "slope_path.csv", path.str());
    save_text(cfg.output_dir / "loglik_trace.csv", trace.str());
    save_json(cfg.output_dir / "summary.json", summary);
    out.summary = std::move(summary);
    return out;
}

}  // namespace mixreg
