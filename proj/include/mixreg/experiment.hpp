#pragma once

// The two simulated examples (P: affine truth, NP: quadratic truth) and the
// seed-by-seed pipeline generate -> select -> KL against the truth, with CSV
// output for box plots, K histograms, slope-heuristic paths, likelihood
// traces and the risk-vs-n ladder.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/divergence.hpp"
#include "mixreg/io.hpp"
#include "mixreg/model.hpp"
#include "mixreg/selection.hpp"

namespace mixreg {

enum class Example { P, NP };
std::string to_string(Example e);
Example example_from_string(const std::string& s);

/// Gate w_2(x) = 15x - 7 for both examples; variances 0.3 and 0.4.
/// P:  means -15x + 8 and 0.4x + 0.6.
/// NP: means 15x^2 - 22x + 7.4 and -0.4x^2.
MixtureParams example_truth(Example e);

/// Family fitted in the examples: d = p = 1, affine weights and means.
ModelSpec example_template();

/// Dimension used for the dim/(2n) reference curve (K = 2 affine model).
inline constexpr long kReferenceDim = 8;

/// Truth density from a JSON document: {"example": "P"|"NP"} or a
/// MixtureParams object.
MixtureParams truth_from_json(const json& j);

struct ExperimentConfig {
    std::string example = "P";  // P, NP or custom
    std::optional<MixtureParams> custom_truth;
    long n = 2000;
    std::vector<int> K_range;            // empty: 1..20
    std::vector<std::uint64_t> seeds;    // empty: 1..55
    SelectConfig select{};
    ModelSpec spec_template = example_template();
    int m_y = 1000;
    std::vector<long> ladder;  // sizes for the risk-vs-n runs; empty: none
    std::filesystem::path output_dir = "experiment_out";
    int threads = 1;

    /// n >= 10, K values in [1, 50], m_y >= 2.
    void validate() const;
    MixtureParams truth() const;
    std::vector<int> k_range() const;
    std::vector<std::uint64_t> seed_list() const;
};

/// Default ladder {500, 1000, 2000, 5000, 10000}.
std::vector<long> default_ladder();

struct SeedRun {
    std::uint64_t seed = 0;
    long n = 0;
    bool ok = false;
    std::string error;
    SelectionResult selection;
    std::map<int, DivergenceEstimate> kl;  // per fitted K (empty when not requested)
    DivergenceEstimate kl_selected;
};

/// Data of one seed: sample(truth, U[0,1]^d, n, seed).
Dataset experiment_data(const MixtureParams& truth, long n, std::uint64_t seed);

/// One seed: data, selection over the K range, KL(truth, fit) on the
/// observed design for every fitted K (per_K_kl) or only the selected one.
SeedRun run_seed(const MixtureParams& truth, long n, std::uint64_t seed, const std::vector<int>& K_range,
                 const ModelSpec& spec_template, const SelectConfig& select_cfg, int m_y, bool per_K_kl);

/// Least-squares slope of log(value) on log(n).
double loglog_slope(const std::vector<double>& n, const std::vector<double>& value);

struct ExperimentOutcome {
    json summary;
    int seeds_total = 0;
    int seeds_failed = 0;  // at the main sample size
};

/// Runs every seed (and the ladder when requested), writes boxplot.csv,
/// selected_k.csv, slope_path.csv, loglik_trace.csv, risk_vs_n.csv (ladder
/// only) and summary.json into cfg.output_dir. Per-seed failures are passed
/// to `log` and recorded.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg,
                                 const std::function<void(const std::string&)>& log = {});

}  // namespace mixreg
