#pragma once

// Initialization strategies for Newton-EM on scalar regression data (d = p = 1):
//   regular: random lines -> K-means along the Y axis -> short EM races, best of n_trials
//   naive:   random lines + one pooled variance, a single raced trial
//   clever:  (K * overfactor)-means on standardized (x, y), candidate lines from the
//            cluster regressions, then as regular

#include <cstdint>
#include <string>
#include <vector>

#include "mixreg/model.hpp"
#include "mixreg/model_spec.hpp"
#include "mixreg/newton_em.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

/// x -> intercept + slope * x
struct Line {
    double intercept = 0.0;
    double slope = 0.0;

    double operator()(double x) const { return intercept + slope * x; }
};

enum class InitStrategy { regular, naive, clever };
std::string to_string(InitStrategy s);
InitStrategy init_strategy_from_string(const std::string& s);

struct InitConfig {
    InitStrategy strategy = InitStrategy::regular;
    int n_trials = 50;
    int race_steps = 3;
    int final_steps = 10;  // EM steps of the final fit when the fixed-step rule is used
    int kmeans_overfactor = 5;
    int kmeans_max_iters = 20;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

/// K lines, each through two distinct observations with different X.
/// Throws UnsupportedDimension unless d = p = 1, TooFewPoints if n < 2K.
std::vector<Line> random_lines(const Dataset& data, int K, Rng& rng);

struct YAxisClustering {
    std::vector<int> assignment;
    std::vector<Line> lines;
    std::vector<double> variances;       // residual variance per cluster, floored
    std::vector<double> objective_trace;  // sum_i min_k (y_i - line_k(x_i))^2, initial then per iteration
    int iterations = 0;
    int reseeds = 0;
};

/// Lloyd iterations where the distance of point i to cluster k is
/// |y_i - line_k(x_i)|; lines are refit by least squares on their cluster.
/// Empty clusters get a line through two random points of the largest cluster.
YAxisClustering y_axis_kmeans(const Dataset& data, std::vector<Line> lines, int max_iters, Rng& rng,
                              double variance_floor);

/// Mixture with zero weights, the given lines as means and the given variances.
MixtureParams params_from_lines(const Dataset& data, const ModelSpec& spec, const std::vector<Line>& lines,
                                const std::vector<double>& variances);

struct InitResult {
    MixtureParams params;
    double raced_loglik = 0.0;
    std::vector<double> trial_logliks;  // -inf for degenerate trials
    int winner = 0;
    int degenerate_trials = 0;
};

/// Runs the configured strategy. `fit_cfg` supplies the variance floor and
/// Newton settings used while racing.
InitResult initialize_detailed(const Dataset& data, const ModelSpec& spec, const InitConfig& cfg,
                               const FitConfig& fit_cfg = {});

MixtureParams initialize(const Dataset& data, const ModelSpec& spec, const InitConfig& cfg,
                         const FitConfig& fit_cfg = {});

}  // namespace mixreg
