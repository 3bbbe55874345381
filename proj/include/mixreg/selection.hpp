#pragma once

// Model collection indexed by K, penalized likelihood criterion and the
// slope heuristic for calibrating the penalty multiplier kappa.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/init.hpp"
#include "mixreg/model.hpp"
#include "mixreg/model_spec.hpp"
#include "mixreg/newton_em.hpp"

namespace mixreg {

/// (K-1) binom(dW+d,d) + K p binom(dY+d,d) + K p(p+1)/2 for the free
/// covariance structure.
long model_dim(const ModelSpec& spec);

/// pen(m) / kappa:
///   dim_only     dim
///   dim_plus_xm  dim + K
///   theory(C)    (C + ln n) dim + K
struct PenaltyMode {
    enum class Kind { dim_only, dim_plus_xm, theory };
    Kind kind = Kind::dim_only;
    double C = 0.0;

    static PenaltyMode dim_only() { return {}; }
    static PenaltyMode dim_plus_xm() { return {Kind::dim_plus_xm, 0.0}; }
    static PenaltyMode theory(double C) { return {Kind::theory, C}; }

    /// "dim", "dim+xm" or "theory:<C>".
    static PenaltyMode parse(const std::string& s);
    std::string to_string() const;
};

/// Penalty per unit of kappa for model `spec` fitted on n observations.
double penalty_shape(const ModelSpec& spec, PenaltyMode mode, long n);

/// -loglik + kappa * penalty_shape.
double penalized_criterion(double loglik, const ModelSpec& spec, double kappa, PenaltyMode mode, long n);
double penalized_criterion(const FitResult& fit, const ModelSpec& spec, double kappa, PenaltyMode mode, long n);

/// 100 log-spaced values in [0.01, 10] by default.
std::vector<double> log_grid(double lo = 0.01, double hi = 10.0, int count = 100);

struct Candidate {
    int K = 1;
    long dim = 0;
    double shape = 0.0;  // penalty per unit kappa
    double loglik = 0.0;
};

/// Index of the minimizing candidate at kappa; ties go to the smaller
/// dimension, then the smaller K.
std::size_t argmin_criterion(const std::vector<Candidate>& cands, double kappa);

struct DimPathPoint {
    double kappa = 0.0;
    long dimension = 0;
    int K = 0;
};

struct SlopeHeuristic {
    double kappa_hat = 0.0;
    double kappa_prescribed = 0.0;  // 2 * kappa_hat
    std::vector<DimPathPoint> path;
};

/// Selected dimension along the grid. Throws std::invalid_argument for a grid
/// that is not strictly increasing.
std::vector<DimPathPoint> dimension_path(const std::vector<Candidate>& cands, const std::vector<double>& kappa_grid);

/// kappa_hat is the grid point right after the largest drop of the selected
/// dimension (ties: smallest kappa). Needs at least three candidates spanning
/// three distinct dimensions; throws NoJump when the path is constant.
SlopeHeuristic slope_heuristic(const std::vector<Candidate>& cands, const std::vector<double>& kappa_grid);

struct SelectConfig {
    enum class KappaMode { fixed, slope };

    KappaMode kappa_mode = KappaMode::fixed;
    double kappa = 1.0;
    PenaltyMode penalty{};
    std::vector<double> kappa_grid;  // empty: log_grid()
    InitConfig init{};
    FitConfig fit{};
    int max_restarts = 10;
    int threads = 1;
};

struct SelectionResult {
    std::map<int, FitResult> fits;
    std::map<int, double> criterion;
    std::map<int, long> dims;
    std::map<int, std::string> failures;  // K -> error message for excluded fits
    double kappa_used = 1.0;
    std::optional<double> kappa_hat;
    int chosen_K = 0;
    std::vector<DimPathPoint> dim_path;
    std::vector<std::string> warnings;
};

/// Initializes and fits every K of the range, then minimizes the penalized
/// criterion. A fit hitting DegenerateComponent restarts from a fresh
/// initialization up to cfg.max_restarts times; failures are recorded and
/// excluded. Throws Error when every K fails.
SelectionResult select(const Dataset& data, const std::vector<int>& K_range, const ModelSpec& spec_template,
                       const SelectConfig& cfg);

/// Fit of one model with the restart policy of select().
FitResult fit_with_restarts(const Dataset& data, const ModelSpec& spec, const InitConfig& init_cfg,
                            const FitConfig& fit_cfg, int max_restarts);

}  // namespace mixreg
