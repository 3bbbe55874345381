#pragma once

// Newton-EM: EM whose weight M-substep is a few damped Newton iterations on
// the concave surrogate Q_w = sum_i sum_k tau_ik log pi_k(x_i).

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixreg/model.hpp"
#include "mixreg/model_spec.hpp"

namespace mixreg {

struct VarianceFloor {
    enum class Kind { fixed_10_over_n, data_driven, explicit_value };
    Kind kind = Kind::fixed_10_over_n;
    double value = 0.0;  // used by explicit_value

    static VarianceFloor fixed() { return {}; }
    static VarianceFloor data() { return {Kind::data_driven, 0.0}; }
    static VarianceFloor explicit_floor(double v) { return {Kind::explicit_value, v}; }

    /// Parses "fixed", "data" or a positive number.
    static VarianceFloor parse(const std::string& s);
    std::string to_string() const;
};

struct FitConfig {
    enum class StopRule { tolerance, fixed_steps };

    int max_em_iters = 200;
    double em_rel_tol = 1e-6;  // on |delta loglik| / (1 + |loglik|)
    StopRule stop_rule = StopRule::tolerance;
    int newton_steps = 5;
    VarianceFloor floor{};
    double alpha = 0.05;  // level of the data-driven floor
    bool enforce_coeff_bounds = false;

    void validate() const;
};

enum class TerminatedBy { tol, max_iters, stalled };
std::string to_string(TerminatedBy t);
TerminatedBy terminated_by_from_string(const std::string& s);

struct FitResult {
    MixtureParams params;
    std::vector<double> loglik_trace;  // entry 0 is the (floored) initialization
    int n_iters = 0;
    TerminatedBy terminated_by = TerminatedBy::max_iters;
    /// Last accepted log-likelihood increment: a proxy for how far the final
    /// iterate may still be from a local maximizer.
    double eta_slack = 0.0;
    double floor = 0.0;

    double final_loglik() const { return loglik_trace.back(); }
};

/// Total observed log-likelihood sum_i log s(y_i | x_i).
double log_likelihood(const MixtureParams& params, const Dataset& data);

/// n x K matrix of posterior class probabilities.
Eigen::MatrixXd e_step(const MixtureParams& params, const Dataset& data);

struct MeanCovUpdate {
    std::vector<std::vector<PolyFn>> means;
    std::vector<Eigen::MatrixXd> covs;
};

/// Closed-form M-substep: tau-weighted least squares per component and output
/// coordinate, weighted residual covariance with eigenvalues floored at `floor`.
/// Throws DegenerateComponent when a column of tau carries less than 1e-8 * n
/// mass or its normal equations stay singular after a ridge.
MeanCovUpdate m_step_means_covs(const Dataset& data, const Eigen::MatrixXd& tau, int mean_degree, double floor);

struct WeightUpdate {
    std::vector<PolyFn> weights;
    std::vector<double> surrogate_trace;  // Q_w before the first step, then after each accepted step
    int gradient_fallbacks = 0;
};

/// Up to `steps` backtracked Newton iterations on Q_w over the coefficients of
/// w_2..w_K (w_1 stays zero). Each accepted step does not decrease Q_w.
WeightUpdate newton_weight_update(const MixtureParams& params, const Dataset& data, const Eigen::MatrixXd& tau,
                                  int steps);

/// Lower bound on covariance eigenvalues. The data-driven rule needs p == 1.
double variance_floor(const VarianceFloor& mode, const Dataset& data, int K, double alpha);

/// Quantile of the chi-square distribution with `dof` degrees of freedom,
/// by bisection on the regularized incomplete gamma function.
double chi2_quantile(double dof, double prob);

/// Eigenvalue clipping of a symmetric matrix.
Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& S, double floor);

/// Runs Newton-EM from `init`. The returned trace is non-decreasing.
FitResult fit(const Dataset& data, const ModelSpec& spec, const MixtureParams& init, const FitConfig& cfg);

}  // namespace mixreg
