#pragma once

// Entropy and penalty constants of the polynomial model collection, the
// sigma_m fixed point, and a numerical checker for the Gaussian bracket
// construction t^- <= Phi <= t^+.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixreg/model_spec.hpp"
#include "mixreg/polybasis.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

/// 17/29, the smallest admissible kappa of the bracket construction.
inline constexpr double kKappaMin = 17.0 / 29.0;

/// 25 (kappa - 1/2) / (49 (1 + 2 kappa / 5)). Throws std::invalid_argument for kappa < 17/29.
double gamma_kappa(double kappa);

/// ln(sqrt 2 + T_W binom(dW + d, d)).
double entropy_C_W(const ModelSpec& spec);
/// ln(sqrt 2 + sqrt p binom(dY + d, d) T_Y).
double entropy_C_Upsilon(const ModelSpec& spec);

struct EntropyConstants {
    double C_W = 0.0;
    double C_Upsilon = 0.0;
    double C1 = 0.0;
    double frakC = 0.0;      // C_W + ln(20 sqrt(K_max - 1) / (3 sqrt 3)) + C1
    double C_penalty = 0.0;  // 2 (sqrt(frakC) + sqrt(pi))^2
    double gamma_kappa = 0.0;
    double kappa = 1.0;
    double c_U = 1.0;
    int K_max = 2;
};

/// Constants of the polynomial collection with free covariances. Throws
/// InvalidBox for a box with non-positive entries or reversed bounds and
/// std::invalid_argument for kappa < 17/29 or K_max < 2.
EntropyConstants entropy_constants(const ModelSpec& spec, int K_max, double kappa, double c_U = 1.0);

struct StructureDims {
    long Z_upsilon = 0;
    long Z_L = 0;
    long Z_D = 0;
    long Z_A = 0;
    long D_script = 0;  // Z_upsilon + Z_L + p(p-1)/2 Z_D + (p-1) Z_A
};

/// Counts for the structure tag of `spec` (known: 0, common: 1 / one mean
/// set, free: K / K mean sets).
StructureDims structure_dims(const ModelSpec& spec);

/// Constant of the Gaussian part for a general structure, weighted by the
/// Z counts. Throws InvalidBox / std::invalid_argument as entropy_constants.
double gaussian_entropy_C(const ModelSpec& spec, double kappa, double c_U = 1.0);

struct SigmaBound {
    double sigma_m = 0.0;
    double n_sigma_sq = 0.0;
    double bound = 0.0;  // D (2 (sqrt C + sqrt pi)^2 + (ln(n / ((sqrt C + sqrt pi)^2 D)))_+)
};

/// Root of sqrt(D) (sqrt C + sqrt pi + sqrt(ln(1 / min(sigma, 1)))) = sqrt(n) sigma
/// by bisection. Throws std::logic_error if n sigma^2 exceeds the bound.
SigmaBound sigma_m_bound(long D_m, double C_m, long n);

/// kappa_mult ((C_penalty + ln n) dim + K).
double theoretical_penalty(const ModelSpec& spec, long n, const EntropyConstants& consts, double kappa_mult);

/// kappa_mult (D (2 (sqrt frakC + sqrt pi)^2 + (ln(n / ((sqrt frakC + sqrt pi)^2 D)))_+) + K), D = dim.
double milder_penalty(const ModelSpec& spec, long n, const EntropyConstants& consts, double kappa_mult);

/// Bound 1 / (e - 1) on sum_K exp(-K).
double kraft_bound();
/// sum_{K=1..K_max} exp(-K).
double kraft_partial_sum(int K_max);

// ---------------------------------------------------------------------------
// Gaussian bracket check, d = 1 covariates.

/// Gaussian regression component: mean polynomials in x in [0,1] and
/// Sigma = L D diag(A) D'.
struct GaussianComponent {
    std::vector<PolyFn> mean;  // p polynomials with d = 1
    double L = 1.0;
    Eigen::MatrixXd D;
    Eigen::VectorXd A;

    int p() const { return static_cast<int>(A.size()); }
    Eigen::VectorXd mean_at(double x) const;
    Eigen::MatrixXd covariance() const;
};

/// Squared Hellinger width of [t^-, t^+]:
/// (1+k ds)^-p + (1+k ds)^p - 2 2^(p/2) ((1+ds) + (1+ds)^-1)^(-p/2).
double bracket_size_sq(double delta_sigma, double kappa, int p);

/// delta / (5 p sqrt(kappa^2 cosh(2 kappa / 5) + 1/2)).
double delta_sigma_cap(double delta, double kappa, int p);

struct BracketConfig {
    double delta_sigma = 0.0;  // 0: use the cap
    int x_values = 21;         // covariate values on [0,1] for containment
    int mean_check_points = 201;
    int grid_points_1d = 10001;  // p = 1
    int grid_points_2d = 101;    // per axis, p = 2
    double sd_range = 8.0;
    bool strict = true;  // throw instead of reporting failures
    CovBox box{};
};

struct BracketWitness {
    double x = 0.0;
    Eigen::VectorXd y;
    double log_lower = 0.0;
    double log_value = 0.0;
    double log_upper = 0.0;
};

struct BracketReport {
    double delta = 0.0;
    double kappa = 1.0;
    double delta_sigma = 0.0;
    double delta_sigma_cap = 0.0;
    std::vector<std::string> failed_conditions;
    bool containment_checked = false;
    bool containment_ok = true;
    long points_checked = 0;
    std::optional<BracketWitness> witness;
    double size_sq = 0.0;
    double size_bound_sq = 0.0;  // (delta / 5)^2
    bool size_ok = true;

    bool preconditions_ok() const { return failed_conditions.empty(); }
    bool violated() const { return !containment_ok || !size_ok; }
};

/// Checks the closeness conditions between `truth` and `tilde`, builds
/// t^-/t^+ from `tilde` and tests containment on a grid (p <= 2) and the
/// closed-form width. In strict mode throws PreconditionViolated or
/// BracketViolated; otherwise everything goes into the report.
BracketReport verify_gaussian_bracket(const GaussianComponent& truth, const GaussianComponent& tilde, double delta,
                                      double kappa, const BracketConfig& cfg = {});

struct BracketInstance {
    GaussianComponent truth;
    GaussianComponent tilde;
};

/// Random pair meeting the closeness conditions at delta_sigma (p = 1 or 2,
/// affine means). mean_gap_factor > 1 scales the mean gap beyond its bound.
BracketInstance random_bracket_instance(int p, double delta_sigma, double kappa, const CovBox& box, Rng& rng,
                                        double mean_gap_factor = 1.0);

}  // namespace mixreg
