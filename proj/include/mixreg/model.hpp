#pragma once

// Mixture of Gaussian regressions with logistic weights:
//   s(y|x) = sum_k pi_k(x) Phi(y; mu_k(x), Sigma_k),   pi = softmax(w_1(x), ..., w_K(x)).

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mixreg/polybasis.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

/// Sigma = volume * rotation * diag(shape) * rotation', det(shape) = 1,
/// rotation in SO(p).
struct CovarianceDecomp {
    double volume = 1.0;
    Eigen::MatrixXd rotation;
    Eigen::VectorXd shape;

    static CovarianceDecomp from_covariance(const Eigen::MatrixXd& cov);
    Eigen::MatrixXd covariance() const;
};

struct Dataset {
    Eigen::MatrixXd x;  // n x d, rows in [0,1]^d
    Eigen::MatrixXd y;  // n x p

    Eigen::Index n() const { return x.rows(); }
    int d() const { return static_cast<int>(x.cols()); }
    int p() const { return static_cast<int>(y.cols()); }

    /// Throws on empty data, mismatched rows, points outside the hypercube or
    /// non-finite responses.
    void validate() const;
};

struct MixtureParams {
    int K = 1;
    int d = 1;
    int p = 1;
    std::vector<PolyFn> weights;             // K entries, weights[0] == 0
    std::vector<std::vector<PolyFn>> means;  // K x p
    std::vector<Eigen::MatrixXd> covs;       // K SPD p x p matrices

    int weight_degree() const { return weights.empty() ? 0 : weights.front().degree(); }
    int mean_degree() const { return means.empty() ? 0 : means.front().front().degree(); }

    /// Checks shapes, the pinned first weight and symmetric positive definiteness.
    void validate() const;

    /// Mean vector of component k at x.
    Eigen::VectorXd mean_at(int k, const Eigen::Ref<const Eigen::VectorXd>& x) const;

    /// Same density with component labels permuted: result component j is
    /// this component perm[j]. Weights are re-pinned so that the new first
    /// weight is zero.
    MixtureParams permuted(const std::vector<int>& perm) const;
};

/// log pi_k(x), normalized with log-sum-exp.
Eigen::VectorXd log_weights(const MixtureParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Exact Gaussian log-density via Cholesky. Throws NotSPD.
double log_gaussian(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& mean,
                    const Eigen::MatrixXd& cov);

double log_density(const MixtureParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y);

/// Posterior class probabilities tau_k(x, y).
Eigen::VectorXd responsibilities(const MixtureParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& y);

/// Numerically stable log(sum(exp(v))).
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

// ---------------------------------------------------------------------------
// Evaluation interface shared with the divergence estimators.

/// A conditional density frozen at one covariate point.
class DensityAtX {
public:
    virtual ~DensityAtX() = default;
    virtual double log_density(const Eigen::Ref<const Eigen::VectorXd>& y) const = 0;
    virtual void sample(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const = 0;
};

class ConditionalDensity {
public:
    virtual ~ConditionalDensity() = default;
    virtual int y_dim() const = 0;
    virtual std::unique_ptr<DensityAtX> at(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
};

/// Precomputes Cholesky factors of a MixtureParams for repeated evaluation.
class MixtureDensity final : public ConditionalDensity {
public:
    explicit MixtureDensity(MixtureParams params);

    const MixtureParams& params() const noexcept { return params_; }
    int y_dim() const override { return params_.p; }
    std::unique_ptr<DensityAtX> at(const Eigen::Ref<const Eigen::VectorXd>& x) const override;

    const Eigen::MatrixXd& chol(int k) const { return chol_[static_cast<std::size_t>(k)]; }
    double log_norm(int k) const { return log_norm_[static_cast<std::size_t>(k)]; }

private:
    MixtureParams params_;
    std::vector<Eigen::MatrixXd> chol_;  // lower Cholesky factors
    std::vector<double> log_norm_;       // -0.5 * (p log 2pi + log|Sigma_k|)
};

using XSampler = std::function<Eigen::VectorXd(Rng&)>;

/// X ~ Uniform[0,1]^d.
XSampler uniform_hypercube(int d);

/// Draws n pairs: X from x_sampler, class k with probability pi_k(X), Y from
/// component k. Deterministic given seed.
Dataset sample(const MixtureParams& params, const XSampler& x_sampler, Eigen::Index n, std::uint64_t seed);

}  // namespace mixreg
