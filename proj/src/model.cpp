#include "mixreg/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mixreg/errors.hpp"

namespace mixreg {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite()) {
        throw NotSPD("covariance matrix is not symmetric positive definite");
    }
    Eigen::MatrixXd L = llt.matrixL();
    if ((L.diagonal().array() <= 0.0).any()) throw NotSPD("covariance matrix is singular");
    return L;
}

double log_norm_from_chol(const Eigen::MatrixXd& L) {
    const auto p = static_cast<double>(L.rows());
    return -0.5 * p * kLog2Pi - L.diagonal().array().log().sum();
}

double log_gaussian_chol(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::MatrixXd& L, double log_norm) {
    if (L.rows() == 1) {
        const double z = (y[0] - mean[0]) / L(0, 0);
        return log_norm - 0.5 * z * z;
    }
    const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(y - mean);
    return log_norm - 0.5 * z.squaredNorm();
}

class MixtureAtX final : public DensityAtX {
public:
    MixtureAtX(const MixtureDensity& owner, Eigen::VectorXd log_pi, Eigen::MatrixXd means)
        : owner_(owner), log_pi_(std::move(log_pi)), means_(std::move(means)), scratch_(log_pi_.size()) {}

    double log_density(const Eigen::Ref<const Eigen::VectorXd>& y) const override {
        const auto K = log_pi_.size();
        for (Eigen::Index k = 0; k < K; ++k) {
            const int kk = static_cast<int>(k);
            scratch_[k] = log_pi_[k] + log_gaussian_chol(y, means_.col(k), owner_.chol(kk), owner_.log_norm(kk));
        }
        return log_sum_exp(scratch_);
    }

    void sample(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const override {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double u = unif(rng);
        const auto K = log_pi_.size();
        Eigen::Index k = 0;
        double acc = std::exp(log_pi_[0]);
        while (k + 1 < K && u >= acc) {
            ++k;
            acc += std::exp(log_pi_[k]);
        }
        const auto& L = owner_.chol(static_cast<int>(k));
        const auto p = means_.rows();
        if (p == 1) {
            out[0] = means_(0, k) + L(0, 0) * normal(rng);
            return;
        }
        Eigen::VectorXd z(p);
        for (Eigen::Index j = 0; j < p; ++j) z[j] = normal(rng);
        out = means_.col(k) + L * z;
    }

private:
    const MixtureDensity& owner_;
    Eigen::VectorXd log_pi_;
    Eigen::MatrixXd means_;  // p x K
    mutable Eigen::VectorXd scratch_;
};

}  // namespace

CovarianceDecomp CovarianceDecomp::from_covariance(const Eigen::MatrixXd& cov) {
    cholesky_or_throw(cov);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd values = eig.eigenvalues();
    CovarianceDecomp out;
    out.volume = std::exp(values.array().log().mean());
    out.shape = values / out.volume;
    out.rotation = eig.eigenvectors();
    if (out.rotation.determinant() < 0.0) out.rotation.col(out.rotation.cols() - 1) *= -1.0;
    return out;
}

Eigen::MatrixXd CovarianceDecomp::covariance() const {
    Eigen::MatrixXd S = volume * rotation * shape.asDiagonal() * rotation.transpose();
    return 0.5 * (S + S.transpose());
}

void Dataset::validate() const {
    if (x.rows() < 1) throw std::invalid_argument("Dataset: no observations");
    if (x.rows() != y.rows()) throw std::invalid_argument("Dataset: x and y row counts differ");
    if (x.cols() < 1 || y.cols() < 1) throw std::invalid_argument("Dataset: empty covariate or response dimension");
    for (Eigen::Index i = 0; i < x.rows(); ++i) check_in_hypercube(x.row(i).transpose());
    if (!y.allFinite()) throw std::invalid_argument("Dataset: non-finite response value");
}

void MixtureParams::validate() const {
    const auto Ku = static_cast<std::size_t>(K);
    if (K < 1) throw std::invalid_argument("MixtureParams: K must be >= 1");
    if (weights.size() != Ku || means.size() != Ku || covs.size() != Ku) {
        throw std::invalid_argument("MixtureParams: component count mismatch");
    }
    if (!weights[0].is_zero()) throw std::invalid_argument("MixtureParams: first weight polynomial must be zero");
    const int dw = weights[0].degree();
    const int dm = means[0].empty() ? 0 : means[0][0].degree();
    for (std::size_t k = 0; k < Ku; ++k) {
        if (weights[k].dim_in() != d || weights[k].degree() != dw) {
            throw std::invalid_argument("MixtureParams: inconsistent weight polynomial shape");
        }
        if (means[k].size() != static_cast<std::size_t>(p)) throw std::invalid_argument("MixtureParams: mean arity != p");
        for (const auto& m : means[k]) {
            if (m.dim_in() != d || m.degree() != dm) throw std::invalid_argument("MixtureParams: inconsistent mean shape");
        }
        if (covs[k].rows() != p || covs[k].cols() != p) throw std::invalid_argument("MixtureParams: covariance shape");
        if (!covs[k].isApprox(covs[k].transpose(), 1e-10)) throw NotSPD("covariance matrix is not symmetric");
        cholesky_or_throw(covs[k]);
    }
}

Eigen::VectorXd MixtureParams::mean_at(int k, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const auto& mk = means[static_cast<std::size_t>(k)];
    const Eigen::VectorXd b = basis_vector(d, mk.front().degree(), x);
    Eigen::VectorXd mu(p);
    for (int j = 0; j < p; ++j) mu[j] = mk[static_cast<std::size_t>(j)].coeffs().dot(b);
    return mu;
}

MixtureParams MixtureParams::permuted(const std::vector<int>& perm) const {
    if (perm.size() != static_cast<std::size_t>(K)) throw std::invalid_argument("permuted: wrong permutation size");
    MixtureParams out = *this;
    const PolyFn& pivot = weights[static_cast<std::size_t>(perm[0])];
    for (std::size_t j = 0; j < perm.size(); ++j) {
        const auto src = static_cast<std::size_t>(perm[j]);
        out.weights[j] = j == 0 ? PolyFn::zero(d, pivot.degree(), pivot.bound()) : weights[src] - pivot;
        out.means[j] = means[src];
        out.covs[j] = covs[src];
    }
    return out;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd log_weights(const MixtureParams& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::VectorXd b = basis_vector(params.d, params.weight_degree(), x);
    Eigen::VectorXd w(params.K);
    for (int k = 0; k < params.K; ++k) w[k] = params.weights[static_cast<std::size_t>(k)].coeffs().dot(b);
    return w.array() - log_sum_exp(w);
}

double log_gaussian(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& mean,
                    const Eigen::MatrixXd& cov) {
    const Eigen::MatrixXd L = cholesky_or_throw(cov);
    return log_gaussian_chol(y, mean, L, log_norm_from_chol(L));
}

namespace {

Eigen::VectorXd log_joint(const MixtureParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& y) {
    Eigen::VectorXd out = log_weights(params, x);
    for (int k = 0; k < params.K; ++k) {
        out[k] += log_gaussian(y, params.mean_at(k, x), params.covs[static_cast<std::size_t>(k)]);
    }
    return out;
}

}  // namespace

double log_density(const MixtureParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y) {
    return log_sum_exp(log_joint(params, x, y));
}

Eigen::VectorXd responsibilities(const MixtureParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& y) {
    const Eigen::VectorXd lj = log_joint(params, x, y);
    Eigen::VectorXd tau = (lj.array() - log_sum_exp(lj)).exp();
    return tau / tau.sum();
}

MixtureDensity::MixtureDensity(MixtureParams params) : params_(std::move(params)) {
    params_.validate();
    for (const auto& cov : params_.covs) {
        chol_.push_back(cholesky_or_throw(cov));
        log_norm_.push_back(log_norm_from_chol(chol_.back()));
    }
}

std::unique_ptr<DensityAtX> MixtureDensity::at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const int K = params_.K;
    const int p = params_.p;
    const Eigen::VectorXd bw = basis_vector(params_.d, params_.weight_degree(), x);
    const Eigen::VectorXd bm = basis_vector(params_.d, params_.mean_degree(), x);
    Eigen::VectorXd w(K);
    Eigen::MatrixXd means(p, K);
    for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        w[k] = params_.weights[ku].coeffs().dot(bw);
        for (int j = 0; j < p; ++j) means(j, k) = params_.means[ku][static_cast<std::size_t>(j)].coeffs().dot(bm);
    }
    Eigen::VectorXd log_pi = w.array() - log_sum_exp(w);
    return std::make_unique<MixtureAtX>(*this, std::move(log_pi), std::move(means));
}

XSampler uniform_hypercube(int d) {
    return [d](Rng& rng) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x[j] = unif(rng);
        return x;
    };
}

Dataset sample(const MixtureParams& params, const XSampler& x_sampler, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    const MixtureDensity density(params);
    Rng rng(mix_seed(seed));
    Dataset data;
    data.x.resize(n, params.d);
    data.y.resize(n, params.p);
    Eigen::VectorXd y(params.p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd x = x_sampler(rng);
        if (x.size() != params.d) throw std::invalid_argument("sample: x_sampler returned wrong dimension");
        density.at(x)->sample(rng, y);
        data.x.row(i) = x.transpose();
        data.y.row(i) = y.transpose();
    }
    return data;
}

}  // namespace mixreg
