#include "mixreg/divergence.hpp"

#include <cmath>
#include <stdexcept>

#include "mixreg/errors.hpp"
#include "mixreg/parallel.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

namespace {

// Per-draw integrand of a divergence as a function of (ln s(y), ln t(y)).
enum class Integrand { kl, jkl, hellinger };

double integrand(Integrand kind, double ls, double lt, double rho) {
    switch (kind) {
        case Integrand::kl: return ls - lt;
        case Integrand::jkl: {
            // -(1/rho) ln((1 - rho) + rho exp(lt - ls))
            const double a = std::log1p(-rho);
            const double b = std::log(rho) + (lt - ls);
            const double hi = std::max(a, b), lo = std::min(a, b);
            return -(hi + std::log1p(std::exp(lo - hi))) / rho;
        }
        case Integrand::hellinger: return 2.0 - 2.0 * std::exp(0.5 * (lt - ls));
    }
    return 0.0;
}

struct PointStats {
    std::vector<double> mean;
    std::vector<double> var;  // sample variance of the draws
};

std::vector<DivergenceEstimate> estimate(Integrand kind, const ConditionalDensity& s,
                                         const std::vector<const ConditionalDensity*>& ts, double rho,
                                         const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed, int threads) {
    if (m_y < 2) throw std::invalid_argument("divergence: m_y must be >= 2");
    if (x_points.rows() < 1) throw std::invalid_argument("divergence: no covariate points");
    for (const auto* t : ts) {
        if (t == nullptr) throw std::invalid_argument("divergence: null density");
        if (t->y_dim() != s.y_dim()) throw std::invalid_argument("divergence: response dimensions differ");
    }
    const auto n = static_cast<std::size_t>(x_points.rows());
    const std::size_t J = ts.size();
    std::vector<PointStats> stats(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const Eigen::VectorXd x = x_points.row(static_cast<Eigen::Index>(i)).transpose();
        const auto s_at = s.at(x);
        std::vector<std::unique_ptr<DensityAtX>> t_at;
        for (const auto* t : ts) t_at.push_back(t->at(x));
        Rng rng = make_rng(seed, i);
        Eigen::VectorXd y(s.y_dim());
        std::vector<double> sum(J, 0.0), sum_sq(J, 0.0);
        // sums are taken around the first draw to limit cancellation
        std::vector<double> shift(J, 0.0);
        for (int j = 0; j < m_y; ++j) {
            s_at->sample(rng, y);
            const double ls = s_at->log_density(y);
            for (std::size_t k = 0; k < J; ++k) {
                const double v = integrand(kind, ls, t_at[k]->log_density(y), rho);
                if (j == 0) shift[k] = v;
                const double c = v - shift[k];
                sum[k] += c;
                sum_sq[k] += c * c;
            }
        }
        auto& st = stats[i];
        st.mean.resize(J);
        st.var.resize(J);
        const double m = m_y;
        for (std::size_t k = 0; k < J; ++k) {
            const double mc = sum[k] / m;
            st.mean[k] = shift[k] + mc;
            st.var[k] = std::max(0.0, (sum_sq[k] - m * mc * mc) / (m - 1.0));
        }
    });

    std::vector<DivergenceEstimate> out(J);
    const double nn = static_cast<double>(n);
    for (std::size_t k = 0; k < J; ++k) {
        double total = 0.0, var_total = 0.0;
        for (const auto& st : stats) {
            total += st.mean[k];
            var_total += st.var[k];
        }
        out[k].value = total / nn;
        out[k].mc_std_error = std::sqrt(var_total / static_cast<double>(m_y)) / nn;
        out[k].n_x = static_cast<long>(n);
        out[k].m_y = m_y;
        out[k].rho = kind == Integrand::jkl ? rho : 0.0;
    }
    return out;
}

}  // namespace

DivergenceEstimate kl_tensorized(const ConditionalDensity& s, const ConditionalDensity& t,
                                 const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed, int threads) {
    return estimate(Integrand::kl, s, {&t}, 0.0, x_points, m_y, seed, threads).front();
}

std::vector<DivergenceEstimate> kl_tensorized_many(const ConditionalDensity& s,
                                                   const std::vector<const ConditionalDensity*>& ts,
                                                   const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed,
                                                   int threads) {
    if (ts.empty()) return {};
    return estimate(Integrand::kl, s, ts, 0.0, x_points, m_y, seed, threads);
}

DivergenceEstimate jkl_tensorized(const ConditionalDensity& s, const ConditionalDensity& t, double rho,
                                  const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed, int threads) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("jkl: rho must lie in (0,1)");
    return estimate(Integrand::jkl, s, {&t}, rho, x_points, m_y, seed, threads).front();
}

DivergenceEstimate hellinger_tensorized(const ConditionalDensity& s, const ConditionalDensity& t,
                                        const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed,
                                        int threads) {
    return estimate(Integrand::hellinger, s, {&t}, 0.0, x_points, m_y, seed, threads).front();
}

double gaussian_hellinger_exact(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& S1, const Eigen::VectorXd& mu2,
                                const Eigen::MatrixXd& S2) {
    const auto p = mu1.size();
    if (mu2.size() != p || S1.rows() != p || S1.cols() != p || S2.rows() != p || S2.cols() != p) {
        throw std::invalid_argument("gaussian_hellinger_exact: dimension mismatch");
    }
    Eigen::LLT<Eigen::MatrixXd> l1(S1), l2(S2);
    if (l1.info() != Eigen::Success || l2.info() != Eigen::Success) throw NotSPD("gaussian_hellinger_exact: covariance not SPD");
    auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& l) {
        return 2.0 * l.matrixLLT().diagonal().array().log().sum();
    };
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
    const Eigen::MatrixXd P = l1.solve(I) + l2.solve(I);
    Eigen::LLT<Eigen::MatrixXd> lp(P);
    Eigen::LLT<Eigen::MatrixXd> ls(S1 + S2);
    const Eigen::VectorXd diff = mu1 - mu2;
    const double quad = diff.dot(ls.solve(diff));
    const double log_bc = 0.5 * static_cast<double>(p) * std::log(2.0) - 0.25 * (logdet(l1) + logdet(l2)) -
                          0.5 * logdet(lp) - 0.25 * quad;
    return 2.0 * (1.0 - std::exp(log_bc));
}

double jkl_hellinger_constant(double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("jkl_hellinger_constant: rho must lie in (0,1)");
    return (1.0 / rho) * std::min((1.0 - rho) / rho, 1.0) * (std::log1p(rho / (1.0 - rho)) - rho);
}

}  // namespace mixreg
