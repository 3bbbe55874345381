#pragma once

// Monte-Carlo tensorized divergences between conditional densities:
//   D(s, t) = (1/n) sum_i E_{Y ~ s(.|x_i)} [ f(ln s(Y|x_i), ln t(Y|x_i)) ]
// with m_y draws of Y per design point x_i.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mixreg/model.hpp"

namespace mixreg {

struct DivergenceEstimate {
    double value = 0.0;
    double mc_std_error = 0.0;
    long n_x = 0;
    int m_y = 0;
    double rho = 0.0;  // JKL only
};

/// Draws for point i come from the stream derive_seed(seed, i), so estimates
/// with the same seed and design reuse the same draws (common random
/// numbers) and do not depend on `threads`.
DivergenceEstimate kl_tensorized(const ConditionalDensity& s, const ConditionalDensity& t,
                                 const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed, int threads = 1);

/// (1/rho) KL(s, (1 - rho) s + rho t), mixture evaluated in log space.
DivergenceEstimate jkl_tensorized(const ConditionalDensity& s, const ConditionalDensity& t, double rho,
                                  const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed, int threads = 1);

/// Squared Hellinger distance int (sqrt s - sqrt t)^2 through 2 - 2 E_s[sqrt(t/s)].
DivergenceEstimate hellinger_tensorized(const ConditionalDensity& s, const ConditionalDensity& t,
                                        const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed,
                                        int threads = 1);

/// KL(s, t_j) for several t_j from one set of draws of s.
std::vector<DivergenceEstimate> kl_tensorized_many(const ConditionalDensity& s,
                                                   const std::vector<const ConditionalDensity*>& ts,
                                                   const Eigen::MatrixXd& x_points, int m_y, std::uint64_t seed,
                                                   int threads = 1);

/// Closed-form squared Hellinger distance between two Gaussians. Throws NotSPD.
double gaussian_hellinger_exact(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& S1, const Eigen::VectorXd& mu2,
                                const Eigen::MatrixXd& S2);

/// Constant C_rho with C_rho d^2 <= JKL_rho:
///   (1/rho) min((1 - rho)/rho, 1) (ln(1 + rho/(1 - rho)) - rho).
double jkl_hellinger_constant(double rho);

}  // namespace mixreg
