#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mixreg/model.hpp"

namespace testutil {

using mixreg::MixtureParams;
using mixreg::PolyFn;

inline MixtureParams affine_mixture(const std::vector<double>& gate_c, const std::vector<double>& gate_s,
                                    const std::vector<double>& mean_c, const std::vector<double>& mean_s,
                                    const std::vector<double>& var) {
    MixtureParams m;
    m.K = static_cast<int>(var.size());
    m.d = 1;
    m.p = 1;
    for (int k = 0; k < m.K; ++k) {
        m.weights.emplace_back(1, 1, Eigen::Vector2d(gate_c[k], gate_s[k]));
        m.means.push_back({PolyFn(1, 1, Eigen::Vector2d(mean_c[k], mean_s[k]))});
        m.covs.push_back(Eigen::MatrixXd::Constant(1, 1, var[k]));
    }
    return m;
}

// Plain-arithmetic normal density, no logs.
inline double normal_pdf(double y, double mu, double var) {
    return std::exp(-(y - mu) * (y - mu) / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
}

// Composite trapezoid on [a, b].
template <class F>
double trapezoid(F&& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = 0.5 * (f(a) + f(b));
    for (int i = 1; i < n; ++i) s += f(a + i * h);
    return s * h;
}

// Random mixture with d = p = 1 and the given degrees.
inline MixtureParams random_mixture(std::mt19937_64& rng, int K, int dW, int dY, double scale = 2.0) {
    std::uniform_real_distribution<double> u(-scale, scale), v(0.2, 1.5);
    MixtureParams m;
    m.K = K;
    m.d = 1;
    m.p = 1;
    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd w(dW + 1), c(dY + 1);
        for (auto& e : w) e = k == 0 ? 0.0 : u(rng);
        for (auto& e : c) e = u(rng);
        m.weights.emplace_back(1, dW, w);
        m.means.push_back({PolyFn(1, dY, c)});
        m.covs.push_back(Eigen::MatrixXd::Constant(1, 1, v(rng)));
    }
    return m;
}

}  // namespace testutil
