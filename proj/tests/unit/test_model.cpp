#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/experiment.hpp"
#include "mixreg/model.hpp"

using namespace mixreg;
using testutil::normal_pdf;

namespace {

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

MixtureParams example_p() { return example_truth(Example::P); }

// sum_k pi_k(x) phi(y; mu_k(x), var_k) with plain exp, d = p = 1
double direct_density(const MixtureParams& m, double x, double y) {
    std::vector<double> e(static_cast<std::size_t>(m.K));
    double z = 0.0;
    for (int k = 0; k < m.K; ++k) {
        e[static_cast<std::size_t>(k)] = std::exp(m.weights[static_cast<std::size_t>(k)](v1(x)));
        z += e[static_cast<std::size_t>(k)];
    }
    double s = 0.0;
    for (int k = 0; k < m.K; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        s += e[uk] / z * normal_pdf(y, m.means[uk][0](v1(x)), m.covs[uk](0, 0));
    }
    return s;
}

}  // namespace

TEST_SUITE("model") {
    TEST_CASE("log_weights examples") {
        auto m = testutil::affine_mixture({0, 0}, {0, 0}, {0, 1}, {0, 0}, {1, 1});
        auto lw = log_weights(m, v1(0.3));
        CHECK(lw[0] == doctest::Approx(std::log(0.5)));
        CHECK(lw[1] == doctest::Approx(std::log(0.5)));
        const auto p = example_p();
        lw = log_weights(p, v1(7.0 / 15.0));
        CHECK(lw[0] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
        CHECK(lw[1] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
        CHECK(std::exp(log_weights(p, v1(0.0))[0]) == doctest::Approx(1.0 / (1.0 + std::exp(-7.0))).epsilon(1e-14));
        CHECK(std::exp(log_weights(p, v1(0.0))[0]) == doctest::Approx(0.99909).epsilon(1e-5));
        auto m3 = testutil::affine_mixture({0, 0, 0}, {0, 0, 0}, {0, 1, 2}, {0, 0, 0}, {1, 1, 1});
        const Eigen::VectorXd lw3 = log_weights(m3, v1(0.9));
        for (Eigen::Index k = 0; k < 3; ++k) CHECK(lw3[k] == doctest::Approx(std::log(1.0 / 3.0)));
    }

    TEST_CASE("log_gaussian examples") {
        CHECK(log_gaussian(v1(2.0), v1(2.0), Eigen::MatrixXd::Constant(1, 1, 1.0 / (2 * std::numbers::pi))) ==
              doctest::Approx(0.0).epsilon(1e-14));
        CHECK(log_gaussian(v1(0.0), v1(0.0), Eigen::MatrixXd::Identity(1, 1)) ==
              doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
        CHECK(log_gaussian(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 2), Eigen::MatrixXd::Identity(2, 2)) ==
              doctest::Approx(-std::log(2 * std::numbers::pi)));
        Eigen::MatrixXd bad(2, 2);
        bad << 1, 2, 2, 1;
        CHECK_THROWS_AS(log_gaussian(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0), bad), NotSPD);
    }

    TEST_CASE("log_density examples") {
        auto m1 = testutil::affine_mixture({0}, {0}, {1}, {2}, {0.7});
        CHECK(log_density(m1, v1(0.4), v1(1.1)) == doctest::Approx(std::log(normal_pdf(1.1, 1.8, 0.7))));
        auto m2 = testutil::affine_mixture({0, 0}, {0, 0}, {1, 1}, {2, 2}, {0.7, 0.7});
        CHECK(log_density(m2, v1(0.4), v1(1.1)) == doctest::Approx(std::log(normal_pdf(1.1, 1.8, 0.7))));
        const auto p = example_p();
        CHECK(log_density(p, v1(0.2), v1(5.0)) == doctest::Approx(std::log(direct_density(p, 0.2, 5.0))).epsilon(1e-12));
    }

    TEST_CASE("responsibilities examples") {
        auto m2 = testutil::affine_mixture({0, 0}, {0, 0}, {1, 1}, {2, 2}, {0.7, 0.7});
        auto t = responsibilities(m2, v1(0.4), v1(-3.0));
        CHECK(t[0] == doctest::Approx(0.5));
        CHECK(t[1] == doctest::Approx(0.5));
        auto m1 = testutil::affine_mixture({0}, {0}, {1}, {2}, {0.7});
        CHECK(responsibilities(m1, v1(0.4), v1(3.0))[0] == doctest::Approx(1.0));
        const auto p = example_p();
        const double a = (1.0 / (1.0 + std::exp(-7.0))) * normal_pdf(8.0, 8.0, 0.3);
        const double b = (1.0 - 1.0 / (1.0 + std::exp(-7.0))) * normal_pdf(8.0, 0.6, 0.4);
        CHECK(responsibilities(p, v1(0.0), v1(8.0))[0] == doctest::Approx(a / (a + b)).epsilon(1e-13));
    }

    TEST_CASE("weights sum to one on 1000 random params and points") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> ux(0, 1);
        std::uniform_int_distribution<int> uk(1, 6);
        for (int t = 0; t < 1000; ++t) {
            const auto m = testutil::random_mixture(rng, uk(rng), 2, 1, 20.0);
            const double s = log_weights(m, v1(ux(rng))).array().exp().sum();
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }

    TEST_CASE("log_density is invariant under a common shift of all weights") {
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> ux(0, 1), uy(-5, 5), uc(-4, 4);
        for (int t = 0; t < 200; ++t) {
            auto m = testutil::random_mixture(rng, 3, 1, 1);
            auto shifted = m;
            const PolyFn c(1, 1, Eigen::Vector2d(uc(rng), uc(rng)));
            for (auto& w : shifted.weights) w = w + c;
            const double x = ux(rng), y = uy(rng);
            CHECK(std::abs(log_density(m, v1(x), v1(y)) - log_density(shifted, v1(x), v1(y))) <= 1e-10);
        }
    }

    TEST_CASE("log_density agrees with direct evaluation") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> ux(0, 1), uy(-4, 4);
        for (int t = 0; t < 500; ++t) {
            const auto m = testutil::random_mixture(rng, 1 + t % 5, 1, 2);
            const double x = ux(rng), y = uy(rng);
            const double direct = direct_density(m, x, y);
            if (direct < 1e-250) continue;
            CHECK(std::abs(log_density(m, v1(x), v1(y)) - std::log(direct)) <= 1e-10);
        }
    }

    TEST_CASE("far tails stay finite in log space") {
        const auto p = example_p();
        const double ld = log_density(p, v1(0.0), v1(200.0));
        CHECK(std::isfinite(ld));
        CHECK(ld < -1e4);
        const auto t = responsibilities(p, v1(1.0), v1(-300.0));
        CHECK(std::isfinite(t[0]));
        CHECK(t.sum() == doctest::Approx(1.0));
    }

    TEST_CASE("responsibilities sum to one and follow relabeling") {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> ux(0, 1), uy(-4, 4);
        const std::vector<int> perm{2, 0, 3, 1};
        for (int t = 0; t < 100; ++t) {
            const auto m = testutil::random_mixture(rng, 4, 1, 1);
            const auto mp = m.permuted(perm);
            CHECK(mp.weights[0].is_zero());
            const double x = ux(rng), y = uy(rng);
            const auto a = responsibilities(m, v1(x), v1(y));
            const auto b = responsibilities(mp, v1(x), v1(y));
            CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-12));
            for (int j = 0; j < 4; ++j) CHECK(b[j] == doctest::Approx(a[perm[static_cast<std::size_t>(j)]]).epsilon(1e-10));
            CHECK(log_density(mp, v1(x), v1(y)) == doctest::Approx(log_density(m, v1(x), v1(y))).epsilon(1e-12));
        }
    }

    TEST_CASE("sample mean of a constant-mean model") {
        MixtureParams m;
        m.weights = {PolyFn::zero(1, 0)};
        m.means = {{PolyFn::constant(1, 0, 3.0)}};
        m.covs = {Eigen::MatrixXd::Constant(1, 1, 4.0)};
        const long n = 4000;
        const Dataset data = sample(m, uniform_hypercube(1), n, 3);
        CHECK(std::abs(data.y.mean() - 3.0) <= 4 * 2.0 / std::sqrt(double(n)));
    }

    TEST_CASE("sampled class frequency follows the gate") {
        // example-P gate, means far apart so the class is read off the sign of y
        auto m = example_p();
        m.means[0][0] = PolyFn::constant(1, 1, 100.0);
        m.means[1][0] = PolyFn::constant(1, 1, -100.0);
        const long n = 2000;
        const Dataset data = sample(m, uniform_hypercube(1), n, 17);
        const double freq = (data.y.array() > 0.0).cast<double>().mean();
        const double expected =
            testutil::trapezoid([](double x) { return 1.0 / (1.0 + std::exp(15 * x - 7)); }, 0.0, 1.0, 100000);
        const double sd = std::sqrt(expected * (1 - expected) / n);
        CHECK(std::abs(freq - expected) <= 3 * sd);
        // closed form of the same integral: (1/15) ln((1 + e^7) / (1 + e^-8))
        CHECK(expected == doctest::Approx(std::log((1 + std::exp(7.0)) / (1 + std::exp(-8.0))) / 15.0).epsilon(1e-9));
    }

    TEST_CASE("sampling is deterministic per seed") {
        const auto p = example_p();
        const Dataset a = sample(p, uniform_hypercube(1), 500, 9);
        const Dataset b = sample(p, uniform_hypercube(1), 500, 9);
        const Dataset c = sample(p, uniform_hypercube(1), 500, 10);
        CHECK(a.x == b.x);
        CHECK(a.y == b.y);
        CHECK(a.x != c.x);
    }

    TEST_CASE("validation errors") {
        auto p = example_p();
        p.weights[0] = PolyFn(1, 1, Eigen::Vector2d(1, 0));
        CHECK_THROWS(p.validate());
        auto q = example_p();
        q.covs[1] = Eigen::MatrixXd::Constant(1, 1, -1.0);
        CHECK_THROWS(q.validate());
        Dataset d;
        d.x = Eigen::MatrixXd::Constant(2, 1, 1.5);
        d.y = Eigen::MatrixXd::Zero(2, 1);
        CHECK_THROWS_AS(d.validate(), DomainError);
    }

    TEST_CASE("covariance decomposition round trip") {
        Eigen::MatrixXd S(2, 2);
        S << 2.0, 0.6, 0.6, 1.0;
        const auto dec = CovarianceDecomp::from_covariance(S);
        CHECK(dec.shape.prod() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK((dec.rotation.transpose() * dec.rotation - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-10);
        CHECK(dec.rotation.determinant() == doctest::Approx(1.0));
        CHECK((dec.covariance() - S).norm() <= 1e-12);
    }

    TEST_CASE("example NP means at x = 1") {
        const auto np = example_truth(Example::NP);
        CHECK(np.mean_at(0, v1(1.0))[0] == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(np.mean_at(1, v1(1.0))[0] == doctest::Approx(-0.4).epsilon(1e-12));
        CHECK(np.covs[0](0, 0) == 0.3);
        CHECK(np.covs[1](0, 0) == 0.4);
    }
}
