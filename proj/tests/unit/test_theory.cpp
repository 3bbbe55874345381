#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mixreg/errors.hpp"
#include "mixreg/selection.hpp"
#include "mixreg/theory.hpp"

using namespace mixreg;

namespace {

// Exact fraction a/b with 64-bit integers.
struct Frac {
    long long a, b;
    Frac(long long x, long long y) : a(x), b(y) {
        const long long g = std::gcd(a, b);
        a /= g;
        b /= g;
    }
    Frac operator+(Frac o) const { return {a * o.b + o.a * b, b * o.b}; }
    Frac operator-(Frac o) const { return {a * o.b - o.a * b, b * o.b}; }
    Frac operator*(Frac o) const { return {a * o.a, b * o.b}; }
    Frac operator/(Frac o) const { return {a * o.b, b * o.a}; }
    double value() const { return static_cast<double>(a) / static_cast<double>(b); }
};

ModelSpec spec(int K, int dW, int dY, double T, int p = 1) {
    ModelSpec s;
    s.K = K;
    s.weight_degree = dW;
    s.mean_degree = dY;
    s.weight_bound = T;
    s.mean_bound = T;
    s.p = p;
    return s;
}

GaussianComponent affine_component(double a, double b, double var) {
    GaussianComponent g;
    g.mean = {PolyFn(1, 1, Eigen::Vector2d(a, b))};
    g.L = var;
    g.D = Eigen::MatrixXd::Identity(1, 1);
    g.A = Eigen::VectorXd::Ones(1);
    return g;
}

}  // namespace

TEST_SUITE("theory") {
    TEST_CASE("entropy constants of the affine family") {
        const auto s = spec(2, 1, 1, 10.0);
        CHECK(std::abs(entropy_C_W(s) - std::log(std::sqrt(2.0) + 20.0)) <= 1e-12);
        CHECK(std::abs(entropy_C_Upsilon(s) - std::log(std::sqrt(2.0) + 20.0)) <= 1e-12);
        CHECK(entropy_C_W(s) == doctest::Approx(3.0638).epsilon(1e-4));
        // p = 2, d = 1, degree 2, T = 3: sqrt 2 * 3 * 3
        const auto s2 = spec(2, 2, 2, 3.0, 2);
        CHECK(std::abs(entropy_C_Upsilon(s2) - std::log(std::sqrt(2.0) + std::sqrt(2.0) * 3 * 3)) <= 1e-12);
    }

    TEST_CASE("gamma kappa against rational arithmetic") {
        const Frac k(17, 29);
        const Frac g = Frac(25, 1) * (k - Frac(1, 2)) / (Frac(49, 1) * (Frac(1, 1) + Frac(2, 5) * k));
        CHECK(g.a == 625);
        CHECK(g.b == 17542);
        CHECK(std::abs(gamma_kappa(17.0 / 29.0) - g.value()) <= 1e-12);
        for (int num : {3, 4, 7}) {
            const Frac kk(num, 5);
            const Frac gg = Frac(25, 1) * (kk - Frac(1, 2)) / (Frac(49, 1) * (Frac(1, 1) + Frac(2, 5) * kk));
            CHECK(std::abs(gamma_kappa(kk.value()) - gg.value()) <= 1e-12);
        }
        CHECK_THROWS_AS(gamma_kappa(0.5), std::invalid_argument);
    }

    TEST_CASE("collection constants and monotonicity") {
        const auto s = spec(2, 1, 1, 10.0);
        const auto c = entropy_constants(s, 20, 1.0);
        CHECK(c.C_W == entropy_C_W(s));
        CHECK(c.frakC == doctest::Approx(c.C_W + std::log(20 * std::sqrt(19.0) / (3 * std::sqrt(3.0))) + c.C1));
        CHECK(c.C_penalty == doctest::Approx(2 * std::pow(std::sqrt(c.frakC) + std::sqrt(std::numbers::pi), 2)));
        CHECK(c.gamma_kappa == gamma_kappa(1.0));
        CHECK(entropy_constants(spec(2, 1, 1, 20.0), 20, 1.0).C_W > c.C_W);
        CHECK(entropy_constants(s, 40, 1.0).frakC > c.frakC);
        CHECK(entropy_constants(s, 20, 1.0, 2.0).C1 > c.C1);
        CHECK_THROWS_AS(entropy_constants(s, 1, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(entropy_constants(s, 20, 0.5), std::invalid_argument);
        auto bad = s;
        bad.box.L_min = 5.0;
        bad.box.L_max = 1.0;
        CHECK_THROWS_AS(entropy_constants(bad, 20, 1.0), InvalidBox);
    }

    TEST_CASE("structure counts") {
        auto s = spec(3, 1, 1, 10.0, 2);
        auto z = structure_dims(s);
        // free means: K mean sets of p binom(dY + d, d) coefficients each
        CHECK(z.Z_upsilon == 3 * 2 * 2);
        CHECK(z.Z_L == 3);
        CHECK(z.D_script == 12 + 3 + 1 * 3 + 1 * 3);
        s.structure.volume = Sharing::common;
        s.structure.rotation = Sharing::known;
        z = structure_dims(s);
        CHECK(z.Z_L == 1);
        CHECK(z.Z_D == 0);
        CHECK(gaussian_entropy_C(s, 1.0) > 0.0);
    }

    TEST_CASE("sigma_m bisection and its bound") {
        const auto r = sigma_m_bound(8, 5.0, 2000);
        const double a = std::sqrt(5.0) + std::sqrt(std::numbers::pi);
        const double bound = 8 * (2 * a * a + std::max(0.0, std::log(2000 / (a * a * 8))));
        CHECK(r.n_sigma_sq <= bound);
        CHECK(r.bound == doctest::Approx(bound).epsilon(1e-12));
        const double lhs = std::sqrt(8.0) * (a + std::sqrt(std::log(1 / std::min(r.sigma_m, 1.0))));
        CHECK(std::abs(lhs - std::sqrt(2000.0) * r.sigma_m) < 1e-9 * std::sqrt(2000.0) * r.sigma_m);
        CHECK(sigma_m_bound(8, 5.0, 8000).sigma_m < r.sigma_m);

        std::mt19937_64 rng(3);
        std::uniform_int_distribution<long> uD(1, 500), un(1, 1000000);
        std::uniform_real_distribution<double> uC(0.01, 50);
        for (int t = 0; t < 1000; ++t) {
            const long D = uD(rng), n = un(rng);
            const double C = uC(rng);
            const auto b = sigma_m_bound(D, C, n);
            CHECK(b.n_sigma_sq <= b.bound);
        }
    }

    TEST_CASE("penalties and the Kraft sum") {
        const auto s = spec(2, 1, 1, 10.0);
        const auto c = entropy_constants(s, 20, 1.0);
        CHECK(theoretical_penalty(s, 2000, c, 0.0) == 0.0);
        CHECK(theoretical_penalty(s, 2000, c, 1.0) == doctest::Approx((c.C_penalty + std::log(2000.0)) * 8 + 2));
        for (int K = 1; K <= 10; ++K) {
            auto sk = s;
            sk.K = K;
            CHECK(theoretical_penalty(sk, 2000, c, 1.5) >= 1.5 * std::log(2000.0) * static_cast<double>(model_dim(sk)));
            CHECK(milder_penalty(sk, 2000, c, 1.0) <= theoretical_penalty(sk, 2000, c, 1.0));
        }
        CHECK(kraft_bound() == doctest::Approx(1 / (std::exp(1.0) - 1)).epsilon(1e-15));
        CHECK(kraft_bound() == doctest::Approx(0.582).epsilon(1e-3));
        double prev = 0;
        for (int K = 1; K <= 60; ++K) {
            const double s_k = kraft_partial_sum(K);
            if (K <= 30) CHECK(s_k > prev);
            CHECK(s_k <= kraft_bound());
            prev = s_k;
        }
        CHECK(kraft_bound() - prev <= 1e-15);
    }

    TEST_CASE("bracket width formula stays below (delta/5)^2 at or below the cap") {
        for (int p = 1; p <= 3; ++p) {
            for (double kappa : {kKappaMin, 1.0, 2.0}) {
                for (int i = 1; i <= 50; ++i) {
                    const double delta = std::sqrt(2.0) * i / 50.0;
                    const double cap = delta_sigma_cap(delta, kappa, p);
                    for (double f : {1.0, 0.5, 0.1}) CHECK(bracket_size_sq(f * cap, kappa, p) <= delta * delta / 25.0);
                }
            }
        }
        CHECK(bracket_size_sq(0.0, 1.0, 2) == doctest::Approx(0.0));
    }

    TEST_CASE("zero-gap bracket holds") {
        const auto g = affine_component(1.0, -2.0, 0.8);
        BracketConfig cfg;
        cfg.box = CovBox{0.5, 2.0, 0.5, 2.0};
        BracketReport r;
        CHECK_NOTHROW(r = verify_gaussian_bracket(g, g, 0.5, 1.0, cfg));
        CHECK(r.preconditions_ok());
        CHECK(r.containment_checked);
        CHECK(r.containment_ok);
        CHECK(r.size_ok);
        CHECK(r.points_checked > 0);
    }

    TEST_CASE("random admissible brackets never fail") {
        BracketConfig cfg;
        cfg.strict = false;
        cfg.box = CovBox{0.5, 2.0, 0.5, 2.0};
        cfg.grid_points_1d = 2001;
        for (int p : {1, 2}) {
            const double ds = delta_sigma_cap(0.5, 1.0, p);
            int violations = 0, bad_pre = 0;
            for (int t = 0; t < (p == 1 ? 200 : 20); ++t) {
                Rng rng = make_rng(11, static_cast<std::uint64_t>(t));
                const auto inst = random_bracket_instance(p, ds, 1.0, cfg.box, rng);
                const auto r = verify_gaussian_bracket(inst.truth, inst.tilde, 0.5, 1.0, cfg);
                violations += r.violated();
                bad_pre += !r.preconditions_ok();
            }
            CHECK(violations == 0);
            CHECK(bad_pre == 0);
        }
    }

    TEST_CASE("mean gap ten times too large breaks containment") {
        BracketConfig cfg;
        cfg.strict = false;
        cfg.box = CovBox{0.5, 2.0, 0.5, 2.0};
        cfg.grid_points_1d = 2001;
        const double ds = delta_sigma_cap(0.5, 1.0, 1);
        int violations = 0;
        for (int t = 0; t < 50; ++t) {
            Rng rng = make_rng(12, static_cast<std::uint64_t>(t));
            const auto inst = random_bracket_instance(1, ds, 1.0, cfg.box, rng, 10.0);
            const auto r = verify_gaussian_bracket(inst.truth, inst.tilde, 0.5, 1.0, cfg);
            violations += !r.containment_ok;
            if (!r.containment_ok) {
                REQUIRE(r.witness.has_value());
                CHECK((r.witness->log_value < r.witness->log_lower || r.witness->log_value > r.witness->log_upper));
            }
        }
        CHECK(violations >= 1);
        // strict mode throws on the same kind of input
        Rng rng = make_rng(12, 0);
        const auto inst = random_bracket_instance(1, ds, 1.0, cfg.box, rng, 10.0);
        cfg.strict = true;
        CHECK_THROWS_AS(verify_gaussian_bracket(inst.truth, inst.tilde, 0.5, 1.0, cfg), Error);
    }
}
