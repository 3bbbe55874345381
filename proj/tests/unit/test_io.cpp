#include <doctest.h>

#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/experiment.hpp"
#include "mixreg/io.hpp"

using namespace mixreg;

TEST_SUITE("io") {
    TEST_CASE("doubles round trip") {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-1e6, 1e6);
        for (int t = 0; t < 1000; ++t) {
            const double v = u(rng) * std::pow(10.0, static_cast<double>(t % 40 - 20));
            CHECK(parse_double(format_double(v)) == v);
        }
        CHECK(parse_double(format_double(std::numeric_limits<double>::denorm_min())) ==
              std::numeric_limits<double>::denorm_min());
        CHECK_THROWS_AS(parse_double("1.5x"), FormatError);
        CHECK_THROWS_AS(parse_double(""), FormatError);
    }

    TEST_CASE("dataset CSV round trip") {
        const Dataset d = sample(example_truth(Example::NP), uniform_hypercube(1), 200, 3);
        std::stringstream ss;
        write_dataset_csv(ss, d);
        const std::string text = ss.str();
        CHECK(text.rfind("x1,y1\n", 0) == 0);
        const Dataset back = read_dataset_csv(ss);
        CHECK(back.x == d.x);
        CHECK(back.y == d.y);
        std::stringstream again;
        write_dataset_csv(again, back);
        CHECK(again.str() == text);
    }

    TEST_CASE("multivariate header") {
        Dataset d;
        d.x = Eigen::MatrixXd::Constant(2, 2, 0.25);
        d.y = Eigen::MatrixXd::Constant(2, 3, -1.5);
        std::stringstream ss;
        write_dataset_csv(ss, d);
        CHECK(ss.str().rfind("x1,x2,y1,y2,y3\n", 0) == 0);
        const Dataset b = read_dataset_csv(ss);
        CHECK(b.d() == 2);
        CHECK(b.p() == 3);
    }

    TEST_CASE("malformed CSV") {
        std::stringstream a("x1,y1\n0.5\n");
        CHECK_THROWS_AS(read_dataset_csv(a), FormatError);
        std::stringstream b("a,b\n0.5,1\n");
        CHECK_THROWS_AS(read_dataset_csv(b), FormatError);
        std::stringstream c("x1,y1\n0.5,abc\n");
        CHECK_THROWS_AS(read_dataset_csv(c), FormatError);
        std::stringstream e("x1,y1\n");
        CHECK_THROWS(read_dataset_csv(e));
        CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv"), Error);
    }

    TEST_CASE("params and fit JSON round trip") {
        std::mt19937_64 rng(2);
        const auto m = testutil::random_mixture(rng, 3, 2, 1);
        const auto back = params_from_json(to_json(m));
        CHECK(back.K == 3);
        for (int k = 0; k < 3; ++k) {
            const auto uk = static_cast<std::size_t>(k);
            CHECK(back.weights[uk] == m.weights[uk]);
            CHECK(back.means[uk][0] == m.means[uk][0]);
            CHECK(back.covs[uk] == m.covs[uk]);
        }
        FitResult f;
        f.params = m;
        f.loglik_trace = {-10.5, -9.25, -9.0};
        f.n_iters = 2;
        f.terminated_by = TerminatedBy::tol;
        f.eta_slack = 0.25;
        f.floor = 0.005;
        const auto fb = fit_result_from_json(to_json(f));
        CHECK(fb.loglik_trace == f.loglik_trace);
        CHECK(fb.terminated_by == TerminatedBy::tol);
        CHECK(fb.floor == 0.005);
        CHECK(to_json(fb).dump() == to_json(f).dump());
        CHECK_THROWS_AS(params_from_json(json{{"K", 2}}), FormatError);
    }

    TEST_CASE("spec JSON") {
        ModelSpec s;
        s.K = 4;
        s.p = 2;
        s.structure.volume = Sharing::common;
        s.box.L_max = 7.0;
        const auto b = model_spec_from_json(to_json(s));
        CHECK(b.K == 4);
        CHECK(b.p == 2);
        CHECK(b.structure == s.structure);
        CHECK(b.box.L_max == 7.0);
        const auto partial = model_spec_from_json(json{{"K", 3}});
        CHECK(partial.K == 3);
        CHECK(partial.weight_bound == ModelSpec{}.weight_bound);
    }

    TEST_CASE("selection JSON and dim path CSV round trip") {
        SelectionResult r;
        FitResult f;
        f.params = example_truth(Example::P);
        f.loglik_trace = {-100.0};
        r.fits[2] = f;
        r.criterion[2] = 108.0;
        r.dims[2] = 8;
        r.failures[5] = "degenerate";
        r.kappa_used = 1.2;
        r.kappa_hat = 0.6;
        r.chosen_K = 2;
        r.dim_path = {{0.1, 14, 3}, {1.0, 8, 2}};
        const auto b = selection_result_from_json(to_json(r));
        CHECK(b.chosen_K == 2);
        CHECK(b.criterion == r.criterion);
        CHECK(b.failures == r.failures);
        CHECK(*b.kappa_hat == 0.6);
        CHECK(b.dim_path.size() == 2);
        CHECK(to_json(b).dump() == to_json(r).dump());

        std::stringstream ss;
        write_dim_path_csv(ss, r.dim_path);
        CHECK(ss.str().rfind("kappa,dimension,K\n", 0) == 0);
        const auto p = read_dim_path_csv(ss);
        REQUIRE(p.size() == 2);
        CHECK(p[1].kappa == 1.0);
        CHECK(p[1].dimension == 8);
        CHECK(p[1].K == 2);
    }

    TEST_CASE("file helpers create directories") {
        const auto dir = std::filesystem::temp_directory_path() / "mixreg_io_test" / "nested";
        std::filesystem::remove_all(dir.parent_path());
        save_json(dir / "a.json", json{{"v", 1}});
        CHECK(load_json(dir / "a.json").at("v") == 1);
        CHECK_THROWS_AS(load_json(dir / "missing.json"), Error);
        save_text(dir / "b.txt", "not json");
        CHECK_THROWS_AS(load_json(dir / "b.txt"), FormatError);
        std::filesystem::remove_all(dir.parent_path());
    }
}
