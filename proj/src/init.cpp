#include "mixreg/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mixreg/errors.hpp"
#include "mixreg/parallel.hpp"

namespace mixreg {

namespace {

constexpr int kMaxVerticalRedraws = 100;
constexpr int kMaxConsecutiveDegenerate = 10;
constexpr std::uint64_t kCleverStream = 0xC1E7E5;

void require_scalar(const Dataset& data) {
    if (data.d() != 1 || data.p() != 1) {
        throw UnsupportedDimension("line-based initialization requires d = 1 and p = 1");
    }
}

// Two distinct indices with different X, redrawn up to 100 times.
Line line_through_random_pair(const Dataset& data, const std::vector<Eigen::Index>& pool, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int attempt = 0; attempt <= kMaxVerticalRedraws; ++attempt) {
        const std::size_t a = pick(rng);
        std::size_t b = pick(rng);
        while (b == a) b = pick(rng);
        const auto i = pool[a];
        const auto j = pool[b];
        const double dx = data.x(j, 0) - data.x(i, 0);
        if (dx != 0.0) {
            const double slope = (data.y(j, 0) - data.y(i, 0)) / dx;
            return {data.y(i, 0) - slope * data.x(i, 0), slope};
        }
    }
    throw TooFewPoints("could not draw two observations with distinct covariates");
}

// Least-squares line on a subset; keeps the previous slope when X has no spread.
Line refit_line(const Dataset& data, const std::vector<Eigen::Index>& members, const Line& previous) {
    const auto m = static_cast<double>(members.size());
    double sx = 0.0, sy = 0.0;
    for (auto i : members) {
        sx += data.x(i, 0);
        sy += data.y(i, 0);
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0.0, sxy = 0.0;
    for (auto i : members) {
        const double dx = data.x(i, 0) - mx;
        sxx += dx * dx;
        sxy += dx * (data.y(i, 0) - my);
    }
    if (members.size() >= 2 && sxx > 0.0) {
        const double slope = sxy / sxx;
        return {my - slope * mx, slope};
    }
    return {my - previous.slope * mx, previous.slope};
}

double sq(double v) { return v * v; }

std::vector<int> assign_to_lines(const Dataset& data, const std::vector<Line>& lines, double& objective) {
    const auto n = data.n();
    std::vector<int> assignment(static_cast<std::size_t>(n));
    objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t k = 0; k < lines.size(); ++k) {
            const double r = sq(data.y(i, 0) - lines[k](data.x(i, 0)));
            if (r < best) {
                best = r;
                arg = static_cast<int>(k);
            }
        }
        assignment[static_cast<std::size_t>(i)] = arg;
        objective += best;
    }
    return assignment;
}

std::vector<std::vector<Eigen::Index>> members_of(const std::vector<int>& assignment, std::size_t K) {
    std::vector<std::vector<Eigen::Index>> members(K);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        members[static_cast<std::size_t>(assignment[i])].push_back(static_cast<Eigen::Index>(i));
    }
    return members;
}

double objective_of(const Dataset& data, const std::vector<Line>& lines) {
    double obj = 0.0;
    assign_to_lines(data, lines, obj);
    return obj;
}

// Plain Lloyd k-means on the rows of P with Forgy initialization.
std::vector<int> lloyd_kmeans(const Eigen::MatrixXd& P, int k, int max_iters, Rng& rng) {
    const auto n = static_cast<std::size_t>(P.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::MatrixXd centers(k, P.cols());
    for (int c = 0; c < k; ++c) centers.row(c) = P.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(c)]));
    std::vector<int> assignment(n, -1);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (centers.rowwise() - P.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
            if (assignment[i] != static_cast<int>(best)) {
                assignment[i] = static_cast<int>(best);
                changed = true;
            }
        }
        if (!changed) break;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, P.cols());
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(assignment[i]) += P.row(static_cast<Eigen::Index>(i));
            counts[assignment[i]] += 1.0;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0.0) centers.row(c) = sums.row(c) / counts[c];
        }
    }
    return assignment;
}

double sample_sd(const Eigen::VectorXd& v) {
    const double m = v.mean();
    const double ss = (v.array() - m).square().sum();
    return v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

std::vector<Line> clever_candidates(const Dataset& data, int K, const InitConfig& cfg) {
    const double sx = sample_sd(data.x.col(0));
    const double sy = sample_sd(data.y.col(0));
    Eigen::MatrixXd P(data.n(), 2);
    P.col(0) = data.x.col(0) / (sx > 0.0 ? sx : 1.0);
    P.col(1) = data.y.col(0) / (sy > 0.0 ? sy : 1.0);
    const int clusters = std::min<int>(K * cfg.kmeans_overfactor, static_cast<int>(data.n()));
    Rng rng = make_rng(cfg.seed, kCleverStream);
    const auto assignment = lloyd_kmeans(P, clusters, 100, rng);
    std::vector<Line> candidates;
    for (const auto& members : members_of(assignment, static_cast<std::size_t>(clusters))) {
        if (members.size() <= 2) continue;
        const Line fitted = refit_line(data, members, Line{});
        candidates.push_back(fitted);
    }
    return candidates;
}

std::vector<Line> draw_candidate_lines(const Dataset& data, const std::vector<Line>& candidates, int K, Rng& rng) {
    std::vector<Line> lines;
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size() && static_cast<int>(lines.size()) < K; ++i) {
        lines.push_back(candidates[order[i]]);
    }
    if (static_cast<int>(lines.size()) < K) {
        const auto extra = random_lines(data, K - static_cast<int>(lines.size()), rng);
        lines.insert(lines.end(), extra.begin(), extra.end());
    }
    return lines;
}

struct Trial {
    MixtureParams params;
    double loglik = -std::numeric_limits<double>::infinity();
    bool degenerate = false;
};

Trial race(const Dataset& data, const ModelSpec& spec, const MixtureParams& start, const InitConfig& cfg,
           const FitConfig& fit_cfg) {
    FitConfig race_cfg = fit_cfg;
    race_cfg.stop_rule = FitConfig::StopRule::fixed_steps;
    race_cfg.max_em_iters = cfg.race_steps;
    Trial t;
    try {
        FitResult r = fit(data, spec, start, race_cfg);
        t.loglik = r.final_loglik();
        t.params = std::move(r.params);
    } catch (const DegenerateComponent&) {
        t.degenerate = true;
    }
    return t;
}

}  // namespace

std::string to_string(InitStrategy s) {
    switch (s) {
        case InitStrategy::regular: return "regular";
        case InitStrategy::naive: return "naive";
        case InitStrategy::clever: return "clever";
    }
    return "regular";
}

InitStrategy init_strategy_from_string(const std::string& s) {
    if (s == "regular") return InitStrategy::regular;
    if (s == "naive") return InitStrategy::naive;
    if (s == "clever") return InitStrategy::clever;
    throw std::invalid_argument("unknown initialization strategy '" + s + "'");
}

void InitConfig::validate() const {
    if (n_trials < 1) throw std::invalid_argument("InitConfig: n_trials must be >= 1");
    if (race_steps < 1) throw std::invalid_argument("InitConfig: race_steps must be >= 1");
    if (final_steps < 1) throw std::invalid_argument("InitConfig: final_steps must be >= 1");
    if (kmeans_overfactor < 1) throw std::invalid_argument("InitConfig: kmeans_overfactor must be >= 1");
    if (kmeans_max_iters < 1) throw std::invalid_argument("InitConfig: kmeans_max_iters must be >= 1");
}

std::vector<Line> random_lines(const Dataset& data, int K, Rng& rng) {
    require_scalar(data);
    if (K < 1) throw std::invalid_argument("random_lines: K must be >= 1");
    if (data.n() < 2 * static_cast<Eigen::Index>(K)) throw TooFewPoints("random_lines: need at least 2K observations");
    std::vector<Eigen::Index> all(static_cast<std::size_t>(data.n()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    std::vector<Line> lines;
    lines.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) lines.push_back(line_through_random_pair(data, all, rng));
    return lines;
}

YAxisClustering y_axis_kmeans(const Dataset& data, std::vector<Line> lines, int max_iters, Rng& rng,
                              double variance_floor) {
    require_scalar(data);
    if (lines.empty()) throw std::invalid_argument("y_axis_kmeans: need at least one line");
    const std::size_t K = lines.size();
    YAxisClustering out;
    double objective = 0.0;
    out.assignment = assign_to_lines(data, lines, objective);
    out.objective_trace.push_back(objective);
    for (int it = 0; it < max_iters; ++it) {
        auto members = members_of(out.assignment, K);
        for (std::size_t k = 0; k < K; ++k) {
            if (!members[k].empty()) {
                lines[k] = refit_line(data, members[k], lines[k]);
                continue;
            }
            const auto largest = std::max_element(members.begin(), members.end(),
                                                  [](const auto& a, const auto& b) { return a.size() < b.size(); });
            if (largest->size() >= 2) {
                try {
                    lines[k] = line_through_random_pair(data, *largest, rng);
                    ++out.reseeds;
                } catch (const TooFewPoints&) {
                    // all points of the largest cluster share one covariate value
                }
            }
        }
        ++out.iterations;
        const auto assignment = assign_to_lines(data, lines, objective);
        out.objective_trace.push_back(objective);
        if (assignment == out.assignment) break;
        out.assignment = assignment;
    }
    out.lines = lines;
    const auto members = members_of(out.assignment, K);
    for (std::size_t k = 0; k < K; ++k) {
        double ss = 0.0;
        for (auto i : members[k]) ss += sq(data.y(i, 0) - lines[k](data.x(i, 0)));
        const double var = members[k].empty() ? 0.0 : ss / static_cast<double>(members[k].size());
        out.variances.push_back(std::max(var, variance_floor));
    }
    return out;
}

MixtureParams params_from_lines(const Dataset& data, const ModelSpec& spec, const std::vector<Line>& lines,
                                const std::vector<double>& variances) {
    require_scalar(data);
    if (lines.size() != static_cast<std::size_t>(spec.K) || variances.size() != lines.size()) {
        throw std::invalid_argument("params_from_lines: expected K lines and K variances");
    }
    const double x_mean = data.x.col(0).mean();
    MixtureParams params;
    params.K = spec.K;
    params.d = 1;
    params.p = 1;
    for (int k = 0; k < spec.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        params.weights.push_back(PolyFn::zero(1, spec.weight_degree, spec.weight_bound));
        Eigen::VectorXd c = Eigen::VectorXd::Zero(spec.mean_degree + 1);
        if (spec.mean_degree >= 1) {
            c[0] = lines[ku].intercept;
            c[1] = lines[ku].slope;
        } else {
            c[0] = lines[ku](x_mean);
        }
        params.means.push_back({PolyFn(1, spec.mean_degree, c, spec.mean_bound)});
        params.covs.push_back(Eigen::MatrixXd::Constant(1, 1, variances[ku]));
    }
    return params;
}

InitResult initialize_detailed(const Dataset& data, const ModelSpec& spec, const InitConfig& cfg,
                               const FitConfig& fit_cfg) {
    cfg.validate();
    spec.validate();
    require_scalar(data);
    if (spec.d != 1 || spec.p != 1) throw UnsupportedDimension("initialization requires d = 1 and p = 1");
    const double floor = variance_floor(fit_cfg.floor, data, spec.K, fit_cfg.alpha);

    std::vector<Line> candidates;
    if (cfg.strategy == InitStrategy::clever) candidates = clever_candidates(data, spec.K, cfg);

    auto build_trial = [&](std::size_t t) {
        Rng rng = make_rng(cfg.seed, t);
        if (cfg.strategy == InitStrategy::naive) {
            const auto lines = random_lines(data, spec.K, rng);
            const double pooled = std::max(objective_of(data, lines) / static_cast<double>(data.n()), floor);
            return params_from_lines(data, spec, lines, std::vector<double>(lines.size(), pooled));
        }
        const auto lines = cfg.strategy == InitStrategy::clever ? draw_candidate_lines(data, candidates, spec.K, rng)
                                                                : random_lines(data, spec.K, rng);
        const auto clusters = y_axis_kmeans(data, lines, cfg.kmeans_max_iters, rng, floor);
        return params_from_lines(data, spec, clusters.lines, clusters.variances);
    };

    const std::size_t n_trials = cfg.strategy == InitStrategy::naive ? 1 : static_cast<std::size_t>(cfg.n_trials);
    std::vector<Trial> trials(n_trials);
    if (cfg.threads <= 1) {
        int consecutive = 0;
        for (std::size_t t = 0; t < n_trials; ++t) {
            trials[t] = race(data, spec, build_trial(t), cfg, fit_cfg);
            consecutive = trials[t].degenerate ? consecutive + 1 : 0;
            if (consecutive >= kMaxConsecutiveDegenerate) {
                throw InitFailure("initialization failed: " + std::to_string(consecutive) +
                                  " consecutive degenerate trials");
            }
        }
    } else {
        parallel_for(n_trials, cfg.threads, [&](std::size_t t) { trials[t] = race(data, spec, build_trial(t), cfg, fit_cfg); });
        int consecutive = 0;
        for (const auto& t : trials) {
            consecutive = t.degenerate ? consecutive + 1 : 0;
            if (consecutive >= kMaxConsecutiveDegenerate) {
                throw InitFailure("initialization failed: 10 consecutive degenerate trials");
            }
        }
    }

    InitResult out;
    out.winner = -1;
    for (std::size_t t = 0; t < n_trials; ++t) {
        out.trial_logliks.push_back(trials[t].loglik);
        if (trials[t].degenerate) {
            ++out.degenerate_trials;
            continue;
        }
        if (out.winner < 0 || trials[t].loglik > trials[static_cast<std::size_t>(out.winner)].loglik) {
            out.winner = static_cast<int>(t);
        }
    }
    if (out.winner < 0) throw InitFailure("initialization failed: every trial degenerated");
    out.raced_loglik = trials[static_cast<std::size_t>(out.winner)].loglik;
    out.params = std::move(trials[static_cast<std::size_t>(out.winner)].params);
    return out;
}

MixtureParams initialize(const Dataset& data, const ModelSpec& spec, const InitConfig& cfg, const FitConfig& fit_cfg) {
    return initialize_detailed(data, spec, cfg, fit_cfg).params;
}

}  // namespace mixreg
