#include "mixreg/selection.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mixreg/errors.hpp"
#include "mixreg/parallel.hpp"
#include "mixreg/polybasis.hpp"

namespace mixreg {

long model_dim(const ModelSpec& spec) {
    const auto K = static_cast<long>(spec.K);
    const auto p = static_cast<long>(spec.p);
    const auto bw = static_cast<long>(basis_size(spec.d, spec.weight_degree));
    const auto bm = static_cast<long>(basis_size(spec.d, spec.mean_degree));
    return (K - 1) * bw + K * p * bm + K * p * (p + 1) / 2;
}

PenaltyMode PenaltyMode::parse(const std::string& s) {
    if (s == "dim") return dim_only();
    if (s == "dim+xm") return dim_plus_xm();
    if (s.rfind("theory:", 0) == 0) {
        const std::string arg = s.substr(7);
        std::size_t pos = 0;
        double C = 0.0;
        try {
            C = std::stod(arg, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == arg.size() && pos > 0 && std::isfinite(C)) return theory(C);
    }
    throw std::invalid_argument("penalty must be 'dim', 'dim+xm' or 'theory:<C>', got '" + s + "'");
}

std::string PenaltyMode::to_string() const {
    switch (kind) {
        case Kind::dim_only: return "dim";
        case Kind::dim_plus_xm: return "dim+xm";
        case Kind::theory: {
            char buf[64];
            std::snprintf(buf, sizeof buf, "theory:%.17g", C);
            return buf;
        }
    }
    return "dim";
}

double penalty_shape(const ModelSpec& spec, PenaltyMode mode, long n) {
    const auto dim = static_cast<double>(model_dim(spec));
    switch (mode.kind) {
        case PenaltyMode::Kind::dim_only: return dim;
        case PenaltyMode::Kind::dim_plus_xm: return dim + spec.K;
        case PenaltyMode::Kind::theory:
            if (n < 1) throw std::invalid_argument("penalty_shape: theory mode needs n >= 1");
            return (mode.C + std::log(static_cast<double>(n))) * dim + spec.K;
    }
    return dim;
}

double penalized_criterion(double loglik, const ModelSpec& spec, double kappa, PenaltyMode mode, long n) {
    return -loglik + kappa * penalty_shape(spec, mode, n);
}

double penalized_criterion(const FitResult& fit, const ModelSpec& spec, double kappa, PenaltyMode mode, long n) {
    return penalized_criterion(fit.final_loglik(), spec, kappa, mode, n);
}

std::vector<double> log_grid(double lo, double hi, int count) {
    if (!(lo > 0.0) || !(hi > lo) || count < 2) throw std::invalid_argument("log_grid: need 0 < lo < hi, count >= 2");
    std::vector<double> g(static_cast<std::size_t>(count));
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

std::size_t argmin_criterion(const std::vector<Candidate>& cands, double kappa) {
    if (cands.empty()) throw std::invalid_argument("argmin_criterion: no candidates");
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const double v = -cands[i].loglik + kappa * cands[i].shape;
        const bool better = v < best_val || (v == best_val && (cands[i].dim < cands[best].dim ||
                                                               (cands[i].dim == cands[best].dim && cands[i].K < cands[best].K)));
        if (better) {
            best = i;
            best_val = v;
        }
    }
    return best;
}

std::vector<DimPathPoint> dimension_path(const std::vector<Candidate>& cands, const std::vector<double>& kappa_grid) {
    for (std::size_t i = 1; i < kappa_grid.size(); ++i) {
        if (!(kappa_grid[i] > kappa_grid[i - 1])) throw std::invalid_argument("kappa grid must be strictly increasing");
    }
    std::vector<DimPathPoint> path;
    path.reserve(kappa_grid.size());
    for (double kappa : kappa_grid) {
        const auto& c = cands[argmin_criterion(cands, kappa)];
        path.push_back({kappa, c.dim, c.K});
    }
    return path;
}

SlopeHeuristic slope_heuristic(const std::vector<Candidate>& cands, const std::vector<double>& kappa_grid) {
    std::vector<long> dims;
    for (const auto& c : cands) dims.push_back(c.dim);
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    if (cands.size() < 3 || dims.size() < 3) {
        throw std::invalid_argument("slope heuristic needs at least 3 models with distinct dimensions");
    }
    if (kappa_grid.size() < 2) throw std::invalid_argument("slope heuristic needs at least 2 grid points");
    SlopeHeuristic out;
    out.path = dimension_path(cands, kappa_grid);
    long largest = 0;
    std::size_t at = 0;
    for (std::size_t i = 1; i < out.path.size(); ++i) {
        const long drop = out.path[i - 1].dimension - out.path[i].dimension;
        if (drop > largest) {
            largest = drop;
            at = i;
        }
    }
    if (largest <= 0) throw NoJump("selected dimension is constant along the kappa grid");
    out.kappa_hat = out.path[at].kappa;
    out.kappa_prescribed = 2.0 * out.kappa_hat;
    return out;
}

FitResult fit_with_restarts(const Dataset& data, const ModelSpec& spec, const InitConfig& init_cfg,
                            const FitConfig& fit_cfg, int max_restarts) {
    FitConfig final_cfg = fit_cfg;
    if (final_cfg.stop_rule == FitConfig::StopRule::fixed_steps) final_cfg.max_em_iters = init_cfg.final_steps;
    for (int attempt = 0;; ++attempt) {
        InitConfig ic = init_cfg;
        if (attempt > 0) ic.seed = derive_seed(init_cfg.seed, static_cast<std::uint64_t>(attempt));
        try {
            const MixtureParams start = initialize(data, spec, ic, fit_cfg);
            return fit(data, spec, start, final_cfg);
        } catch (const DegenerateComponent&) {
            if (attempt >= max_restarts) throw;
        } catch (const InitFailure&) {
            if (attempt >= max_restarts) throw;
        }
    }
}

SelectionResult select(const Dataset& data, const std::vector<int>& K_range, const ModelSpec& spec_template,
                       const SelectConfig& cfg) {
    if (K_range.empty()) throw std::invalid_argument("select: empty K range");
    for (int K : K_range) {
        if (K < 1) throw std::invalid_argument("select: K must be >= 1");
    }
    std::vector<int> Ks = K_range;
    std::sort(Ks.begin(), Ks.end());
    Ks.erase(std::unique(Ks.begin(), Ks.end()), Ks.end());

    struct Slot {
        std::optional<FitResult> fit;
        std::string error;
    };
    std::vector<Slot> slots(Ks.size());
    // Fits inside one K stay single-threaded; the pool spans the K values.
    parallel_for(Ks.size(), cfg.threads, [&](std::size_t i) {
        ModelSpec spec = spec_template;
        spec.K = Ks[i];
        InitConfig ic = cfg.init;
        ic.seed = derive_seed(cfg.init.seed, static_cast<std::uint64_t>(Ks[i]));
        ic.threads = 1;
        try {
            slots[i].fit = fit_with_restarts(data, spec, ic, cfg.fit, cfg.max_restarts);
        } catch (const Error& e) {
            slots[i].error = e.what();
        }
    });

    SelectionResult out;
    const long n = static_cast<long>(data.n());
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < Ks.size(); ++i) {
        const int K = Ks[i];
        if (!slots[i].fit) {
            out.failures[K] = slots[i].error;
            out.warnings.push_back("K=" + std::to_string(K) + " excluded: " + slots[i].error);
            continue;
        }
        ModelSpec spec = spec_template;
        spec.K = K;
        out.dims[K] = model_dim(spec);
        cands.push_back({K, out.dims[K], penalty_shape(spec, cfg.penalty, n), slots[i].fit->final_loglik()});
        out.fits.emplace(K, std::move(*slots[i].fit));
    }
    if (cands.empty()) throw Error("select: every fit failed");

    const std::vector<double> grid = cfg.kappa_grid.empty() ? log_grid() : cfg.kappa_grid;
    out.dim_path = dimension_path(cands, grid);
    try {
        const SlopeHeuristic sh = slope_heuristic(cands, grid);
        out.kappa_hat = sh.kappa_hat;
    } catch (const NoJump& e) {
        out.warnings.push_back(std::string("slope heuristic: ") + e.what());
    } catch (const std::invalid_argument& e) {
        out.warnings.push_back(std::string("slope heuristic: ") + e.what());
    }

    out.kappa_used = cfg.kappa;
    if (cfg.kappa_mode == SelectConfig::KappaMode::slope) {
        if (out.kappa_hat) {
            out.kappa_used = 2.0 * *out.kappa_hat;
        } else {
            out.kappa_used = 1.0;
            out.warnings.push_back("slope heuristic unavailable, falling back to kappa = 1");
        }
    }

    out.chosen_K = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cands) {
        ModelSpec spec = spec_template;
        spec.K = c.K;
        const double v = penalized_criterion(c.loglik, spec, out.kappa_used, cfg.penalty, n);
        out.criterion[c.K] = v;
        if (v < best) {  // K ascending, so ties keep the smaller K
            best = v;
            out.chosen_K = c.K;
        }
    }
    return out;
}

}  // namespace mixreg
