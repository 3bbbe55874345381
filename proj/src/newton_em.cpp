#include "mixreg/newton_em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "mixreg/errors.hpp"

namespace mixreg {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kDegenerateMass = 1e-8;
constexpr int kMaxHalvings = 20;

// Parameters in matrix form over precomputed design matrices.
struct Coeffs {
    Eigen::MatrixXd A;               // weight coefficients, bw x K, column 0 zero
    std::vector<Eigen::MatrixXd> C;  // mean coefficients, bm x p per component
    std::vector<Eigen::MatrixXd> covs;
};

struct Design {
    Eigen::MatrixXd Bw;
    Eigen::MatrixXd Bm;
};

Design make_design(const Dataset& data, int weight_degree, int mean_degree) {
    return {design_matrix(weight_degree, data.x), design_matrix(mean_degree, data.x)};
}

Coeffs to_coeffs(const MixtureParams& params) {
    Coeffs c;
    const auto bw = params.weights.front().coeffs().size();
    const auto bm = params.means.front().front().coeffs().size();
    c.A.resize(bw, params.K);
    for (int k = 0; k < params.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        c.A.col(k) = params.weights[ku].coeffs();
        Eigen::MatrixXd Ck(bm, params.p);
        for (int j = 0; j < params.p; ++j) Ck.col(j) = params.means[ku][static_cast<std::size_t>(j)].coeffs();
        c.C.push_back(std::move(Ck));
    }
    c.covs = params.covs;
    return c;
}

MixtureParams to_params(const Coeffs& c, const MixtureParams& shape) {
    MixtureParams out = shape;
    for (int k = 0; k < shape.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const auto& wk = shape.weights[ku];
        out.weights[ku] = PolyFn(wk.dim_in(), wk.degree(), c.A.col(k), wk.bound());
        for (int j = 0; j < shape.p; ++j) {
            const auto& mkj = shape.means[ku][static_cast<std::size_t>(j)];
            out.means[ku][static_cast<std::size_t>(j)] = PolyFn(mkj.dim_in(), mkj.degree(), c.C[ku].col(j), mkj.bound());
        }
    }
    out.covs = c.covs;
    return out;
}

// Column sweeps keep exp/log vectorized.
Eigen::VectorXd rowwise_lse(const Eigen::MatrixXd& M) {
    Eigen::ArrayXd m = M.col(0).array();
    for (Eigen::Index k = 1; k < M.cols(); ++k) m = m.max(M.col(k).array());
    Eigen::ArrayXd s = Eigen::ArrayXd::Zero(M.rows());
    for (Eigen::Index k = 0; k < M.cols(); ++k) s += (M.col(k).array() - m).exp();
    return (m + s.log()).matrix();
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& W) { return W.colwise() - rowwise_lse(W); }

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NotSPD("covariance matrix is not symmetric positive definite");
    return llt.matrixL();
}

// log pi_k(x_i) + log Phi_k(y_i), n x K.
Eigen::MatrixXd log_joint(const Design& design, const Eigen::MatrixXd& Y, const Coeffs& c) {
    const auto K = c.A.cols();
    const auto p = Y.cols();
    Eigen::MatrixXd lj = log_softmax_rows(design.Bw * c.A);
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Eigen::MatrixXd R = Y - design.Bm * c.C[ku];
        if (p == 1) {
            const double var = c.covs[ku](0, 0);
            if (!(var > 0.0)) throw NotSPD("non-positive variance");
            lj.col(k).array() += -0.5 * (kLog2Pi + std::log(var)) - 0.5 * R.col(0).array().square() / var;
        } else {
            const Eigen::MatrixXd L = cholesky_lower(c.covs[ku]);
            const Eigen::MatrixXd Z = L.triangularView<Eigen::Lower>().solve(R.transpose());
            const double log_norm = -0.5 * static_cast<double>(p) * kLog2Pi - L.diagonal().array().log().sum();
            lj.col(k).array() += log_norm - 0.5 * Z.colwise().squaredNorm().transpose().array();
        }
    }
    return lj;
}

MeanCovUpdate mean_cov_step(const Eigen::MatrixXd& Bm, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& tau,
                            double floor, std::vector<Eigen::MatrixXd>& coeffs_out) {
    const Eigen::Index n = Y.rows();
    const auto K = tau.cols();
    const auto bm = Bm.cols();
    MeanCovUpdate out;
    coeffs_out.clear();
    for (Eigen::Index k = 0; k < K; ++k) {
        const Eigen::VectorXd w = tau.col(k);
        const double mass = w.sum();
        if (!(mass >= kDegenerateMass * static_cast<double>(n))) {
            throw DegenerateComponent("component " + std::to_string(k) + " has vanishing responsibility mass",
                                      static_cast<int>(k));
        }
        const Eigen::MatrixXd WB = w.asDiagonal() * Bm;
        Eigen::MatrixXd G = Bm.transpose() * WB;
        const Eigen::MatrixXd rhs = WB.transpose() * Y;
        Eigen::LLT<Eigen::MatrixXd> llt(G);
        Eigen::MatrixXd Ck;
        bool ok = llt.info() == Eigen::Success;
        if (ok) {
            Ck = llt.solve(rhs);
            ok = Ck.allFinite();
        }
        if (!ok) {
            const double ridge = 1e-10 * G.trace() / static_cast<double>(bm);
            G.diagonal().array() += ridge > 0.0 ? ridge : 1e-300;
            llt.compute(G);
            if (llt.info() == Eigen::Success) Ck = llt.solve(rhs);
            if (llt.info() != Eigen::Success || !Ck.allFinite()) {
                throw DegenerateComponent("weighted normal equations of component " + std::to_string(k) + " are singular",
                                          static_cast<int>(k));
            }
        }
        const Eigen::MatrixXd R = Y - Bm * Ck;
        Eigen::MatrixXd S = R.transpose() * w.asDiagonal() * R / mass;
        S = 0.5 * (S + S.transpose());
        out.covs.push_back(floor_eigenvalues(S, floor));
        coeffs_out.push_back(Ck);
    }
    return out;
}

struct NewtonOutcome {
    Eigen::MatrixXd A;
    std::vector<double> trace;
    int gradient_fallbacks = 0;
};

// Columns b_a * b_b of the weight design, a <= b, for assembling Hessian blocks.
Eigen::MatrixXd basis_products(const Eigen::MatrixXd& Bw) {
    const auto bw = Bw.cols();
    Eigen::MatrixXd P(Bw.rows(), bw * (bw + 1) / 2);
    Eigen::Index c = 0;
    for (Eigen::Index a = 0; a < bw; ++a) {
        for (Eigen::Index b = a; b < bw; ++b) P.col(c++) = Bw.col(a).cwiseProduct(Bw.col(b));
    }
    return P;
}

NewtonOutcome newton_steps(const Eigen::MatrixXd& Bw, Eigen::MatrixXd A, const Eigen::MatrixXd& tau, int steps) {
    const auto n = Bw.rows();
    const auto bw = Bw.cols();
    const auto K = A.cols();
    NewtonOutcome out;
    Eigen::MatrixXd log_pi = log_softmax_rows(Bw * A);
    double q = (tau.array() * log_pi.array()).sum();
    out.trace.push_back(q);
    if (K == 1) {
        out.A = std::move(A);
        return out;
    }
    const Eigen::Index dim = (K - 1) * bw;
    const Eigen::MatrixXd P = basis_products(Bw);
    const Eigen::Index n_pairs = (K - 1) * K / 2;
    for (int s = 0; s < steps; ++s) {
        const Eigen::MatrixXd pi = log_pi.array().exp().matrix();
        const Eigen::MatrixXd diff = tau - pi;
        Eigen::VectorXd g(dim);
        for (Eigen::Index k = 1; k < K; ++k) g.segment((k - 1) * bw, bw) = Bw.transpose() * diff.col(k);
        if (!g.allFinite() || g.lpNorm<Eigen::Infinity>() <= 1e-13 * static_cast<double>(n)) break;

        // Negated Hessian: sum_i [diag(pi_i) - pi_i pi_i'] (x) b_i b_i', components 2..K.
        Eigen::MatrixXd Wts(n, n_pairs);
        Eigen::Index col = 0;
        for (Eigen::Index k = 1; k < K; ++k) {
            for (Eigen::Index l = k; l < K; ++l) {
                Wts.col(col) = -pi.col(k).cwiseProduct(pi.col(l));
                if (k == l) Wts.col(col) += pi.col(k);
                ++col;
            }
        }
        const Eigen::MatrixXd sums = P.transpose() * Wts;
        Eigen::MatrixXd H(dim, dim);
        col = 0;
        for (Eigen::Index k = 1; k < K; ++k) {
            for (Eigen::Index l = k; l < K; ++l) {
                Eigen::MatrixXd block(bw, bw);
                Eigen::Index c = 0;
                for (Eigen::Index a = 0; a < bw; ++a) {
                    for (Eigen::Index b = a; b < bw; ++b) block(a, b) = block(b, a) = sums(c++, col);
                }
                H.block((k - 1) * bw, (l - 1) * bw, bw, bw) = block;
                H.block((l - 1) * bw, (k - 1) * bw, bw, bw) = block;
                ++col;
            }
        }
        Eigen::VectorXd step;
        bool newton_ok = false;
        for (int attempt = 0; attempt < 2 && !newton_ok; ++attempt) {
            if (attempt == 1) H.diagonal().array() += 1e-10 * H.trace() / static_cast<double>(dim);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
            if (ldlt.info() != Eigen::Success) continue;
            step = ldlt.solve(g);
            newton_ok = step.allFinite() && g.dot(step) > 0.0;
        }
        if (!newton_ok) {
            ++out.gradient_fallbacks;
            const double scale = H.trace() / static_cast<double>(dim);
            step = g / (scale > 0.0 && std::isfinite(scale) ? scale : 1.0);
        }
        Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(bw, K);
        for (Eigen::Index k = 1; k < K; ++k) delta.col(k) = step.segment((k - 1) * bw, bw);

        double t = 1.0;
        bool progress = false;
        for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
            Eigen::MatrixXd candidate = A + t * delta;
            Eigen::MatrixXd log_pi_c = log_softmax_rows(Bw * candidate);
            const double qc = (tau.array() * log_pi_c.array()).sum();
            if (std::isfinite(qc) && qc >= q) {
                // a gain at rounding level means the weight update has converged
                progress = qc - q > 1e-13 * (1.0 + std::abs(q));
                A = std::move(candidate);
                log_pi = std::move(log_pi_c);
                q = qc;
                out.trace.push_back(q);
                break;
            }
        }
        if (!progress) break;
    }
    out.A = std::move(A);
    return out;
}

double row_lse_sum(const Eigen::MatrixXd& lj) { return rowwise_lse(lj).sum(); }

Eigen::MatrixXd posterior_from_log_joint(const Eigen::MatrixXd& lj) {
    Eigen::MatrixXd tau = (lj.colwise() - rowwise_lse(lj)).array().exp().matrix();
    tau.array().colwise() /= tau.rowwise().sum().array();
    return tau;
}

MixtureParams conform(const MixtureParams& init, const ModelSpec& spec) {
    if (init.K != spec.K || init.d != spec.d || init.p != spec.p) {
        throw std::invalid_argument("fit: initial parameters do not match the model spec (K, d or p)");
    }
    MixtureParams out = init;
    for (auto& w : out.weights) {
        const PolyFn r = w.with_degree(spec.weight_degree);
        w = PolyFn(r.dim_in(), r.degree(), r.coeffs(), spec.weight_bound);
    }
    for (auto& mk : out.means) {
        for (auto& m : mk) {
            const PolyFn r = m.with_degree(spec.mean_degree);
            m = PolyFn(r.dim_in(), r.degree(), r.coeffs(), spec.mean_bound);
        }
    }
    out.validate();
    return out;
}

}  // namespace

VarianceFloor VarianceFloor::parse(const std::string& s) {
    if (s == "fixed") return fixed();
    if (s == "data") return data();
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || !(v > 0.0)) {
        throw std::invalid_argument("variance floor must be 'fixed', 'data' or a positive number, got '" + s + "'");
    }
    return explicit_floor(v);
}

std::string VarianceFloor::to_string() const {
    switch (kind) {
        case Kind::fixed_10_over_n: return "fixed";
        case Kind::data_driven: return "data";
        case Kind::explicit_value: return std::to_string(value);
    }
    return "fixed";
}

void FitConfig::validate() const {
    if (max_em_iters < 0) throw std::invalid_argument("FitConfig: max_em_iters must be >= 0");
    if (!(em_rel_tol > 0.0)) throw std::invalid_argument("FitConfig: em_rel_tol must be > 0");
    if (newton_steps < 1) throw std::invalid_argument("FitConfig: newton_steps must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("FitConfig: alpha must lie in (0,1)");
    if (floor.kind == VarianceFloor::Kind::explicit_value && !(floor.value > 0.0)) {
        throw std::invalid_argument("FitConfig: explicit variance floor must be > 0");
    }
}

std::string to_string(TerminatedBy t) {
    switch (t) {
        case TerminatedBy::tol: return "tol";
        case TerminatedBy::max_iters: return "max_iters";
        case TerminatedBy::stalled: return "stalled";
    }
    return "max_iters";
}

TerminatedBy terminated_by_from_string(const std::string& s) {
    if (s == "tol") return TerminatedBy::tol;
    if (s == "max_iters") return TerminatedBy::max_iters;
    if (s == "stalled") return TerminatedBy::stalled;
    throw FormatError("unknown termination tag '" + s + "'");
}

double log_likelihood(const MixtureParams& params, const Dataset& data) {
    const Design design = make_design(data, params.weight_degree(), params.mean_degree());
    return row_lse_sum(log_joint(design, data.y, to_coeffs(params)));
}

Eigen::MatrixXd e_step(const MixtureParams& params, const Dataset& data) {
    const Design design = make_design(data, params.weight_degree(), params.mean_degree());
    return posterior_from_log_joint(log_joint(design, data.y, to_coeffs(params)));
}

MeanCovUpdate m_step_means_covs(const Dataset& data, const Eigen::MatrixXd& tau, int mean_degree, double floor) {
    if (tau.rows() != data.n()) throw std::invalid_argument("m_step: tau rows != n");
    const Eigen::MatrixXd Bm = design_matrix(mean_degree, data.x);
    std::vector<Eigen::MatrixXd> coeffs;
    MeanCovUpdate out = mean_cov_step(Bm, data.y, tau, floor, coeffs);
    for (const auto& Ck : coeffs) {
        std::vector<PolyFn> mk;
        for (Eigen::Index j = 0; j < Ck.cols(); ++j) mk.emplace_back(data.d(), mean_degree, Ck.col(j));
        out.means.push_back(std::move(mk));
    }
    return out;
}

WeightUpdate newton_weight_update(const MixtureParams& params, const Dataset& data, const Eigen::MatrixXd& tau,
                                  int steps) {
    if (steps < 1) throw std::invalid_argument("newton_weight_update: steps must be >= 1");
    if (tau.rows() != data.n() || tau.cols() != params.K) throw std::invalid_argument("newton_weight_update: tau shape");
    const Eigen::MatrixXd Bw = design_matrix(params.weight_degree(), data.x);
    const Coeffs c = to_coeffs(params);
    NewtonOutcome r = newton_steps(Bw, c.A, tau, steps);
    WeightUpdate out;
    for (int k = 0; k < params.K; ++k) {
        const auto& wk = params.weights[static_cast<std::size_t>(k)];
        out.weights.emplace_back(wk.dim_in(), wk.degree(), r.A.col(k), wk.bound());
    }
    out.surrogate_trace = std::move(r.trace);
    out.gradient_fallbacks = r.gradient_fallbacks;
    return out;
}

double chi2_quantile(double dof, double prob) {
    if (!(dof > 0.0) || !(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("chi2_quantile: bad arguments");
    auto cdf = [dof](double x) { return boost::math::gamma_p(0.5 * dof, 0.5 * x); };
    double lo = 0.0;
    double hi = std::max(1.0, dof);
    while (cdf(hi) < prob) hi *= 2.0;
    for (int it = 0; it < 400 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) < prob ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double variance_floor(const VarianceFloor& mode, const Dataset& data, int K, double alpha) {
    switch (mode.kind) {
        case VarianceFloor::Kind::fixed_10_over_n:
            if (data.n() < 1) throw std::invalid_argument("variance_floor: empty data");
            return 10.0 / static_cast<double>(data.n());
        case VarianceFloor::Kind::explicit_value:
            if (!(mode.value > 0.0)) throw std::invalid_argument("variance_floor: explicit value must be > 0");
            return mode.value;
        case VarianceFloor::Kind::data_driven: {
            if (data.p() != 1) throw UnsupportedDimension("data-driven variance floor requires p = 1");
            const auto dof = static_cast<double>(data.n() - 2 * K + 1);
            if (dof < 1.0) throw std::invalid_argument("data-driven variance floor requires n - 2K + 1 >= 1");
            std::vector<double> ys(data.y.data(), data.y.data() + data.n());
            std::sort(ys.begin(), ys.end());
            double min_gap = std::numeric_limits<double>::infinity();
            for (std::size_t i = 1; i < ys.size(); ++i) min_gap = std::min(min_gap, ys[i] - ys[i - 1]);
            if (!(min_gap > 0.0)) throw std::invalid_argument("data-driven variance floor: duplicated responses");
            const double q = chi2_quantile(dof, std::pow(1.0 - alpha, 1.0 / static_cast<double>(K)));
            return min_gap * min_gap / (2.0 * q);
        }
    }
    throw std::logic_error("variance_floor: unknown mode");
}

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& S, double floor) {
    if (S.rows() == 1) return Eigen::MatrixXd::Constant(1, 1, std::max(S(0, 0), floor));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

FitResult fit(const Dataset& data, const ModelSpec& spec, const MixtureParams& init, const FitConfig& cfg) {
    spec.validate();
    cfg.validate();
    data.validate();
    if (data.d() != spec.d || data.p() != spec.p) throw std::invalid_argument("fit: data dimensions do not match spec");

    FitResult result;
    result.floor = variance_floor(cfg.floor, data, spec.K, cfg.alpha);
    MixtureParams shape = conform(init, spec);
    for (auto& cov : shape.covs) cov = floor_eigenvalues(cov, result.floor);

    const Design design = make_design(data, spec.weight_degree, spec.mean_degree);
    Coeffs current = to_coeffs(shape);
    Eigen::MatrixXd lj = log_joint(design, data.y, current);
    double ll = row_lse_sum(lj);
    if (!std::isfinite(ll)) throw std::invalid_argument("fit: initial log-likelihood is not finite");
    result.loglik_trace.push_back(ll);
    result.terminated_by = TerminatedBy::max_iters;

    for (int it = 1; it <= cfg.max_em_iters; ++it) {
        const Eigen::MatrixXd tau = posterior_from_log_joint(lj);
        Coeffs next;
        try {
            MeanCovUpdate mc = mean_cov_step(design.Bm, data.y, tau, result.floor, next.C);
            next.covs = std::move(mc.covs);
        } catch (const DegenerateComponent& e) {
            throw DegenerateComponent(std::string(e.what()) + " at EM iteration " + std::to_string(it), e.component(), it);
        }
        next.A = newton_steps(design.Bw, current.A, tau, cfg.newton_steps).A;
        if (cfg.enforce_coeff_bounds) {
            next.A = next.A.cwiseMax(-spec.weight_bound).cwiseMin(spec.weight_bound);
            for (auto& Ck : next.C) Ck = Ck.cwiseMax(-spec.mean_bound).cwiseMin(spec.mean_bound);
        }
        Eigen::MatrixXd lj_next = log_joint(design, data.y, next);
        const double ll_next = row_lse_sum(lj_next);
        if (!std::isfinite(ll_next) || ll_next < ll) {
            // a rounding-level decrease at a fixed point is convergence
            const bool converged = std::isfinite(ll_next) && cfg.stop_rule == FitConfig::StopRule::tolerance &&
                                   (ll - ll_next) / (1.0 + std::abs(ll)) < cfg.em_rel_tol;
            result.terminated_by = converged ? TerminatedBy::tol : TerminatedBy::stalled;
            break;
        }
        const double delta = ll_next - ll;
        current = std::move(next);
        lj = std::move(lj_next);
        ll = ll_next;
        result.loglik_trace.push_back(ll);
        result.eta_slack = delta;
        if (cfg.stop_rule == FitConfig::StopRule::tolerance && delta / (1.0 + std::abs(ll)) < cfg.em_rel_tol) {
            result.terminated_by = TerminatedBy::tol;
            break;
        }
    }
    result.n_iters = static_cast<int>(result.loglik_trace.size()) - 1;
    result.params = to_params(current, shape);
    return result;
}

}  // namespace mixreg
