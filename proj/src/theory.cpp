#include "mixreg/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mixreg/errors.hpp"
#include "mixreg/selection.hpp"

namespace mixreg {

namespace {

const double kSqrtPi = std::sqrt(std::numbers::pi);
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_box(const CovBox& box) {
    if (!(box.L_min > 0.0) || !(box.L_max > 0.0) || !(box.lambda_min > 0.0) || !(box.lambda_max > 0.0)) {
        throw InvalidBox("covariance box entries must be positive");
    }
    if (box.L_min > box.L_max) throw InvalidBox("covariance box: L_min > L_max");
    if (box.lambda_min > box.lambda_max) throw InvalidBox("covariance box: lambda_min > lambda_max");
}

// kappa^2 cosh(2 kappa / 5) + 1/2
double cosh_term(double kappa) { return kappa * kappa * std::cosh(0.4 * kappa) + 0.5; }

double binom_d(int d, int degree) { return static_cast<double>(basis_size(d, degree)); }

long z_count(Sharing s, long K) {
    switch (s) {
        case Sharing::known: return 0;
        case Sharing::common: return 1;
        case Sharing::free: return K;
    }
    return K;
}

// ln((4 + 129 ln(L+/L-)) / 10)
double volume_term(const CovBox& b) { return std::log((4.0 + 129.0 * std::log(b.L_max / b.L_min)) / 10.0); }
// ln(4/5 + 52 l+/(5 l-) ln(l+/l-))
double shape_term(const CovBox& b) {
    const double r = b.lambda_max / b.lambda_min;
    return std::log(0.8 + 52.0 * r / 5.0 * std::log(r));
}

double log_gauss(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::VectorXd z = llt.matrixL().solve(y - mean);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + logdet + z.squaredNorm());
}

Eigen::MatrixXd random_rotation(int p, Rng& rng) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd G(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) G(i, j) = nd(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
    if (Q.determinant() < 0.0) Q.col(0) = -Q.col(0);
    return Q;
}

// Entries in [lo, hi] with unit product, by rejection.
Eigen::VectorXd random_shape(int p, double lo, double hi, Rng& rng) {
    if (p == 1) return Eigen::VectorXd::Ones(1);
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Eigen::VectorXd a(p);
        for (int i = 0; i < p; ++i) a[i] = u(rng);
        a.array() -= a.mean();
        if (a.minCoeff() >= std::log(lo) && a.maxCoeff() <= std::log(hi)) return a.array().exp();
    }
    return Eigen::VectorXd::Ones(p);
}

}  // namespace

double gamma_kappa(double kappa) {
    if (!(kappa >= kKappaMin)) throw std::invalid_argument("kappa must be >= 17/29");
    return 25.0 * (kappa - 0.5) / (49.0 * (1.0 + 2.0 * kappa / 5.0));
}

double entropy_C_W(const ModelSpec& spec) {
    return std::log(std::numbers::sqrt2 + spec.weight_bound * binom_d(spec.d, spec.weight_degree));
}

double entropy_C_Upsilon(const ModelSpec& spec) {
    return std::log(std::numbers::sqrt2 + std::sqrt(static_cast<double>(spec.p)) * binom_d(spec.d, spec.mean_degree) *
                                               spec.mean_bound);
}

EntropyConstants entropy_constants(const ModelSpec& spec, int K_max, double kappa, double c_U) {
    check_box(spec.box);
    if (K_max < 2) throw std::invalid_argument("entropy_constants: K_max must be >= 2");
    if (!(c_U > 0.0)) throw std::invalid_argument("entropy_constants: c_U must be > 0");
    const auto& b = spec.box;
    const double p = spec.p;
    EntropyConstants c;
    c.kappa = kappa;
    c.gamma_kappa = gamma_kappa(kappa);
    c.c_U = c_U;
    c.K_max = K_max;
    c.C_W = entropy_C_W(spec);
    c.C_Upsilon = entropy_C_Upsilon(spec);
    const double ch = cosh_term(kappa);
    c.C1 = c.C_Upsilon +
           0.5 * std::log(25.0 * p * b.lambda_max * ch / (c.gamma_kappa * b.L_min * b.lambda_min * b.lambda_min)) +
           std::log(5.0 * p * std::sqrt(ch)) +
           2.0 / (p * (p + 1.0)) * (std::log(c_U) + volume_term(b) + (p - 1.0) * shape_term(b)) +
           (p - 1.0) / (p + 1.0) * std::log(10.0 * b.lambda_max / b.lambda_min);
    c.frakC = c.C_W + std::log(20.0 * std::sqrt(static_cast<double>(K_max - 1)) / (3.0 * std::sqrt(3.0))) + c.C1;
    const double r = std::sqrt(c.frakC) + kSqrtPi;
    c.C_penalty = 2.0 * r * r;
    return c;
}

StructureDims structure_dims(const ModelSpec& spec) {
    const long K = spec.K;
    const long p = spec.p;
    const long mean_set = p * static_cast<long>(basis_size(spec.d, spec.mean_degree));
    StructureDims z;
    switch (spec.structure.means) {
        case Sharing::known: z.Z_upsilon = 0; break;
        case Sharing::common: z.Z_upsilon = mean_set; break;
        case Sharing::free: z.Z_upsilon = K * mean_set; break;
    }
    z.Z_L = z_count(spec.structure.volume, K);
    z.Z_D = z_count(spec.structure.rotation, K);
    z.Z_A = z_count(spec.structure.shape, K);
    z.D_script = z.Z_upsilon + z.Z_L + p * (p - 1) / 2 * z.Z_D + (p - 1) * z.Z_A;
    return z;
}

double gaussian_entropy_C(const ModelSpec& spec, double kappa, double c_U) {
    check_box(spec.box);
    if (!(c_U > 0.0)) throw std::invalid_argument("gaussian_entropy_C: c_U must be > 0");
    const auto& b = spec.box;
    const double p = spec.p;
    const double g = gamma_kappa(kappa);
    const StructureDims z = structure_dims(spec);
    const double D = static_cast<double>(z.D_script);
    double C = std::log(5.0 * p * std::sqrt(cosh_term(kappa)));
    if (D <= 0.0) return C;
    C += z.Z_upsilon * entropy_C_Upsilon(spec) / D;
    C += z.Z_upsilon / (2.0 * D) * std::log(b.lambda_max / (p * g * b.L_min * b.lambda_min * b.lambda_min));
    C += z.Z_L / D * volume_term(b);
    C += z.Z_D / D * (std::log(c_U) + p * (p - 1.0) / 2.0 * std::log(10.0 * b.lambda_max / b.lambda_min));
    C += z.Z_A * (p - 1.0) / D * shape_term(b);
    return C;
}

SigmaBound sigma_m_bound(long D_m, double C_m, long n) {
    if (D_m < 1 || n < 1 || !(C_m > 0.0)) throw std::invalid_argument("sigma_m_bound: need D >= 1, n >= 1, C > 0");
    const double sD = std::sqrt(static_cast<double>(D_m));
    const double sn = std::sqrt(static_cast<double>(n));
    const double a = std::sqrt(C_m) + kSqrtPi;
    // phi(sigma)/sigma - sqrt(n) sigma, decreasing in sigma
    auto f = [&](double s) { return sD * (a + std::sqrt(std::log(1.0 / std::min(s, 1.0)))) - sn * s; };
    double lo = 1e-12;
    double hi = std::sqrt(2.0) * std::max(1.0, std::pow(C_m / static_cast<double>(n), 0.25));
    while (f(lo) < 0.0) lo *= 1e-3;
    while (f(hi) > 0.0) hi *= 2.0;
    for (int it = 0; it < 500 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    SigmaBound out;
    out.sigma_m = 0.5 * (lo + hi);
    out.n_sigma_sq = static_cast<double>(n) * out.sigma_m * out.sigma_m;
    const double Dd = static_cast<double>(D_m);
    out.bound = Dd * (2.0 * a * a + std::max(0.0, std::log(static_cast<double>(n) / (a * a * Dd))));
    if (out.n_sigma_sq > out.bound * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "sigma_m_bound: n sigma^2 = " << out.n_sigma_sq << " exceeds the bound " << out.bound;
        throw std::logic_error(msg.str());
    }
    return out;
}

double theoretical_penalty(const ModelSpec& spec, long n, const EntropyConstants& consts, double kappa_mult) {
    if (n < 1) throw std::invalid_argument("theoretical_penalty: n must be >= 1");
    const auto dim = static_cast<double>(model_dim(spec));
    return kappa_mult * ((consts.C_penalty + std::log(static_cast<double>(n))) * dim + spec.K);
}

double milder_penalty(const ModelSpec& spec, long n, const EntropyConstants& consts, double kappa_mult) {
    if (n < 1) throw std::invalid_argument("milder_penalty: n must be >= 1");
    const auto D = static_cast<double>(model_dim(spec));
    const double a = std::sqrt(consts.frakC) + kSqrtPi;
    return kappa_mult * (D * (2.0 * a * a + std::max(0.0, std::log(static_cast<double>(n) / (a * a * D)))) + spec.K);
}

double kraft_bound() { return 1.0 / (std::numbers::e - 1.0); }

double kraft_partial_sum(int K_max) {
    double s = 0.0;
    for (int K = 1; K <= K_max; ++K) s += std::exp(-static_cast<double>(K));
    return s;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd GaussianComponent::mean_at(double x) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(mean.size()));
    const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
    for (std::size_t j = 0; j < mean.size(); ++j) out[static_cast<Eigen::Index>(j)] = mean[j](xv);
    return out;
}

Eigen::MatrixXd GaussianComponent::covariance() const {
    Eigen::MatrixXd S = L * D * A.asDiagonal() * D.transpose();
    return 0.5 * (S + S.transpose());
}

double bracket_size_sq(double delta_sigma, double kappa, int p) {
    const double pp = p;
    const double c = 1.0 + kappa * delta_sigma;
    const double s = 1.0 + delta_sigma;
    return std::pow(c, -pp) + std::pow(c, pp) - 2.0 * std::pow(2.0, pp / 2.0) * std::pow(s + 1.0 / s, -pp / 2.0);
}

double delta_sigma_cap(double delta, double kappa, int p) {
    return delta / (5.0 * static_cast<double>(p) * std::sqrt(cosh_term(kappa)));
}

BracketReport verify_gaussian_bracket(const GaussianComponent& truth, const GaussianComponent& tilde, double delta,
                                      double kappa, const BracketConfig& cfg) {
    const int p = truth.p();
    if (p < 1 || tilde.p() != p || static_cast<int>(truth.mean.size()) != p || static_cast<int>(tilde.mean.size()) != p ||
        truth.D.rows() != p || truth.D.cols() != p || tilde.D.rows() != p || tilde.D.cols() != p) {
        throw std::invalid_argument("verify_gaussian_bracket: inconsistent dimensions");
    }
    check_box(cfg.box);
    const auto& b = cfg.box;
    BracketReport rep;
    rep.delta = delta;
    rep.kappa = kappa;
    rep.delta_sigma_cap = delta_sigma_cap(delta, kappa, p);
    rep.delta_sigma = cfg.delta_sigma > 0.0 ? cfg.delta_sigma : rep.delta_sigma_cap;
    const double ds = rep.delta_sigma;
    const double g = gamma_kappa(kappa);

    auto fail = [&](const std::string& what) { rep.failed_conditions.push_back(what); };
    if (!(delta > 0.0 && delta <= std::sqrt(2.0))) fail("delta must lie in (0, sqrt 2]");
    if (ds > rep.delta_sigma_cap * (1.0 + 1e-12)) fail("delta_sigma above its cap");
    if (truth.L < b.L_min || truth.L > b.L_max) fail("volume L outside [L-, L+]");
    if (tilde.L < b.L_min || tilde.L > b.L_max) fail("volume L~ outside [L-, L+]");
    const double tol = 1e-10;
    if (std::abs(truth.A.prod() - 1.0) > tol || std::abs(tilde.A.prod() - 1.0) > tol) fail("shape determinant is not 1");
    if (truth.A.minCoeff() < b.lambda_min * (1.0 - tol) || truth.A.maxCoeff() > b.lambda_max * (1.0 + tol)) {
        fail("shape A outside [lambda-, lambda+]");
    }
    if (tilde.A.minCoeff() < b.lambda_min * (1.0 - tol)) fail("shape A~ below lambda-");

    const double mean_bound = p * g * b.L_min * b.lambda_min * (b.lambda_min / b.lambda_max) * ds * ds;
    double worst_gap = 0.0;
    for (int i = 0; i < cfg.mean_check_points; ++i) {
        const double x = cfg.mean_check_points == 1 ? 0.0 : static_cast<double>(i) / (cfg.mean_check_points - 1);
        worst_gap = std::max(worst_gap, (truth.mean_at(x) - tilde.mean_at(x)).squaredNorm());
    }
    if (worst_gap > mean_bound * (1.0 + tol)) fail("mean gap: sup_x |v - v~|^2 exceeds p gamma L- lambda- (lambda-/lambda+) ds^2");
    if (!(truth.L <= tilde.L * (1.0 + tol) && truth.L * (1.0 + 2.0 * ds / 25.0) >= tilde.L * (1.0 - tol))) {
        fail("volume sandwich (1 + 2 ds/25)^-1 L~ <= L <= L~");
    }
    const double diag_gap = (truth.A.cwiseInverse() - tilde.A.cwiseInverse()).cwiseAbs().maxCoeff();
    if (diag_gap > ds / (10.0 * b.lambda_max) * (1.0 + tol)) fail("shape gap |1/A_ii - 1/A~_ii| exceeds ds / (10 lambda+)");
    const double rot_gap = Eigen::JacobiSVD<Eigen::MatrixXd>(truth.D - tilde.D).singularValues()(0);
    if (rot_gap > b.lambda_min / b.lambda_max * ds / 10.0 * (1.0 + tol)) {
        fail("rotation gap |D - D~| exceeds (lambda-/lambda+) ds / 10");
    }

    if (cfg.strict && !rep.preconditions_ok()) {
        std::string msg = "bracket preconditions violated:";
        for (const auto& f : rep.failed_conditions) msg += " [" + f + "]";
        throw PreconditionViolated(msg);
    }

    rep.size_sq = bracket_size_sq(ds, kappa, p);
    rep.size_bound_sq = (delta / 5.0) * (delta / 5.0);
    rep.size_ok = rep.size_sq <= rep.size_bound_sq * (1.0 + 1e-12);

    if (p <= 2) {
        rep.containment_checked = true;
        const Eigen::MatrixXd S = truth.covariance();
        const Eigen::MatrixXd St = tilde.covariance();
        Eigen::LLT<Eigen::MatrixXd> llt(S), llt_lo(St / (1.0 + ds)), llt_hi(St * (1.0 + ds));
        if (llt.info() != Eigen::Success || llt_lo.info() != Eigen::Success) throw NotSPD("bracket covariance not SPD");
        const double log_c = p * std::log1p(kappa * ds);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
        const Eigen::VectorXd half = cfg.sd_range * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        const int m = p == 1 ? cfg.grid_points_1d : cfg.grid_points_2d;
        Eigen::VectorXd y(p);
        for (int xi = 0; xi < cfg.x_values && rep.containment_ok; ++xi) {
            const double x = cfg.x_values == 1 ? 0.0 : static_cast<double>(xi) / (cfg.x_values - 1);
            const Eigen::VectorXd mu = truth.mean_at(x);
            const Eigen::VectorXd mut = tilde.mean_at(x);
            const long total = p == 1 ? m : static_cast<long>(m) * m;
            for (long idx = 0; idx < total; ++idx) {
                // grid along the principal axes of Sigma, centred on its mean
                Eigen::VectorXd u(p);
                u[0] = -1.0 + 2.0 * static_cast<double>(idx % m) / (m - 1);
                if (p == 2) u[1] = -1.0 + 2.0 * static_cast<double>(idx / m) / (m - 1);
                y = mu + eig.eigenvectors() * (half.array() * u.array()).matrix();
                const double lv = log_gauss(y, mu, llt);
                const double lo = -log_c + log_gauss(y, mut, llt_lo);
                const double hi = log_c + log_gauss(y, mut, llt_hi);
                ++rep.points_checked;
                const double slack = 1e-12 * (1.0 + std::abs(lv));
                if (lv < lo - slack || lv > hi + slack) {
                    rep.containment_ok = false;
                    rep.witness = BracketWitness{x, y, lo, lv, hi};
                    break;
                }
            }
        }
    }

    if (cfg.strict && rep.violated()) {
        std::ostringstream msg;
        msg << "bracket violated";
        if (rep.witness) {
            msg << " at x = " << rep.witness->x << ", y = (" << rep.witness->y.transpose() << "): log t- = "
                << rep.witness->log_lower << ", log Phi = " << rep.witness->log_value
                << ", log t+ = " << rep.witness->log_upper;
        }
        if (!rep.size_ok) msg << "; width^2 " << rep.size_sq << " > " << rep.size_bound_sq;
        throw BracketViolated(msg.str());
    }
    return rep;
}

BracketInstance random_bracket_instance(int p, double delta_sigma, double kappa, const CovBox& box, Rng& rng,
                                        double mean_gap_factor) {
    check_box(box);
    if (p < 1) throw std::invalid_argument("random_bracket_instance: p must be >= 1");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    std::normal_distribution<double> nd;
    const double ds = delta_sigma;
    const double g = gamma_kappa(kappa);
    BracketInstance inst;
    auto& t = inst.tilde;
    auto& s = inst.truth;

    const double squeeze = 1.0 + 2.0 * ds / 25.0;
    const double L_lo = std::min(box.L_max, box.L_min * squeeze);
    t.L = std::exp(std::log(L_lo) + unit(rng) * (std::log(box.L_max) - std::log(L_lo)));
    s.L = t.L / (1.0 + unit(rng) * (squeeze - 1.0));

    t.A = random_shape(p, box.lambda_min, box.lambda_max, rng);
    s.A = t.A;
    if (p >= 2) {
        // move one pair (a, 1/a) of the shape while keeping both sets of
        // conditions, by shrinking the move until it fits
        const double room = ds / (10.0 * box.lambda_max);
        for (double scale = 1.0; scale > 1e-6; scale *= 0.5) {
            Eigen::VectorXd cand = t.A;
            const double inv0 = 1.0 / cand[0] + scale * room * (2.0 * unit(rng) - 1.0);
            if (!(inv0 > 0.0)) continue;
            const double r = (1.0 / inv0) / cand[0];
            cand[0] *= r;
            cand[1] /= r;
            const double gap = (cand.cwiseInverse() - t.A.cwiseInverse()).cwiseAbs().maxCoeff();
            if (gap <= room && cand.minCoeff() >= box.lambda_min && cand.maxCoeff() <= box.lambda_max) {
                s.A = cand;
                break;
            }
        }
    }

    t.D = random_rotation(p, rng);
    s.D = t.D;
    if (p >= 2) {
        // ||R(theta) - I|| = 2 sin(theta / 2)
        const double max_gap = box.lambda_min / box.lambda_max * ds / 10.0;
        const double theta = 2.0 * std::asin(std::min(1.0, 0.5 * max_gap)) * (2.0 * unit(rng) - 1.0);
        Eigen::MatrixXd R = Eigen::MatrixXd::Identity(p, p);
        R(0, 0) = R(1, 1) = std::cos(theta);
        R(0, 1) = -std::sin(theta);
        R(1, 0) = std::sin(theta);
        s.D = t.D * R;
    }

    const double mean_bound = p * g * box.L_min * box.lambda_min * (box.lambda_min / box.lambda_max) * ds * ds;
    Eigen::VectorXd dir(p);
    for (int j = 0; j < p; ++j) dir[j] = nd(rng);
    dir.normalize();
    const double radius = mean_gap_factor > 1.0 ? mean_gap_factor * std::sqrt(mean_bound)
                                                : std::sqrt(unit(rng)) * std::sqrt(mean_bound);
    for (int j = 0; j < p; ++j) {
        const Eigen::Vector2d c(coef(rng), coef(rng));
        t.mean.emplace_back(1, 1, c);
        Eigen::VectorXd cs = c;
        cs[0] += radius * dir[j];
        s.mean.emplace_back(1, 1, cs);
    }
    return inst;
}

}  // namespace mixreg
