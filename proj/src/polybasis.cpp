#include "mixreg/polybasis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mixreg/errors.hpp"

namespace mixreg {

namespace {

constexpr double kHypercubeTol = 1e-12;

void enumerate_order(int d, int order, int pos, MultiIndex& current, std::vector<MultiIndex>& out) {
    if (pos == d - 1) {
        current[pos] = order;
        out.push_back(current);
        return;
    }
    for (int e = 0; e <= order; ++e) {
        current[pos] = e;
        enumerate_order(d, order - e, pos + 1, current, out);
    }
}

}  // namespace

std::size_t basis_size(int d, int degree) {
    if (d < 1 || degree < 0) throw std::invalid_argument("basis_size: need d >= 1 and degree >= 0");
    // binom(degree + d, d) computed incrementally; exact for the sizes used here.
    std::size_t result = 1;
    for (int i = 1; i <= d; ++i) {
        result = result * static_cast<std::size_t>(degree + i) / static_cast<std::size_t>(i);
    }
    return result;
}

std::vector<MultiIndex> enumerate_multiindices(int d, int degree) {
    if (d < 1 || degree < 0) throw std::invalid_argument("enumerate_multiindices: need d >= 1 and degree >= 0");
    std::vector<MultiIndex> out;
    out.reserve(basis_size(d, degree));
    MultiIndex current(static_cast<std::size_t>(d), 0);
    for (int order = 0; order <= degree; ++order) {
        const auto first = out.size();
        enumerate_order(d, order, 0, current, out);
        std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end());
    }
    return out;
}

void check_in_hypercube(const Eigen::Ref<const Eigen::VectorXd>& x) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (!(x[j] >= -kHypercubeTol && x[j] <= 1.0 + kHypercubeTol)) {
            throw DomainError("covariate coordinate " + std::to_string(j) + " = " + std::to_string(x[j]) +
                              " lies outside [0,1]");
        }
    }
}

Eigen::VectorXd basis_vector(int d, int degree, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != d) throw std::invalid_argument("basis_vector: point dimension mismatch");
    check_in_hypercube(x);
    const auto indices = enumerate_multiindices(d, degree);
    Eigen::VectorXd b(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        double v = 1.0;
        for (int j = 0; j < d; ++j) {
            for (int e = 0; e < indices[r][static_cast<std::size_t>(j)]; ++e) v *= x[j];
        }
        b[static_cast<Eigen::Index>(r)] = v;
    }
    return b;
}

Eigen::MatrixXd design_matrix(int degree, const Eigen::MatrixXd& X) {
    const int d = static_cast<int>(X.cols());
    const auto indices = enumerate_multiindices(d, degree);
    Eigen::MatrixXd B(X.rows(), static_cast<Eigen::Index>(indices.size()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        check_in_hypercube(X.row(i).transpose());
        for (std::size_t r = 0; r < indices.size(); ++r) {
            double v = 1.0;
            for (int j = 0; j < d; ++j) {
                for (int e = 0; e < indices[r][static_cast<std::size_t>(j)]; ++e) v *= X(i, j);
            }
            B(i, static_cast<Eigen::Index>(r)) = v;
        }
    }
    return B;
}

PolyFn::PolyFn(int d, int degree, Eigen::VectorXd coeffs, double bound)
    : d_(d), degree_(degree), coeffs_(std::move(coeffs)), bound_(bound) {
    if (static_cast<std::size_t>(coeffs_.size()) != basis_size(d, degree)) {
        throw std::invalid_argument("PolyFn: expected " + std::to_string(basis_size(d, degree)) +
                                    " coefficients, got " + std::to_string(coeffs_.size()));
    }
    if (bound_ < 0.0) throw std::invalid_argument("PolyFn: negative coefficient bound");
}

PolyFn PolyFn::zero(int d, int degree, double bound) {
    return PolyFn(d, degree, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis_size(d, degree))), bound);
}

PolyFn PolyFn::constant(int d, int degree, double value, double bound) {
    PolyFn f = zero(d, degree, bound);
    f.coeffs_[0] = value;
    return f;
}

double PolyFn::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return coeffs_.dot(basis_vector(d_, degree_, x));
}

PolyFn PolyFn::clamped(double T) const {
    return PolyFn(d_, degree_, coeffs_.cwiseMax(-T).cwiseMin(T), bound_);
}

PolyFn PolyFn::with_degree(int degree) const {
    if (degree == degree_) return *this;
    const auto from = enumerate_multiindices(d_, degree_);
    const auto to = enumerate_multiindices(d_, degree);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(to.size()));
    for (std::size_t r = 0; r < to.size(); ++r) {
        auto it = std::find(from.begin(), from.end(), to[r]);
        if (it != from.end()) c[static_cast<Eigen::Index>(r)] = coeffs_[it - from.begin()];
    }
    return PolyFn(d_, degree, std::move(c), bound_);
}

PolyFn PolyFn::operator+(const PolyFn& other) const {
    const int deg = std::max(degree_, other.degree_);
    if (d_ != other.d_) throw std::invalid_argument("PolyFn: dimension mismatch");
    return PolyFn(d_, deg, with_degree(deg).coeffs_ + other.with_degree(deg).coeffs_, bound_);
}

PolyFn PolyFn::operator-(const PolyFn& other) const {
    const int deg = std::max(degree_, other.degree_);
    if (d_ != other.d_) throw std::invalid_argument("PolyFn: dimension mismatch");
    return PolyFn(d_, deg, with_degree(deg).coeffs_ - other.with_degree(deg).coeffs_, bound_);
}

double poly_eval(const PolyFn& f, const Eigen::Ref<const Eigen::VectorXd>& x) { return f(x); }

}  // namespace mixreg
