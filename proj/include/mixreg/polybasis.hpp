#pragma once

// Multivariate monomial bases on the covariate hypercube [0,1]^d.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace mixreg {

using MultiIndex = std::vector<int>;

/// Number of multi-indices r in N^d with |r| <= degree, i.e. binom(degree + d, d).
std::size_t basis_size(int d, int degree);

/// All multi-indices with |r| <= degree, sorted by total order then
/// lexicographically by exponents.
std::vector<MultiIndex> enumerate_multiindices(int d, int degree);

/// Throws DomainError if some coordinate lies outside [0,1] by more than 1e-12.
void check_in_hypercube(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Monomials x^r in enumerate_multiindices order.
Eigen::VectorXd basis_vector(int d, int degree, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Row i holds basis_vector(d, degree, X.row(i)).
Eigen::MatrixXd design_matrix(int degree, const Eigen::MatrixXd& X);

/// Polynomial sum_r alpha_r x^r with coefficients in enumeration order.
class PolyFn {
public:
    PolyFn() = default;
    PolyFn(int d, int degree, Eigen::VectorXd coeffs, double bound = 0.0);

    static PolyFn zero(int d, int degree, double bound = 0.0);
    static PolyFn constant(int d, int degree, double value, double bound = 0.0);

    int dim_in() const noexcept { return d_; }
    int degree() const noexcept { return degree_; }
    const Eigen::VectorXd& coeffs() const noexcept { return coeffs_; }
    /// Sup-norm bound T on the coefficients; 0 means unbounded.
    double bound() const noexcept { return bound_; }
    bool is_zero() const { return coeffs_.isZero(0.0); }

    double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

    /// Copy with every coefficient clamped to [-T, T].
    PolyFn clamped(double T) const;
    /// Copy re-expressed at a different degree (extra terms zero, dropped terms truncated).
    PolyFn with_degree(int degree) const;

    PolyFn operator+(const PolyFn& other) const;
    PolyFn operator-(const PolyFn& other) const;

    friend bool operator==(const PolyFn& a, const PolyFn& b) {
        return a.d_ == b.d_ && a.degree_ == b.degree_ && a.bound_ == b.bound_ &&
               a.coeffs_.size() == b.coeffs_.size() && a.coeffs_ == b.coeffs_;
    }

private:
    int d_ = 1;
    int degree_ = 0;
    Eigen::VectorXd coeffs_ = Eigen::VectorXd::Zero(1);
    double bound_ = 0.0;
};

/// Free-function form of PolyFn::operator().
double poly_eval(const PolyFn& f, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace mixreg
