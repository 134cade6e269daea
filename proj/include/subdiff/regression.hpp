#pragma once
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subdiff/forward.hpp"

namespace subdiff {

// Polynomial regression basis over the observable features: monomials X^p L^q
// with p+q <= degree, age_of_flat linearly, and (when the bundle carries
// controlled states) the state features x, x^2, x*X. All entries are
// F'_t-measurable; the overshoot R never enters.
struct Basis {
    int degree = 3;
    bool include_age = true;
    bool include_state = false;

    int size() const;
    void eval(double X, double L, double age, double state, double* out) const;
    std::string describe() const;
};

struct LeastSquares {
    Eigen::VectorXd coef;
    bool ridge_used = false;
};

// Solve the normal equations G w = r; rank-deficient systems fall back to a
// ridge of 1e-10 * trace(G)/k (flagged).
LeastSquares solve_normal_equations(const Eigen::MatrixXd& G, const Eigen::VectorXd& r);

// Convenience: fitted values Phi * w of the regression of y on the rows of Phi.
LeastSquares fit_ols(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& y);

// Feature matrix of a bundle at one caller node.
Eigen::MatrixXd feature_matrix(const TrajectoryBundle& bundle, std::size_t node,
                               const Basis& basis);

} // namespace subdiff
