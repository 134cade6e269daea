#pragma once
#include <functional>
#include <string>
#include <vector>

#include "subdiff/forward.hpp"
#include "subdiff/regression.hpp"

namespace subdiff {

// dY = h1(t,Y)dt + h2(t,Y,Z)dL_{(t-a)^+} + Z dB_{L_{(t-a)^+}},  Y_T = xi.
struct BsdeSpec {
    std::function<double(double, double)> h1;         // (t, y)
    std::function<double(double, double, double)> h2; // (t, y, z)
    // terminal condition from the path's terminal observables and state
    std::function<double(const ObservableFeatures&, double)> terminal;
    double lipschitz_C = 1.0;
};

struct BsdeSolution {
    std::vector<std::vector<double>> Y; // [path][caller node]
    std::vector<std::vector<double>> Z; // [path][caller node]; Z[.][last] = 0
    std::string regression_bases;
    std::vector<double> picard_norms; // successive M_{a,beta} distances (picard_solve only)
    double beta = 0.0;
    double decay_ratio = 0.0;
    bool ridge_used = false;
    bool contraction_failed = false;
    std::string diagnostic;
};

// Z is unique only dL-a.e.; steps whose cross-path mean dL falls below this are
// reported with Z = 0.
double tol_flat(double T, double kappa);

// beta threshold from the contraction constants: the proof factor
// 3*C1^2*(kappa+1)*(T v 1)*(1+K^2) / (2*beta*kappa) with C1 = (1+1/kappa)*C
// equals 1 at the threshold; the default beta doubles it (factor 1/2).
double beta_threshold(double lipschitz_C, double kappa, double T, double K = 2.0);
double default_beta(double lipschitz_C, double kappa, double T, double K = 2.0);

struct MartingaleRepresentation {
    double E_xi = 0.0;
    std::vector<std::vector<double>> H; // [path][caller step]
    double residual_variance = 0.0;
    bool ridge_used = false;
};

// Numerical version of the representation xi = E[xi] + int H dB_{L_{(s-a)^+}}:
// backward per-step least squares of the conditional-expectation chain onto the
// joint columns [basis | basis * dB_i] (integrand + adapted part in one solve).
MartingaleRepresentation represent_martingale(const std::vector<double>& xi_samples,
                                              const TrajectoryBundle& bundle, int basis_degree);

BsdeSolution backward_solve(const BsdeSpec& spec, const TrajectoryBundle& bundle,
                            int basis_degree, double beta);

BsdeSolution picard_solve(const BsdeSpec& spec, const TrajectoryBundle& bundle, int basis_degree,
                          double beta, int max_iter, double tol);

// Adjoint equations along the bundle's realized (x-bar, u-bar).
// First adjoint (p,q):  dp = -(b_x p - f_x)dt - sigma_x q dL + q dB, p(T) = -h'(x(T)).
BsdeSolution solve_first_adjoint(const CoefficientSet& coeffs, const ControlPolicy& policy,
                                 const TrajectoryBundle& bundle, int basis_degree = 3);
// Second adjoint (P,Q): dP = -(2 b_x P + b_xx p - f_xx)dt
//                            - (sigma_x^2 P + 2 sigma_x Q + sigma_xx q)dL + Q dB,
//                       P(T) = -h''(x(T)).
BsdeSolution solve_second_adjoint(const CoefficientSet& coeffs, const ControlPolicy& policy,
                                  const TrajectoryBundle& bundle, const BsdeSolution& first,
                                  int basis_degree = 3);
// eta equation:  d.eta = (f_xx - 2 eta b_x - p b_xx)dt
//                        - (eta sigma_x^2 + 2 gamma sigma_x - q sigma_xx)dL + gamma dB,
//                eta(T) = h''(x(T)); gamma is the martingale integrand (Z-slot).
BsdeSolution solve_eta(const CoefficientSet& coeffs, const ControlPolicy& policy,
                       const TrajectoryBundle& bundle, const BsdeSolution& first,
                       int basis_degree = 3);

// Discrete M_{a,beta} distance between two solutions on the same bundle,
// computed with weights e^{2 beta (t - T)}.
double m_norm_distance(const BsdeSolution& s1, const BsdeSolution& s2,
                       const TrajectoryBundle& bundle, double beta);

} // namespace subdiff
