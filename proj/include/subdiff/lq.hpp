#pragma once
#include <cstdint>
#include <vector>

#include "subdiff/forward.hpp"
#include "subdiff/subordinator.hpp"

namespace subdiff {
namespace lq {

// Linear-quadratic model: b = x + u, sigma = 1, f = u^2/2, h = (x^2 - 2x)/2,
// unconstrained control, deterministic window [0, a]. The optimum is
// u = phi(t) x + psi(t) after a and the deterministic continuation before.
struct ClosedForm {
    double T = 1.0;
    double a = 0.0;
    double x0 = 0.0;
    double c = 0.0; // prefix adjoint scale, p(t) = c e^{-t} on [0, a]

    static ClosedForm make(double T, double a, double x0);
};

double phi(double t, double T);
double psi(double t, double T);

// Riccati pair for the second-order conditions: P(t) = -e^{2(T-t)} and
// eta(t) = -P(t).
double second_adjoint(double t, double T);

// exp(int_r^t (1 + phi(s)) ds) = cosh(T - t) / cosh(T - r)
double kernel(double t, double r, double T);

double optimal_control(double t, double x_state, const ClosedForm& form);
// deterministic state on [0, a]
double prefix_state(double t, const ClosedForm& form);
// first adjoint along the optimum: p = c e^{-t} on [0,a], phi x + psi after
double adjoint_p(double t, double x_state, const ClosedForm& form);
double adjoint_q(double t, const ClosedForm& form);

CoefficientSet coefficients();
// variant with control-dependent volatility sigma = 1 + u/2 (same b, f, h);
// no closed form, used where the dL terms must be exercised
CoefficientSet coefficients_sigma_u();
ControlPolicy policy(const ClosedForm& form);

struct Simulation {
    TrajectoryBundle bundle;
    CostEstimate cost;
    // max over paths and fine nodes of |Euler state - kernel-quadrature state|
    double quadrature_discrepancy = 0.0;
};

// Simulate the optimal feedback by Euler and re-solve each path by the
// closed-form variation-of-constants kernel as an independent route.
Simulation simulate_optimal(const ClosedForm& form, const SubordinatorSpec& spec,
                            const std::vector<double>& grid, int n_paths, std::uint64_t seed);

CostEstimate value_estimate(const ClosedForm& form, const SubordinatorSpec& spec,
                            const std::vector<double>& grid, int n_paths, std::uint64_t seed);

} // namespace lq
} // namespace subdiff
