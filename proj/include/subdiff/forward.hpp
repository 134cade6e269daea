#pragma once
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "subdiff/subdiffusion.hpp"

namespace subdiff {

// Model coefficients (t, x, u) -> real. Missing partials fall back to central
// finite differences with step h_fd = max(1e-5, 1e-5*|x|) (flagged in metadata).
struct CoefficientSet {
    using Fn3 = std::function<double(double, double, double)>;
    using Fn1 = std::function<double(double)>;

    Fn3 b, sigma, f;
    Fn1 h;
    Fn3 b_x, b_u, b_xx, b_xu, b_uu;
    Fn3 sigma_x, sigma_u, sigma_xx, sigma_xu, sigma_uu;
    Fn3 f_x, f_u, f_xx, f_xu, f_uu;
    Fn1 h_x, h_xx;
    double lipschitz_bound = 100.0;

    // accessors with finite-difference fallback
    double bx(double t, double x, double u) const;
    double bu(double t, double x, double u) const;
    double bxx(double t, double x, double u) const;
    double bxu(double t, double x, double u) const;
    double buu(double t, double x, double u) const;
    double sx(double t, double x, double u) const;
    double su(double t, double x, double u) const;
    double sxx(double t, double x, double u) const;
    double sxu(double t, double x, double u) const;
    double suu(double t, double x, double u) const;
    double fx(double t, double x, double u) const;
    double fu(double t, double x, double u) const;
    double fxx(double t, double x, double u) const;
    double fxu(double t, double x, double u) const;
    double fuu(double t, double x, double u) const;
    double hx(double x) const;
    double hxx(double x) const;

    bool uses_finite_differences() const;
    // sampled Lipschitz self-check of |phi(t,x,u)-phi(t,y,v)| <= L(|x-y|+|u-v|)
    // over random triples; returns the worst observed ratio.
    double lipschitz_self_check(std::uint64_t seed, int n_samples = 256) const;
};

// Markov-feedback control rule in the observable features and the controlled
// state (itself a functional of the X-history, hence observable), with a
// deterministic prefix on [0, a] where the observable filtration is trivial.
struct ControlPolicy {
    double u_min = -std::numeric_limits<double>::infinity();
    double u_max = std::numeric_limits<double>::infinity();
    double a = 0.0;
    std::function<double(const ObservableFeatures&, double /*x_state*/)> rule;
    std::function<double(double)> deterministic_prefix; // optional; t in [0,a]

    double operator()(const ObservableFeatures& f, double x_state) const;
};

struct TrajectoryBundle {
    std::vector<double> grid; // caller grid shared by all paths
    double a = 0.0;
    double x0 = 0.0;
    std::uint64_t master_seed = 0;
    std::vector<SubdiffusionPath> paths;       // fine per-path grids (with knots)
    std::vector<std::vector<double>> states;   // x^u on each path's fine grid
    std::vector<std::vector<double>> controls; // applied u on each fine grid
    std::vector<double> cost_samples;          // trapezoid(f) + h(x_T) per path

    std::size_t n_paths() const { return paths.size(); }
    std::size_t n_nodes() const { return grid.size(); } // caller nodes
    // caller-node accessors (indices into the fine grid via caller_index)
    std::size_t fine_index(std::size_t path, std::size_t node) const {
        return paths[path].inverse.caller_index[node];
    }
};

// Euler-Maruyama with left-point coefficients on the driver's fine grid.
std::vector<double> euler_integrate(const CoefficientSet& coeffs, const ControlPolicy& policy,
                                    const SubdiffusionPath& driver);

// same scheme with an explicit per-node control stream (open-loop evaluation,
// used by the variation module where directions are realized along base paths)
std::vector<double> euler_integrate_controls(const CoefficientSet& coeffs,
                                             const std::vector<double>& controls,
                                             const SubdiffusionPath& driver, double x0);

// dY = (a Y + alpha)dt + (b Y + beta)dB_L via the stochastic-exponential
// representation, evaluated by grid quadrature. Streams are indexed on the
// driver's fine grid (left point).
std::vector<double> exact_linear_solve(const std::vector<double>& a_t,
                                       const std::vector<double>& alpha_t,
                                       const std::vector<double>& b_t,
                                       const std::vector<double>& beta_t, double y0,
                                       const SubdiffusionPath& driver,
                                       double bound = 1e6);

struct CostEstimate {
    double J_hat;
    double std_error;
};

// simulate a fresh bundle under the policy and estimate J
CostEstimate estimate_cost(const CoefficientSet& coeffs, const ControlPolicy& policy,
                           int bundle_size, const std::vector<double>& grid,
                           const SubordinatorSpec& spec, double x0, double a,
                           std::uint64_t seed, TrajectoryBundle* bundle_out = nullptr);

// coupled re-evaluation of another policy on an existing bundle's driver paths;
// does not store the new states (costs only)
CostEstimate reevaluate_cost(const CoefficientSet& coeffs, const ControlPolicy& policy,
                             const TrajectoryBundle& bundle,
                             std::vector<double>* cost_samples_out = nullptr);

// pathwise cost of a precomputed state/control trajectory (trapezoid + terminal)
double path_cost(const CoefficientSet& coeffs, const SubdiffusionPath& driver,
                 const std::vector<double>& states, const std::vector<double>& controls);

} // namespace subdiff
