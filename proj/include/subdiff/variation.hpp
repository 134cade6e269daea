#pragma once
#include <cstdint>
#include <functional>
#include <vector>

#include "subdiff/bsde.hpp"
#include "subdiff/forward.hpp"

namespace subdiff {

// Spike perturbation: the alternative policy replaces the base control on the
// window [t_bar, t_bar + eps).
struct SpikeSpec {
    ControlPolicy base;
    ControlPolicy alt;
    double t_bar = 0.0;
};

// Convex perturbation u + eps * v along a direction realized from the
// observable features and the base state.
struct ConvexSpec {
    ControlPolicy base;
    std::function<double(const ObservableFeatures&, double)> direction;
    // x^(1) scheme: the stochastic-exponential solver by default, or the same
    // Euler map as the state itself when the discrete Taylor identity must hold
    // step for step (expansion-order studies).
    bool euler_consistent = false;
};

// First/second-order spike variation processes on one path's fine grid,
// together with the perturbed state, all coupled to the bundle's drivers.
struct SpikePathProcesses {
    std::vector<double> y;     // first-order process y^eps
    std::vector<double> z;     // second-order process z^eps
    std::vector<double> x_eps; // state under the spiked control
};

SpikePathProcesses simulate_spike_processes(const CoefficientSet& coeffs, const SpikeSpec& spike,
                                            const TrajectoryBundle& bundle, std::size_t path,
                                            double eps);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// OLS of log(y) on log(x)
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

// Running sums of sup-candidate moments E[(remainder)^{2k}] at caller nodes,
// filled chunk by chunk so large studies need not hold all paths at once.
struct SpikeMomentAccumulator {
    int k = 1;
    std::vector<double> eps_grid;
    // [eps][caller node] sums over paths of r^{2k}
    std::vector<std::vector<double>> sum_x;   // r = x_eps - x
    std::vector<std::vector<double>> sum_xy;  // r = x_eps - x - y
    std::vector<std::vector<double>> sum_xyz; // r = x_eps - x - y - z
    std::size_t n_paths = 0;
};

void accumulate_spike_moments(const CoefficientSet& coeffs, const SpikeSpec& spike,
                              const TrajectoryBundle& bundle, SpikeMomentAccumulator& acc);

struct SpikeScaling {
    std::vector<double> eps_grid;
    std::vector<double> sup_x;   // sup over caller nodes of the mean 2k-th moment
    std::vector<double> sup_xy;
    std::vector<double> sup_xyz;
    SlopeFit slope_x;   // expected order k
    SlopeFit slope_xy;  // expected order 2k
    SlopeFit slope_xyz; // expected order > 2k
};

SpikeScaling finalize_spike_scaling(const SpikeMomentAccumulator& acc);

SpikeScaling spike_remainder_scaling(const CoefficientSet& coeffs, const SpikeSpec& spike,
                                     const TrajectoryBundle& bundle,
                                     const std::vector<double>& eps_grid, int k);

// Fixed library of test directions: 1, t/T, 1{t > T/2}, X_t.
std::vector<std::function<double(const ObservableFeatures&, double)>> direction_library(double T);

// Convex variation processes x^(1), x^(2) on the bundle's fine grids.
struct ConvexVariations {
    std::vector<std::vector<double>> x1; // [path][fine node]
    std::vector<std::vector<double>> x2;
    std::vector<std::vector<double>> v;  // realized direction
};

ConvexVariations simulate_convex_variations(const CoefficientSet& coeffs, const ConvexSpec& convex,
                                            const TrajectoryBundle& bundle);

struct VariationEstimate {
    double direct = 0.0;      // pathwise differentiation of the cost
    double direct_se = 0.0;
    double adjoint = 0.0;     // adjoint-process representation
    double adjoint_se = 0.0;
};

// d/d.eps J(u + eps v) at eps = 0. Direct: E[int (f_x x1 + f_u v)dt + h_x x1_T].
// Adjoint: E[int (f_u - b_u p) v dt - int sigma_u q v dL].
VariationEstimate first_variation_J(const CoefficientSet& coeffs, const ConvexSpec& convex,
                                    const TrajectoryBundle& bundle, const BsdeSolution& adjoint,
                                    const ConvexVariations& var);

// d^2/d.eps^2 J(u + eps v)/2 at eps = 0 (coefficient of eps^2). Direct:
// E[int (f_xx x1^2/2 + f_xu x1 v + f_x x2 + f_uu v^2/2)dt + h_xx x1_T^2/2 + h_x x2_T].
// Adjoint: E[int ((f_xx - p b_xx)x1^2 + (f_xu - p b_xu + eta b_u)x1 v
//                 + (f_uu - p b_uu)v^2/2)dt
//            + int ((eta s_x s_u + gamma s_u - q s_xu)x1 v
//                 + (eta s_u^2 - q s_uu)v^2/2)dL].
VariationEstimate second_variation_J(const CoefficientSet& coeffs, const ConvexSpec& convex,
                                     const TrajectoryBundle& bundle, const BsdeSolution& adjoint,
                                     const BsdeSolution& eta, const ConvexVariations& var);

} // namespace subdiff
