#pragma once
#include <string>
#include <vector>

#include "subdiff/bsde.hpp"
#include "subdiff/forward.hpp"

namespace subdiff {

// Hamiltonian H(t, x, u, p) = b(t,x,u) p - f(t,x,u).
double hamiltonian(const CoefficientSet& coeffs, double t, double x, double u, double p);

struct ScanCell {
    double t = 0.0;
    double u = 0.0; // candidate spike value; unused for stationarity scans
    double mean = 0.0;
    double std_error = 0.0;
};

struct SmpReport {
    std::string condition;
    std::vector<ScanCell> cells;
    double min_mean = 0.0; // most negative cell mean
    double min_t = 0.0;
    double min_u = 0.0;
    double min_std_error = 0.0;
    double max_abs_mean = 0.0;
    std::size_t violations_3sigma = 0; // cells with mean < -3 se (spike) or |mean| > 3 se (stationarity)
};

// Spike necessary condition along the realized (x, u): for each interior grid
// time and each candidate u in u_grid, the sample mean of
//   H(x,u-bar,p) - H(x,u,p)
//     - 1{R=0} (1/kappa) [ (sigma(u-bar)-sigma(u)) q + (sigma(u-bar)-sigma(u))^2 P / 2 ]
// should be >= 0 up to Monte Carlo noise. The flat indicator comes from the
// simulator's exact overshoot, never from a regression.
SmpReport spike_condition_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                               const BsdeSolution& first, const BsdeSolution& second,
                               const std::vector<double>& u_grid);

// Convex stationarity: for an interior optimum the sample mean of
//   G(t) = b_u p + 1{R=0} (1/kappa) sigma_u q - f_u
// should vanish at every interior grid time.
SmpReport convex_stationarity_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                                   const BsdeSolution& first);

// Classical-diffusion evaluators (no subordination): same scans with the flat
// indicator identically one. Kept as an independent code path so the nu = 0
// reduction can be checked number for number.
SmpReport classical_spike_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                               const BsdeSolution& first, const BsdeSolution& second,
                               const std::vector<double>& u_grid);
SmpReport classical_stationarity_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                                      const BsdeSolution& first);

struct SufficiencyVerdict {
    bool precondition_ok = false; // terminal cost convex on the sampled range
    bool holds = false;           // inequality satisfied within 3 se
    double lhs = 0.0;             // E int (linearized Hamiltonian gap) dt
    double rhs = 0.0;             // E int (Hamiltonian difference) dt
    double margin_se = 0.0;       // se of the paired difference lhs - rhs
    bool j_ordered = false;       // J(candidate) <= J(comparison) within 3 se
    double j_candidate = 0.0;
    double j_comparison = 0.0;
    double j_diff_se = 0.0;
    std::string note;
};

// Sufficiency inequality for a candidate optimum against a comparison policy,
// evaluated on coupled bundles (same drivers). With
//   G(x, u) = b(x,u) p - f(x,u) + 1{R=0} (1/kappa) sigma(x,u) q,
// checks E int [ (d/dx G)(x-bar, u-bar) (x - x-bar) ] dt
//      >= E int [ G(x, u) - G(x-bar, u-bar) ] dt  (concavity of G in x at u-bar
// plus maximality would give optimality; the paired Monte Carlo mean of
// lhs - rhs is reported with its standard error). Also reports whether the
// candidate's cost is no worse than the comparison's.
SufficiencyVerdict sufficiency_check(const CoefficientSet& coeffs,
                                     const TrajectoryBundle& bundle_bar,
                                     const TrajectoryBundle& bundle_comp,
                                     const BsdeSolution& first);

} // namespace subdiff
