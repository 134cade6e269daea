#pragma once
#include <cstdint>
#include <variant>
#include <vector>

#include "subdiff/errors.hpp"

namespace subdiff {

// ---- jump laws -------------------------------------------------------------

struct NoJumps {};

struct ExpJumps {
    double mean = 1.0;
};
struct FixedJumps {
    double size = 1.0;
};
struct UniformJumps {
    double lo = 0.0;
    double hi = 1.0;
};
using JumpSizeLaw = std::variant<ExpJumps, FixedJumps, UniformJumps>;

struct CompoundPoisson {
    double rate = 1.0; // jumps per unit of operational time
    JumpSizeLaw sizes = ExpJumps{};
};

// One-sided alpha-stable Levy measure nu(ds) = scale * s^{-1-alpha} ds truncated
// below at eps_trunc. With compensate=true the drift absorbs the truncated mean
// integral_0^eps s nu(ds) = scale * eps^{1-alpha} / (1-alpha), preserving E S_t.
struct TruncatedStable {
    double alpha = 0.5;
    double scale = 1.0;
    double eps_trunc = 1e-4;
    bool compensate = false;
};

// Test hook only: deterministic jumps at fixed epochs, independent of the seed.
struct ForcedJumps {
    std::vector<double> times;
    std::vector<double> sizes;
};

using JumpLaw = std::variant<NoJumps, CompoundPoisson, TruncatedStable, ForcedJumps>;

// ---- spec ------------------------------------------------------------------

struct SubordinatorSpec {
    double kappa = 1.0; // drift, must be > 0
    JumpLaw jump_law = NoJumps{};

    void validate() const; // throws SpecError
    // kappa plus the small-jump compensation (TruncatedStable with compensate on)
    double effective_drift() const;
    // mean of S_1 = effective drift + (jump rate) * (mean jump); used in moment tests
    double mean_s1() const;
};

// ---- sampled path ----------------------------------------------------------

// S_r = drift * r + sum of jump_sizes with jump_times <= r  (right-continuous)
struct SubordinatorPath {
    double horizon = 0.0;
    double drift = 1.0;
    std::vector<double> jump_times; // strictly increasing in (0, horizon]
    std::vector<double> jump_sizes; // all > 0

    double value(double r) const;      // S_r
    double value_left(double r) const; // S_{r-}
};

// ---- inverse path ----------------------------------------------------------

// L_t = inf{r : S_r > (t-a)^+}, R_t = overshoot with the initial offset a folded in.
// t merges the caller grid with auxiliary knots at the images of jump epochs
// (flat-interval endpoints), so every step is entirely flat or entirely sloped.
// dL is the canonical per-step increment stream: exactly 0 on flat steps and
// exactly dt/drift elsewhere; L holds the closed-form inverse at each node
// (consistent with cumulating dL to within 1-2 ulp).
struct InversePath {
    std::vector<double> t;
    std::vector<double> L;
    std::vector<double> R;
    std::vector<char> flat; // R > 0
    std::vector<double> dL; // size t.size()-1
    std::vector<std::size_t> caller_index; // positions of caller grid nodes in t
    double a = 0.0;
    double drift = 1.0;
};

// ---- operations ------------------------------------------------------------

SubordinatorPath sample_subordinator(const SubordinatorSpec& spec, double horizon_L,
                                     std::uint64_t seed);

InversePath invert_on_grid(const SubordinatorPath& path, const std::vector<double>& grid,
                           double a);

// exact pointwise inversion at operational level tau = (t-a)^+ >= 0
struct InversePoint {
    double L;
    double R; // S_L - tau
};
InversePoint inverse_at_level(const SubordinatorPath& path, double tau);

struct DensityEstimate {
    double estimate;
    double std_error;
};

// Monte Carlo estimate of E[L_{x+delta} - L_x] / delta  (renewal density at x)
DensityEstimate estimate_renewal_density(const SubordinatorSpec& spec, double x, double delta,
                                         int n_paths, std::uint64_t seed);

// Monte Carlo estimate of P(S_{L_x} = x); CompoundPoisson / NoJumps laws only.
double hit_probability(const SubordinatorSpec& spec, double x, int n_paths, std::uint64_t seed);

} // namespace subdiff
