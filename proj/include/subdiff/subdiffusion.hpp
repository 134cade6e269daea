#pragma once
#include <cstdint>
#include <vector>

#include "subdiff/subordinator.hpp"

namespace subdiff {

// X_t = x0 + B_{L_{(t-a)^+}} on the inverse path's grid.
// X is built by accumulating dB, so X[i+1] == X[i] + dB[i] bit-exactly and
// dB[i] == 0.0 exactly on flat steps (variance subordination: dB ~ N(0, dL)).
// age[i] is the time since X last moved (an F'-observable; never reads R).
struct SubdiffusionPath {
    InversePath inverse;
    double x0 = 0.0;
    std::vector<double> X;
    std::vector<double> dB;  // size t.size()-1
    std::vector<double> age; // size t.size()

    std::size_t n_nodes() const { return inverse.t.size(); }
};

// Feature contract for everything F'_t-adapted: computable from the X-history
// up to t only. R never appears here.
struct ObservableFeatures {
    double t = 0.0;
    double X = 0.0;
    double L = 0.0; // running quadratic variation of X
    double age_of_flat = 0.0;
};

ObservableFeatures features_at(const SubdiffusionPath& path, std::size_t node);

SubdiffusionPath sample_subdiffusion(const SubordinatorSpec& spec, double x0, double a,
                                     const std::vector<double>& grid, std::uint64_t seed);

// build the diffusion on an already-inverted driver (used for coupled studies)
SubdiffusionPath subdiffusion_from_inverse(InversePath inv, double x0, std::uint64_t seed);

struct MartingaleCheck {
    double mean_increment;
    double mean_std_error;
    double isometry_residual; // E[(X_{t+s}-X_t)^2 - (L_{t+s}-L_t)]
    double isometry_std_error;
};

// t and t+s are snapped to the latest grid node <= the requested time.
MartingaleCheck martingale_check(const std::vector<SubdiffusionPath>& paths, double t, double s);

// exact solution of dS = mu S dt + sigma S dB_L: S0 exp(sigma B_L + mu t - sigma^2 L / 2)
std::vector<double> geometric_subdiffusion(const SubdiffusionPath& path, double S0, double mu,
                                           double sigma);

} // namespace subdiff
