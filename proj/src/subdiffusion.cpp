#include "subdiff/subdiffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "subdiff/rng.hpp"

namespace subdiff {

SubdiffusionPath subdiffusion_from_inverse(InversePath inv, double x0, std::uint64_t seed) {
    SubdiffusionPath p;
    p.inverse = std::move(inv);
    p.x0 = x0;
    const std::size_t m = p.inverse.t.size();
    p.X.resize(m);
    p.dB.resize(m - 1);
    p.age.resize(m);

    auto gen = make_stream(seed, 0, StreamTag::Brownian);
    std::normal_distribution<double> normal(0.0, 1.0);

    p.X[0] = x0;
    p.age[0] = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double dl = p.inverse.dL[i];
        p.dB[i] = dl > 0.0 ? std::sqrt(dl) * normal(gen) : 0.0;
        p.X[i + 1] = p.X[i] + p.dB[i];
        p.age[i + 1] =
            p.dB[i] != 0.0 ? 0.0 : p.age[i] + (p.inverse.t[i + 1] - p.inverse.t[i]);
    }
    return p;
}

SubdiffusionPath sample_subdiffusion(const SubordinatorSpec& spec, double x0, double a,
                                     const std::vector<double>& grid, std::uint64_t seed) {
    spec.validate();
    if (grid.size() < 2) throw SpecError("grid needs at least two points");
    const double T = grid.back();
    // drift alone guarantees S exceeds (T-a)^+ on this horizon
    const double horizon = (std::max(0.0, T - a) + 1.0) / spec.effective_drift();
    auto s_path = sample_subordinator(spec, horizon, seed);
    auto inv = invert_on_grid(s_path, grid, a);
    return subdiffusion_from_inverse(std::move(inv), x0, seed);
}

ObservableFeatures features_at(const SubdiffusionPath& path, std::size_t node) {
    return {path.inverse.t[node], path.X[node], path.inverse.L[node], path.age[node]};
}

namespace {
// latest node with t <= target
std::size_t node_at(const SubdiffusionPath& p, double t) {
    const auto& g = p.inverse.t;
    auto it = std::upper_bound(g.begin(), g.end(), t);
    if (it == g.begin()) return 0;
    return static_cast<std::size_t>(it - g.begin()) - 1;
}
} // namespace

MartingaleCheck martingale_check(const std::vector<SubdiffusionPath>& paths, double t, double s) {
    if (paths.size() < 2) throw SpecError("martingale_check needs >= 2 paths");
    if (!(s > 0.0)) throw SpecError("martingale_check needs s > 0");
    double sum = 0.0, sumsq = 0.0, isum = 0.0, isumsq = 0.0;
    const std::size_t n = paths.size();
    for (const auto& p : paths) {
        std::size_t i0 = node_at(p, t), i1 = node_at(p, t + s);
        double dx = p.X[i1] - p.X[i0];
        double dl = p.inverse.L[i1] - p.inverse.L[i0];
        double iso = dx * dx - dl;
        sum += dx;
        sumsq += dx * dx;
        isum += iso;
        isumsq += iso * iso;
    }
    double mean = sum / n;
    double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1));
    double imean = isum / n;
    double ivar = std::max(0.0, (isumsq - n * imean * imean) / (n - 1));
    return {mean, std::sqrt(var / n), imean, std::sqrt(ivar / n)};
}

std::vector<double> geometric_subdiffusion(const SubdiffusionPath& path, double S0, double mu,
                                           double sigma) {
    if (!(S0 > 0.0)) throw SpecError("geometric_subdiffusion: S0 must be > 0");
    const std::size_t m = path.n_nodes();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double bl = path.X[i] - path.x0;
        out[i] = S0 * std::exp(sigma * bl + mu * path.inverse.t[i] -
                               0.5 * sigma * sigma * path.inverse.L[i]);
    }
    return out;
}

} // namespace subdiff
