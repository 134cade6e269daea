#include "subdiff/variation.hpp"

#include <cmath>
#include <limits>

#include "subdiff/errors.hpp"

namespace subdiff {

namespace {

struct MeanSe {
    double mean, se;
};

MeanSe summarize(const std::vector<double>& v) {
    const std::size_t n = v.size();
    double sum = 0.0, sumsq = 0.0;
    for (double x : v) {
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sumsq - n * mean * mean) / (n - 1)) : 0.0;
    return {mean, std::sqrt(var / n)};
}

void require_states(const TrajectoryBundle& bundle, const char* who) {
    if (bundle.states.size() != bundle.n_paths() || bundle.controls.size() != bundle.n_paths())
        throw SpecError(std::string(who) + ": bundle lacks realized states/controls");
}

} // namespace

SpikePathProcesses simulate_spike_processes(const CoefficientSet& coeffs, const SpikeSpec& spike,
                                            const TrajectoryBundle& bundle, std::size_t path,
                                            double eps) {
    require_states(bundle, "simulate_spike_processes");
    // eps = 0 is the empty window: y = z = 0 and x_eps re-runs the base control
    if (eps < 0.0) throw SpecError("simulate_spike_processes: eps must be nonnegative");
    const auto& driver = bundle.paths[path];
    const auto& xbar = bundle.states[path];
    const auto& ubar = bundle.controls[path];
    const std::size_t m = driver.n_nodes();

    SpikePathProcesses out;
    out.y.assign(m, 0.0);
    out.z.assign(m, 0.0);
    std::vector<double> spiked(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double t = driver.inverse.t[i];
        const bool in_window = t >= spike.t_bar && t < spike.t_bar + eps;
        spiked[i] = in_window
                        ? spike.alt({t, driver.X[i], driver.inverse.L[i], driver.age[i]}, xbar[i])
                        : ubar[i];
    }
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double t = driver.inverse.t[i];
        const double dt = driver.inverse.t[i + 1] - t;
        const double db = driver.dB[i];
        const double x = xbar[i], u = ubar[i], w = spiked[i];
        const double bx = coeffs.bx(t, x, u);
        const double sx = coeffs.sx(t, x, u);
        const double d_sigma = coeffs.sigma(t, x, w) - coeffs.sigma(t, x, u);
        const double d_b = coeffs.b(t, x, w) - coeffs.b(t, x, u);
        const double d_sx = coeffs.sx(t, x, w) - sx;
        const double y = out.y[i], z = out.z[i];
        out.y[i + 1] = y + bx * y * dt + (sx * y + d_sigma) * db;
        out.z[i + 1] = z + (bx * z + 0.5 * coeffs.bxx(t, x, u) * y * y + d_b) * dt +
                       (sx * z + 0.5 * coeffs.sxx(t, x, u) * y * y + d_sx * y) * db;
        if (!std::isfinite(out.y[i + 1]) || !std::isfinite(out.z[i + 1]))
            throw NumericalError("simulate_spike_processes: non-finite value at step " +
                                 std::to_string(i));
    }
    out.x_eps = euler_integrate_controls(coeffs, spiked, driver, bundle.x0);
    return out;
}

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw SpecError("fit_loglog: size mismatch");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0 && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    const std::size_t n = lx.size();
    if (n < 2)
        return {std::numeric_limits<double>::quiet_NaN(),
                std::numeric_limits<double>::quiet_NaN(), 0.0};
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return fit;
}

void accumulate_spike_moments(const CoefficientSet& coeffs, const SpikeSpec& spike,
                              const TrajectoryBundle& bundle, SpikeMomentAccumulator& acc) {
    require_states(bundle, "accumulate_spike_moments");
    const std::size_t ne = acc.eps_grid.size();
    const std::size_t nn = bundle.n_nodes();
    if (acc.sum_x.empty()) {
        acc.sum_x.assign(ne, std::vector<double>(nn, 0.0));
        acc.sum_xy.assign(ne, std::vector<double>(nn, 0.0));
        acc.sum_xyz.assign(ne, std::vector<double>(nn, 0.0));
    }
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
        for (std::size_t e = 0; e < ne; ++e) {
            const auto proc = simulate_spike_processes(coeffs, spike, bundle, p, acc.eps_grid[e]);
            for (std::size_t j = 0; j < nn; ++j) {
                const std::size_t fi = bundle.fine_index(p, j);
                const double r1 = proc.x_eps[fi] - bundle.states[p][fi];
                const double r2 = r1 - proc.y[fi];
                const double r3 = r2 - proc.z[fi];
                acc.sum_x[e][j] += std::pow(r1 * r1, acc.k);
                acc.sum_xy[e][j] += std::pow(r2 * r2, acc.k);
                acc.sum_xyz[e][j] += std::pow(r3 * r3, acc.k);
            }
        }
    }
    acc.n_paths += bundle.n_paths();
}

SpikeScaling finalize_spike_scaling(const SpikeMomentAccumulator& acc) {
    if (acc.n_paths == 0) throw SpecError("finalize_spike_scaling: no paths accumulated");
    SpikeScaling out;
    out.eps_grid = acc.eps_grid;
    const std::size_t ne = acc.eps_grid.size();
    out.sup_x.resize(ne);
    out.sup_xy.resize(ne);
    out.sup_xyz.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) {
        double mx = 0.0, mxy = 0.0, mxyz = 0.0;
        for (std::size_t j = 0; j < acc.sum_x[e].size(); ++j) {
            mx = std::max(mx, acc.sum_x[e][j]);
            mxy = std::max(mxy, acc.sum_xy[e][j]);
            mxyz = std::max(mxyz, acc.sum_xyz[e][j]);
        }
        out.sup_x[e] = mx / acc.n_paths;
        out.sup_xy[e] = mxy / acc.n_paths;
        out.sup_xyz[e] = mxyz / acc.n_paths;
    }
    out.slope_x = fit_loglog(out.eps_grid, out.sup_x);
    out.slope_xy = fit_loglog(out.eps_grid, out.sup_xy);
    out.slope_xyz = fit_loglog(out.eps_grid, out.sup_xyz);
    return out;
}

SpikeScaling spike_remainder_scaling(const CoefficientSet& coeffs, const SpikeSpec& spike,
                                     const TrajectoryBundle& bundle,
                                     const std::vector<double>& eps_grid, int k) {
    SpikeMomentAccumulator acc;
    acc.k = k;
    acc.eps_grid = eps_grid;
    accumulate_spike_moments(coeffs, spike, bundle, acc);
    return finalize_spike_scaling(acc);
}

std::vector<std::function<double(const ObservableFeatures&, double)>> direction_library(double T) {
    return {
        [](const ObservableFeatures&, double) { return 1.0; },
        [T](const ObservableFeatures& f, double) { return f.t / T; },
        [T](const ObservableFeatures& f, double) { return f.t > 0.5 * T ? 1.0 : 0.0; },
        [](const ObservableFeatures& f, double) { return f.X; },
    };
}

ConvexVariations simulate_convex_variations(const CoefficientSet& coeffs, const ConvexSpec& convex,
                                            const TrajectoryBundle& bundle) {
    require_states(bundle, "simulate_convex_variations");
    ConvexVariations out;
    const std::size_t np = bundle.n_paths();
    out.x1.resize(np);
    out.x2.resize(np);
    out.v.resize(np);
    for (std::size_t p = 0; p < np; ++p) {
        const auto& driver = bundle.paths[p];
        const auto& xbar = bundle.states[p];
        const auto& ubar = bundle.controls[p];
        const std::size_t m = driver.n_nodes();
        auto& v = out.v[p];
        v.resize(m);
        for (std::size_t i = 0; i < m; ++i)
            v[i] = convex.direction(
                {driver.inverse.t[i], driver.X[i], driver.inverse.L[i], driver.age[i]}, xbar[i]);

        auto& x1 = out.x1[p];
        if (convex.euler_consistent) {
            x1.assign(m, 0.0);
            for (std::size_t i = 0; i + 1 < m; ++i) {
                const double t = driver.inverse.t[i];
                const double dt = driver.inverse.t[i + 1] - t;
                x1[i + 1] =
                    x1[i] +
                    (coeffs.bx(t, xbar[i], ubar[i]) * x1[i] +
                     coeffs.bu(t, xbar[i], ubar[i]) * v[i]) * dt +
                    (coeffs.sx(t, xbar[i], ubar[i]) * x1[i] +
                     coeffs.su(t, xbar[i], ubar[i]) * v[i]) * driver.dB[i];
            }
        } else {
            std::vector<double> a(m - 1), alpha(m - 1), bcoef(m - 1), beta(m - 1);
            for (std::size_t i = 0; i + 1 < m; ++i) {
                const double t = driver.inverse.t[i];
                a[i] = coeffs.bx(t, xbar[i], ubar[i]);
                alpha[i] = coeffs.bu(t, xbar[i], ubar[i]) * v[i];
                bcoef[i] = coeffs.sx(t, xbar[i], ubar[i]);
                beta[i] = coeffs.su(t, xbar[i], ubar[i]) * v[i];
            }
            x1 = exact_linear_solve(a, alpha, bcoef, beta, 0.0, driver);
        }

        auto& x2 = out.x2[p];
        x2.assign(m, 0.0);
        for (std::size_t i = 0; i + 1 < m; ++i) {
            const double t = driver.inverse.t[i];
            const double dt = driver.inverse.t[i + 1] - t;
            const double x = xbar[i], u = ubar[i], x1i = x1[i], vi = v[i];
            const double drift = 0.5 * coeffs.bxx(t, x, u) * x1i * x1i +
                                 coeffs.bxu(t, x, u) * x1i * vi + coeffs.bx(t, x, u) * x2[i] +
                                 0.5 * coeffs.buu(t, x, u) * vi * vi;
            const double diff = 0.5 * coeffs.sxx(t, x, u) * x1i * x1i +
                                coeffs.sxu(t, x, u) * x1i * vi + coeffs.sx(t, x, u) * x2[i] +
                                0.5 * coeffs.suu(t, x, u) * vi * vi;
            x2[i + 1] = x2[i] + drift * dt + diff * driver.dB[i];
            if (!std::isfinite(x2[i + 1]))
                throw NumericalError("simulate_convex_variations: non-finite x2 at step " +
                                     std::to_string(i));
        }
    }
    return out;
}

VariationEstimate first_variation_J(const CoefficientSet& coeffs, const ConvexSpec& convex,
                                    const TrajectoryBundle& bundle, const BsdeSolution& adjoint,
                                    const ConvexVariations& var) {
    (void)convex;
    require_states(bundle, "first_variation_J");
    const std::size_t np = bundle.n_paths();
    const std::size_t nn = bundle.n_nodes();
    std::vector<double> direct(np), dual(np);
    for (std::size_t p = 0; p < np; ++p) {
        const auto& driver = bundle.paths[p];
        const auto& xbar = bundle.states[p];
        const auto& ubar = bundle.controls[p];
        const auto& x1 = var.x1[p];
        const auto& v = var.v[p];
        const std::size_t m = driver.n_nodes();

        // direct form: trapezoid on the fine grid, matching path_cost
        double d = 0.0;
        double prev = coeffs.fx(driver.inverse.t[0], xbar[0], ubar[0]) * x1[0] +
                      coeffs.fu(driver.inverse.t[0], xbar[0], ubar[0]) * v[0];
        for (std::size_t i = 0; i + 1 < m; ++i) {
            const double tn = driver.inverse.t[i + 1];
            const double next = coeffs.fx(tn, xbar[i + 1], ubar[i + 1]) * x1[i + 1] +
                                coeffs.fu(tn, xbar[i + 1], ubar[i + 1]) * v[i + 1];
            d += 0.5 * (prev + next) * (tn - driver.inverse.t[i]);
            prev = next;
        }
        direct[p] = d + coeffs.hx(xbar.back()) * x1.back();

        // adjoint form: left point on the caller grid, where (p, q) live
        double ad = 0.0;
        for (std::size_t j = 0; j + 1 < nn; ++j) {
            const std::size_t fi = bundle.fine_index(p, j);
            const std::size_t fj = bundle.fine_index(p, j + 1);
            const double t = bundle.grid[j];
            const double dt = bundle.grid[j + 1] - bundle.grid[j];
            const double dl = driver.inverse.L[fj] - driver.inverse.L[fi];
            const double x = xbar[fi], u = ubar[fi], vi = v[fi];
            ad += (coeffs.fu(t, x, u) - coeffs.bu(t, x, u) * adjoint.Y[p][j]) * vi * dt -
                  coeffs.su(t, x, u) * adjoint.Z[p][j] * vi * dl;
        }
        dual[p] = ad;
    }
    const auto sd = summarize(direct);
    const auto sa = summarize(dual);
    return {sd.mean, sd.se, sa.mean, sa.se};
}

VariationEstimate second_variation_J(const CoefficientSet& coeffs, const ConvexSpec& convex,
                                     const TrajectoryBundle& bundle, const BsdeSolution& adjoint,
                                     const BsdeSolution& eta, const ConvexVariations& var) {
    (void)convex;
    require_states(bundle, "second_variation_J");
    const std::size_t np = bundle.n_paths();
    const std::size_t nn = bundle.n_nodes();
    std::vector<double> direct(np), dual(np);
    for (std::size_t p = 0; p < np; ++p) {
        const auto& driver = bundle.paths[p];
        const auto& xbar = bundle.states[p];
        const auto& ubar = bundle.controls[p];
        const auto& x1 = var.x1[p];
        const auto& x2 = var.x2[p];
        const auto& v = var.v[p];
        const std::size_t m = driver.n_nodes();

        auto integrand = [&](std::size_t i) {
            const double t = driver.inverse.t[i];
            const double x = xbar[i], u = ubar[i];
            return 0.5 * coeffs.fxx(t, x, u) * x1[i] * x1[i] +
                   coeffs.fxu(t, x, u) * x1[i] * v[i] + coeffs.fx(t, x, u) * x2[i] +
                   0.5 * coeffs.fuu(t, x, u) * v[i] * v[i];
        };
        double d = 0.0;
        double prev = integrand(0);
        for (std::size_t i = 0; i + 1 < m; ++i) {
            const double next = integrand(i + 1);
            d += 0.5 * (prev + next) * (driver.inverse.t[i + 1] - driver.inverse.t[i]);
            prev = next;
        }
        direct[p] = d + 0.5 * coeffs.hxx(xbar.back()) * x1.back() * x1.back() +
                    coeffs.hx(xbar.back()) * x2.back();

        double ad = 0.0;
        for (std::size_t j = 0; j + 1 < nn; ++j) {
            const std::size_t fi = bundle.fine_index(p, j);
            const std::size_t fj = bundle.fine_index(p, j + 1);
            const double t = bundle.grid[j];
            const double dt = bundle.grid[j + 1] - bundle.grid[j];
            const double dl = driver.inverse.L[fj] - driver.inverse.L[fi];
            const double x = xbar[fi], u = ubar[fi];
            const double x1i = x1[fi], vi = v[fi];
            const double pj = adjoint.Y[p][j], qj = adjoint.Z[p][j];
            const double ej = eta.Y[p][j], gj = eta.Z[p][j];
            const double su = coeffs.su(t, x, u);
            ad += ((coeffs.fxx(t, x, u) - pj * coeffs.bxx(t, x, u)) * x1i * x1i +
                   (coeffs.fxu(t, x, u) - pj * coeffs.bxu(t, x, u) + ej * coeffs.bu(t, x, u)) *
                       x1i * vi +
                   0.5 * (coeffs.fuu(t, x, u) - pj * coeffs.buu(t, x, u)) * vi * vi) * dt;
            ad += ((ej * coeffs.sx(t, x, u) * su + gj * su - qj * coeffs.sxu(t, x, u)) * x1i * vi +
                   0.5 * (ej * su * su - qj * coeffs.suu(t, x, u)) * vi * vi) * dl;
        }
        dual[p] = ad;
    }
    const auto sd = summarize(direct);
    const auto sa = summarize(dual);
    return {sd.mean, sd.se, sa.mean, sa.se};
}

} // namespace subdiff
