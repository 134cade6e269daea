#include "subdiff/smp.hpp"

#include <cmath>

#include "subdiff/errors.hpp"

namespace subdiff {

double hamiltonian(const CoefficientSet& coeffs, double t, double x, double u, double p) {
    return coeffs.b(t, x, u) * p - coeffs.f(t, x, u);
}

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

void finish_report(SmpReport& rep, bool two_sided) {
    rep.min_mean = 0.0;
    rep.max_abs_mean = 0.0;
    rep.violations_3sigma = 0;
    bool first_cell = true;
    for (const auto& c : rep.cells) {
        if (first_cell || c.mean < rep.min_mean) {
            rep.min_mean = c.mean;
            rep.min_t = c.t;
            rep.min_u = c.u;
            rep.min_std_error = c.std_error;
            first_cell = false;
        }
        rep.max_abs_mean = std::max(rep.max_abs_mean, std::fabs(c.mean));
        const bool violated =
            two_sided ? std::fabs(c.mean) > 3.0 * c.std_error : c.mean < -3.0 * c.std_error;
        if (violated) ++rep.violations_3sigma;
    }
}

} // namespace

SmpReport spike_condition_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                               const BsdeSolution& first, const BsdeSolution& second,
                               const std::vector<double>& u_grid) {
    require_states(bundle, "spike_condition_scan");
    SmpReport rep;
    rep.condition = "spike necessary condition";
    const std::size_t np = bundle.n_paths();
    const std::size_t nn = bundle.n_nodes();
    std::vector<double> vals(np);
    for (std::size_t j = 1; j + 1 < nn; ++j) {
        const double t = bundle.grid[j];
        for (double u : u_grid) {
            for (std::size_t p = 0; p < np; ++p) {
                const auto& driver = bundle.paths[p];
                const std::size_t fi = bundle.fine_index(p, j);
                const double x = bundle.states[p][fi];
                const double ub = bundle.controls[p][fi];
                const double pj = first.Y[p][j];
                const double qj = first.Z[p][j];
                const double Pj = second.Y[p][j];
                const double ds = coeffs.sigma(t, x, ub) - coeffs.sigma(t, x, u);
                const double inv_kappa =
                    driver.inverse.flat[fi] ? 0.0 : 1.0 / driver.inverse.drift;
                vals[p] = hamiltonian(coeffs, t, x, ub, pj) - hamiltonian(coeffs, t, x, u, pj) -
                          inv_kappa * (ds * qj + 0.5 * ds * ds * Pj);
            }
            const auto s = summarize(vals);
            rep.cells.push_back({t, u, s.mean, s.se});
        }
    }
    finish_report(rep, false);
    return rep;
}

SmpReport convex_stationarity_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                                   const BsdeSolution& first) {
    require_states(bundle, "convex_stationarity_scan");
    SmpReport rep;
    rep.condition = "convex stationarity";
    const std::size_t np = bundle.n_paths();
    const std::size_t nn = bundle.n_nodes();
    std::vector<double> vals(np);
    for (std::size_t j = 1; j + 1 < nn; ++j) {
        const double t = bundle.grid[j];
        for (std::size_t p = 0; p < np; ++p) {
            const auto& driver = bundle.paths[p];
            const std::size_t fi = bundle.fine_index(p, j);
            const double x = bundle.states[p][fi];
            const double ub = bundle.controls[p][fi];
            const double inv_kappa = driver.inverse.flat[fi] ? 0.0 : 1.0 / driver.inverse.drift;
            vals[p] = coeffs.bu(t, x, ub) * first.Y[p][j] +
                      inv_kappa * coeffs.su(t, x, ub) * first.Z[p][j] - coeffs.fu(t, x, ub);
        }
        const auto s = summarize(vals);
        rep.cells.push_back({t, 0.0, s.mean, s.se});
    }
    finish_report(rep, true);
    return rep;
}

// The classical evaluators repeat the loops above with the flat indicator
// identically one. The duplication is deliberate: they are the reference the
// subordinated scans must reduce to when the jump measure vanishes.
SmpReport classical_spike_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                               const BsdeSolution& first, const BsdeSolution& second,
                               const std::vector<double>& u_grid) {
    require_states(bundle, "classical_spike_scan");
    SmpReport rep;
    rep.condition = "spike necessary condition (classical)";
    const std::size_t np = bundle.n_paths();
    const std::size_t nn = bundle.n_nodes();
    std::vector<double> vals(np);
    for (std::size_t j = 1; j + 1 < nn; ++j) {
        const double t = bundle.grid[j];
        for (double u : u_grid) {
            for (std::size_t p = 0; p < np; ++p) {
                const auto& driver = bundle.paths[p];
                const std::size_t fi = bundle.fine_index(p, j);
                const double x = bundle.states[p][fi];
                const double ub = bundle.controls[p][fi];
                const double pj = first.Y[p][j];
                const double qj = first.Z[p][j];
                const double Pj = second.Y[p][j];
                const double ds = coeffs.sigma(t, x, ub) - coeffs.sigma(t, x, u);
                const double inv_kappa = 1.0 / driver.inverse.drift;
                vals[p] = hamiltonian(coeffs, t, x, ub, pj) - hamiltonian(coeffs, t, x, u, pj) -
                          inv_kappa * (ds * qj + 0.5 * ds * ds * Pj);
            }
            const auto s = summarize(vals);
            rep.cells.push_back({t, u, s.mean, s.se});
        }
    }
    finish_report(rep, false);
    return rep;
}

SmpReport classical_stationarity_scan(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                                      const BsdeSolution& first) {
    require_states(bundle, "classical_stationarity_scan");
    SmpReport rep;
    rep.condition = "convex stationarity (classical)";
    const std::size_t np = bundle.n_paths();
    const std::size_t nn = bundle.n_nodes();
    std::vector<double> vals(np);
    for (std::size_t j = 1; j + 1 < nn; ++j) {
        const double t = bundle.grid[j];
        for (std::size_t p = 0; p < np; ++p) {
            const auto& driver = bundle.paths[p];
            const std::size_t fi = bundle.fine_index(p, j);
            const double x = bundle.states[p][fi];
            const double ub = bundle.controls[p][fi];
            const double inv_kappa = 1.0 / driver.inverse.drift;
            vals[p] = coeffs.bu(t, x, ub) * first.Y[p][j] +
                      inv_kappa * coeffs.su(t, x, ub) * first.Z[p][j] - coeffs.fu(t, x, ub);
        }
        const auto s = summarize(vals);
        rep.cells.push_back({t, 0.0, s.mean, s.se});
    }
    finish_report(rep, true);
    return rep;
}

SufficiencyVerdict sufficiency_check(const CoefficientSet& coeffs,
                                     const TrajectoryBundle& bundle_bar,
                                     const TrajectoryBundle& bundle_comp,
                                     const BsdeSolution& first) {
    require_states(bundle_bar, "sufficiency_check");
    require_states(bundle_comp, "sufficiency_check");
    const std::size_t np = bundle_bar.n_paths();
    const std::size_t nn = bundle_bar.n_nodes();
    if (bundle_comp.n_paths() != np || bundle_comp.n_nodes() != nn ||
        bundle_comp.master_seed != bundle_bar.master_seed)
        throw SpecError("sufficiency_check: bundles are not coupled (same drivers required)");

    SufficiencyVerdict out;
    out.precondition_ok = true;
    for (std::size_t p = 0; p < np; ++p) {
        if (coeffs.hxx(bundle_bar.states[p].back()) < -1e-9 ||
            coeffs.hxx(bundle_comp.states[p].back()) < -1e-9)
            out.precondition_ok = false;
    }

    std::vector<double> lhs(np), rhs(np), diff(np), jdiff(np);
    for (std::size_t p = 0; p < np; ++p) {
        const auto& driver = bundle_bar.paths[p];
        double l = 0.0, r = 0.0;
        for (std::size_t j = 0; j + 1 < nn; ++j) {
            const std::size_t fi = bundle_bar.fine_index(p, j);
            const double t = bundle_bar.grid[j];
            const double dt = bundle_bar.grid[j + 1] - bundle_bar.grid[j];
            const double xb = bundle_bar.states[p][fi];
            const double ub = bundle_bar.controls[p][fi];
            const double xc = bundle_comp.states[p][fi];
            const double uc = bundle_comp.controls[p][fi];
            const double pj = first.Y[p][j];
            const double qj = first.Z[p][j];
            const double inv_kappa = driver.inverse.flat[fi] ? 0.0 : 1.0 / driver.inverse.drift;
            const double grad = coeffs.bx(t, xb, ub) * pj - coeffs.fx(t, xb, ub) +
                                inv_kappa * coeffs.sx(t, xb, ub) * qj;
            const double g_bar = coeffs.b(t, xb, ub) * pj - coeffs.f(t, xb, ub) +
                                 inv_kappa * coeffs.sigma(t, xb, ub) * qj;
            const double g_comp = coeffs.b(t, xc, uc) * pj - coeffs.f(t, xc, uc) +
                                  inv_kappa * coeffs.sigma(t, xc, uc) * qj;
            l += grad * (xc - xb) * dt;
            r += (g_comp - g_bar) * dt;
        }
        lhs[p] = l;
        rhs[p] = r;
        diff[p] = l - r;
        jdiff[p] = bundle_bar.cost_samples[p] - bundle_comp.cost_samples[p];
    }
    out.lhs = summarize(lhs).mean;
    out.rhs = summarize(rhs).mean;
    const auto sd = summarize(diff);
    out.margin_se = sd.se;
    out.holds = out.precondition_ok && sd.mean >= -3.0 * sd.se;
    out.j_candidate = summarize(bundle_bar.cost_samples).mean;
    out.j_comparison = summarize(bundle_comp.cost_samples).mean;
    const auto sj = summarize(jdiff);
    out.j_diff_se = sj.se;
    out.j_ordered = sj.mean <= 3.0 * sj.se;
    if (!out.precondition_ok) out.note = "terminal cost not convex on the sampled range";
    return out;
}

} // namespace subdiff
