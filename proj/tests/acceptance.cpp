// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here on purpose -- do not loosen them to make
// a run pass; a failure means the library or the criterion needs examination.
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "subdiff/bsde.hpp"
#include "subdiff/forward.hpp"
#include "subdiff/lq.hpp"
#include "subdiff/rng.hpp"
#include "subdiff/smp.hpp"
#include "subdiff/subdiffusion.hpp"
#include "subdiff/subordinator.hpp"
#include "subdiff/variation.hpp"

using namespace subdiff;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] %2d %-28s %s\n", pass ? "PASS" : "FAIL", idx, name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

std::vector<double> ugrid(double T, int n) {
    std::vector<double> g(n + 1);
    for (int i = 0; i <= n; ++i) g[i] = T * i / n;
    return g;
}

SubordinatorSpec cp_spec(double kappa = 1.0) {
    SubordinatorSpec s;
    s.kappa = kappa;
    s.jump_law = CompoundPoisson{1.0, ExpJumps{1.0}};
    return s;
}

ControlPolicy const_policy(double u) {
    ControlPolicy p;
    p.rule = [u](const ObservableFeatures&, double) { return u; };
    return p;
}

// driver-only bundle (no states/controls) for representation criteria
TrajectoryBundle driver_bundle(const SubordinatorSpec& spec, int n_paths, int n_steps, double a,
                               double T, std::uint64_t seed) {
    TrajectoryBundle b;
    b.grid = ugrid(T, n_steps);
    b.a = a;
    b.x0 = 0.0;
    b.master_seed = seed;
    b.paths.reserve(n_paths);
    for (int k = 0; k < n_paths; ++k)
        b.paths.push_back(
            sample_subdiffusion(spec, 0.0, a, b.grid, stream_seed(seed, k, StreamTag::Generic)));
    return b;
}

// ---------------------------------------------------------------------------
// Criteria 1-3 share one LQ study: T=1, a=0.25, x0=0, kappa=1, CP(1, Exp(1)).
// ---------------------------------------------------------------------------

constexpr double kT = 1.0, kA = 0.25, kX0 = 0.0;
constexpr int kPaths = 20000, kSteps = 400;
constexpr std::uint64_t kSeed = 20240101;

void criterion_1(const lq::ClosedForm& form, const TrajectoryBundle& bundle,
                 const BsdeSolution& first) {
    // |mean(p - phi x - psi)| <= 0.02 max|psi| on [a, T]; |mean p - c e^{-t}| <=
    // 0.02 c on [0, a). max|psi| = psi(T) = 1.
    const double tol_post = 0.02, tol_pre = 0.02 * form.c;
    double worst_post = 0.0, worst_pre = 0.0;
    for (std::size_t i = 0; i < bundle.n_nodes(); ++i) {
        const double t = bundle.grid[i];
        double m = 0.0;
        for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
            if (t >= kA)
                m += first.Y[p][i] - (lq::phi(t, kT) * bundle.states[p][i] + lq::psi(t, kT));
            else
                m += first.Y[p][i] - form.c * std::exp(-t);
        }
        m = std::fabs(m / bundle.n_paths());
        (t >= kA ? worst_post : worst_pre) = std::max(t >= kA ? worst_post : worst_pre, m);
    }
    report(1, "lq-adjoint-identity", worst_post <= tol_post && worst_pre <= tol_pre,
           fmt("max|mean(p-phi*x-psi)|=%.4f (tol %.4f) on [a,T]; max|mean p - c e^-t|=%.4f "
               "(tol %.4f) on [0,a)",
               worst_post, tol_post, worst_pre, tol_pre));
}

void criterion_2(const lq::ClosedForm& form) {
    // The fitted adjoint carries sampling noise shared across paths of one
    // solve, so per-path paired errors understate the residual. The combined
    // std error is taken across independent replicate batches, each with its
    // own simulation and adjoint solve.
    const int n_batches = 8, batch_paths = 2500;
    std::vector<std::vector<double>> batch_means; // [batch][interior time]
    std::vector<double> times;
    for (int b = 0; b < n_batches; ++b) {
        TrajectoryBundle bundle;
        estimate_cost(lq::coefficients(), lq::policy(form), batch_paths, ugrid(kT, kSteps),
                      cp_spec(), kX0, kA, kSeed + 101 + b, &bundle);
        auto first = solve_first_adjoint(lq::coefficients(), lq::policy(form), bundle);
        auto rep = convex_stationarity_scan(lq::coefficients(), bundle, first);
        std::vector<double> means;
        means.reserve(rep.cells.size());
        for (const auto& c : rep.cells) means.push_back(c.mean);
        if (b == 0)
            for (const auto& c : rep.cells) times.push_back(c.t);
        batch_means.push_back(std::move(means));
    }
    std::size_t violations = 0;
    double worst_ratio = 0.0, worst_t = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        double s = 0.0, sq = 0.0;
        for (int b = 0; b < n_batches; ++b) {
            s += batch_means[b][i];
            sq += batch_means[b][i] * batch_means[b][i];
        }
        const double mean = s / n_batches;
        const double var = (sq / n_batches - mean * mean) / (n_batches - 1);
        const double se = std::sqrt(std::max(var, 0.0));
        const double ratio = se > 0.0 ? std::fabs(mean) / (3.0 * se) : (mean == 0.0 ? 0.0 : 1e9);
        if (ratio > 1.0) ++violations;
        if (ratio > worst_ratio) {
            worst_ratio = ratio;
            worst_t = times[i];
        }
    }
    report(2, "lq-stationarity", violations == 0,
           fmt("%zu/%zu interior times with |mean G| > 3 combined se (worst ratio %.2f at "
               "t=%.3f, %d batches)",
               violations, times.size(), worst_ratio, worst_t, n_batches));
}

void criterion_3(const lq::ClosedForm& form, const TrajectoryBundle& bundle) {
    // coupled J(u) <= J(u + eps v) + 3 se for all directions and eps; strict
    // (beyond 3 se) at |eps| = 0.2
    auto coeffs = lq::coefficients();
    auto dirs = direction_library(kT);
    const std::vector<double> eps_list{-0.2, -0.1, -0.05, 0.05, 0.1, 0.2};
    std::size_t soft_fail = 0, strict_fail = 0, cells = 0;
    double worst_margin = 1e300;
    for (std::size_t d = 0; d < dirs.size(); ++d) {
        // realized direction along the base trajectory (common random numbers)
        std::vector<std::vector<double>> v(bundle.n_paths());
        for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
            const auto& driver = bundle.paths[p];
            v[p].resize(driver.n_nodes());
            for (std::size_t i = 0; i < v[p].size(); ++i)
                v[p][i] = dirs[d](features_at(driver, i), bundle.states[p][i]);
        }
        for (double eps : eps_list) {
            double s = 0.0, sq = 0.0;
            for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
                const auto& driver = bundle.paths[p];
                std::vector<double> pert(driver.n_nodes());
                for (std::size_t i = 0; i < pert.size(); ++i)
                    pert[i] = bundle.controls[p][i] + eps * v[p][i];
                auto x = euler_integrate_controls(coeffs, pert, driver, bundle.x0);
                const double diff = path_cost(coeffs, driver, x, pert) - bundle.cost_samples[p];
                s += diff;
                sq += diff * diff;
            }
            const double mean = s / bundle.n_paths();
            const double se = std::sqrt(
                (sq / bundle.n_paths() - mean * mean) / bundle.n_paths());
            ++cells;
            if (mean < -3.0 * se) ++soft_fail;                       // J(u) > J(u+eps v) + 3 se
            if (std::fabs(eps) == 0.2 && mean <= 3.0 * se) ++strict_fail;
            worst_margin = std::min(worst_margin, se > 0.0 ? mean / se : 1e300);
        }
    }
    report(3, "lq-optimality-ordering", soft_fail == 0 && strict_fail == 0,
           fmt("%zu cells; ordering violations %zu; non-strict at |eps|=0.2: %zu; worst "
               "mean/se=%.1f",
               cells, soft_fail, strict_fail, worst_margin));
}

// ---------------------------------------------------------------------------

void criterion_4() {
    // 10^3 paths: 0 <= dL <= dt/kappa with slope exactly 1/kappa off flat runs
    // and exactly 0 on them, bit-level on the emitted increments; the L array
    // agrees with the increment stream to 1e-12 per step.
    std::size_t violations = 0;
    double worst_consistency = 0.0;
    for (double kappa : {1.0, 2.0}) {
        auto spec = cp_spec(kappa);
        auto grid = ugrid(kT, 500);
        for (int k = 0; k < 500; ++k) {
            auto path = sample_subdiffusion(spec, 0.0, kA, grid,
                                            stream_seed(77, k, StreamTag::Generic));
            const auto& inv = path.inverse;
            for (std::size_t i = 0; i + 1 < inv.t.size(); ++i) {
                const double dt = inv.t[i + 1] - inv.t[i];
                const double dl = inv.dL[i];
                if (inv.flat[i]) {
                    if (dl != 0.0) ++violations;
                } else {
                    if (dl != dt / kappa) ++violations; // bit-level slope 1/kappa
                }
                if (!(dl >= 0.0 && dl <= dt / kappa)) ++violations;
                worst_consistency =
                    std::max(worst_consistency, std::fabs(inv.L[i + 1] - inv.L[i] - dl));
            }
        }
    }
    report(4, "inverse-exactness", violations == 0 && worst_consistency < 1e-12,
           fmt("bit-level violations %zu; worst |dL - (L[i+1]-L[i])| = %.2e (tol 1e-12)",
               violations, worst_consistency));
}

void criterion_5() {
    const int n = 100000;
    const double kappa = 2.0;
    auto spec = cp_spec(kappa);
    // renewal density at x = 0 approaches 1/kappa monotonically within 3 sigma
    const std::vector<double> deltas{0.1, 0.05, 0.025};
    std::vector<DensityEstimate> est;
    for (std::size_t i = 0; i < deltas.size(); ++i)
        est.push_back(estimate_renewal_density(spec, 0.0, deltas[i], n, 401 + i));
    bool mono = true;
    for (std::size_t i = 0; i + 1 < est.size(); ++i) {
        const double di = std::fabs(est[i].estimate - 1.0 / kappa);
        const double dj = std::fabs(est[i + 1].estimate - 1.0 / kappa);
        const double se = 3.0 * std::hypot(est[i].std_error, est[i + 1].std_error);
        if (dj > di + se) mono = false;
    }
    // hit probability = kappa * renewal density, combined 3 sigma
    bool hit_ok = true;
    double worst_hit = 0.0;
    for (double x : {0.5, 1.0, 2.0}) {
        const double p = hit_probability(spec, x, n, 411);
        auto th = estimate_renewal_density(spec, x, 0.02, n, 413);
        const double se_p = std::sqrt(p * (1.0 - p) / n);
        const double tol = 3.0 * std::hypot(se_p, kappa * th.std_error);
        const double gap = std::fabs(p - kappa * th.estimate);
        worst_hit = std::max(worst_hit, gap - tol);
        if (gap > tol) hit_ok = false;
    }
    report(5, "renewal-limits", mono && hit_ok,
           fmt("theta(0;delta)={%.4f,%.4f,%.4f} -> 1/kappa=%.4f monotone=%d; hit-prob worst "
               "excess over 3se = %.2e",
               est[0].estimate, est[1].estimate, est[2].estimate, 1.0 / kappa, mono ? 1 : 0,
               worst_hit));
}

void criterion_6() {
    // nu = 0, kappa = 1 (deterministic clock L = t)
    SubordinatorSpec nu0;
    auto bundle = driver_bundle(nu0, 4000, 40, 0.0, kT, 421);
    // xi = X_T: unit integrand, residual variance < 1e-10
    std::vector<double> xi(bundle.n_paths());
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) xi[p] = bundle.paths[p].X.back();
    auto mr = represent_martingale(xi, bundle, 3);
    double worst_h = 0.0;
    for (const auto& h : mr.H)
        for (double v : h) worst_h = std::max(worst_h, std::fabs(v - 1.0));
    // xi = X_T^2: value chain is quadratic, degree-3 residual at least 10x lower
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) xi[p] *= xi[p];
    auto mr1 = represent_martingale(xi, bundle, 1);
    auto mr3 = represent_martingale(xi, bundle, 3);
    const double ratio = mr1.residual_variance / mr3.residual_variance;
    report(6, "martingale-representation",
           mr.residual_variance < 1e-10 && ratio >= 10.0,
           fmt("X_T: residual=%.2e (tol 1e-10), max|H-1|=%.2e; X_T^2: degree-1/degree-3 "
               "residual ratio=%.1f (need >= 10)",
               mr.residual_variance, worst_h, ratio));
}

void criterion_7() {
    // LQ adjoint driver h1 = -y (C = 1) at beta = 2 x threshold
    const double beta = default_beta(1.0, 1.0, kT);
    auto form = lq::ClosedForm::make(kT, kA, kX0);
    TrajectoryBundle bundle;
    estimate_cost(lq::coefficients(), lq::policy(form), 2000, ugrid(kT, 100), cp_spec(), kX0,
                  kA, 431, &bundle);
    BsdeSpec spec;
    spec.h1 = [](double, double y) { return -y; };
    spec.h2 = [](double, double, double) { return 0.0; };
    spec.terminal = [](const ObservableFeatures&, double x) { return 1.0 - x; };
    spec.lipschitz_C = 1.0;
    auto sol = picard_solve(spec, bundle, 3, beta, 8, 0.0);
    int best_run = 0, run = 0;
    double worst_used = 0.0;
    for (std::size_t i = 1; i < sol.picard_norms.size(); ++i) {
        const double r = sol.picard_norms[i - 1] > 0.0
                             ? sol.picard_norms[i] / sol.picard_norms[i - 1]
                             : 0.0;
        if (r <= 0.7) {
            ++run;
            worst_used = std::max(worst_used, r);
        } else
            run = 0;
        best_run = std::max(best_run, run);
    }
    report(7, "picard-contraction", !sol.contraction_failed && best_run >= 4,
           fmt("beta=%.0f: %d consecutive ratios <= 0.7 (need >= 4), worst used ratio %.3f, "
               "%zu iterations",
               beta, best_run, worst_used, sol.picard_norms.size()));
}

void criterion_8() {
    // spike scaling over eps in {2^-3 .. 2^-7}, 10^5 paths accumulated in chunks
    auto coeffs = lq::coefficients_sigma_u();
    SpikeSpec spike{const_policy(0.0), const_policy(1.0), 0.5};
    SpikeMomentAccumulator acc;
    acc.k = 1;
    acc.eps_grid = {0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
    const int chunks = 50, chunk_paths = 2000;
    for (int c = 0; c < chunks; ++c) {
        TrajectoryBundle bundle;
        estimate_cost(coeffs, const_policy(0.0), chunk_paths, ugrid(kT, 512), cp_spec(), kX0,
                      0.0, 441 + c, &bundle);
        accumulate_spike_moments(coeffs, spike, bundle, acc);
    }
    auto scal = finalize_spike_scaling(acc);
    const bool ok = scal.slope_x.slope >= 0.8 && scal.slope_x.slope <= 1.2 &&
                    scal.slope_xy.slope >= 1.8 && scal.slope_xy.slope <= 2.2;
    report(8, "spike-scaling-exponents", ok,
           fmt("slope(x_eps - x)=%.3f (need [0.8,1.2]); slope(x_eps - x - y)=%.3f (need "
               "[1.8,2.2]); %zu paths",
               scal.slope_x.slope, scal.slope_xy.slope, (std::size_t)chunks * chunk_paths));
}

void criterion_9() {
    // |J(u+eps v) - J(u) - eps J1 - eps^2 J2| has log-log slope > 2 for at least
    // 3 of the 4 library directions. The running cost carries a cubic term so
    // the eps^3 remainder is nonzero; with a quadratic cost the expansion is
    // exact and the remainder sits at rounding level with no defined slope.
    CoefficientSet coeffs = lq::coefficients_sigma_u();
    coeffs.f = [](double, double, double u) { return 0.5 * u * u + u * u * u / 30.0; };
    coeffs.f_u = [](double, double, double u) { return u + 0.1 * u * u; };
    coeffs.f_uu = [](double, double, double u) { return 1.0 + 0.2 * u; };
    auto pol = const_policy(0.2);
    TrajectoryBundle bundle;
    estimate_cost(coeffs, pol, 1000, ugrid(kT, 64), cp_spec(), kX0, 0.0, 451, &bundle);
    auto adj = solve_first_adjoint(coeffs, pol, bundle);
    auto eta = solve_eta(coeffs, pol, bundle, adj);
    const double j0 = [&] {
        double s = 0.0;
        for (double c : bundle.cost_samples) s += c;
        return s / bundle.n_paths();
    }();
    auto dirs = direction_library(kT);
    const std::vector<double> eps_grid{0.25, 0.125, 0.0625, 0.03125};
    int good = 0;
    std::string slopes;
    for (std::size_t d = 0; d < dirs.size(); ++d) {
        ConvexSpec convex;
        convex.base = pol;
        convex.direction = dirs[d];
        convex.euler_consistent = true; // remainder measured scheme-for-scheme
        auto var = simulate_convex_variations(coeffs, convex, bundle);
        auto j1 = first_variation_J(coeffs, convex, bundle, adj, var);
        auto j2 = second_variation_J(coeffs, convex, bundle, adj, eta, var);
        std::vector<double> rem;
        for (double eps : eps_grid) {
            double sum = 0.0;
            for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
                const auto& driver = bundle.paths[p];
                std::vector<double> pert(driver.n_nodes());
                for (std::size_t i = 0; i < pert.size(); ++i)
                    pert[i] = bundle.controls[p][i] + eps * var.v[p][i];
                auto x = euler_integrate_controls(coeffs, pert, driver, bundle.x0);
                sum += path_cost(coeffs, driver, x, pert);
            }
            rem.push_back(std::fabs(sum / bundle.n_paths() - j0 - eps * j1.direct -
                                    eps * eps * j2.direct));
        }
        auto fit = fit_loglog(eps_grid, rem);
        if (fit.slope > 2.0) ++good;
        slopes += fmt("%s%.2f", d ? "," : "", fit.slope);
    }
    report(9, "expansion-order", good >= 3,
           fmt("slopes {%s} (need > 2.0 for >= 3 of 4 directions)", slopes.c_str()));
}

void criterion_10() {
    // nu = 0, kappa = 1: the sub-diffusive scans must equal the classical
    // evaluators number for number
    SubordinatorSpec nu0;
    auto coeffs = lq::coefficients_sigma_u();
    auto form = lq::ClosedForm::make(kT, 0.0, kX0);
    TrajectoryBundle bundle;
    estimate_cost(coeffs, lq::policy(form), 1000, ugrid(kT, 20), nu0, kX0, 0.0, 461, &bundle);
    auto first = solve_first_adjoint(coeffs, lq::policy(form), bundle);
    auto second = solve_second_adjoint(coeffs, lq::policy(form), bundle, first);
    const std::vector<double> u_grid{-2.0, -1.0, 0.0, 1.0, 2.0};
    auto sub_sp = spike_condition_scan(coeffs, bundle, first, second, u_grid);
    auto cls_sp = classical_spike_scan(coeffs, bundle, first, second, u_grid);
    auto sub_st = convex_stationarity_scan(coeffs, bundle, first);
    auto cls_st = classical_stationarity_scan(coeffs, bundle, first);
    std::size_t mismatches = 0;
    auto cmp = [&](const SmpReport& a, const SmpReport& b) {
        if (a.cells.size() != b.cells.size()) {
            ++mismatches;
            return;
        }
        for (std::size_t i = 0; i < a.cells.size(); ++i)
            if (a.cells[i].mean != b.cells[i].mean ||
                a.cells[i].std_error != b.cells[i].std_error)
                ++mismatches;
    };
    cmp(sub_sp, cls_sp);
    cmp(sub_st, cls_st);
    report(10, "classical-reduction", mismatches == 0,
           fmt("%zu cell mismatches across %zu spike + %zu stationarity cells (bit-level)",
               mismatches, sub_sp.cells.size(), sub_st.cells.size()));
}

void criterion_11() {
    // Euler on the geometric equation vs its closed form: strong error at T
    // halves (ratio in [0.55, 0.85]) per grid doubling across 3 levels
    const double mu = 0.05, sg = 0.4;
    CoefficientSet c;
    c.b = [mu](double, double x, double) { return mu * x; };
    c.sigma = [sg](double, double x, double) { return sg * x; };
    c.f = [](double, double, double) { return 0.0; };
    c.h = [](double) { return 0.0; };
    c.lipschitz_bound = 1.0;
    ControlPolicy zero = const_policy(0.0);
    std::vector<double> rms;
    for (int lvl = 0; lvl < 4; ++lvl) {
        const int n = 100 << lvl, n_paths = 4000;
        double sumsq = 0.0;
        for (int k = 0; k < n_paths; ++k) {
            auto driver = sample_subdiffusion(cp_spec(), 1.0, 0.0, ugrid(kT, n),
                                              stream_seed(471 + lvl, k, StreamTag::Generic));
            auto x = euler_integrate(c, zero, driver);
            auto oracle = geometric_subdiffusion(driver, 1.0, mu, sg);
            const double e = x.back() - oracle.back();
            sumsq += e * e;
        }
        rms.push_back(std::sqrt(sumsq / n_paths));
    }
    bool ok = true;
    std::string ratios;
    for (std::size_t i = 1; i < rms.size(); ++i) {
        const double r = rms[i] / rms[i - 1];
        if (r < 0.55 || r > 0.85) ok = false;
        ratios += fmt("%s%.3f", i > 1 ? "," : "", r);
    }
    report(11, "geometric-strong-order", ok,
           fmt("rms errors {%.4f,%.4f,%.4f,%.4f}; doubling ratios {%s} (need [0.55,0.85])",
               rms[0], rms[1], rms[2], rms[3], ratios.c_str()));
}

} // namespace

int main() {
    std::printf("acceptance: %d criteria\n", 11);
    {
        auto form = lq::ClosedForm::make(kT, kA, kX0);
        TrajectoryBundle bundle;
        estimate_cost(lq::coefficients(), lq::policy(form), kPaths, ugrid(kT, kSteps), cp_spec(),
                      kX0, kA, kSeed, &bundle);
        {
            auto first = solve_first_adjoint(lq::coefficients(), lq::policy(form), bundle);
            criterion_1(form, bundle, first);
        }
        criterion_2(form);
        criterion_3(form, bundle);
    }
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    std::printf("acceptance: %d/%d passed\n", 11 - g_failures, 11);
    return g_failures == 0 ? 0 : 1;
}
