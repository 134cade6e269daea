#include "subdiff/forward.hpp"

#include <cmath>
#include <random>

#include "subdiff/rng.hpp"

namespace subdiff {

namespace {

double fd_step(double x) { return std::max(1e-5, 1e-5 * std::fabs(x)); }

// central differences used when an analytic partial is absent
double d_x(const CoefficientSet::Fn3& f, double t, double x, double u) {
    const double h = fd_step(x);
    return (f(t, x + h, u) - f(t, x - h, u)) / (2.0 * h);
}
double d_u(const CoefficientSet::Fn3& f, double t, double x, double u) {
    const double h = fd_step(u);
    return (f(t, x, u + h) - f(t, x, u - h)) / (2.0 * h);
}
double d_xx(const CoefficientSet::Fn3& f, double t, double x, double u) {
    const double h = fd_step(x);
    return (f(t, x + h, u) - 2.0 * f(t, x, u) + f(t, x - h, u)) / (h * h);
}
double d_uu(const CoefficientSet::Fn3& f, double t, double x, double u) {
    const double h = fd_step(u);
    return (f(t, x, u + h) - 2.0 * f(t, x, u) + f(t, x, u - h)) / (h * h);
}
double d_xu(const CoefficientSet::Fn3& f, double t, double x, double u) {
    const double hx = fd_step(x), hu = fd_step(u);
    return (f(t, x + hx, u + hu) - f(t, x + hx, u - hu) - f(t, x - hx, u + hu) +
            f(t, x - hx, u - hu)) /
           (4.0 * hx * hu);
}

} // namespace

double CoefficientSet::bx(double t, double x, double u) const { return b_x ? b_x(t, x, u) : d_x(b, t, x, u); }
double CoefficientSet::bu(double t, double x, double u) const { return b_u ? b_u(t, x, u) : d_u(b, t, x, u); }
double CoefficientSet::bxx(double t, double x, double u) const { return b_xx ? b_xx(t, x, u) : d_xx(b, t, x, u); }
double CoefficientSet::bxu(double t, double x, double u) const { return b_xu ? b_xu(t, x, u) : d_xu(b, t, x, u); }
double CoefficientSet::buu(double t, double x, double u) const { return b_uu ? b_uu(t, x, u) : d_uu(b, t, x, u); }
double CoefficientSet::sx(double t, double x, double u) const { return sigma_x ? sigma_x(t, x, u) : d_x(sigma, t, x, u); }
double CoefficientSet::su(double t, double x, double u) const { return sigma_u ? sigma_u(t, x, u) : d_u(sigma, t, x, u); }
double CoefficientSet::sxx(double t, double x, double u) const { return sigma_xx ? sigma_xx(t, x, u) : d_xx(sigma, t, x, u); }
double CoefficientSet::sxu(double t, double x, double u) const { return sigma_xu ? sigma_xu(t, x, u) : d_xu(sigma, t, x, u); }
double CoefficientSet::suu(double t, double x, double u) const { return sigma_uu ? sigma_uu(t, x, u) : d_uu(sigma, t, x, u); }
double CoefficientSet::fx(double t, double x, double u) const { return f_x ? f_x(t, x, u) : d_x(f, t, x, u); }
double CoefficientSet::fu(double t, double x, double u) const { return f_u ? f_u(t, x, u) : d_u(f, t, x, u); }
double CoefficientSet::fxx(double t, double x, double u) const { return f_xx ? f_xx(t, x, u) : d_xx(f, t, x, u); }
double CoefficientSet::fxu(double t, double x, double u) const { return f_xu ? f_xu(t, x, u) : d_xu(f, t, x, u); }
double CoefficientSet::fuu(double t, double x, double u) const { return f_uu ? f_uu(t, x, u) : d_uu(f, t, x, u); }
double CoefficientSet::hx(double x) const {
    if (h_x) return h_x(x);
    const double s = fd_step(x);
    return (h(x + s) - h(x - s)) / (2.0 * s);
}
double CoefficientSet::hxx(double x) const {
    if (h_xx) return h_xx(x);
    const double s = fd_step(x);
    return (h(x + s) - 2.0 * h(x) + h(x - s)) / (s * s);
}

bool CoefficientSet::uses_finite_differences() const {
    return !(b_x && b_u && b_xx && b_xu && b_uu && sigma_x && sigma_u && sigma_xx && sigma_xu &&
             sigma_uu && f_x && f_u && f_xx && f_xu && f_uu && h_x && h_xx);
}

double CoefficientSet::lipschitz_self_check(std::uint64_t seed, int n_samples) const {
    auto gen = make_stream(seed, 0, StreamTag::Generic);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    double worst = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        double t = 0.5 * (unif(gen) + 2.0), x = unif(gen), y = unif(gen), u = unif(gen),
               v = unif(gen);
        double denom = std::fabs(x - y) + std::fabs(u - v);
        if (denom < 1e-12) continue;
        for (const auto* fn : {&b, &sigma, &f}) {
            double r = std::fabs((*fn)(t, x, u) - (*fn)(t, y, v)) / denom;
            worst = std::max(worst, r);
        }
    }
    return worst / lipschitz_bound;
}

double ControlPolicy::operator()(const ObservableFeatures& f, double x_state) const {
    double u;
    if (f.t <= a && deterministic_prefix)
        u = deterministic_prefix(f.t);
    else
        u = rule(f, x_state);
    return std::min(u_max, std::max(u_min, u));
}

std::vector<double> euler_integrate(const CoefficientSet& coeffs, const ControlPolicy& policy,
                                    const SubdiffusionPath& driver) {
    const std::size_t m = driver.n_nodes();
    std::vector<double> x(m);
    x[0] = driver.x0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double t = driver.inverse.t[i];
        const double u = policy({t, driver.X[i], driver.inverse.L[i], driver.age[i]}, x[i]);
        const double dt = driver.inverse.t[i + 1] - t;
        const double bi = coeffs.b(t, x[i], u);
        const double si = coeffs.sigma(t, x[i], u);
        x[i + 1] = x[i] + bi * dt + si * driver.dB[i];
        if (!std::isfinite(x[i + 1]))
            throw NumericalError("euler_integrate: non-finite state at step " + std::to_string(i) +
                                 " (t=" + std::to_string(t) + ", x=" + std::to_string(x[i]) +
                                 ", u=" + std::to_string(u) + ")");
    }
    return x;
}

std::vector<double> euler_integrate_controls(const CoefficientSet& coeffs,
                                             const std::vector<double>& controls,
                                             const SubdiffusionPath& driver, double x0) {
    const std::size_t m = driver.n_nodes();
    if (controls.size() < m - 1) throw SpecError("euler_integrate_controls: control stream short");
    std::vector<double> x(m);
    x[0] = x0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double t = driver.inverse.t[i];
        const double dt = driver.inverse.t[i + 1] - t;
        x[i + 1] = x[i] + coeffs.b(t, x[i], controls[i]) * dt +
                   coeffs.sigma(t, x[i], controls[i]) * driver.dB[i];
        if (!std::isfinite(x[i + 1]))
            throw NumericalError("euler_integrate_controls: non-finite state at step " +
                                 std::to_string(i));
    }
    return x;
}

std::vector<double> exact_linear_solve(const std::vector<double>& a_t,
                                       const std::vector<double>& alpha_t,
                                       const std::vector<double>& b_t,
                                       const std::vector<double>& beta_t, double y0,
                                       const SubdiffusionPath& driver, double bound) {
    const std::size_t m = driver.n_nodes();
    if (a_t.size() < m - 1 || alpha_t.size() < m - 1 || b_t.size() < m - 1 ||
        beta_t.size() < m - 1)
        throw SpecError("exact_linear_solve: coefficient streams shorter than grid");
    for (std::size_t i = 0; i + 1 < m; ++i) {
        if (!(std::fabs(a_t[i]) <= bound) || !(std::fabs(b_t[i]) <= bound))
            throw NumericalError("exact_linear_solve: coefficient bound " + std::to_string(bound) +
                                 " exceeded at step " + std::to_string(i) +
                                 " (|a|=" + std::to_string(std::fabs(a_t[i])) +
                                 ", |b|=" + std::to_string(std::fabs(b_t[i])) + ")");
    }

    // Phi_t = exp( int a dt + int b dB_L - 1/2 int b^2 dL ); left-point quadrature.
    // Y_t = Phi_t * ( y0 + int Phi^{-1} (alpha dt - b beta dL) + int Phi^{-1} beta dB_L ).
    std::vector<double> out(m);
    double log_phi = 0.0;  // log Phi at node i
    double integral = 0.0; // accumulated corrected forcing
    out[0] = y0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double dt = driver.inverse.t[i + 1] - driver.inverse.t[i];
        const double dl = driver.inverse.dL[i];
        const double db = driver.dB[i];
        const double inv_phi = std::exp(-log_phi);
        integral += inv_phi * (alpha_t[i] * dt - b_t[i] * beta_t[i] * dl + beta_t[i] * db);
        log_phi += a_t[i] * dt + b_t[i] * db - 0.5 * b_t[i] * b_t[i] * dl;
        out[i + 1] = std::exp(log_phi) * (y0 + integral);
        if (!std::isfinite(out[i + 1]))
            throw NumericalError("exact_linear_solve: non-finite value at step " +
                                 std::to_string(i));
    }
    return out;
}

double path_cost(const CoefficientSet& coeffs, const SubdiffusionPath& driver,
                 const std::vector<double>& states, const std::vector<double>& controls) {
    const std::size_t m = driver.n_nodes();
    double cost = 0.0;
    double prev = coeffs.f(driver.inverse.t[0], states[0], controls[0]);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double dt = driver.inverse.t[i + 1] - driver.inverse.t[i];
        const double next = coeffs.f(driver.inverse.t[i + 1], states[i + 1], controls[i + 1]);
        cost += 0.5 * (prev + next) * dt;
        prev = next;
    }
    return cost + coeffs.h(states.back());
}

namespace {
CostEstimate summarize(const std::vector<double>& costs) {
    const std::size_t n = costs.size();
    double sum = 0.0, sumsq = 0.0;
    for (double c : costs) {
        sum += c;
        sumsq += c * c;
    }
    double mean = sum / n;
    double var = n > 1 ? std::max(0.0, (sumsq - n * mean * mean) / (n - 1)) : 0.0;
    return {mean, std::sqrt(var / n)};
}

std::vector<double> controls_along(const ControlPolicy& policy, const SubdiffusionPath& driver,
                                   const std::vector<double>& states) {
    const std::size_t m = driver.n_nodes();
    std::vector<double> u(m);
    for (std::size_t i = 0; i < m; ++i)
        u[i] = policy({driver.inverse.t[i], driver.X[i], driver.inverse.L[i], driver.age[i]},
                      states[i]);
    return u;
}
} // namespace

CostEstimate estimate_cost(const CoefficientSet& coeffs, const ControlPolicy& policy,
                           int bundle_size, const std::vector<double>& grid,
                           const SubordinatorSpec& spec, double x0, double a,
                           std::uint64_t seed, TrajectoryBundle* bundle_out) {
    if (bundle_size < 2) throw SpecError("estimate_cost: bundle_size must be >= 2");
    TrajectoryBundle bundle;
    bundle.grid = grid;
    bundle.a = a;
    bundle.x0 = x0;
    bundle.master_seed = seed;
    bundle.paths.reserve(bundle_size);
    bundle.states.reserve(bundle_size);
    bundle.controls.reserve(bundle_size);
    bundle.cost_samples.reserve(bundle_size);
    for (int k = 0; k < bundle_size; ++k) {
        auto driver = sample_subdiffusion(spec, x0, a, grid,
                                          stream_seed(seed, k, StreamTag::Generic));
        auto states = euler_integrate(coeffs, policy, driver);
        auto controls = controls_along(policy, driver, states);
        bundle.cost_samples.push_back(path_cost(coeffs, driver, states, controls));
        bundle.paths.push_back(std::move(driver));
        bundle.states.push_back(std::move(states));
        bundle.controls.push_back(std::move(controls));
    }
    auto est = summarize(bundle.cost_samples);
    if (bundle_out) *bundle_out = std::move(bundle);
    return est;
}

CostEstimate reevaluate_cost(const CoefficientSet& coeffs, const ControlPolicy& policy,
                             const TrajectoryBundle& bundle,
                             std::vector<double>* cost_samples_out) {
    std::vector<double> costs;
    costs.reserve(bundle.n_paths());
    for (std::size_t k = 0; k < bundle.n_paths(); ++k) {
        const auto& driver = bundle.paths[k];
        auto states = euler_integrate(coeffs, policy, driver);
        auto controls = controls_along(policy, driver, states);
        costs.push_back(path_cost(coeffs, driver, states, controls));
    }
    auto est = summarize(costs);
    if (cost_samples_out) *cost_samples_out = std::move(costs);
    return est;
}

} // namespace subdiff
