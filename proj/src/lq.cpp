#include "subdiff/lq.hpp"

#include <cmath>

#include "subdiff/errors.hpp"

namespace subdiff {
namespace lq {

ClosedForm ClosedForm::make(double T, double a, double x0) {
    if (T <= 0.0) throw SpecError("lq::ClosedForm: T must be positive");
    if (a < 0.0) throw SpecError("lq::ClosedForm: a must be nonnegative");
    // a >= T is allowed: the whole horizon sits in the deterministic prefix
    ClosedForm form;
    form.T = T;
    form.a = a;
    form.x0 = x0;
    // continuity of p at t = a; the a-dependence cancels
    form.c = 2.0 * (std::exp(-T) - x0) / (std::exp(-2.0 * T) + 1.0);
    return form;
}

double phi(double t, double T) { return -2.0 / (std::exp(2.0 * (t - T)) + 1.0); }

double psi(double t, double T) {
    return 2.0 * std::exp(t - T) / (std::exp(2.0 * (t - T)) + 1.0);
}

double second_adjoint(double t, double T) { return -std::exp(2.0 * (T - t)); }

double kernel(double t, double r, double T) { return std::cosh(T - t) / std::cosh(T - r); }

double prefix_state(double t, const ClosedForm& form) {
    if (t > form.a + 1e-12)
        throw SpecError("lq::prefix_state: t beyond the deterministic window [0, a]");
    return std::exp(t) * form.x0 + 0.5 * form.c * (std::exp(t) - std::exp(-t));
}

double optimal_control(double t, double x_state, const ClosedForm& form) {
    if (t <= form.a) return form.c * std::exp(-t);
    return phi(t, form.T) * x_state + psi(t, form.T);
}

double adjoint_p(double t, double x_state, const ClosedForm& form) {
    // equals the optimal control: stationarity u = b_u p - 0 here
    return optimal_control(t, x_state, form);
}

double adjoint_q(double t, const ClosedForm& form) {
    return t <= form.a ? 0.0 : phi(t, form.T);
}

CoefficientSet coefficients() {
    CoefficientSet c;
    auto zero3 = [](double, double, double) { return 0.0; };
    c.b = [](double, double x, double u) { return x + u; };
    c.sigma = [](double, double, double) { return 1.0; };
    c.f = [](double, double, double u) { return 0.5 * u * u; };
    c.h = [](double x) { return 0.5 * (x * x - 2.0 * x); };
    c.b_x = [](double, double, double) { return 1.0; };
    c.b_u = [](double, double, double) { return 1.0; };
    c.b_xx = zero3;
    c.b_xu = zero3;
    c.b_uu = zero3;
    c.sigma_x = zero3;
    c.sigma_u = zero3;
    c.sigma_xx = zero3;
    c.sigma_xu = zero3;
    c.sigma_uu = zero3;
    c.f_x = zero3;
    c.f_u = [](double, double, double u) { return u; };
    c.f_xx = zero3;
    c.f_xu = zero3;
    c.f_uu = [](double, double, double) { return 1.0; };
    c.h_x = [](double x) { return x - 1.0; };
    c.h_xx = [](double) { return 1.0; };
    c.lipschitz_bound = 2.0;
    return c;
}

CoefficientSet coefficients_sigma_u() {
    CoefficientSet c = coefficients();
    c.sigma = [](double, double, double u) { return 1.0 + 0.5 * u; };
    c.sigma_u = [](double, double, double) { return 0.5; };
    return c;
}

ControlPolicy policy(const ClosedForm& form) {
    ControlPolicy pol;
    pol.a = form.a;
    pol.deterministic_prefix = [form](double t) { return optimal_control(t, 0.0, form); };
    pol.rule = [form](const ObservableFeatures& f, double x) {
        return optimal_control(f.t, x, form);
    };
    return pol;
}

Simulation simulate_optimal(const ClosedForm& form, const SubordinatorSpec& spec,
                            const std::vector<double>& grid, int n_paths, std::uint64_t seed) {
    Simulation sim;
    const auto coeffs = coefficients();
    const auto pol = policy(form);
    sim.cost = estimate_cost(coeffs, pol, n_paths, grid, spec, form.x0, form.a, seed,
                             &sim.bundle);

    // independent route: variation-of-constants with the closed-form kernel
    // exp(int_r^t (1+phi)) = cosh(T-t)/cosh(T-r), left-point quadrature
    for (std::size_t p = 0; p < sim.bundle.n_paths(); ++p) {
        const auto& driver = sim.bundle.paths[p];
        const auto& states = sim.bundle.states[p];
        const std::size_t m = driver.n_nodes();
        double xq = prefix_state(driver.inverse.t[0], form);
        sim.quadrature_discrepancy =
            std::max(sim.quadrature_discrepancy, std::fabs(states[0] - xq));
        for (std::size_t i = 0; i + 1 < m; ++i) {
            const double t = driver.inverse.t[i];
            const double tn = driver.inverse.t[i + 1];
            if (tn <= form.a) {
                xq = prefix_state(tn, form);
            } else {
                const double dt = tn - t;
                xq = kernel(tn, t, form.T) * (xq + psi(t, form.T) * dt + driver.dB[i]);
            }
            sim.quadrature_discrepancy =
                std::max(sim.quadrature_discrepancy, std::fabs(states[i + 1] - xq));
        }
    }
    return sim;
}

CostEstimate value_estimate(const ClosedForm& form, const SubordinatorSpec& spec,
                            const std::vector<double>& grid, int n_paths, std::uint64_t seed) {
    return estimate_cost(coefficients(), policy(form), n_paths, grid, spec, form.x0, form.a, seed);
}

} // namespace lq
} // namespace subdiff
