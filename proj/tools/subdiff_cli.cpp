#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>

#include "subdiff/bsde.hpp"
#include "subdiff/config.hpp"
#include "subdiff/errors.hpp"
#include "subdiff/forward.hpp"
#include "subdiff/lq.hpp"
#include "subdiff/rng.hpp"
#include "subdiff/smp.hpp"
#include "subdiff/subdiffusion.hpp"
#include "subdiff/subordinator.hpp"
#include "subdiff/variation.hpp"

using json = nlohmann::json;
using namespace subdiff;

namespace {

struct Session {
    ExperimentConfig cfg;
    std::string subcommand;
    bool quiet = false;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    std::string out_path(const std::string& stem, const std::string& ext) const {
        return cfg.out_dir + "/" + stem + "-" + cfg.hash() + "." + ext;
    }

    void log(const std::string& msg) const {
        if (!quiet) std::cout << msg << "\n";
    }

    void write_json(const std::string& stem, const json& j) const {
        const std::string path = out_path(stem, "json");
        std::ofstream out(path);
        if (!out) throw SpecError("cannot open '" + path + "' for writing");
        out << j.dump(2) << "\n";
        log("wrote " + path);
    }

    void write_manifest() const {
        json j;
        j["subcommand"] = subcommand;
        j["config"] = cfg.echo();
        j["config_hash"] = cfg.hash();
        j["version"] = "1.0.0";
        j["threads"] = []() {
            const char* env = std::getenv("SUBDIFF_THREADS");
            return env ? std::atoi(env) : 1;
        }();
        j["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        write_json(subcommand + "-manifest", j);
    }
};

struct Model {
    CoefficientSet coeffs;
    ControlPolicy policy;
    lq::ClosedForm form;
};

Model make_model(const ExperimentConfig& cfg) {
    Model m;
    m.form = lq::ClosedForm::make(cfg.T, cfg.a, cfg.x0);
    m.coeffs = cfg.model_id == "lq_sigma_u" ? lq::coefficients_sigma_u() : lq::coefficients();
    m.policy = lq::policy(m.form);
    return m;
}

void cmd_simulate_subordinator(Session& s) {
    const auto spec = s.cfg.subordinator();
    const auto grid = s.cfg.grid();
    CsvWriter csv(s.out_path("subordinator", "csv"), {"path_id", "t", "L", "R", "flat"});
    for (int k = 0; k < s.cfg.n_paths; ++k) {
        const double horizon = (std::max(0.0, s.cfg.T - s.cfg.a) + 1.0) / spec.effective_drift();
        const auto path = sample_subordinator(
            spec, horizon, stream_seed(s.cfg.master_seed, k, StreamTag::Subordinator));
        const auto inv = invert_on_grid(path, grid, s.cfg.a);
        for (std::size_t i : inv.caller_index)
            csv.row({double(k), inv.t[i], inv.L[i], inv.R[i], inv.flat[i] ? 1.0 : 0.0});
    }
    s.log("wrote " + s.out_path("subordinator", "csv"));
}

void cmd_simulate_subdiffusion(Session& s) {
    const auto spec = s.cfg.subordinator();
    const auto grid = s.cfg.grid();
    CsvWriter csv(s.out_path("subdiffusion", "csv"), {"path_id", "t", "L", "R", "flat", "X"});
    for (int k = 0; k < s.cfg.n_paths; ++k) {
        const auto path = sample_subdiffusion(spec, s.cfg.x0, s.cfg.a, grid,
                                              stream_seed(s.cfg.master_seed, k, StreamTag::Generic));
        for (std::size_t i : path.inverse.caller_index)
            csv.row({double(k), path.inverse.t[i], path.inverse.L[i], path.inverse.R[i],
                     path.inverse.flat[i] ? 1.0 : 0.0, path.X[i]});
    }
    s.log("wrote " + s.out_path("subdiffusion", "csv"));
}

void cmd_integrate_forward(Session& s) {
    const auto model = make_model(s.cfg);
    TrajectoryBundle bundle;
    const auto est = estimate_cost(model.coeffs, model.policy, s.cfg.n_paths, s.cfg.grid(),
                                   s.cfg.subordinator(), s.cfg.x0, s.cfg.a, s.cfg.master_seed,
                                   &bundle);
    CsvWriter csv(s.out_path("forward", "csv"),
                  {"path_id", "t", "X", "x_state", "u", "running_cost"});
    const std::size_t emit = std::min<std::size_t>(bundle.n_paths(), 20);
    for (std::size_t k = 0; k < emit; ++k) {
        const auto& driver = bundle.paths[k];
        double running = 0.0;
        for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
            const std::size_t i = bundle.fine_index(k, j);
            if (j > 0) {
                const std::size_t prev = bundle.fine_index(k, j - 1);
                const double dt = driver.inverse.t[i] - driver.inverse.t[prev];
                running += 0.5 * dt *
                           (model.coeffs.f(driver.inverse.t[prev], bundle.states[k][prev],
                                           bundle.controls[k][prev]) +
                            model.coeffs.f(driver.inverse.t[i], bundle.states[k][i],
                                           bundle.controls[k][i]));
            }
            csv.row({double(k), driver.inverse.t[i], driver.X[i], bundle.states[k][i],
                     bundle.controls[k][i], running});
        }
    }
    json j;
    j["J_hat"] = est.J_hat;
    j["std_error"] = est.std_error;
    j["n_paths"] = s.cfg.n_paths;
    j["grid_size"] = s.cfg.n_steps + 1;
    j["seed"] = s.cfg.master_seed;
    s.write_json("forward-summary", j);
}

// first-adjoint driver of the configured model as a scalar BSDE in (t, y)
BsdeSpec adjoint_driver(const Model& model) {
    BsdeSpec spec;
    spec.h1 = [](double, double y) { return -y; }; // b_x = 1, f_x = 0 for both presets
    spec.h2 = [](double, double, double) { return 0.0; };
    const CoefficientSet coeffs = model.coeffs;
    spec.terminal = [coeffs](const ObservableFeatures&, double x) { return -coeffs.hx(x); };
    spec.lipschitz_C = 1.0;
    return spec;
}

int cmd_solve_bsde(Session& s) {
    const auto model = make_model(s.cfg);
    TrajectoryBundle bundle;
    estimate_cost(model.coeffs, model.policy, s.cfg.n_paths, s.cfg.grid(), s.cfg.subordinator(),
                  s.cfg.x0, s.cfg.a, s.cfg.master_seed, &bundle);
    const auto spec = adjoint_driver(model);
    const double beta = s.cfg.beta > 0.0
                            ? s.cfg.beta
                            : default_beta(spec.lipschitz_C, s.cfg.kappa, s.cfg.T);
    const auto sol = picard_solve(spec, bundle, s.cfg.basis_degree, beta, s.cfg.max_iter,
                                  s.cfg.tol);
    CsvWriter csv(s.out_path("bsde", "csv"), {"t", "path_id", "Y", "Z"});
    const std::size_t emit = std::min<std::size_t>(bundle.n_paths(), 20);
    for (std::size_t k = 0; k < emit; ++k)
        for (std::size_t j = 0; j < bundle.n_nodes(); ++j)
            csv.row({bundle.grid[j], double(k), sol.Y[k][j], sol.Z[k][j]});
    json j;
    j["picard_norms"] = sol.picard_norms;
    j["decay_ratio"] = sol.decay_ratio;
    j["beta"] = sol.beta;
    j["basis_degree"] = s.cfg.basis_degree;
    j["ridge_used"] = sol.ridge_used;
    j["contraction_failed"] = sol.contraction_failed;
    j["diagnostic"] = sol.diagnostic;
    s.write_json("bsde-diagnostics", j);
    if (sol.contraction_failed) {
        std::cerr << "non-contraction: " << sol.diagnostic << "\n";
        return 3;
    }
    return 0;
}

void cmd_solve_adjoints(Session& s) {
    const auto model = make_model(s.cfg);
    TrajectoryBundle bundle;
    estimate_cost(model.coeffs, model.policy, s.cfg.n_paths, s.cfg.grid(), s.cfg.subordinator(),
                  s.cfg.x0, s.cfg.a, s.cfg.master_seed, &bundle);
    const auto first = solve_first_adjoint(model.coeffs, model.policy, bundle,
                                           s.cfg.basis_degree);
    const auto second = solve_second_adjoint(model.coeffs, model.policy, bundle, first,
                                             s.cfg.basis_degree);
    const auto eta = solve_eta(model.coeffs, model.policy, bundle, first, s.cfg.basis_degree);
    CsvWriter csv(s.out_path("adjoints", "csv"),
                  {"t", "p_mean", "q_mean", "P_mean", "Q_mean", "eta_mean", "gamma_mean"});
    const std::size_t np = bundle.n_paths();
    for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
        double p = 0, q = 0, P = 0, Q = 0, e = 0, g = 0;
        for (std::size_t k = 0; k < np; ++k) {
            p += first.Y[k][j];
            q += first.Z[k][j];
            P += second.Y[k][j];
            Q += second.Z[k][j];
            e += eta.Y[k][j];
            g += eta.Z[k][j];
        }
        csv.row({bundle.grid[j], p / np, q / np, P / np, Q / np, e / np, g / np});
    }
    json j;
    j["first"] = {{"bases", first.regression_bases}, {"ridge_used", first.ridge_used}};
    j["second"] = {{"bases", second.regression_bases}, {"ridge_used", second.ridge_used}};
    j["eta"] = {{"bases", eta.regression_bases}, {"ridge_used", eta.ridge_used}};
    s.write_json("adjoints-diagnostics", j);
}

void cmd_check_smp(Session& s) {
    const auto model = make_model(s.cfg);
    TrajectoryBundle bundle;
    estimate_cost(model.coeffs, model.policy, s.cfg.n_paths, s.cfg.grid(), s.cfg.subordinator(),
                  s.cfg.x0, s.cfg.a, s.cfg.master_seed, &bundle);
    const auto first = solve_first_adjoint(model.coeffs, model.policy, bundle,
                                           s.cfg.basis_degree);
    const auto second = solve_second_adjoint(model.coeffs, model.policy, bundle, first,
                                             s.cfg.basis_degree);
    std::vector<double> u_grid(41);
    for (int i = 0; i < 41; ++i) u_grid[i] = -2.0 + 4.0 * i / 40.0;
    const auto spike = spike_condition_scan(model.coeffs, bundle, first, second, u_grid);
    const auto stat = convex_stationarity_scan(model.coeffs, bundle, first);
    CsvWriter csv(s.out_path("smp-residuals", "csv"), {"condition", "t", "u", "mean", "stderr"});
    for (const auto& c : spike.cells)
        csv.raw_row({"spike", format_double(c.t), format_double(c.u), format_double(c.mean),
                     format_double(c.std_error)});
    for (const auto& c : stat.cells)
        csv.raw_row({"stationarity", format_double(c.t), "", format_double(c.mean),
                     format_double(c.std_error)});
    json j;
    for (const auto* rep : {&spike, &stat}) {
        json r;
        r["condition"] = rep->condition;
        r["min_mean"] = rep->min_mean;
        r["min_t"] = rep->min_t;
        r["min_u"] = rep->min_u;
        r["min_std_error"] = rep->min_std_error;
        r["max_abs_mean"] = rep->max_abs_mean;
        r["violations_3sigma"] = rep->violations_3sigma;
        j[rep == &spike ? "spike" : "stationarity"] = r;
    }
    s.write_json("smp-report", j);
}

void cmd_variation_study(Session& s) {
    const auto model = make_model(s.cfg);
    TrajectoryBundle bundle;
    estimate_cost(model.coeffs, model.policy, s.cfg.n_paths, s.cfg.grid(), s.cfg.subordinator(),
                  s.cfg.x0, s.cfg.a, s.cfg.master_seed, &bundle);
    const auto first = solve_first_adjoint(model.coeffs, model.policy, bundle,
                                           s.cfg.basis_degree);
    const auto eta = solve_eta(model.coeffs, model.policy, bundle, first, s.cfg.basis_degree);
    json j;
    bool all_dual = true;
    json per_direction = json::array();
    const auto library = direction_library(s.cfg.T);
    for (std::size_t d = 0; d < library.size(); ++d) {
        ConvexSpec convex;
        convex.base = model.policy;
        convex.direction = library[d];
        const auto var = simulate_convex_variations(model.coeffs, convex, bundle);
        const auto j1 = first_variation_J(model.coeffs, convex, bundle, first, var);
        const auto j2 = second_variation_J(model.coeffs, convex, bundle, first, eta, var);
        const double tol1 = 3.0 * (j1.direct_se + j1.adjoint_se) + 1e-10;
        const double tol2 = 3.0 * (j2.direct_se + j2.adjoint_se) + 1e-10;
        const bool dual = std::fabs(j1.direct - j1.adjoint) <= tol1 + 0.05 &&
                          std::fabs(j2.direct - j2.adjoint) <= tol2 + 0.05;
        all_dual = all_dual && dual;
        per_direction.push_back({{"direction", d},
                                 {"J1_direct", j1.direct},
                                 {"J1_adjoint", j1.adjoint},
                                 {"J1_direct_se", j1.direct_se},
                                 {"J1_adjoint_se", j1.adjoint_se},
                                 {"J2_direct", j2.direct},
                                 {"J2_adjoint", j2.adjoint},
                                 {"J2_direct_se", j2.direct_se},
                                 {"J2_adjoint_se", j2.adjoint_se},
                                 {"dual_within_tolerance", dual}});
    }
    j["directions"] = per_direction;
    j["verdict"] = all_dual ? "pass" : "fail";

    // spike remainder table for the alt-control spike at t_bar = T/2
    SpikeSpec spike;
    spike.base = model.policy;
    spike.alt = model.policy;
    spike.alt.rule = [](const ObservableFeatures&, double) { return 1.0; };
    spike.alt.deterministic_prefix = nullptr;
    spike.t_bar = 0.5 * s.cfg.T;
    const std::vector<double> eps_grid = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
    const auto scaling = spike_remainder_scaling(model.coeffs, spike, bundle, eps_grid, 1);
    CsvWriter csv(s.out_path("variation-remainders", "csv"),
                  {"epsilon", "sup_moment_x", "sup_moment_xy", "sup_moment_xyz"});
    for (std::size_t e = 0; e < eps_grid.size(); ++e)
        csv.row({scaling.eps_grid[e], scaling.sup_x[e], scaling.sup_xy[e], scaling.sup_xyz[e]});
    j["spike_slopes"] = {{"x", scaling.slope_x.slope},
                         {"xy", scaling.slope_xy.slope},
                         {"xyz", scaling.slope_xyz.slope}};
    s.write_json("variation-report", j);
}

void cmd_lq_demo(Session& s) {
    const auto form = lq::ClosedForm::make(s.cfg.T, s.cfg.a, s.cfg.x0);
    const auto sim = lq::simulate_optimal(form, s.cfg.subordinator(), s.cfg.grid(),
                                          s.cfg.n_paths, s.cfg.master_seed);
    const auto coeffs = lq::coefficients();
    const auto pol = lq::policy(form);
    const auto first = solve_first_adjoint(coeffs, pol, sim.bundle, s.cfg.basis_degree);
    const auto stat = convex_stationarity_scan(coeffs, sim.bundle, first);

    // residual of the regressed p against the closed form, meaned per node
    double p_resid = 0.0;
    const std::size_t np = sim.bundle.n_paths();
    for (std::size_t j = 0; j + 1 < sim.bundle.n_nodes(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < np; ++k) {
            const std::size_t fi = sim.bundle.fine_index(k, j);
            acc += first.Y[k][j] -
                   lq::adjoint_p(sim.bundle.grid[j], sim.bundle.states[k][fi], form);
        }
        p_resid = std::max(p_resid, std::fabs(acc / np));
    }

    CsvWriter csv(s.out_path("lq-trajectories", "csv"), {"path_id", "t", "X", "x_state", "u"});
    const std::size_t emit = std::min<std::size_t>(np, 20);
    for (std::size_t k = 0; k < emit; ++k) {
        const auto& driver = sim.bundle.paths[k];
        for (std::size_t j = 0; j < sim.bundle.n_nodes(); ++j) {
            const std::size_t i = sim.bundle.fine_index(k, j);
            csv.row({double(k), driver.inverse.t[i], driver.X[i], sim.bundle.states[k][i],
                     sim.bundle.controls[k][i]});
        }
    }
    json j;
    j["c"] = form.c;
    j["V_hat"] = sim.cost.J_hat;
    j["stderr"] = sim.cost.std_error;
    j["stationarity_max_resid"] = stat.max_abs_mean;
    j["p_closed_form_resid"] = p_resid;
    j["quadrature_discrepancy"] = sim.quadrature_discrepancy;
    s.write_json("lq-report", j);
}

void cmd_renewal_density(Session& s) {
    const auto spec = s.cfg.subordinator();
    CsvWriter csv(s.out_path("renewal", "csv"), {"x", "delta", "estimate", "std_error"});
    json j;
    json rows = json::array();
    for (double delta : {0.1, 0.05, 0.025}) {
        const auto d = estimate_renewal_density(spec, 0.0, delta, s.cfg.n_paths,
                                                s.cfg.master_seed);
        csv.row({0.0, delta, d.estimate, d.std_error});
        rows.push_back({{"x", 0.0},
                        {"delta", delta},
                        {"estimate", d.estimate},
                        {"std_error", d.std_error}});
    }
    j["density_at_zero"] = rows;
    j["one_over_kappa"] = 1.0 / s.cfg.kappa;
    if (s.cfg.law != "truncated_stable") {
        json hits = json::array();
        for (double x : {0.5, 1.0, 2.0}) {
            const double hp = hit_probability(spec, x, s.cfg.n_paths, s.cfg.master_seed + 1);
            hits.push_back({{"x", x}, {"hit_probability", hp}});
        }
        j["hit_probabilities"] = hits;
    }
    s.write_json("renewal-report", j);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sub-diffusion control toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    long long seed_override = -1, paths_override = -1;
    bool quiet = false;
    app.add_option("--config", config_path, "configuration file (key = value)");
    app.add_option("--seed", seed_override, "override mc.seed");
    app.add_option("--out", out_dir, "override output.dir");
    app.add_option("--paths", paths_override, "override mc.n_paths");
    app.add_flag("--quiet", quiet, "suppress progress output");

    const std::vector<std::string> names = {
        "simulate-subordinator", "simulate-subdiffusion", "integrate-forward", "solve-bsde",
        "solve-adjoints", "check-smp", "variation-study", "lq-demo", "renewal-density"};
    for (const auto& n : names) app.add_subcommand(n)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    Session s;
    try {
        s.cfg = config_path.empty() ? ExperimentConfig{}
                                    : ExperimentConfig::from_file(config_path);
        if (seed_override >= 0) s.cfg.master_seed = static_cast<std::uint64_t>(seed_override);
        if (paths_override >= 0) {
            s.cfg.n_paths = static_cast<int>(paths_override);
            if (s.cfg.n_paths < 2) throw SpecError("--paths must be >= 2");
        }
        if (!out_dir.empty()) s.cfg.out_dir = out_dir;
        s.quiet = quiet;
        s.subcommand = app.get_subcommands().front()->get_name();

        int code = 0;
        if (s.subcommand == "simulate-subordinator")
            cmd_simulate_subordinator(s);
        else if (s.subcommand == "simulate-subdiffusion")
            cmd_simulate_subdiffusion(s);
        else if (s.subcommand == "integrate-forward")
            cmd_integrate_forward(s);
        else if (s.subcommand == "solve-bsde")
            code = cmd_solve_bsde(s);
        else if (s.subcommand == "solve-adjoints")
            cmd_solve_adjoints(s);
        else if (s.subcommand == "check-smp")
            cmd_check_smp(s);
        else if (s.subcommand == "variation-study")
            cmd_variation_study(s);
        else if (s.subcommand == "lq-demo")
            cmd_lq_demo(s);
        else if (s.subcommand == "renewal-density")
            cmd_renewal_density(s);
        s.write_manifest();
        return code;
    } catch (const SpecError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
}
