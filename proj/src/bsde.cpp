#include "subdiff/bsde.hpp"

#include <algorithm>
#include <cmath>

namespace subdiff {

double tol_flat(double T, double kappa) { return 1e-12 * (T / kappa); }

double beta_threshold(double lipschitz_C, double kappa, double T, double K) {
    const double C1 = (1.0 + 1.0 / kappa) * lipschitz_C;
    return 3.0 * C1 * C1 * (kappa + 1.0) * std::max(T, 1.0) * (1.0 + K * K) / (2.0 * kappa);
}

double default_beta(double lipschitz_C, double kappa, double T, double K) {
    return 2.0 * beta_threshold(lipschitz_C, kappa, T, K);
}

namespace {

// caller-step increments read off the fine arrays (consistent with the path's
// accumulation; exactly zero across fully-flat caller steps)
inline double step_dB(const TrajectoryBundle& b, std::size_t p, std::size_t i) {
    const auto& path = b.paths[p];
    return path.X[b.fine_index(p, i + 1)] - path.X[b.fine_index(p, i)];
}
inline double step_dL(const TrajectoryBundle& b, std::size_t p, std::size_t i) {
    const auto& path = b.paths[p];
    return path.inverse.L[b.fine_index(p, i + 1)] - path.inverse.L[b.fine_index(p, i)];
}

Basis bundle_basis(const TrajectoryBundle& bundle, int degree) {
    return Basis{degree, true, !bundle.states.empty()};
}

double bundle_kappa(const TrajectoryBundle& bundle) {
    return bundle.paths.empty() ? 1.0 : bundle.paths.front().inverse.drift;
}

// one caller node's regression context: feature matrix + factored normal equations
struct StepRegressor {
    Eigen::MatrixXd Phi;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    Eigen::MatrixXd Gr; // ridge-adjusted Gram when rank deficient
    bool ridge = false;

    explicit StepRegressor(Eigen::MatrixXd phi) : Phi(std::move(phi)) {
        Eigen::MatrixXd G = Phi.transpose() * Phi;
        qr.compute(G);
        if (qr.rank() < G.rows()) {
            ridge = true;
            Gr = G;
            double lambda = 1e-10 * G.trace() / G.rows();
            Gr.diagonal().array() += lambda > 0.0 ? lambda : 1e-10;
        }
    }
    Eigen::VectorXd coef(const Eigen::VectorXd& y) const {
        Eigen::VectorXd rhs = Phi.transpose() * y;
        return ridge ? Gr.ldlt().solve(rhs).eval() : qr.solve(rhs).eval();
    }
    Eigen::VectorXd fit(const Eigen::VectorXd& y) const { return Phi * coef(y); }
};

std::vector<double> terminal_values(const BsdeSpec& spec, const TrajectoryBundle& bundle) {
    const std::size_t n = bundle.n_paths();
    const std::size_t last = bundle.n_nodes() - 1;
    std::vector<double> xi(n);
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t ci = bundle.fine_index(p, last);
        const double state = bundle.states.empty() ? 0.0 : bundle.states[p][ci];
        xi[p] = spec.terminal(features_at(bundle.paths[p], ci), state);
    }
    return xi;
}

// Backward induction per the scheme:
//   Z_i = fit(Y_{i+1} dB_i) / fit(dL_i)      (tol_flat guard, Z = 0 on flat mass)
//   Y_i = fit(Y_{i+1} - h2(i+1, Y_{i+1}, Z_i) dL_i) - h1(i, Y-hat) dt_i
// with one predictor-corrector pass on the implicit h1 argument.
// h1(node, path, y), h2(node, path, y, z) allow pathwise coefficient streams.
template <class H1, class H2>
BsdeSolution backward_core(H1&& h1, H2&& h2, const std::vector<double>& xi,
                           const TrajectoryBundle& bundle, int basis_degree, double beta) {
    const std::size_t n = bundle.n_paths();
    const std::size_t N = bundle.n_nodes();
    const Basis basis = bundle_basis(bundle, basis_degree);
    const double tolf = tol_flat(bundle.grid.back(), bundle_kappa(bundle));

    BsdeSolution sol;
    sol.beta = beta;
    sol.regression_bases = basis.describe();
    sol.Y.assign(n, std::vector<double>(N, 0.0));
    sol.Z.assign(n, std::vector<double>(N, 0.0));

    Eigen::VectorXd Ynext(n);
    for (std::size_t p = 0; p < n; ++p) {
        sol.Y[p][N - 1] = xi[p];
        Ynext(p) = xi[p];
    }

    Eigen::VectorXd resp(n), dB(n), dL(n);
    for (std::size_t i = N - 1; i-- > 0;) {
        for (std::size_t p = 0; p < n; ++p) {
            dB(p) = step_dB(bundle, p, i);
            dL(p) = step_dL(bundle, p, i);
        }
        StepRegressor reg(feature_matrix(bundle, i, basis));
        if (reg.ridge) sol.ridge_used = true;

        const double mean_dL = dL.mean();
        Eigen::VectorXd Z(n);
        if (mean_dL < tolf) {
            Z.setZero();
        } else {
            Eigen::VectorXd den = reg.fit(dL);
            resp = Ynext.cwiseProduct(dB);
            Eigen::VectorXd num = reg.fit(resp);
            // Z is unidentified where the clock is (nearly) flat; a tiny or
            // negative predicted denominator only amplifies regression noise
            const double den_floor = std::max(tolf, 0.01 * mean_dL);
            for (std::size_t p = 0; p < n; ++p)
                Z(p) = den(p) > den_floor ? num(p) / den(p) : 0.0;
        }

        // trapezoid in the dt-integral: half the h1 load sits at the right
        // endpoint (inside the conditional expectation), half at the left via
        // a predictor-corrector pair; per-step error is O(dt^3)
        const double dt = bundle.grid[i + 1] - bundle.grid[i];
        for (std::size_t p = 0; p < n; ++p)
            resp(p) = Ynext(p) - h2(i + 1, p, Ynext(p), Z(p)) * dL(p) -
                      0.5 * dt * h1(i + 1, p, Ynext(p));
        Eigen::VectorXd G = reg.fit(resp);
        for (std::size_t p = 0; p < n; ++p) {
            const double yhat = G(p);
            const double ypred = yhat - 0.5 * dt * h1(i, p, yhat);
            const double y = yhat - 0.5 * dt * h1(i, p, ypred);
            sol.Y[p][i] = y;
            sol.Z[p][i] = Z(p);
            Ynext(p) = y;
        }
    }
    return sol;
}

struct Chain {
    std::vector<std::vector<double>> V; // adapted chain values [path][node]
    std::vector<std::vector<double>> H; // integrand [path][step]
    bool ridge = false;
};

// backward conditional-expectation chain with joint [basis | basis*dB] columns
Chain mr_chain(const std::vector<double>& xi, const TrajectoryBundle& bundle, int basis_degree) {
    const std::size_t n = bundle.n_paths();
    const std::size_t N = bundle.n_nodes();
    const Basis basis = bundle_basis(bundle, basis_degree);
    const int k = basis.size();
    const double tolf = tol_flat(bundle.grid.back(), bundle_kappa(bundle));

    Chain chain;
    chain.V.assign(n, std::vector<double>(N, 0.0));
    chain.H.assign(n, std::vector<double>(N - 1, 0.0));

    Eigen::VectorXd V(n), dB(n), dL(n);
    for (std::size_t p = 0; p < n; ++p) {
        V(p) = xi[p];
        chain.V[p][N - 1] = xi[p];
    }
    for (std::size_t i = N - 1; i-- > 0;) {
        for (std::size_t p = 0; p < n; ++p) {
            dB(p) = step_dB(bundle, p, i);
            dL(p) = step_dL(bundle, p, i);
        }
        Eigen::MatrixXd Phi = feature_matrix(bundle, i, basis);
        const bool with_db = dL.mean() >= tolf;
        if (with_db) {
            Eigen::MatrixXd Psi(n, 2 * k);
            Psi.leftCols(k) = Phi;
            Psi.rightCols(k) = Phi.array().colwise() * dB.array();
            StepRegressor reg(std::move(Psi));
            if (reg.ridge) chain.ridge = true;
            Eigen::VectorXd w = reg.coef(V);
            Eigen::VectorXd vfit = Phi * w.head(k);
            Eigen::VectorXd hfit = Phi * w.tail(k);
            for (std::size_t p = 0; p < n; ++p) {
                chain.V[p][i] = vfit(p);
                chain.H[p][i] = hfit(p);
                V(p) = vfit(p);
            }
        } else {
            StepRegressor reg(std::move(Phi));
            if (reg.ridge) chain.ridge = true;
            Eigen::VectorXd vfit = reg.fit(V);
            for (std::size_t p = 0; p < n; ++p) {
                chain.V[p][i] = vfit(p);
                chain.H[p][i] = 0.0;
                V(p) = vfit(p);
            }
        }
    }
    return chain;
}

} // namespace

MartingaleRepresentation represent_martingale(const std::vector<double>& xi_samples,
                                              const TrajectoryBundle& bundle, int basis_degree) {
    const std::size_t n = bundle.n_paths();
    if (xi_samples.size() != n) throw SpecError("represent_martingale: xi/path count mismatch");
    const std::size_t N = bundle.n_nodes();

    Chain chain = mr_chain(xi_samples, bundle, basis_degree);

    MartingaleRepresentation mr;
    mr.ridge_used = chain.ridge;
    mr.H = std::move(chain.H);
    double sum = 0.0;
    for (double v : xi_samples) sum += v;
    mr.E_xi = sum / n;

    double rsum = 0.0, rsumsq = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        double stoch = 0.0;
        for (std::size_t i = 0; i + 1 < N; ++i) stoch += mr.H[p][i] * step_dB(bundle, p, i);
        const double r = xi_samples[p] - mr.E_xi - stoch;
        rsum += r;
        rsumsq += r * r;
    }
    const double rmean = rsum / n;
    mr.residual_variance = std::max(0.0, rsumsq / n - rmean * rmean);
    return mr;
}

BsdeSolution backward_solve(const BsdeSpec& spec, const TrajectoryBundle& bundle,
                            int basis_degree, double beta) {
    auto xi = terminal_values(spec, bundle);
    auto h1 = [&](std::size_t i, std::size_t, double y) { return spec.h1(bundle.grid[i], y); };
    auto h2 = [&](std::size_t i, std::size_t, double y, double z) {
        return spec.h2(bundle.grid[i], y, z);
    };
    return backward_core(h1, h2, xi, bundle, basis_degree, beta);
}

double m_norm_distance(const BsdeSolution& s1, const BsdeSolution& s2,
                       const TrajectoryBundle& bundle, double beta) {
    const std::size_t n = bundle.n_paths();
    const std::size_t N = bundle.n_nodes();
    const double T = bundle.grid.back();
    double acc = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i + 1 < N; ++i) {
            const double w = std::exp(2.0 * beta * (bundle.grid[i] - T));
            const double dt = bundle.grid[i + 1] - bundle.grid[i];
            const double dy = s1.Y[p][i] - s2.Y[p][i];
            const double dz = s1.Z[p][i] - s2.Z[p][i];
            acc += w * (dy * dy * dt + dz * dz * step_dL(bundle, p, i));
        }
    }
    return std::sqrt(acc / n);
}

BsdeSolution picard_solve(const BsdeSpec& spec, const TrajectoryBundle& bundle, int basis_degree,
                          double beta, int max_iter, double tol) {
    if (!(beta > 0.0)) throw SpecError("picard_solve: beta must be > 0");
    if (max_iter < 1) throw SpecError("picard_solve: max_iter must be >= 1");
    const std::size_t n = bundle.n_paths();
    const std::size_t N = bundle.n_nodes();
    const double tolf = tol_flat(bundle.grid.back(), bundle_kappa(bundle));
    auto xi = terminal_values(spec, bundle);

    BsdeSolution cur;
    cur.beta = beta;
    cur.regression_bases = bundle_basis(bundle, basis_degree).describe();
    cur.Y.assign(n, std::vector<double>(N, 0.0));
    cur.Z.assign(n, std::vector<double>(N, 0.0));

    std::vector<double> eta(n);
    std::vector<std::vector<double>> drift(n, std::vector<double>(N - 1, 0.0));
    std::vector<double> norms_hist;
    int rises = 0;
    for (int it = 0; it < max_iter; ++it) {
        // freeze (y,z) = current iterate and accumulate its driver increments
        for (std::size_t p = 0; p < n; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i + 1 < N; ++i) {
                const double t = bundle.grid[i];
                const double t1 = bundle.grid[i + 1];
                const double dt = t1 - t;
                // trapezoid in dt to match the backward-induction quadrature
                const double d =
                    0.5 * (spec.h1(t, cur.Y[p][i]) + spec.h1(t1, cur.Y[p][i + 1])) * dt +
                    spec.h2(t, cur.Y[p][i], cur.Z[p][i]) * step_dL(bundle, p, i);
                drift[p][i] = d;
                acc += d;
            }
            eta[p] = xi[p] - acc;
        }
        Chain chain = mr_chain(eta, bundle, basis_degree);

        BsdeSolution next;
        next.beta = beta;
        next.regression_bases = cur.regression_bases;
        next.ridge_used = cur.ridge_used || chain.ridge;
        next.Y.assign(n, std::vector<double>(N, 0.0));
        next.Z.assign(n, std::vector<double>(N, 0.0));
        for (std::size_t p = 0; p < n; ++p) {
            double past = 0.0;
            for (std::size_t i = 0; i + 1 < N; ++i) {
                next.Y[p][i] = chain.V[p][i] + past;
                next.Z[p][i] = chain.H[p][i];
                past += drift[p][i];
            }
            next.Y[p][N - 1] = xi[p];
        }
        // flat guard on Z (dL-a.e. uniqueness)
        for (std::size_t i = 0; i + 1 < N; ++i) {
            double mean_dl = 0.0;
            for (std::size_t p = 0; p < n; ++p) mean_dl += step_dL(bundle, p, i);
            mean_dl /= n;
            if (mean_dl < tolf)
                for (std::size_t p = 0; p < n; ++p) next.Z[p][i] = 0.0;
        }

        const double dist = m_norm_distance(next, cur, bundle, beta);
        next.ridge_used = next.ridge_used || cur.ridge_used;
        cur = std::move(next);
        norms_hist.push_back(dist);
        const auto& norms = norms_hist;
        if (norms.size() >= 2 && norms.back() >= norms[norms.size() - 2]) {
            if (++rises >= 3) {
                cur.contraction_failed = true;
                cur.diagnostic = "picard iteration not contracting after 3 rises; beta=" +
                                 std::to_string(beta) + ", try beta >= " +
                                 std::to_string(2.0 * beta);
                break;
            }
        } else {
            rises = 0;
        }
        if (dist < tol) break;
    }
    cur.picard_norms = norms_hist;
    const auto& norms = cur.picard_norms;
    if (norms.size() >= 2 && norms.front() > 0.0) {
        double r = 1.0;
        int cnt = 0;
        for (std::size_t i = 1; i < norms.size(); ++i)
            if (norms[i - 1] > 0.0) {
                r *= norms[i] / norms[i - 1];
                ++cnt;
            }
        cur.decay_ratio = cnt > 0 ? std::pow(r, 1.0 / cnt) : 0.0;
    }
    return cur;
}

namespace {

// coefficient partials evaluated along the realized (x, u) at caller nodes
struct PathwiseCoeffs {
    std::vector<std::vector<double>> bx, fx, sx;    // always
    std::vector<std::vector<double>> bxx, fxx, sxx; // second-order solves only
};

PathwiseCoeffs eval_along(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                          bool second_order) {
    const std::size_t n = bundle.n_paths();
    const std::size_t N = bundle.n_nodes();
    PathwiseCoeffs pc;
    pc.bx.assign(n, std::vector<double>(N));
    pc.fx.assign(n, std::vector<double>(N));
    pc.sx.assign(n, std::vector<double>(N));
    if (second_order) {
        pc.bxx.assign(n, std::vector<double>(N));
        pc.fxx.assign(n, std::vector<double>(N));
        pc.sxx.assign(n, std::vector<double>(N));
    }
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i < N; ++i) {
            const std::size_t ci = bundle.fine_index(p, i);
            const double t = bundle.grid[i];
            const double x = bundle.states[p][ci];
            const double u = bundle.controls[p][ci];
            pc.bx[p][i] = coeffs.bx(t, x, u);
            pc.fx[p][i] = coeffs.fx(t, x, u);
            pc.sx[p][i] = coeffs.sx(t, x, u);
            if (second_order) {
                pc.bxx[p][i] = coeffs.bxx(t, x, u);
                pc.fxx[p][i] = coeffs.fxx(t, x, u);
                pc.sxx[p][i] = coeffs.sxx(t, x, u);
            }
        }
    }
    return pc;
}

std::vector<double> adjoint_terminal(const CoefficientSet& coeffs, const TrajectoryBundle& bundle,
                                     bool second, double sign) {
    const std::size_t n = bundle.n_paths();
    const std::size_t last = bundle.n_nodes() - 1;
    std::vector<double> xi(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double xT = bundle.states[p][bundle.fine_index(p, last)];
        xi[p] = sign * (second ? coeffs.hxx(xT) : coeffs.hx(xT));
    }
    return xi;
}

void require_states(const TrajectoryBundle& bundle, const char* who) {
    if (bundle.states.empty() || bundle.controls.empty())
        throw SpecError(std::string(who) + ": bundle must carry states and controls");
}

} // namespace

BsdeSolution solve_first_adjoint(const CoefficientSet& coeffs, const ControlPolicy& policy,
                                 const TrajectoryBundle& bundle, int basis_degree) {
    (void)policy; // the bundle's realized (states, controls) define the linearization
    require_states(bundle, "solve_first_adjoint");
    PathwiseCoeffs pc = eval_along(coeffs, bundle, false);
    auto xi = adjoint_terminal(coeffs, bundle, false, -1.0);
    auto h1 = [&](std::size_t i, std::size_t p, double y) {
        return -(pc.bx[p][i] * y - pc.fx[p][i]);
    };
    auto h2 = [&](std::size_t i, std::size_t p, double, double z) { return -pc.sx[p][i] * z; };
    return backward_core(h1, h2, xi, bundle, basis_degree, 0.0);
}

BsdeSolution solve_second_adjoint(const CoefficientSet& coeffs, const ControlPolicy& policy,
                                  const TrajectoryBundle& bundle, const BsdeSolution& first,
                                  int basis_degree) {
    (void)policy;
    require_states(bundle, "solve_second_adjoint");
    PathwiseCoeffs pc = eval_along(coeffs, bundle, true);
    auto xi = adjoint_terminal(coeffs, bundle, true, -1.0);
    auto h1 = [&](std::size_t i, std::size_t p, double y) {
        return -(2.0 * pc.bx[p][i] * y + pc.bxx[p][i] * first.Y[p][i] - pc.fxx[p][i]);
    };
    auto h2 = [&](std::size_t i, std::size_t p, double y, double z) {
        const double sx = pc.sx[p][i];
        return -(sx * sx * y + 2.0 * sx * z + pc.sxx[p][i] * first.Z[p][i]);
    };
    return backward_core(h1, h2, xi, bundle, basis_degree, 0.0);
}

BsdeSolution solve_eta(const CoefficientSet& coeffs, const ControlPolicy& policy,
                       const TrajectoryBundle& bundle, const BsdeSolution& first,
                       int basis_degree) {
    (void)policy;
    require_states(bundle, "solve_eta");
    PathwiseCoeffs pc = eval_along(coeffs, bundle, true);
    auto xi = adjoint_terminal(coeffs, bundle, true, +1.0);
    auto h1 = [&](std::size_t i, std::size_t p, double y) {
        return pc.fxx[p][i] - 2.0 * pc.bx[p][i] * y - first.Y[p][i] * pc.bxx[p][i];
    };
    auto h2 = [&](std::size_t i, std::size_t p, double y, double z) {
        const double sx = pc.sx[p][i];
        return -(sx * sx * y + 2.0 * sx * z - pc.sxx[p][i] * first.Z[p][i]);
    };
    return backward_core(h1, h2, xi, bundle, basis_degree, 0.0);
}

} // namespace subdiff
