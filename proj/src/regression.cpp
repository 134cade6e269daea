#include "subdiff/regression.hpp"

namespace subdiff {

int Basis::size() const {
    int n = (degree + 1) * (degree + 2) / 2; // monomials X^p L^q, p+q <= degree
    if (include_age) n += 1;
    if (include_state) n += degree >= 2 ? 3 : 1;
    return n;
}

void Basis::eval(double X, double L, double age, double state, double* out) const {
    int k = 0;
    for (int d = 0; d <= degree; ++d) {
        for (int p = d; p >= 0; --p) {
            // X^p * L^(d-p)
            double v = 1.0;
            for (int i = 0; i < p; ++i) v *= X;
            for (int i = 0; i < d - p; ++i) v *= L;
            out[k++] = v;
        }
    }
    if (include_age) out[k++] = age;
    if (include_state) {
        out[k++] = state;
        if (degree >= 2) {
            out[k++] = state * state;
            out[k++] = state * X;
        }
    }
}

std::string Basis::describe() const {
    std::string s = "poly(X,L) degree " + std::to_string(degree);
    if (include_age) s += " + age_of_flat";
    if (include_state) s += degree >= 2 ? " + state, state^2, state*X" : " + state";
    return s;
}

LeastSquares solve_normal_equations(const Eigen::MatrixXd& G, const Eigen::VectorXd& r) {
    const int k = static_cast<int>(G.rows());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(G);
    if (qr.rank() == k) {
        return {qr.solve(r), false};
    }
    const double lambda = 1e-10 * G.trace() / k;
    Eigen::MatrixXd Gr = G;
    Gr.diagonal().array() += lambda > 0.0 ? lambda : 1e-10;
    return {Gr.ldlt().solve(r), true};
}

LeastSquares fit_ols(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& y) {
    Eigen::MatrixXd G = Phi.transpose() * Phi;
    Eigen::VectorXd r = Phi.transpose() * y;
    return solve_normal_equations(G, r);
}

Eigen::MatrixXd feature_matrix(const TrajectoryBundle& bundle, std::size_t node,
                               const Basis& basis) {
    const std::size_t n = bundle.n_paths();
    const int k = basis.size();
    Eigen::MatrixXd Phi(n, k);
    std::vector<double> row(k);
    for (std::size_t p = 0; p < n; ++p) {
        const auto& path = bundle.paths[p];
        const std::size_t ci = bundle.fine_index(p, node);
        const double state = basis.include_state ? bundle.states[p][ci] : 0.0;
        basis.eval(path.X[ci], path.inverse.L[ci], path.age[ci], state, row.data());
        for (int j = 0; j < k; ++j) Phi(p, j) = row[j];
    }
    return Phi;
}

} // namespace subdiff
