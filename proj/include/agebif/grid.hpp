#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "agebif/linalg.hpp"

namespace agebif {

/// Interior-node grid on the interval (0, length) with spacing h = length/(n+1).
struct SpatialGrid {
    int n_interior = 0;
    double length = 0.0;
    double spacing = 0.0;
    std::vector<double> nodes;
};

inline SpatialGrid build_grid(int n_interior, double length) {
    if (n_interior < 3) throw std::invalid_argument("build_grid: n_interior must be >= 3");
    if (!(length > 0.0)) throw std::invalid_argument("build_grid: length must be positive");
    SpatialGrid g;
    g.n_interior = n_interior;
    g.length = length;
    g.spacing = length / (n_interior + 1);
    g.nodes.resize(n_interior);
    for (int j = 0; j < n_interior; ++j) g.nodes[j] = (j + 1) * g.spacing;
    return g;
}

/// Second-difference Dirichlet Laplacian on interior nodes: tridiag(-1, 2, -1)/h².
/// Symmetric positive definite with nonpositive off-diagonal (M-matrix).
struct LaplacianMatrix {
    int n = 0;
    double diag = 0.0;  // 2/h²
    double off = 0.0;   // -1/h²

    Vector apply(const Vector& x) const {
        Vector y(n);
        for (int i = 0; i < n; ++i) {
            double v = diag * x[i];
            if (i > 0) v += off * x[i - 1];
            if (i + 1 < n) v += off * x[i + 1];
            y[i] = v;
        }
        return y;
    }

    Matrix dense() const {
        Matrix a = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            a(i, i) = diag;
            if (i > 0) a(i, i - 1) = off;
            if (i + 1 < n) a(i, i + 1) = off;
        }
        return a;
    }
};

inline LaplacianMatrix assemble_laplacian(const SpatialGrid& grid) {
    LaplacianMatrix lap;
    lap.n = grid.n_interior;
    const double h2 = grid.spacing * grid.spacing;
    lap.diag = 2.0 / h2;
    lap.off = -1.0 / h2;
    return lap;
}

/// Principal eigenpair of the discrete Dirichlet Laplacian: smallest eigenvalue
/// and its strictly positive eigenvector, sup-normalized to 1.
struct SpectralData {
    double lambda1 = 0.0;
    Vector phi1;
    double residual = 0.0;
};

/// Inverse power iteration with zero shift. The matrix is SPD, so the
/// iteration converges to the smallest eigenvalue from any start vector with
/// a nonzero first-mode component; all-ones qualifies.
inline SpectralData principal_eigenpair(const LaplacianMatrix& lap,
                                        double rel_tol = 1e-13, int max_iters = 20000) {
    const int n = lap.n;
    Vector diag = Vector::Constant(n, lap.diag);
    TridiagFactor factor(diag, lap.off);

    Vector v = Vector::Ones(n);
    v /= v.norm();
    double lambda = 0.0;
    double res = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vector w = v;
        factor.solve_inplace(w);
        w /= w.norm();
        Vector aw = lap.apply(w);
        lambda = w.dot(aw);  // Rayleigh quotient
        res = (aw - lambda * w).lpNorm<Eigen::Infinity>();
        v = w;
        if (res <= rel_tol * lambda) {
            SpectralData out;
            if (v[0] < 0.0) v = -v;
            out.phi1 = v / v.maxCoeff();
            out.lambda1 = lambda;
            out.residual = (lap.apply(out.phi1) - lambda * out.phi1).lpNorm<Eigen::Infinity>();
            return out;
        }
    }
    throw std::runtime_error("principal_eigenpair: inverse iteration did not converge");
}

}  // namespace agebif
