#pragma once

#include <cmath>
#include <stdexcept>

#include "agebif/grid.hpp"

namespace agebif {

/// Uniform age grid on [0, a_max] with M steps, ages a_k = k·da.
struct AgeGrid {
    double a_max = 0.0;
    int steps = 0;
    double da = 0.0;

    double age(int k) const { return k * da; }

    /// Trapezoid quadrature weights over the M+1 age nodes.
    Vector trapezoid_weights() const {
        Vector w = Vector::Constant(steps + 1, da);
        w[0] = 0.5 * da;
        w[steps] = 0.5 * da;
        return w;
    }
};

inline AgeGrid build_age_grid(int steps, double a_max) {
    if (steps < 2) throw std::invalid_argument("build_age_grid: steps must be >= 2");
    if (!(a_max > 0.0)) throw std::invalid_argument("build_age_grid: a_max must be positive");
    return AgeGrid{a_max, steps, a_max / steps};
}

/// Function of (age, space) sampled on the age × interior-node grid.
/// Row k holds the spatial values at age a_k. Also used for the zeroth-order
/// potential coefficients h(a, x) of the linear evolution problem.
class AgeSpaceField {
public:
    AgeSpaceField() = default;
    AgeSpaceField(const AgeGrid& age, int n_space)
        : age_(age), values_(Matrix::Zero(age.steps + 1, n_space)) {}
    AgeSpaceField(const AgeGrid& age, Matrix values) : age_(age), values_(std::move(values)) {
        if (values_.rows() != age.steps + 1)
            throw std::invalid_argument("AgeSpaceField: row count must be steps + 1");
    }

    const AgeGrid& age_grid() const { return age_; }
    int n_space() const { return static_cast<int>(values_.cols()); }
    int n_ages() const { return static_cast<int>(values_.rows()); }

    Eigen::Ref<const Matrix> values() const { return values_; }
    Eigen::Ref<Matrix> values() { return values_; }
    Vector row(int k) const { return values_.row(k).transpose(); }
    void set_row(int k, const Vector& v) { values_.row(k) = v.transpose(); }

    double min_value() const { return values_.minCoeff(); }
    double sup_norm() const { return values_.cwiseAbs().maxCoeff(); }

    /// Numerical cone membership: all entries above -tol.
    bool in_cone(double tol = 1e-12) const { return min_value() >= -tol; }

    AgeSpaceField scaled(double s) const { return AgeSpaceField(age_, s * values_); }
    AgeSpaceField operator+(const AgeSpaceField& other) const {
        return AgeSpaceField(age_, values_ + other.values_);
    }
    AgeSpaceField operator-(const AgeSpaceField& other) const {
        return AgeSpaceField(age_, values_ - other.values_);
    }

private:
    AgeGrid age_;
    Matrix values_;
};

using PotentialField = AgeSpaceField;

/// Mortality coefficients and fertility intensities of the two-species model.
struct ModelParams {
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double beta1 = 1.0;
    double beta2 = 1.0;
    double eta = 0.0;
    double xi = 0.0;

    void validate() const {
        if (!(alpha1 > 0.0 && alpha2 > 0.0 && beta1 > 0.0 && beta2 > 0.0))
            throw std::invalid_argument("ModelParams: alpha1, alpha2, beta1, beta2 must be positive");
    }
};

/// Shared discretization bundle: spatial grid, Laplacian, principal eigenpair,
/// age grid. Immutable after construction; safe to share across solves.
struct Discretization {
    SpatialGrid grid;
    LaplacianMatrix laplacian;
    SpectralData spectral;
    AgeGrid age;

    int n_space() const { return grid.n_interior; }
};

inline Discretization make_discretization(int n_interior, double length, int age_steps,
                                          double a_max) {
    Discretization d;
    d.grid = build_grid(n_interior, length);
    d.laplacian = assemble_laplacian(d.grid);
    d.spectral = principal_eigenpair(d.laplacian);
    d.age = build_age_grid(age_steps, a_max);
    return d;
}

/// Discrete L² norm over age × space (trapezoid in age, midpoint in space).
inline double field_l2(const AgeSpaceField& f, double spacing) {
    const Vector w = f.age_grid().trapezoid_weights();
    double acc = 0.0;
    for (int k = 0; k < f.n_ages(); ++k) acc += w[k] * f.row(k).squaredNorm();
    return std::sqrt(spacing * acc);
}

/// Rowwise (pointwise) product of two fields on the same grids.
inline AgeSpaceField hadamard(const AgeSpaceField& a, const AgeSpaceField& b) {
    return AgeSpaceField(a.age_grid(), a.values().cwiseProduct(b.values()));
}

}  // namespace agebif
