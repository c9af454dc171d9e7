#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "agebif/field.hpp"

namespace agebif {

/// Implicit age steps use matrices I + dt·(−Δ_D + diag(p)). With nonpositive
/// off-diagonals these are M-matrices (hence positivity-preserving) as long as
/// dt·max(0, −min p) ≤ 1/2. Negative potentials are handled by subdividing an
/// age step into equal substeps until that bound holds.
inline int substeps_for(double da, double most_negative_potential, int cap = 1024) {
    if (most_negative_potential <= 0.0) return 1;
    int s = static_cast<int>(std::ceil(2.0 * da * most_negative_potential));
    if (s < 1) s = 1;
    if (s > cap)
        throw std::runtime_error("substep limit exceeded: potential too negative for this age step");
    return s;
}

/// Factorization of one implicit step matrix I + dt·(−Δ_D + diag(potential)).
inline TridiagFactor linear_step_factor(const LaplacianMatrix& lap,
                                        const Vector& potential_row, double dt) {
    Vector diag = Vector::Constant(lap.n, 1.0 + dt * lap.diag) + dt * potential_row;
    return TridiagFactor(diag, dt * lap.off);
}

/// Linear parabolic flow under a zeroth-order potential: the unique solution of
///   ∂_a w − Δ_D w + h(a) w = f,  w(0) = phi0,
/// advanced by backward Euler with the potential sampled at the source age of
/// each step. Nonnegative initial data and source keep every age row
/// nonnegative. The source defaults to zero.
inline AgeSpaceField propagate_linear(const Discretization& disc, const PotentialField& h,
                                      const Vector& phi0,
                                      const AgeSpaceField* source = nullptr) {
    const int n = disc.n_space();
    const int m = disc.age.steps;
    const double da = disc.age.da;
    if (h.n_space() != n || h.n_ages() != m + 1)
        throw std::invalid_argument("propagate_linear: potential shape mismatch");
    if (static_cast<int>(phi0.size()) != n)
        throw std::invalid_argument("propagate_linear: initial value size mismatch");

    AgeSpaceField w(disc.age, n);
    w.set_row(0, phi0);
    Vector cur = phi0;
    for (int k = 0; k < m; ++k) {
        const Vector pot = h.row(k);
        const int s = substeps_for(da, std::max(0.0, -pot.minCoeff()));
        const double dt = da / s;
        TridiagFactor factor = linear_step_factor(disc.laplacian, pot, dt);
        Vector src;
        if (source) src = source->row(k);
        for (int j = 0; j < s; ++j) {
            if (source) cur += dt * src;
            factor.solve_inplace(cur);
        }
        w.set_row(k + 1, cur);
    }
    return w;
}

/// Single-species logistic flow: ∂_a u − Δ_D u = −α u² (+ f), semi-implicit with
/// the quadratic term linearized by the product rule u_{k+1}u_k. The step matrix
/// is then I + da(−Δ_D + α·diag(u_k)), an M-matrix for u_k ≥ 0, and the sup-norm
/// of the rows is non-increasing. The optional source enters explicitly.
inline AgeSpaceField propagate_logistic(const Discretization& disc, const Vector& phi0,
                                        double alpha, const AgeSpaceField* source = nullptr) {
    const int n = disc.n_space();
    const int m = disc.age.steps;
    const double da = disc.age.da;
    if (static_cast<int>(phi0.size()) != n)
        throw std::invalid_argument("propagate_logistic: initial value size mismatch");
    if (phi0.minCoeff() < -1e-12)
        throw std::invalid_argument("propagate_logistic: negative initial data");

    AgeSpaceField u(disc.age, n);
    u.set_row(0, phi0);
    Vector cur = phi0;
    for (int k = 0; k < m; ++k) {
        TridiagFactor factor = linear_step_factor(disc.laplacian, alpha * cur, da);
        if (source) cur += da * source->row(k);
        factor.solve_inplace(cur);
        u.set_row(k + 1, cur);
    }
    return u;
}

/// Coupled two-species flow of the full system with mortalities
/// μ₁ = α₁u + α₂v and μ₂ = β₁v − β₂u. Own-species quadratic terms are
/// product-rule linearized, cross terms lagged at the step's source age.
/// The v equation sees the destabilizing −β₂u term and is substepped so its
/// step matrices stay M-matrices.
inline std::pair<AgeSpaceField, AgeSpaceField> propagate_coupled(const Discretization& disc,
                                                                 const Vector& u0,
                                                                 const Vector& v0,
                                                                 const ModelParams& p) {
    const int n = disc.n_space();
    const int m = disc.age.steps;
    const double da = disc.age.da;
    if (u0.minCoeff() < -1e-12 || v0.minCoeff() < -1e-12)
        throw std::invalid_argument("propagate_coupled: negative initial data");

    AgeSpaceField u(disc.age, n), v(disc.age, n);
    u.set_row(0, u0);
    v.set_row(0, v0);
    Vector uc = u0, vc = v0;
    for (int k = 0; k < m; ++k) {
        Vector u_prev = uc;
        TridiagFactor fu = linear_step_factor(disc.laplacian, p.alpha1 * uc + p.alpha2 * vc, da);
        fu.solve_inplace(uc);
        u.set_row(k + 1, uc);

        const int s = substeps_for(da, p.beta2 * std::max(0.0, u_prev.maxCoeff()));
        const double dt = da / s;
        for (int j = 0; j < s; ++j) {
            TridiagFactor fv =
                linear_step_factor(disc.laplacian, p.beta1 * vc - p.beta2 * u_prev, dt);
            fv.solve_inplace(vc);
        }
        v.set_row(k + 1, vc);
    }
    return {std::move(u), std::move(v)};
}

namespace detail {

/// Advance K directional derivatives of the coupled flow one age step,
/// differentiating the discrete scheme exactly (same factorizations, same
/// substep structure, v intermediates recomputed from the stored base rows).
/// Base fields must have been produced by propagate_coupled with the same
/// parameters. du, dv are n×K; optional sources are per-direction columns.
inline void coupled_linearized_step(const Discretization& disc, const ModelParams& p,
                                    const Vector& base_u_k, const Vector& base_u_k1,
                                    const Vector& base_v_k, Matrix& du, Matrix& dv,
                                    const Vector* rhs_u, const Vector* rhs_v) {
    const double da = disc.age.da;
    const Matrix du_source = du;  // the flow lags u at the step's source age

    // u step: (I + da(−Δ + diag(α₁u_k + α₂v_k))) u_{k+1} = u_k differentiates to
    // the same matrix acting on du_{k+1} with the potential variation moved right.
    TridiagFactor fu =
        linear_step_factor(disc.laplacian, p.alpha1 * base_u_k + p.alpha2 * base_v_k, da);
    Matrix rhs = du;
    for (int c = 0; c < rhs.cols(); ++c)
        rhs.col(c) -= da * (p.alpha1 * du.col(c) + p.alpha2 * dv.col(c)).cwiseProduct(base_u_k1);
    if (rhs_u)
        for (int c = 0; c < rhs.cols(); ++c) rhs.col(c) += da * (*rhs_u);
    fu.solve_inplace(rhs);
    du = rhs;

    // v substeps, recomputing the intermediate states of the base flow.
    const int s = substeps_for(da, p.beta2 * std::max(0.0, base_u_k.maxCoeff()));
    const double dt = da / s;
    Vector vb = base_v_k;
    for (int j = 0; j < s; ++j) {
        TridiagFactor fv =
            linear_step_factor(disc.laplacian, p.beta1 * vb - p.beta2 * base_u_k, dt);
        Vector vb_next = vb;
        fv.solve_inplace(vb_next);
        Matrix r = dv;
        for (int c = 0; c < r.cols(); ++c)
            r.col(c) -=
                dt * (p.beta1 * dv.col(c) - p.beta2 * du_source.col(c)).cwiseProduct(vb_next);
        if (rhs_v)
            for (int c = 0; c < r.cols(); ++c) r.col(c) += dt * (*rhs_v);
        fv.solve_inplace(r);
        dv = r;
        vb = vb_next;
    }
}

}  // namespace detail

/// Linearization of the coupled flow around base fields: the first component
/// carries potential 2α₁u + α₂v with the coupling α₂u acting on the second
/// unknown, the second carries 2β₁v − β₂u with −β₂v acting on the first.
/// Realized as the exact directional derivative of the discrete coupled
/// scheme, with inhomogeneities rhs and initial values phi0.
inline std::pair<AgeSpaceField, AgeSpaceField> propagate_linearized(
    const Discretization& disc, const AgeSpaceField& base_u, const AgeSpaceField& base_v,
    const ModelParams& p, const AgeSpaceField* rhs_u, const AgeSpaceField* rhs_v,
    const Vector& phi0, const Vector& psi0) {
    const int n = disc.n_space();
    const int m = disc.age.steps;
    AgeSpaceField du(disc.age, n), dv(disc.age, n);
    du.set_row(0, phi0);
    dv.set_row(0, psi0);
    Matrix cu = phi0, cv = psi0;
    for (int k = 0; k < m; ++k) {
        Vector ru, rv;
        if (rhs_u) ru = rhs_u->row(k);
        if (rhs_v) rv = rhs_v->row(k);
        detail::coupled_linearized_step(disc, p, base_u.row(k), base_u.row(k + 1), base_v.row(k),
                                        cu, cv, rhs_u ? &ru : nullptr, rhs_v ? &rv : nullptr);
        du.set_row(k + 1, cu);
        dv.set_row(k + 1, cv);
    }
    return {std::move(du), std::move(dv)};
}

/// Exact derivative of the age-quadrature functionals of the coupled flow with
/// respect to the stacked traces (c_u, c_v): the four n×n blocks of
/// d(Σ_k wb_k · row_k) for both species. weights are the products of quadrature
/// weights and fertility samples.
struct CoupledBirthJacobian {
    Matrix du_dcu, du_dcv, dv_dcu, dv_dcv;
};

inline CoupledBirthJacobian birth_jacobian_coupled(const Discretization& disc,
                                                   const AgeSpaceField& base_u,
                                                   const AgeSpaceField& base_v,
                                                   const ModelParams& p, const Vector& weights1,
                                                   const Vector& weights2) {
    const int n = disc.n_space();
    const int m = disc.age.steps;
    Matrix du_cu = Matrix::Identity(n, n), du_cv = Matrix::Zero(n, n);
    Matrix dv_cu = Matrix::Zero(n, n), dv_cv = Matrix::Identity(n, n);

    CoupledBirthJacobian jac{weights1[0] * du_cu, weights1[0] * du_cv, weights2[0] * dv_cu,
                             weights2[0] * dv_cv};
    for (int k = 0; k < m; ++k) {
        const Vector bu_k = base_u.row(k), bu_k1 = base_u.row(k + 1), bv_k = base_v.row(k);
        detail::coupled_linearized_step(disc, p, bu_k, bu_k1, bv_k, du_cu, dv_cu, nullptr,
                                        nullptr);
        detail::coupled_linearized_step(disc, p, bu_k, bu_k1, bv_k, du_cv, dv_cv, nullptr,
                                        nullptr);
        jac.du_dcu += weights1[k + 1] * du_cu;
        jac.du_dcv += weights1[k + 1] * du_cv;
        jac.dv_dcu += weights2[k + 1] * dv_cu;
        jac.dv_dcv += weights2[k + 1] * dv_cv;
    }
    return jac;
}

/// Exact derivative of the logistic flow (one species) along one direction.
inline AgeSpaceField propagate_logistic_linearized(const Discretization& disc,
                                                   const AgeSpaceField& base, double alpha,
                                                   const Vector& z0) {
    const int n = disc.n_space();
    const int m = disc.age.steps;
    const double da = disc.age.da;
    AgeSpaceField z(disc.age, n);
    z.set_row(0, z0);
    Vector cur = z0;
    for (int k = 0; k < m; ++k) {
        TridiagFactor factor = linear_step_factor(disc.laplacian, alpha * base.row(k), da);
        Vector rhs = cur - da * alpha * cur.cwiseProduct(base.row(k + 1));
        factor.solve_inplace(rhs);
        cur = rhs;
        z.set_row(k + 1, cur);
    }
    return z;
}

/// Exact derivative of the birth functional of the logistic flow with respect
/// to the trace: n×n matrix Σ_k wb_k · Z_k with Z_0 = I.
inline Matrix birth_jacobian_logistic(const Discretization& disc, const AgeSpaceField& base,
                                      double alpha, const Vector& weights) {
    const int n = disc.n_space();
    const int m = disc.age.steps;
    const double da = disc.age.da;
    Matrix z = Matrix::Identity(n, n);
    Matrix acc = weights[0] * z;
    for (int k = 0; k < m; ++k) {
        TridiagFactor factor = linear_step_factor(disc.laplacian, alpha * base.row(k), da);
        const Vector damp = Vector::Ones(n) - da * alpha * base.row(k + 1);
        z = damp.asDiagonal() * z;
        factor.solve_inplace(z);
        acc += weights[k + 1] * z;
    }
    return acc;
}

}  // namespace agebif
