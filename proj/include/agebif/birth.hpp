#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "agebif/evolve.hpp"

namespace agebif {

enum class Species { prey, predator };

inline const char* species_name(Species s) { return s == Species::prey ? "prey" : "predator"; }

/// Fertility profile sampled on the age grid, scaled so that the discrete
/// birth functional applied to the discrete heat decay of φ₁ equals one:
///   Σ_k w_k b(a_k) (1 + da·λ₁)^{−k} = 1.
/// That makes the unperturbed birth operator have spectral radius exactly 1
/// on the grid, the discrete counterpart of the continuum normalization
/// ∫ b(a) e^{−λ₁ a} da = 1; the continuum constant is recovered on refinement.
struct BirthProfile {
    Species kind = Species::prey;
    Vector raw;
    double scale = 0.0;
    Vector samples;

    double sup() const { return samples.maxCoeff(); }
};

inline BirthProfile normalize_profile(Species kind, const Vector& raw, double lambda1,
                                      const AgeGrid& age) {
    const int m = age.steps;
    if (static_cast<int>(raw.size()) != m + 1)
        throw std::invalid_argument("normalize_profile: sample count must be steps + 1");
    if (raw.minCoeff() < 0.0)
        throw std::invalid_argument("normalize_profile: negative fertility sample");
    if (raw.maxCoeff() <= 0.0) throw std::invalid_argument("normalize_profile: zero profile");
    const int tail_start = m - m / 10;
    for (int k = tail_start; k <= m; ++k)
        if (!(raw[k] > 0.0))
            throw std::invalid_argument("normalize_profile: profile vanishes near the maximal age");

    const Vector w = age.trapezoid_weights();
    const double decay_base = 1.0 / (1.0 + age.da * lambda1);
    double integral = 0.0;
    double decay = 1.0;
    for (int k = 0; k <= m; ++k) {
        integral += w[k] * raw[k] * decay;
        decay *= decay_base;
    }
    BirthProfile p;
    p.kind = kind;
    p.raw = raw;
    p.scale = 1.0 / integral;
    p.samples = p.scale * raw;
    return p;
}

inline BirthProfile constant_profile(Species kind, const Discretization& disc) {
    return normalize_profile(kind, Vector::Ones(disc.age.steps + 1), disc.spectral.lambda1,
                             disc.age);
}

inline BirthProfile exp_decay_profile(Species kind, double rate, const Discretization& disc) {
    Vector raw(disc.age.steps + 1);
    for (int k = 0; k <= disc.age.steps; ++k) raw[k] = std::exp(-rate * disc.age.age(k));
    return normalize_profile(kind, raw, disc.spectral.lambda1, disc.age);
}

/// Quadrature-times-fertility weights, one per age node.
inline Vector birth_weights(const BirthProfile& profile, const AgeGrid& age) {
    return age.trapezoid_weights().cwiseProduct(profile.samples);
}

/// Discrete birth functional: Σ_k w_k b(a_k) · field row k.
inline Vector birth_integral(const BirthProfile& profile, const AgeSpaceField& field) {
    const Vector wb = birth_weights(profile, field.age_grid());
    Vector out = Vector::Zero(field.n_space());
    for (int k = 0; k < field.n_ages(); ++k) out += wb[k] * field.row(k);
    return out;
}

/// Birth integral of the linear flow: the discrete birth operator applied to
/// one trace vector.
inline Vector apply_birth_operator(const Discretization& disc, const PotentialField& potential,
                                   const BirthProfile& profile, const Vector& phi) {
    return birth_integral(profile, propagate_linear(disc, potential, phi));
}

/// The nonlocal birth operator Σ_k w_k b(a_k) Π(a_k, 0) materialized as a
/// dense matrix (column j is the birth integral of the flow started at e_j),
/// or held apply-only beyond the dense size limit. The apply-only form keeps
/// a reference to the discretization, which must outlive the operator.
class BirthOperator {
public:
    static constexpr int dense_limit = 512;

    BirthOperator(const Discretization& disc, PotentialField potential, BirthProfile profile)
        : n_(disc.n_space()) {
        if (n_ <= dense_limit) {
            matrix_ = materialize(disc, potential, profile);
            materialized_ = true;
        } else {
            apply_fn_ = [&disc, pot = std::move(potential),
                         prof = std::move(profile)](const Vector& phi) {
                return apply_birth_operator(disc, pot, prof, phi);
            };
        }
    }

    explicit BirthOperator(Matrix m) : n_(static_cast<int>(m.rows())), matrix_(std::move(m)), materialized_(true) {}

    int size() const { return n_; }
    bool materialized() const { return materialized_; }
    const Matrix& matrix() const {
        if (!materialized_) throw std::logic_error("BirthOperator: not materialized");
        return matrix_;
    }

    Vector apply(const Vector& phi) const {
        return materialized_ ? Vector(matrix_ * phi) : apply_fn_(phi);
    }

private:
    static Matrix materialize(const Discretization& disc, const PotentialField& h,
                              const BirthProfile& profile) {
        const int n = disc.n_space();
        const int m = disc.age.steps;
        const double da = disc.age.da;
        const Vector wb = birth_weights(profile, disc.age);
        Matrix walk = Matrix::Identity(n, n);
        Matrix acc = wb[0] * walk;
        for (int k = 0; k < m; ++k) {
            const Vector pot = h.row(k);
            const int s = substeps_for(da, std::max(0.0, -pot.minCoeff()));
            TridiagFactor factor = linear_step_factor(disc.laplacian, pot, da / s);
            for (int j = 0; j < s; ++j) factor.solve_inplace(walk);
            acc += wb[k + 1] * walk;
        }
        return acc;
    }

    int n_;
    Matrix matrix_;
    bool materialized_ = false;
    std::function<Vector(const Vector&)> apply_fn_;
};

inline BirthOperator make_birth_operator(const Discretization& disc,
                                         const PotentialField& potential,
                                         const BirthProfile& profile) {
    return BirthOperator(disc, potential, profile);
}

/// Dominant eigenpair of a positive operator: spectral radius, strictly
/// positive eigenvector with sup-norm 1, final residual, iteration count.
struct KreinRutmanResult {
    double radius = 0.0;
    Vector eigvec;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Power iteration. A strictly positive start vector (φ₁) has a nonzero
/// component on the dominant eigenvector, so the iteration converges whenever
/// the dominance gap is nonzero. Hitting the cap signals a near-degenerate
/// gap: the best estimate is returned with converged = false.
inline KreinRutmanResult power_iteration(const BirthOperator& op, const Vector& start,
                                         double rel_tol = 5e-12, int cap = 10000) {
    KreinRutmanResult out;
    Vector v = start / start.lpNorm<Eigen::Infinity>();
    double radius = 0.0;
    for (int it = 1; it <= cap; ++it) {
        const Vector w = op.apply(v);
        radius = v.dot(w) / v.dot(v);
        const double res = (w - radius * v).lpNorm<Eigen::Infinity>();
        const double scale = std::max(std::abs(radius), 1e-300);
        v = w / w.lpNorm<Eigen::Infinity>();
        out.iterations = it;
        if (res <= rel_tol * scale) {
            out.converged = true;
            break;
        }
    }
    out.radius = radius;
    out.eigvec = v;
    out.residual = (op.apply(v) - radius * v).lpNorm<Eigen::Infinity>();
    return out;
}

/// Krein–Rutman data of the birth operator under a potential.
inline KreinRutmanResult spectral_radius(const Discretization& disc,
                                         const PotentialField& potential,
                                         const BirthProfile& profile, double rel_tol = 5e-12,
                                         int cap = 10000) {
    BirthOperator op(disc, potential, profile);
    return power_iteration(op, disc.spectral.phi1, rel_tol, cap);
}

/// Thrown when a resolvent solve is requested at or beyond the spectral
/// condition η·r = 1, i.e. at or past a bifurcation point.
struct SpectralConditionError : std::runtime_error {
    SpectralConditionError(double eta, double radius)
        : std::runtime_error("resolve_birth: eta * spectral radius = " +
                             std::to_string(eta * radius) + " >= 1"),
          eta(eta),
          radius(radius) {}
    double eta;
    double radius;
};

/// Solve (1 − η·H) x = rhs on a materialized operator whose spectral radius is
/// already known. Positivity of H and η·r < 1 make the inverse nonnegative.
inline Vector resolve_on_operator(double eta, const BirthOperator& op, double radius,
                                  const Vector& rhs) {
    if (eta * radius >= 1.0) throw SpectralConditionError(eta, radius);
    const Matrix sys = Matrix::Identity(op.size(), op.size()) - eta * op.matrix();
    return sys.partialPivLu().solve(rhs);
}

inline Vector resolve_birth(const Discretization& disc, double eta,
                            const PotentialField& potential, const BirthProfile& profile,
                            const Vector& rhs) {
    BirthOperator op(disc, potential, profile);
    const KreinRutmanResult kr = power_iteration(op, disc.spectral.phi1);
    return resolve_on_operator(eta, op, kr.radius, rhs);
}

}  // namespace agebif
