#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "agebif/birth.hpp"

namespace agebif {

struct NewtonDivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Positive steady state of one species at fertility intensity `param`
/// (u_η for the prey equation, v_ξ for the predator analogue), together with
/// the quantities that certify it: the age-zero trace solving the shooting
/// equation and the spectral identity defect |param·r(H_[α·field]) − 1|.
struct SemiTrivialSolution {
    double param = 0.0;
    double alpha = 0.0;
    Species species = Species::prey;
    AgeSpaceField field;
    Vector trace;
    double newton_residual = 0.0;
    double consistency = 0.0;
};

struct SemiTrivialResult {
    bool nontrivial = false;
    std::optional<SemiTrivialSolution> solution;
    int iterations = 0;
};

namespace detail {

/// Lower-envelope amplitude at age zero: λ₁(param−1)/(α(1−e^{−λ₁a_m})).
/// Used to seed the Newton iteration inside the basin of the positive branch.
inline double seed_amplitude(const Discretization& disc, double param, double alpha) {
    const double l1 = disc.spectral.lambda1;
    const double denom = alpha * (1.0 - std::exp(-l1 * disc.age.a_max));
    double amp = l1 * (param - 1.0) / denom;
    if (!(amp > 0.0)) amp = 0.1;
    return amp;
}

}  // namespace detail

/// Newton iteration on the age-zero trace c for F(c) = c − param·∫b·flow(c),
/// with the exact derivative of the discrete flow as Jacobian and a halving
/// line search. The birth map c ↦ param·∫b·flow(c) is monotone and sublinear,
/// so its fixed-point iteration converges globally toward the positive state
/// (or collapses when param ≤ 1); a warmup phase runs it until the iterate is
/// inside the Newton basin, which keeps Newton away from the trivial root's
/// attraction region below the singular surface of 1 − param·H. Collapse of
/// the iterate below the triviality threshold is the legitimate outcome for
/// param ≤ 1 and is reported as the trivial solution.
inline SemiTrivialResult solve_semitrivial(const Discretization& disc, double param, double alpha,
                                           const BirthProfile& profile,
                                           const Vector* seed = nullptr, double tol = 1e-10,
                                           int max_iters = 50) {
    if (!std::isfinite(param)) throw std::invalid_argument("solve_semitrivial: param not finite");
    if (!(alpha > 0.0)) throw std::invalid_argument("solve_semitrivial: alpha must be positive");
    const int n = disc.n_space();
    const Vector wb = birth_weights(profile, disc.age);
    constexpr double trivial_threshold = 1e-10;

    Vector c = seed ? *seed : Vector(detail::seed_amplitude(disc, param, alpha) * disc.spectral.phi1);
    c = c.cwiseMax(0.0);

    // Near onset the map contracts at rate 1 − O(param − 1), so plain iteration
    // crawls; Aitken extrapolation along the difference direction fixes that.
    const double blowup_guard = 1e6 * (1.0 + c.lpNorm<Eigen::Infinity>());
    auto birth_map = [&](const Vector& x) {
        return Vector(param * birth_integral(profile, propagate_logistic(disc, x, alpha)));
    };
    for (int warmup = 0; warmup < 300; ++warmup) {
        if (c.lpNorm<Eigen::Infinity>() < 1e-11) break;
        const Vector g1 = birth_map(c);
        const Vector d1 = g1 - c;
        // relative to the amplitude itself: near onset small steps can mean a
        // near-unit contraction rate rather than proximity to the fixed point
        if (d1.lpNorm<Eigen::Infinity>() <= 1e-3 * std::max(g1.lpNorm<Eigen::Infinity>(), 1e-8)) {
            c = g1;
            break;
        }
        const Vector g2 = birth_map(g1);
        const Vector d2 = g2 - g1;
        const double rho = d1.squaredNorm() > 0.0 ? d2.dot(d1) / d1.squaredNorm() : 0.0;
        c = g2;
        if (rho > 0.0 && rho < 0.999) {
            const double gain = std::min(rho / (1.0 - rho), 20.0);
            const Vector candidate = (g2 + gain * d2).cwiseMax(0.0);
            // never let the extrapolation collapse a live iterate to zero
            const double g2sup = g2.lpNorm<Eigen::Infinity>();
            if (!(g2sup > 1e-10 && candidate.lpNorm<Eigen::Infinity>() < 0.25 * g2sup))
                c = candidate;
        }
        if (c.lpNorm<Eigen::Infinity>() > blowup_guard)
            throw NewtonDivergenceError(
                "solve_semitrivial: birth map diverges (age resolution too coarse for param " +
                std::to_string(param) + ")");
    }

    SemiTrivialResult out;
    for (int it = 0; it < max_iters; ++it) {
        out.iterations = it + 1;
        if (c.lpNorm<Eigen::Infinity>() < trivial_threshold) return out;  // trivial

        AgeSpaceField flow = propagate_logistic(disc, c, alpha);
        Vector f = c - param * birth_integral(profile, flow);
        const double fnorm = f.lpNorm<Eigen::Infinity>();
        if (fnorm <= tol * (1.0 + c.lpNorm<Eigen::Infinity>())) {
            // At amplitude c the residual of the degenerate (param = 1) problem
            // is already quadratically small, ~ c²·(birth curvature), so traces
            // below ~sqrt(tol) are indistinguishable from the trivial branch at
            // this tolerance. Genuine amplitudes scale like λ₁(param−1)/α.
            if (c.lpNorm<Eigen::Infinity>() < 1e-4) return out;
            SemiTrivialSolution sol;
            sol.param = param;
            sol.alpha = alpha;
            sol.species = profile.kind;
            sol.field = std::move(flow);
            sol.trace = c;
            sol.newton_residual = fnorm;
            const KreinRutmanResult kr = spectral_radius(disc, sol.field.scaled(alpha), profile);
            sol.consistency = std::abs(param * kr.radius - 1.0);
            out.nontrivial = true;
            out.solution = std::move(sol);
            return out;
        }

        Matrix jac = Matrix::Identity(n, n) -
                     param * birth_jacobian_logistic(disc, flow, alpha, wb);
        Vector step = jac.partialPivLu().solve(-f);

        double t = 1.0;
        bool accepted = false;
        const double cone_tol = 1e-12 * std::max(1.0, c.lpNorm<Eigen::Infinity>());
        for (int halving = 0; halving <= 8; ++halving) {
            Vector trial = c + t * step;
            if (trial.minCoeff() >= -cone_tol) {
                Vector clamped = trial.cwiseMax(0.0);
                AgeSpaceField trial_flow = propagate_logistic(disc, clamped, alpha);
                Vector trial_f = clamped - param * birth_integral(profile, trial_flow);
                if (trial_f.lpNorm<Eigen::Infinity>() <= (1.0 - 1e-4 * t) * fnorm) {
                    c = clamped;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted)
            throw NewtonDivergenceError("solve_semitrivial: line search failed at param " +
                                        std::to_string(param));
    }
    throw NewtonDivergenceError("solve_semitrivial: no convergence within iteration budget");
}

inline SemiTrivialResult solve_semitrivial_predator(const Discretization& disc, double xi,
                                                    double beta1, const BirthProfile& b2,
                                                    const Vector* seed = nullptr,
                                                    double tol = 1e-10, int max_iters = 50) {
    return solve_semitrivial(disc, xi, beta1, b2, seed, tol, max_iters);
}

/// Derivative of the branch with respect to its fertility intensity:
///   z(0) = (1 − param·B)^{−1} ∫b·flow,  z = linearized flow from z(0),
/// with B the birth functional of the linearized flow (the discrete form of
/// the potential-2αu propagator along the solution). Strictly positive.
inline AgeSpaceField derivative_wrt_param(const Discretization& disc, const BirthProfile& profile,
                                          const SemiTrivialSolution& sol) {
    const Vector wb = birth_weights(profile, disc.age);
    BirthOperator linearized(birth_jacobian_logistic(disc, sol.field, sol.alpha, wb));
    const KreinRutmanResult kr = power_iteration(linearized, disc.spectral.phi1);
    const Vector u_integral = birth_integral(profile, sol.field);
    Vector z0;
    try {
        z0 = resolve_on_operator(sol.param, linearized, kr.radius, u_integral);
    } catch (const SpectralConditionError&) {
        throw std::logic_error(
            "derivative_wrt_param: spectral condition violated for a converged solution");
    }
    return propagate_logistic_linearized(disc, sol.field, sol.alpha, z0);
}

/// Pointwise envelopes of the positive branch.
struct EnvelopeReport {
    bool lower_ok = false;
    bool upper_ok = false;
    bool trace_log_ok = false;
    double lower_min_ratio = 0.0;  // min over nodes of field / lower bound
    double upper_max_ratio = 0.0;  // max over ages of sup-norm / upper bound
    double trace_ratio = 0.0;      // trace sup-norm / log bound
    double slack = 0.0;

    bool all_ok() const { return lower_ok && upper_ok && trace_log_ok; }
};

/// Checks, with a discrete tolerance,
///  (i)  field(a) ≥ (λ₁/α)(param−1) / (param(e^{λ₁a}−1) + 1 − e^{−λ₁(a_m−a)}) · φ₁,
///  (ii) ‖field(a)‖∞ ≤ 1/(α·a + ‖field(0)‖∞^{−1}),
///  (iii) ‖field(0)‖∞ ≤ (param·‖b‖∞/α)·log(α·a_m·‖field(0)‖∞ + 1).
inline EnvelopeReport verify_envelopes(const Discretization& disc, const BirthProfile& profile,
                                       const SemiTrivialSolution& sol, double slack = 0.05) {
    const double l1 = disc.spectral.lambda1;
    const double alpha = sol.alpha;
    const double param = sol.param;
    const double am = disc.age.a_max;
    const int m = disc.age.steps;
    const int n = disc.n_space();

    EnvelopeReport rep;
    rep.slack = slack;

    double lower_ratio = std::numeric_limits<double>::infinity();
    const auto& vals = sol.field.values();
    for (int k = 0; k <= m; ++k) {
        const double a = disc.age.age(k);
        const double denom = param * (std::exp(l1 * a) - 1.0) + 1.0 - std::exp(-l1 * (am - a));
        const double amp = (l1 / alpha) * (param - 1.0) / denom;
        for (int i = 0; i < n; ++i) {
            const double bound = amp * disc.spectral.phi1[i];
            if (bound > 0.0) lower_ratio = std::min(lower_ratio, vals(k, i) / bound);
        }
    }
    rep.lower_min_ratio = lower_ratio;
    rep.lower_ok = lower_ratio >= 1.0 - slack;

    const double trace_sup = sol.field.row(0).maxCoeff();
    double upper_ratio = 0.0;
    for (int k = 0; k <= m; ++k) {
        const double bound = 1.0 / (alpha * disc.age.age(k) + 1.0 / trace_sup);
        upper_ratio = std::max(upper_ratio, sol.field.row(k).maxCoeff() / bound);
    }
    rep.upper_max_ratio = upper_ratio;
    rep.upper_ok = upper_ratio <= 1.0 + slack;

    const double log_bound =
        (param * profile.sup() / alpha) * std::log(alpha * am * trace_sup + 1.0);
    rep.trace_ratio = trace_sup / log_bound;
    rep.trace_log_ok = rep.trace_ratio <= 1.0 + slack;
    return rep;
}

}  // namespace agebif
