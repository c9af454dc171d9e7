#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "agebif/steady.hpp"

namespace agebif {

/// Steady state of the full two-species system at fixed (η, ξ).
struct CoexistenceSolution {
    double eta = 0.0;
    double xi = 0.0;
    AgeSpaceField u, v;
    Vector trace_u, trace_v;
    double residual = 0.0;
};

enum class CoexistClass { coexistence, semitrivial_u, semitrivial_v, trivial };

struct CoexistResult {
    CoexistClass cls = CoexistClass::trivial;
    std::optional<CoexistenceSolution> solution;  // present unless trivial
    int iterations = 0;
};

/// Companion semi-trivial sup-norm scales used to decide when a trace counts
/// as zero (threshold 1e−8 × scale). Negative entries mean "compute here".
struct CompanionScales {
    double u_scale = -1.0;
    double v_scale = -1.0;
};

namespace detail {

inline double companion_scale(const Discretization& disc, double param, double alpha,
                              const BirthProfile& profile) {
    if (param <= 1.0) return 1.0;
    const SemiTrivialResult r = solve_semitrivial(disc, param, alpha, profile);
    return r.nontrivial ? r.solution->trace.lpNorm<Eigen::Infinity>() : 1.0;
}

}  // namespace detail

/// Newton iteration on the stacked traces (c_u, c_v) ∈ ℝ²ⁿ for
///   F = (c_u − η·∫b₁u(·;c), c_v − ξ·∫b₂v(·;c)),
/// with the exact derivative of the discrete coupled flow as Jacobian,
/// halving line search, and cone backtracking. The limit is classified by
/// comparing each trace against its companion semi-trivial scale.
inline CoexistResult solve_coexistence(const Discretization& disc, double eta, double xi,
                                       const ModelParams& base, const BirthProfile& b1,
                                       const BirthProfile& b2, const Vector& seed_u,
                                       const Vector& seed_v,
                                       CompanionScales scales = CompanionScales{},
                                       double tol = 1e-10, int max_iters = 60) {
    if (seed_u.minCoeff() < -1e-12 || seed_v.minCoeff() < -1e-12)
        throw std::invalid_argument("solve_coexistence: seeds must be nonnegative");
    ModelParams p = base;
    p.eta = eta;
    p.xi = xi;
    p.validate();
    const int n = disc.n_space();
    const Vector wb1 = birth_weights(b1, disc.age);
    const Vector wb2 = birth_weights(b2, disc.age);

    if (scales.u_scale < 0.0) scales.u_scale = detail::companion_scale(disc, eta, p.alpha1, b1);
    if (scales.v_scale < 0.0) scales.v_scale = detail::companion_scale(disc, xi, p.beta1, b2);

    Vector cu = seed_u.cwiseMax(0.0), cv = seed_v.cwiseMax(0.0);

    // Warmup on the coupled birth map, for the same global-convergence reason
    // as in solve_semitrivial: near a bifurcation point one component is a
    // slowly expanding mode that Newton alone would collapse onto the
    // semi-trivial state. Exit tests are per component against their own
    // scales; Aitken extrapolation accelerates the slow mode.
    {
        const int n2 = 2 * n;
        Vector x(n2);
        x.head(n) = cu;
        x.tail(n) = cv;
        auto map = [&](const Vector& s) {
            auto [u, v] = propagate_coupled(disc, s.head(n), s.tail(n), p);
            Vector g(n2);
            g.head(n) = eta * birth_integral(b1, u);
            g.tail(n) = xi * birth_integral(b2, v);
            return g;
        };
        auto settled = [&](const Vector& g, const Vector& d) {
            const double gu = g.head(n).lpNorm<Eigen::Infinity>();
            const double gv = g.tail(n).lpNorm<Eigen::Infinity>();
            const double du = d.head(n).lpNorm<Eigen::Infinity>();
            const double dv = d.tail(n).lpNorm<Eigen::Infinity>();
            const bool u_done = du <= 1e-3 * std::max(gu, 1e-8) || gu <= 1e-11 * (1.0 + gv);
            const bool v_done = dv <= 1e-3 * std::max(gv, 1e-8) || gv <= 1e-11 * (1.0 + gu);
            return u_done && v_done;
        };
        const double blowup_guard = 1e6 * (1.0 + x.lpNorm<Eigen::Infinity>());
        for (int warmup = 0; warmup < 300; ++warmup) {
            const Vector g1 = map(x);
            const Vector d1 = g1 - x;
            if (settled(g1, d1)) {
                x = g1;
                break;
            }
            const Vector g2 = map(g1);
            const Vector d2 = g2 - g1;
            const double rho = d1.squaredNorm() > 0.0 ? d2.dot(d1) / d1.squaredNorm() : 0.0;
            x = g2;
            if (rho > 0.0 && rho < 0.999) {
                const double gain = std::min(rho / (1.0 - rho), 20.0);
                const Vector candidate = (g2 + gain * d2).cwiseMax(0.0);
                // an extrapolation that collapses a live component would land in
                // an invariant subspace the iteration cannot leave again
                const double gu2 = g2.head(n).lpNorm<Eigen::Infinity>();
                const double gv2 = g2.tail(n).lpNorm<Eigen::Infinity>();
                const bool kills_u =
                    gu2 > 1e-10 && candidate.head(n).lpNorm<Eigen::Infinity>() < 0.25 * gu2;
                const bool kills_v =
                    gv2 > 1e-10 && candidate.tail(n).lpNorm<Eigen::Infinity>() < 0.25 * gv2;
                if (!kills_u && !kills_v) x = candidate;
            }
            if (x.lpNorm<Eigen::Infinity>() > blowup_guard)
                throw NewtonDivergenceError(
                    "solve_coexistence: birth map diverges (resolution too coarse)");
        }
        cu = x.head(n).cwiseMax(0.0);
        cv = x.tail(n).cwiseMax(0.0);
    }

    CoexistResult out;
    for (int it = 0; it < max_iters; ++it) {
        out.iterations = it + 1;
        auto [u, v] = propagate_coupled(disc, cu, cv, p);
        Vector fu = cu - eta * birth_integral(b1, u);
        Vector fv = cv - xi * birth_integral(b2, v);
        const double fnorm =
            std::max(fu.lpNorm<Eigen::Infinity>(), fv.lpNorm<Eigen::Infinity>());
        const double cnorm =
            std::max(cu.lpNorm<Eigen::Infinity>(), cv.lpNorm<Eigen::Infinity>());

        if (fnorm <= tol * (1.0 + cnorm)) {
            const bool u_zero = cu.lpNorm<Eigen::Infinity>() < 1e-8 * scales.u_scale;
            const bool v_zero = cv.lpNorm<Eigen::Infinity>() < 1e-8 * scales.v_scale;
            if (u_zero && v_zero) {
                out.cls = CoexistClass::trivial;
                return out;
            }
            out.cls = u_zero   ? CoexistClass::semitrivial_v
                      : v_zero ? CoexistClass::semitrivial_u
                               : CoexistClass::coexistence;
            CoexistenceSolution sol;
            sol.eta = eta;
            sol.xi = xi;
            sol.u = std::move(u);
            sol.v = std::move(v);
            sol.trace_u = cu;
            sol.trace_v = cv;
            sol.residual = fnorm;
            out.solution = std::move(sol);
            return out;
        }

        const CoupledBirthJacobian bj = birth_jacobian_coupled(disc, u, v, p, wb1, wb2);
        Matrix jac = Matrix::Identity(2 * n, 2 * n);
        jac.topLeftCorner(n, n) -= eta * bj.du_dcu;
        jac.topRightCorner(n, n) -= eta * bj.du_dcv;
        jac.bottomLeftCorner(n, n) -= xi * bj.dv_dcu;
        jac.bottomRightCorner(n, n) -= xi * bj.dv_dcv;

        Vector f(2 * n);
        f.head(n) = fu;
        f.tail(n) = fv;
        Vector step = jac.partialPivLu().solve(-f);

        double t = 1.0;
        bool accepted = false;
        const double cone_tol = 1e-12 * std::max(1.0, cnorm);
        for (int halving = 0; halving <= 8; ++halving) {
            Vector tu = cu + t * step.head(n);
            Vector tv = cv + t * step.tail(n);
            if (std::min(tu.minCoeff(), tv.minCoeff()) >= -cone_tol) {
                tu = tu.cwiseMax(0.0);
                tv = tv.cwiseMax(0.0);
                auto [uu, vv] = propagate_coupled(disc, tu, tv, p);
                Vector gu = tu - eta * birth_integral(b1, uu);
                Vector gv = tv - xi * birth_integral(b2, vv);
                const double gnorm =
                    std::max(gu.lpNorm<Eigen::Infinity>(), gv.lpNorm<Eigen::Infinity>());
                if (gnorm <= (1.0 - 1e-4 * t) * fnorm) {
                    cu = tu;
                    cv = tv;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted)
            throw NewtonDivergenceError("solve_coexistence: line search failed at (eta, xi) = (" +
                                        std::to_string(eta) + ", " + std::to_string(xi) + ")");
    }
    throw NewtonDivergenceError("solve_coexistence: no convergence within iteration budget");
}

/// Ordering against the semi-trivial states at the same parameters:
/// u ≤ u_η and v ≥ v_ξ nodewise.
struct OrderingReport {
    bool u_below_ok = false;
    bool v_above_ok = false;
    double max_u_excess = 0.0;   // max(u − u_η), positive means violation
    double max_v_deficit = 0.0;  // max(v_ξ − v), positive means violation

    bool all_ok() const { return u_below_ok && v_above_ok; }
};

inline OrderingReport ordering_check(const CoexistenceSolution& sol, const AgeSpaceField& u_eta,
                                     const AgeSpaceField& v_xi, double base_tol = 1e-8) {
    OrderingReport rep;
    rep.max_u_excess = (sol.u.values() - u_eta.values()).maxCoeff();
    rep.max_v_deficit = (v_xi.values() - sol.v.values()).maxCoeff();
    const double tol_u = base_tol * (1.0 + u_eta.sup_norm());
    const double tol_v = base_tol * (1.0 + v_xi.sup_norm());
    rep.u_below_ok = rep.max_u_excess <= tol_u;
    rep.v_above_ok = rep.max_v_deficit <= tol_v;
    return rep;
}

/// Logistic upper envelope for the predator component: with m = β₂·max u,
/// f solves f' = −β₁f² + mf, f(0) = ‖v(0)‖∞, in closed form
///   f(a) = m‖v(0)‖∞ / (β₁‖v(0)‖∞(1 − e^{−ma}) + m e^{−ma}),
/// degenerating to pure logistic decay as m → 0. Checks v ≤ f nodewise and
/// the induced trace inequality ‖v(0)‖∞ ≤ ξ·∫b₂ f.
struct CoexistEnvelopeReport {
    bool envelope_ok = false;
    bool trace_bound_ok = false;
    double max_ratio = 0.0;     // max over nodes of v / f
    double trace_ratio = 0.0;   // ‖v(0)‖∞ / (ξ·∫b₂f)
    double sup_bound = 0.0;     // max_a f(a)

    bool all_ok() const { return envelope_ok && trace_bound_ok; }
};

inline double logistic_envelope(double a, double v0_sup, double m, double beta1) {
    if (v0_sup <= 0.0) return 0.0;
    if (m <= 1e-300) return v0_sup / (beta1 * v0_sup * a + 1.0);
    const double decay = std::exp(-m * a);
    return m * v0_sup / (beta1 * v0_sup * (1.0 - decay) + m * decay);
}

inline CoexistEnvelopeReport envelope_check(const Discretization& disc, const BirthProfile& b2,
                                            const CoexistenceSolution& sol, double beta1,
                                            double beta2, double slack = 0.05) {
    CoexistEnvelopeReport rep;
    const double m = beta2 * std::max(0.0, sol.u.values().maxCoeff());
    const double v0_sup = sol.v.row(0).maxCoeff();
    if (v0_sup <= 0.0) {
        rep.envelope_ok = rep.trace_bound_ok = true;
        return rep;
    }
    const int steps = disc.age.steps;
    Vector f(steps + 1);
    for (int k = 0; k <= steps; ++k)
        f[k] = logistic_envelope(disc.age.age(k), v0_sup, m, beta1);
    rep.sup_bound = f.maxCoeff();

    double max_ratio = 0.0;
    for (int k = 0; k <= steps; ++k)
        max_ratio = std::max(max_ratio, sol.v.row(k).maxCoeff() / f[k]);
    rep.max_ratio = max_ratio;
    rep.envelope_ok = max_ratio <= 1.0 + slack;

    const double quad = birth_weights(b2, disc.age).dot(f);
    rep.trace_ratio = v0_sup / (sol.xi * quad);
    rep.trace_bound_ok = rep.trace_ratio <= 1.0 + slack;
    return rep;
}

}  // namespace agebif
