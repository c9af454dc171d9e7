#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "agebif/coexist.hpp"

namespace agebif {

enum class BifKind { xi0, eta0, xi1, eta1 };

inline const char* bif_kind_name(BifKind k) {
    switch (k) {
        case BifKind::xi0: return "xi0";
        case BifKind::eta0: return "eta0";
        case BifKind::xi1: return "xi1";
        default: return "eta1";
    }
}

/// A bifurcation parameter value, defined through the spectral radius of the
/// birth operator linearized about the anchoring semi-trivial state.
struct BifurcationPoint {
    BifKind kind = BifKind::xi0;
    double value = 0.0;
    double spectral_residual = 0.0;
    double anchor_param = 0.0;          // the parameter held fixed
    SemiTrivialSolution anchored;       // the semi-trivial state at the point
};

/// ξ₀(η) = 1/r(Ĥ_[−β₂u_η]) ∈ (0, 1): onset of predator invasion of (u_η, 0).
inline BifurcationPoint compute_xi0(const Discretization& disc, double eta,
                                    const ModelParams& p, const BirthProfile& b1,
                                    const BirthProfile& b2) {
    if (!(eta > 1.0)) throw std::invalid_argument("compute_xi0: requires eta > 1");
    SemiTrivialResult st = solve_semitrivial(disc, eta, p.alpha1, b1);
    if (!st.nontrivial) throw NewtonDivergenceError("compute_xi0: semi-trivial state collapsed");
    const KreinRutmanResult kr =
        spectral_radius(disc, st.solution->field.scaled(-p.beta2), b2);
    BifurcationPoint bp;
    bp.kind = BifKind::xi0;
    bp.value = 1.0 / kr.radius;
    bp.spectral_residual = std::abs(bp.value * kr.radius - 1.0);
    bp.anchor_param = eta;
    bp.anchored = std::move(*st.solution);
    return bp;
}

/// η₀(ξ) = 1/r(H_[α₂v_ξ]) > 1: onset of prey invasion of (0, v_ξ).
inline BifurcationPoint compute_eta0(const Discretization& disc, double xi,
                                     const ModelParams& p, const BirthProfile& b1,
                                     const BirthProfile& b2) {
    if (!(xi > 1.0)) throw std::invalid_argument("compute_eta0: requires xi > 1");
    SemiTrivialResult st = solve_semitrivial_predator(disc, xi, p.beta1, b2);
    if (!st.nontrivial) throw NewtonDivergenceError("compute_eta0: semi-trivial state collapsed");
    const KreinRutmanResult kr =
        spectral_radius(disc, st.solution->field.scaled(p.alpha2), b1);
    BifurcationPoint bp;
    bp.kind = BifKind::eta0;
    bp.value = 1.0 / kr.radius;
    bp.spectral_residual = std::abs(bp.value * kr.radius - 1.0);
    bp.anchor_param = xi;
    bp.anchored = std::move(*st.solution);
    return bp;
}

/// ξ₁(η): the unique ξ > 1 with η·r(H_[α₂v_ξ]) = 1, located by bisection on a
/// strictly decreasing function. Empty when no root lies below xi_max.
inline std::optional<BifurcationPoint> compute_xi1(const Discretization& disc, double eta,
                                                   double xi_max, const ModelParams& p,
                                                   const BirthProfile& b1,
                                                   const BirthProfile& b2, double tol = 1e-8) {
    if (!(eta > 1.0)) throw std::invalid_argument("compute_xi1: requires eta > 1");
    auto g = [&](double xi) {
        SemiTrivialResult st = solve_semitrivial_predator(disc, xi, p.beta1, b2);
        if (!st.nontrivial)
            throw NewtonDivergenceError("compute_xi1: semi-trivial state collapsed");
        const KreinRutmanResult kr =
            spectral_radius(disc, st.solution->field.scaled(p.alpha2), b1);
        return eta * kr.radius - 1.0;
    };
    double lo = 1.0 + 1e-6;
    double hi = xi_max;
    if (g(hi) > 0.0) return std::nullopt;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    const double xi1 = 0.5 * (lo + hi);
    SemiTrivialResult st = solve_semitrivial_predator(disc, xi1, p.beta1, b2);
    const KreinRutmanResult kr = spectral_radius(disc, st.solution->field.scaled(p.alpha2), b1);
    BifurcationPoint bp;
    bp.kind = BifKind::xi1;
    bp.value = xi1;
    bp.spectral_residual = std::abs(eta * kr.radius - 1.0);
    bp.anchor_param = eta;
    bp.anchored = std::move(*st.solution);
    return bp;
}

/// η₁(ξ): the unique η > 1 with ξ·r(Ĥ_[−β₂u_η]) = 1; bisection on a strictly
/// increasing function. Empty when no root lies below eta_max (ξ ≤ δ bound).
inline std::optional<BifurcationPoint> compute_eta1(const Discretization& disc, double xi,
                                                    double eta_max, const ModelParams& p,
                                                    const BirthProfile& b1,
                                                    const BirthProfile& b2, double tol = 1e-8) {
    if (!(xi > 0.0 && xi < 1.0)) throw std::invalid_argument("compute_eta1: requires xi in (0,1)");
    auto g = [&](double eta) {
        SemiTrivialResult st = solve_semitrivial(disc, eta, p.alpha1, b1);
        if (!st.nontrivial)
            throw NewtonDivergenceError("compute_eta1: semi-trivial state collapsed");
        const KreinRutmanResult kr =
            spectral_radius(disc, st.solution->field.scaled(-p.beta2), b2);
        return xi * kr.radius - 1.0;
    };
    double lo = 1.0 + 1e-6;
    double hi = eta_max;
    if (g(hi) < 0.0) return std::nullopt;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    const double eta1 = 0.5 * (lo + hi);
    SemiTrivialResult st = solve_semitrivial(disc, eta1, p.alpha1, b1);
    const KreinRutmanResult kr = spectral_radius(disc, st.solution->field.scaled(-p.beta2), b2);
    BifurcationPoint bp;
    bp.kind = BifKind::eta1;
    bp.value = eta1;
    bp.spectral_residual = std::abs(xi * kr.radius - 1.0);
    bp.anchor_param = xi;
    bp.anchored = std::move(*st.solution);
    return bp;
}

/// Computable bounds for the limit values N and δ, reported as bounds only,
/// together with monotone spectral-radius trend tables over log-spaced
/// parameter grids (empirical material on whether N = ∞ and δ = 0).
struct LimitEstimates {
    double n_lower = 0.0;
    double delta_upper = 0.0;
    std::vector<std::pair<double, double>> r_prey_vs_xi;       // (ξ, r(H_[α₂v_ξ]))
    std::vector<std::pair<double, double>> r_predator_vs_eta;  // (η, r(Ĥ_[−β₂u_η]))
};

inline LimitEstimates estimate_limits(const Discretization& disc, double eta_max, double xi_max,
                                      const ModelParams& p, const BirthProfile& b1,
                                      const BirthProfile& b2, int table_points = 9) {
    if (!(eta_max > 1.0 && xi_max > 1.0))
        throw std::invalid_argument("estimate_limits: bounds must exceed 1");
    LimitEstimates out;
    const double lo = 1.05;
    for (int j = 0; j < table_points; ++j) {
        const double t = table_points == 1 ? 1.0 : static_cast<double>(j) / (table_points - 1);
        const double xi = std::exp(std::log(lo) + t * (std::log(xi_max) - std::log(lo)));
        SemiTrivialResult sv = solve_semitrivial_predator(disc, xi, p.beta1, b2);
        const double r = spectral_radius(disc, sv.solution->field.scaled(p.alpha2), b1).radius;
        out.r_prey_vs_xi.emplace_back(xi, r);
        const double eta = std::exp(std::log(lo) + t * (std::log(eta_max) - std::log(lo)));
        SemiTrivialResult su = solve_semitrivial(disc, eta, p.alpha1, b1);
        const double rh = spectral_radius(disc, su.solution->field.scaled(-p.beta2), b2).radius;
        out.r_predator_vs_eta.emplace_back(eta, rh);
    }
    out.n_lower = 1.0 / out.r_prey_vs_xi.back().second;
    out.delta_upper = 1.0 / out.r_predator_vs_eta.back().second;
    return out;
}

/// Kernel of the linearization at a bifurcation point, spanned by (φ*, ψ*)
/// with traces (φ₀, ψ₀). eigen_residual measures how well applying the
/// discrete linearized fixed-point map reproduces the pair.
struct KernelBasis {
    AgeSpaceField phi_star, psi_star;
    Vector phi0, psi0;
    double eigen_residual = 0.0;
};

namespace detail {

/// Kernel construction on a prey background u_base at parameters (η_a, ξ_a)
/// with ξ_a·r(Ĥ_[−β₂u_base]) = 1:
///   ψ₀ the Krein–Rutman vector of Ĥ_[−β₂u_base], ψ* its linear flow,
///   (Nψ*)(a) = α₂ ∫₀^a Π_[2α₁u](a,σ) u(σ)ψ*(σ) dσ,
///   φ₀ = η_a (1 − η_a H_[2α₁u])^{−1} ∫b₁ Nψ*,  φ* = Π_[2α₁u](·,0)φ₀ + Nψ*.
inline KernelBasis kernel_on_prey_background(const Discretization& disc, double eta_a,
                                             double xi_a, const AgeSpaceField& u_base,
                                             const ModelParams& p, const BirthProfile& b1,
                                             const BirthProfile& b2) {
    const PotentialField pot_minus = u_base.scaled(-p.beta2);
    BirthOperator hat(disc, pot_minus, b2);
    const KreinRutmanResult kr = power_iteration(hat, disc.spectral.phi1);

    KernelBasis kb;
    kb.psi0 = kr.eigvec;
    kb.psi_star = propagate_linear(disc, pot_minus, kb.psi0);

    const PotentialField pot_two = u_base.scaled(2.0 * p.alpha1);
    const AgeSpaceField source = hadamard(u_base, kb.psi_star).scaled(p.alpha2);
    const AgeSpaceField n_psi =
        propagate_linear(disc, pot_two, Vector::Zero(disc.n_space()), &source);

    BirthOperator h_two(disc, pot_two, b1);
    const KreinRutmanResult kr_two = power_iteration(h_two, disc.spectral.phi1);
    kb.phi0 = eta_a * resolve_on_operator(eta_a, h_two, kr_two.radius,
                                          birth_integral(b1, n_psi));
    kb.phi_star = propagate_linear(disc, pot_two, kb.phi0, &source);

    const AgeSpaceField psi_new =
        propagate_linear(disc, pot_minus, xi_a * birth_integral(b2, kb.psi_star));
    const AgeSpaceField phi_new =
        propagate_linear(disc, pot_two, eta_a * birth_integral(b1, kb.phi_star), &source);
    const double denom = std::max({1.0, kb.phi_star.sup_norm(), kb.psi_star.sup_norm()});
    kb.eigen_residual = std::max((psi_new - kb.psi_star).sup_norm(),
                                 (phi_new - kb.phi_star).sup_norm()) /
                        denom;
    return kb;
}

/// Mirror construction on a predator background v_base at (η_a, ξ_a) with
/// η_a·r(H_[α₂v_base]) = 1. The prey direction is the Krein–Rutman vector of
/// H_[α₂v_base]; the predator deviation solves the inhomogeneous equation
/// with potential 2β₁v and source β₂vφ*.
inline KernelBasis kernel_on_predator_background(const Discretization& disc, double eta_a,
                                                 double xi_a, const AgeSpaceField& v_base,
                                                 const ModelParams& p, const BirthProfile& b1,
                                                 const BirthProfile& b2) {
    const PotentialField pot_prey = v_base.scaled(p.alpha2);
    BirthOperator h(disc, pot_prey, b1);
    const KreinRutmanResult kr = power_iteration(h, disc.spectral.phi1);

    KernelBasis kb;
    kb.phi0 = kr.eigvec;
    kb.phi_star = propagate_linear(disc, pot_prey, kb.phi0);

    const PotentialField pot_two = v_base.scaled(2.0 * p.beta1);
    const AgeSpaceField source = hadamard(v_base, kb.phi_star).scaled(p.beta2);
    const AgeSpaceField n_phi =
        propagate_linear(disc, pot_two, Vector::Zero(disc.n_space()), &source);

    BirthOperator hat_two(disc, pot_two, b2);
    const KreinRutmanResult kr_two = power_iteration(hat_two, disc.spectral.phi1);
    kb.psi0 =
        xi_a * resolve_on_operator(xi_a, hat_two, kr_two.radius, birth_integral(b2, n_phi));
    kb.psi_star = propagate_linear(disc, pot_two, kb.psi0, &source);

    const AgeSpaceField phi_new =
        propagate_linear(disc, pot_prey, eta_a * birth_integral(b1, kb.phi_star));
    const AgeSpaceField psi_new =
        propagate_linear(disc, pot_two, xi_a * birth_integral(b2, kb.psi_star), &source);
    const double denom = std::max({1.0, kb.phi_star.sup_norm(), kb.psi_star.sup_norm()});
    kb.eigen_residual = std::max((phi_new - kb.phi_star).sup_norm(),
                                 (psi_new - kb.psi_star).sup_norm()) /
                        denom;
    return kb;
}

}  // namespace detail

/// Kernel basis at (ξ₀(η), u_η, 0).
inline KernelBasis kernel_basis_xi(const Discretization& disc, double eta, const ModelParams& p,
                                   const BirthProfile& b1, const BirthProfile& b2) {
    const BifurcationPoint bp = compute_xi0(disc, eta, p, b1, b2);
    return detail::kernel_on_prey_background(disc, eta, bp.value, bp.anchored.field, p, b1, b2);
}

/// Kernel basis at (η₁(ξ), u_{η₁}, 0) for ξ ∈ (δ, 1); requires η₁ to exist
/// below eta_max.
inline KernelBasis kernel_basis_eta(const Discretization& disc, double xi, double eta_max,
                                    const ModelParams& p, const BirthProfile& b1,
                                    const BirthProfile& b2) {
    const auto bp = compute_eta1(disc, xi, eta_max, p, b1, b2);
    if (!bp)
        throw std::runtime_error("kernel_basis_eta: eta1 not found below eta_max (xi <= delta?)");
    return detail::kernel_on_prey_background(disc, bp->value, xi, bp->anchored.field, p, b1, b2);
}

enum class BranchKind { B3_in_xi, S3_in_eta, S4_in_eta };

inline const char* branch_kind_name(BranchKind k) {
    switch (k) {
        case BranchKind::B3_in_xi: return "B3_in_xi";
        case BranchKind::S3_in_eta: return "S3_in_eta";
        default: return "S4_in_eta";
    }
}

enum class Termination { joined_B1, param_limit, step_failure, point_cap };

inline const char* termination_name(Termination t) {
    switch (t) {
        case Termination::joined_B1: return "joined_B1";
        case Termination::param_limit: return "param_limit";
        case Termination::step_failure: return "step_failure";
        default: return "point_cap";
    }
}

struct BranchPoint {
    double param = 0.0;
    Vector trace_u, trace_v;
    double sup_u = 0.0, sup_v = 0.0;
    double l2_u = 0.0, l2_v = 0.0;
    double residual = 0.0;
};

struct Branch {
    BranchKind kind = BranchKind::B3_in_xi;
    double fixed_param = 0.0;   // η for B3, ξ for S3/S4
    double anchor_value = 0.0;  // bifurcation parameter value at onset
    std::vector<BranchPoint> points;
    Termination termination = Termination::step_failure;
    double terminal_param = 0.0;
};

struct ContinuationOptions {
    double step0 = 0.02;
    double param_limit = 6.0;
    int point_cap = 200;
    double min_step = 1e-4;
    double max_step = 0.5;
    double join_resolution = 1e-3;
    double newton_tol = 1e-10;
};

/// Natural-parameter continuation with a secant predictor and the coexistence
/// Newton solver as corrector. The first point is seeded from the kernel basis
/// per the local branch expansion; the anchor itself serves as the zeroth
/// secant point. Steps adapt within [min_step, max_step] by halving on
/// corrector failure. A corrector limit that collapses onto the predator-only
/// state at fine step resolution is the branch joining the v_ξ branch.
inline Branch continue_branch(const Discretization& disc, BranchKind kind, double fixed_param,
                              const ModelParams& base, const BirthProfile& b1,
                              const BirthProfile& b2,
                              const ContinuationOptions& opts = ContinuationOptions{}) {
    Branch branch;
    branch.kind = kind;
    branch.fixed_param = fixed_param;

    Vector anchor_u, anchor_v;  // traces at the anchor
    Vector dir_u, dir_v;        // kernel direction on the traces
    double background_sup = 0.0, direction_sup = 1.0;
    double u_field_scale = 0.0;  // sup u_η for join detection (B3/S4)
    CompanionScales scales;

    if (kind == BranchKind::B3_in_xi) {
        const BifurcationPoint bp = compute_xi0(disc, fixed_param, base, b1, b2);
        const KernelBasis kb = detail::kernel_on_prey_background(disc, fixed_param, bp.value,
                                                                 bp.anchored.field, base, b1, b2);
        branch.anchor_value = bp.value;
        anchor_u = bp.anchored.trace;
        anchor_v = Vector::Zero(disc.n_space());
        dir_u = -kb.phi0;
        dir_v = kb.psi0;
        background_sup = bp.anchored.field.sup_norm();
        direction_sup = std::max(kb.phi_star.sup_norm(), 1e-12);
        u_field_scale = background_sup;
        scales.u_scale = bp.anchored.trace.lpNorm<Eigen::Infinity>();
    } else if (kind == BranchKind::S3_in_eta) {
        const BifurcationPoint bp = compute_eta0(disc, fixed_param, base, b1, b2);
        const KernelBasis kb = detail::kernel_on_predator_background(
            disc, bp.value, fixed_param, bp.anchored.field, base, b1, b2);
        branch.anchor_value = bp.value;
        anchor_u = Vector::Zero(disc.n_space());
        anchor_v = bp.anchored.trace;
        dir_u = kb.phi0;
        dir_v = kb.psi0;
        background_sup = bp.anchored.field.sup_norm();
        direction_sup = std::max(kb.phi_star.sup_norm(), 1e-12);
        scales.v_scale = bp.anchored.trace.lpNorm<Eigen::Infinity>();
    } else {
        const auto bp = compute_eta1(disc, fixed_param, opts.param_limit, base, b1, b2);
        if (!bp)
            throw std::runtime_error("continue_branch: eta1 not found below the parameter limit");
        const KernelBasis kb = detail::kernel_on_prey_background(disc, bp->value, fixed_param,
                                                                 bp->anchored.field, base, b1, b2);
        branch.anchor_value = bp->value;
        anchor_u = bp->anchored.trace;
        anchor_v = Vector::Zero(disc.n_space());
        dir_u = -kb.phi0;
        dir_v = kb.psi0;
        background_sup = bp->anchored.field.sup_norm();
        direction_sup = std::max(kb.phi_star.sup_norm(), 1e-12);
        u_field_scale = background_sup;
    }

    const bool branch_in_xi = kind == BranchKind::B3_in_xi;
    const double eps0 = opts.step0 * background_sup / direction_sup;

    double prev_param = branch.anchor_value;
    Vector prev_u = anchor_u, prev_v = anchor_v;
    double last_param = branch.anchor_value;
    Vector last_u = anchor_u, last_v = anchor_v;
    bool have_point = false;

    double step = opts.step0;
    branch.terminal_param = branch.anchor_value;

    while (true) {
        if (last_param >= opts.param_limit - 1e-14) {
            branch.termination = Termination::param_limit;
            branch.terminal_param = last_param;
            break;
        }
        double target = std::min(last_param + step, opts.param_limit);

        Vector seed_u, seed_v;
        if (!have_point) {
            const double eps = eps0 * (target - branch.anchor_value) / opts.step0;
            seed_u = (anchor_u + eps * dir_u).cwiseMax(0.0);
            seed_v = (anchor_v + eps * dir_v).cwiseMax(0.0);
        } else {
            const double ratio = (target - last_param) / (last_param - prev_param);
            seed_u = (last_u + ratio * (last_u - prev_u)).cwiseMax(0.0);
            seed_v = (last_v + ratio * (last_v - prev_v)).cwiseMax(0.0);
        }

        const double eta = branch_in_xi ? fixed_param : target;
        const double xi = branch_in_xi ? target : fixed_param;
        bool failed = false;
        bool collapsed_to_b1 = false;
        try {
            CompanionScales point_scales = scales;  // missing entries computed per point
            const CoexistResult res = solve_coexistence(disc, eta, xi, base, b1, b2, seed_u,
                                                        seed_v, point_scales, opts.newton_tol);
            if (res.cls == CoexistClass::coexistence) {
                const CoexistenceSolution& sol = *res.solution;
                BranchPoint pt;
                pt.param = target;
                pt.trace_u = sol.trace_u;
                pt.trace_v = sol.trace_v;
                pt.sup_u = sol.u.sup_norm();
                pt.sup_v = sol.v.sup_norm();
                pt.l2_u = field_l2(sol.u, disc.grid.spacing);
                pt.l2_v = field_l2(sol.v, disc.grid.spacing);
                pt.residual = sol.residual;
                branch.points.push_back(pt);

                prev_param = last_param;
                prev_u = last_u;
                prev_v = last_v;
                last_param = target;
                last_u = sol.trace_u;
                last_v = sol.trace_v;
                have_point = true;
                branch.terminal_param = target;

                if (u_field_scale > 0.0 && pt.sup_u <= 1e-6 * u_field_scale) {
                    branch.termination = Termination::joined_B1;
                    break;
                }
                if (static_cast<int>(branch.points.size()) >= opts.point_cap) {
                    branch.termination = Termination::point_cap;
                    break;
                }
                if (res.iterations <= 5) step = std::min(step * 1.5, opts.max_step);
            } else if (res.cls == CoexistClass::semitrivial_v && kind != BranchKind::S3_in_eta) {
                collapsed_to_b1 = true;
            } else {
                failed = true;
            }
        } catch (const NewtonDivergenceError&) {
            failed = true;
        }

        if (collapsed_to_b1) {
            if (step <= std::max(opts.join_resolution, opts.min_step)) {
                branch.termination = Termination::joined_B1;
                branch.terminal_param = target;
                break;
            }
            step = std::max(step * 0.5, opts.min_step);
            continue;
        }
        if (failed) {
            if (!have_point && step <= opts.min_step)
                throw std::runtime_error(
                    "continue_branch: corrector failed at the first branch point");
            if (step <= opts.min_step) {
                branch.termination = Termination::step_failure;
                branch.terminal_param = last_param;
                break;
            }
            step = std::max(step * 0.5, opts.min_step);
        }
    }
    return branch;
}

}  // namespace agebif
