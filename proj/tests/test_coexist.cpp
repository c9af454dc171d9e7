#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "agebif/bifurcate.hpp"

using namespace agebif;
using Catch::Approx;

namespace {

const Discretization& disc() {
    static const Discretization d = make_discretization(24, 1.0, 48, 1.0);
    return d;
}
const BirthProfile& b1() {
    static const BirthProfile p = constant_profile(Species::prey, disc());
    return p;
}
const BirthProfile& b2() {
    static const BirthProfile p = constant_profile(Species::predator, disc());
    return p;
}
ModelParams unit_params() { return ModelParams{}; }

std::mt19937_64 rng(5150);

Vector random_positive(int n, double scale) {
    std::uniform_real_distribution<double> dist(0.05, scale);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

/// A coexistence point on the first branch: anchor at ξ₀(η) and correct at
/// ξ₀ + offset from the kernel direction.
CoexistResult branch_point(double eta, double offset) {
    const ModelParams p = unit_params();
    const BifurcationPoint bp = compute_xi0(disc(), eta, p, b1(), b2());
    const KernelBasis kb =
        detail::kernel_on_prey_background(disc(), eta, bp.value, bp.anchored.field, p, b1(), b2());
    const double eps = offset * bp.anchored.field.sup_norm() / kb.phi_star.sup_norm();
    const Vector seed_u = (bp.anchored.trace - eps * kb.phi0).cwiseMax(0.0);
    const Vector seed_v = eps * kb.psi0;
    return solve_coexistence(disc(), eta, bp.value + offset, p, b1(), b2(), seed_u, seed_v);
}

}  // namespace

TEST_CASE("the predator-only subspace is invariant") {
    const SemiTrivialResult v = solve_semitrivial_predator(disc(), 1.5, 1.0, b2());
    REQUIRE(v.nontrivial);
    const CoexistResult r = solve_coexistence(disc(), 2.0, 1.5, unit_params(), b1(), b2(),
                                              Vector::Zero(disc().n_space()), v.solution->trace);
    CHECK(r.cls == CoexistClass::semitrivial_v);
    CHECK(r.solution->trace_u.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("below the onset value generic seeds collapse to the prey-only state") {
    const BifurcationPoint bp = compute_xi0(disc(), 2.0, unit_params(), b1(), b2());
    const double xi = bp.value - 0.1;
    for (int trial = 0; trial < 5; ++trial) {
        const CoexistResult r =
            solve_coexistence(disc(), 2.0, xi, unit_params(), b1(), b2(),
                              random_positive(disc().n_space(), 5.0),
                              random_positive(disc().n_space(), 2.0));
        CHECK(r.cls == CoexistClass::semitrivial_u);
    }
}

TEST_CASE("no coexistence for subcritical prey intensity") {
    for (int trial = 0; trial < 5; ++trial) {
        const CoexistResult r =
            solve_coexistence(disc(), 0.9, 1.5, unit_params(), b1(), b2(),
                              random_positive(disc().n_space(), 2.0),
                              random_positive(disc().n_space(), 2.0));
        CHECK(r.cls != CoexistClass::coexistence);
        CHECK(r.solution->trace_u.lpNorm<Eigen::Infinity>() <= 1e-8);
    }
}

TEST_CASE("coexistence near onset: positivity, residual symmetry, constraints") {
    // pick the offset so that ξ lands above 1, where the predator-only state
    // exists and the ordering comparisons apply
    const BifurcationPoint onset = compute_xi0(disc(), 2.0, unit_params(), b1(), b2());
    const double offset = std::max(0.2, 1.05 - onset.value);
    const CoexistResult r = branch_point(2.0, offset);
    REQUIRE(r.cls == CoexistClass::coexistence);
    const CoexistenceSolution& sol = *r.solution;
    CHECK(sol.u.values().minCoeff() > 0.0);
    CHECK(sol.v.values().minCoeff() > 0.0);

    SECTION("re-propagation from the stored traces reproduces the fields") {
        ModelParams p = unit_params();
        p.eta = sol.eta;
        p.xi = sol.xi;
        auto [u2, v2] = propagate_coupled(disc(), sol.trace_u, sol.trace_v, p);
        CHECK((u2.values() - sol.u.values()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((v2.values() - sol.v.values()).cwiseAbs().maxCoeff() <= 1e-10);
    }

    SECTION("ordering against the semi-trivial states") {
        const SemiTrivialResult u_eta = solve_semitrivial(disc(), sol.eta, 1.0, b1());
        const SemiTrivialResult v_xi = solve_semitrivial_predator(disc(), sol.xi, 1.0, b2());
        REQUIRE(u_eta.nontrivial);
        REQUIRE(v_xi.nontrivial);
        const OrderingReport rep =
            ordering_check(sol, u_eta.solution->field, v_xi.solution->field);
        CHECK(rep.u_below_ok);
        CHECK(rep.v_above_ok);
    }

    SECTION("parameter constraints from the linearized operators") {
        const SemiTrivialResult u_eta = solve_semitrivial(disc(), sol.eta, 1.0, b1());
        REQUIRE(u_eta.nontrivial);
        const double r_hat =
            spectral_radius(disc(), u_eta.solution->field.scaled(-1.0), b2()).radius;
        CHECK(sol.xi >= 1.0 / r_hat - 1e-6);

        const SemiTrivialResult v_xi = solve_semitrivial_predator(disc(), sol.xi, 1.0, b2());
        REQUIRE(v_xi.nontrivial);
        const double r_h = spectral_radius(disc(), v_xi.solution->field.scaled(1.0), b1()).radius;
        CHECK(sol.eta >= 1.0 / r_h - 1e-6);
    }

    SECTION("predator envelope and its trace bound") {
        const CoexistEnvelopeReport rep = envelope_check(disc(), b2(), sol, 1.0, 1.0);
        CHECK(rep.envelope_ok);
        CHECK(rep.trace_bound_ok);
        CHECK(rep.max_ratio <= 1.05);
    }

    SECTION("a manufactured violation is reported") {
        CoexistenceSolution bad = sol;
        bad.v = sol.v.scaled(10.0);
        bad.v.set_row(0, sol.v.row(0));  // keep the trace, inflate the interior
        const CoexistEnvelopeReport rep = envelope_check(disc(), b2(), bad, 1.0, 1.0);
        CHECK_FALSE(rep.envelope_ok);
    }
}

TEST_CASE("ordering holds with equality on the semi-trivial states themselves") {
    const SemiTrivialResult u_eta = solve_semitrivial(disc(), 2.0, 1.0, b1());
    const SemiTrivialResult v_xi = solve_semitrivial_predator(disc(), 1.5, 1.0, b2());
    REQUIRE(u_eta.nontrivial);
    REQUIRE(v_xi.nontrivial);

    CoexistenceSolution as_prey;
    as_prey.eta = 2.0;
    as_prey.xi = 1.5;
    as_prey.u = u_eta.solution->field;
    as_prey.v = AgeSpaceField(disc().age, disc().n_space());
    as_prey.trace_u = u_eta.solution->trace;
    as_prey.trace_v = Vector::Zero(disc().n_space());
    const OrderingReport rep1 =
        ordering_check(as_prey, u_eta.solution->field, v_xi.solution->field);
    CHECK(rep1.u_below_ok);
    CHECK(rep1.max_u_excess == Approx(0.0).margin(1e-14));
    CHECK_FALSE(rep1.v_above_ok);  // v ≡ 0 sits below v_ξ

    CoexistenceSolution as_pred = as_prey;
    as_pred.u = AgeSpaceField(disc().age, disc().n_space());
    as_pred.trace_u = Vector::Zero(disc().n_space());
    as_pred.v = v_xi.solution->field;
    as_pred.trace_v = v_xi.solution->trace;
    const OrderingReport rep2 =
        ordering_check(as_pred, u_eta.solution->field, v_xi.solution->field);
    CHECK(rep2.u_below_ok);
    CHECK(rep2.v_above_ok);
    CHECK(rep2.max_v_deficit == Approx(0.0).margin(1e-14));
}

TEST_CASE("pure logistic decay bound when the prey is absent") {
    const SemiTrivialResult v_xi = solve_semitrivial_predator(disc(), 1.5, 1.0, b2());
    REQUIRE(v_xi.nontrivial);
    CoexistenceSolution sol;
    sol.eta = 0.5;
    sol.xi = 1.5;
    sol.u = AgeSpaceField(disc().age, disc().n_space());
    sol.trace_u = Vector::Zero(disc().n_space());
    sol.v = v_xi.solution->field;
    sol.trace_v = v_xi.solution->trace;
    const CoexistEnvelopeReport rep = envelope_check(disc(), b2(), sol, 1.0, 1.0);
    CHECK(rep.envelope_ok);  // m = 0 branch: f(a) = v0/(β₁v0·a + 1)
    CHECK(rep.trace_bound_ok);
}

TEST_CASE("seeds must be nonnegative") {
    Vector bad = Vector::Ones(disc().n_space());
    bad[1] = -0.5;
    CHECK_THROWS_AS(solve_coexistence(disc(), 2.0, 1.5, unit_params(), b1(), b2(), bad,
                                      Vector::Ones(disc().n_space())),
                    std::invalid_argument);
}
