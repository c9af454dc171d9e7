#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "agebif/steady.hpp"

using namespace agebif;
using Catch::Approx;

namespace {

const Discretization& disc() {
    static const Discretization d = make_discretization(32, 1.0, 64, 1.0);
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

std::mt19937_64 rng(40412);

Vector random_seed(int n, double scale) {
    std::uniform_real_distribution<double> dist(0.01, scale);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

}  // namespace

TEST_CASE("subcritical intensities collapse to the trivial solution") {
    for (double eta : {0.5, 0.9, 1.0}) {
        for (int trial = 0; trial < 10; ++trial) {
            const Vector seed = random_seed(disc().n_space(), 2.0);
            const SemiTrivialResult r = solve_semitrivial(disc(), eta, 1.0, b1(), &seed);
            INFO("eta = " << eta << " trial " << trial);
            CHECK_FALSE(r.nontrivial);
        }
    }
}

TEST_CASE("supercritical branch: existence, bounds, spectral identity") {
    const SemiTrivialResult r = solve_semitrivial(disc(), 2.0, 1.0, b1());
    REQUIRE(r.nontrivial);
    const SemiTrivialSolution& sol = *r.solution;
    CHECK(sol.field.in_cone());
    CHECK(sol.newton_residual <= 1e-10 * (1.0 + sol.trace.lpNorm<Eigen::Infinity>()));

    // continuum lower bound at a = 0: λ₁(η−1)/(1−e^{−λ₁a_m}) ≈ 9.87 at η = 2
    const double l1 = disc().spectral.lambda1;
    const double bound = l1 * (2.0 - 1.0) / (1.0 - std::exp(-l1));
    CHECK(sol.trace.maxCoeff() >= 0.95 * bound);

    // the keystone identity coupling flow, birth quadrature, and eigensolver
    CHECK(sol.consistency <= 1e-6);

    // shooting consistency: the stored trace reproduces the birth integral
    CHECK((sol.trace - 2.0 * birth_integral(b1(), sol.field)).lpNorm<Eigen::Infinity>() <=
          1e-9 * (1.0 + sol.trace.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("envelopes hold across the branch") {
    for (double eta : {1.05, 2.0, 5.0}) {
        const SemiTrivialResult r = solve_semitrivial(disc(), eta, 1.0, b1());
        REQUIRE(r.nontrivial);
        const EnvelopeReport rep = verify_envelopes(disc(), b1(), *r.solution);
        INFO("eta = " << eta << " lower " << rep.lower_min_ratio << " upper "
                      << rep.upper_max_ratio << " trace " << rep.trace_ratio);
        CHECK(rep.lower_ok);
        CHECK(rep.upper_ok);
        CHECK(rep.trace_log_ok);
    }
}

TEST_CASE("uniqueness: ten random seeds reach the same trace") {
    const SemiTrivialResult ref = solve_semitrivial(disc(), 2.0, 1.0, b1());
    REQUIRE(ref.nontrivial);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector seed = random_seed(disc().n_space(), 30.0);
        const SemiTrivialResult r = solve_semitrivial(disc(), 2.0, 1.0, b1(), &seed);
        REQUIRE(r.nontrivial);
        CHECK((r.solution->trace - ref.solution->trace).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
}

TEST_CASE("branch is monotone in the fertility intensity") {
    const auto u15 = solve_semitrivial(disc(), 1.5, 1.0, b1());
    const auto u20 = solve_semitrivial(disc(), 2.0, 1.0, b1());
    const auto u40 = solve_semitrivial(disc(), 4.0, 1.0, b1());
    REQUIRE(u15.nontrivial);
    REQUIRE(u20.nontrivial);
    REQUIRE(u40.nontrivial);
    CHECK((u20.solution->field.values() - u15.solution->field.values()).minCoeff() >= -1e-10);
    CHECK((u40.solution->field.values() - u20.solution->field.values()).minCoeff() >= -1e-10);
}

TEST_CASE("predator analogue behaves identically") {
    CHECK_FALSE(solve_semitrivial_predator(disc(), 0.9, 1.0, b2()).nontrivial);

    const SemiTrivialResult v15 = solve_semitrivial_predator(disc(), 1.5, 1.0, b2());
    REQUIRE(v15.nontrivial);
    CHECK(v15.solution->consistency <= 1e-6);

    const SemiTrivialResult v20 = solve_semitrivial_predator(disc(), 2.0, 1.0, b2());
    REQUIRE(v20.nontrivial);
    CHECK((v20.solution->field.values() - v15.solution->field.values()).minCoeff() >= -1e-10);
}

TEST_CASE("parameter derivative: positivity and finite differences") {
    for (double eta : {1.5, 3.0}) {
        const SemiTrivialResult r = solve_semitrivial(disc(), eta, 1.0, b1());
        REQUIRE(r.nontrivial);
        const AgeSpaceField z = derivative_wrt_param(disc(), b1(), *r.solution);
        CHECK(z.min_value() > 0.0);

        const double eps = 1e-4;
        const auto rp = solve_semitrivial(disc(), eta + eps, 1.0, b1(), &r.solution->trace);
        const auto rm = solve_semitrivial(disc(), eta - eps, 1.0, b1(), &r.solution->trace);
        REQUIRE(rp.nontrivial);
        REQUIRE(rm.nontrivial);
        const Matrix fd = (rp.solution->field.values() - rm.solution->field.values()) / (2.0 * eps);
        const double gap = (fd - z.values()).cwiseAbs().maxCoeff();
        INFO("eta = " << eta << " fd gap " << gap);
        CHECK(gap <= std::max(1e-4, 10.0 * eps * eps) * std::max(1.0, z.sup_norm()));
    }
}

TEST_CASE("branch leaves the trivial state with nonzero speed") {
    for (double eta : {1.01, 1.02}) {
        const SemiTrivialResult r = solve_semitrivial(disc(), eta, 1.0, b1());
        REQUIRE(r.nontrivial);
        const AgeSpaceField z = derivative_wrt_param(disc(), b1(), *r.solution);
        CHECK(z.sup_norm() >= 1.0);
    }
}

TEST_CASE("trace grows with intensity, consistent with the quadratic bound") {
    // large intensities need the full age resolution: the age-zero quadrature
    // weight feeds the trace back with coefficient η·(da/2)·b(0), which must
    // stay below one for the discrete birth map to be contractive at infinity
    const Discretization fine = make_discretization(32, 1.0, 128, 1.0);
    const BirthProfile prey = constant_profile(Species::prey, fine);
    double prev = 0.0;
    double prev_ratio = std::numeric_limits<double>::infinity();
    for (double eta : {2.0, 4.0, 8.0, 16.0}) {
        const SemiTrivialResult r = solve_semitrivial(fine, eta, 1.0, prey);
        REQUIRE(r.nontrivial);
        const double sup = r.solution->trace.lpNorm<Eigen::Infinity>();
        CHECK(sup > prev);
        const double ratio = sup / (eta * eta);
        CHECK(ratio <= prev_ratio);  // growth stays below O(η²)
        prev = sup;
        prev_ratio = ratio;
    }
}
