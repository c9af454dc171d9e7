#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "agebif/birth.hpp"
#include "oracles.hpp"

using namespace agebif;
using Catch::Approx;

namespace {

std::mt19937_64 rng(977);

AgeSpaceField zero_potential(const Discretization& d) {
    return AgeSpaceField(d.age, d.n_space());
}

AgeSpaceField constant_potential(const Discretization& d, double c) {
    AgeSpaceField h(d.age, d.n_space());
    h.values().setConstant(c);
    return h;
}

AgeSpaceField random_bump_field(const Discretization& d, double scale) {
    std::uniform_real_distribution<double> dist(0.0, scale);
    AgeSpaceField f(d.age, d.n_space());
    for (int k = 0; k < f.n_ages(); ++k)
        for (int i = 0; i < d.n_space(); ++i) f.values()(k, i) = dist(rng);
    return f;
}

/// Scalar reduction of the birth operator on the principal mode under a
/// constant potential c: s(c) = Σ_k w_k b_k (1 + da(λ₁ + c))^{-k}.
double scalar_mode_radius(const Discretization& d, const BirthProfile& profile, double c) {
    const Vector wb = birth_weights(profile, d.age);
    double acc = 0.0;
    double decay = 1.0;
    const double base = 1.0 / (1.0 + d.age.da * (d.spectral.lambda1 + c));
    for (int k = 0; k <= d.age.steps; ++k) {
        acc += wb[k] * decay;
        decay *= base;
    }
    return acc;
}

}  // namespace

TEST_CASE("profile normalization") {
    const Discretization d = make_discretization(64, 1.0, 128, 1.0);

    SECTION("constant profile: discrete scale approaches the continuum constant") {
        // the backward-Euler decay weights deviate from e^{-λ₁a} at O(da·λ₁²),
        // so the continuum constant λ₁/(1 − e^{-λ₁a_m}) ≈ 9.8701 is recovered
        // under age refinement only
        const BirthProfile p = constant_profile(Species::prey, d);
        const double l1 = d.spectral.lambda1;
        const double continuum = l1 / (1.0 - std::exp(-l1 * 1.0));
        CHECK(p.scale == Approx(continuum).epsilon(0.05));

        const Discretization fine = make_discretization(99, 1.0, 1024, 1.0);
        const BirthProfile pf = constant_profile(Species::prey, fine);
        const double lf = fine.spectral.lambda1;
        const double cont_f = lf / (1.0 - std::exp(-lf * 1.0));
        CHECK(std::abs(pf.scale - cont_f) / cont_f < std::abs(p.scale - continuum) / continuum);
        CHECK(pf.scale == Approx(9.8701).epsilon(0.012));
    }
    SECTION("exponential growth profile: scale times a_m tends to one") {
        auto scale_am = [](const Discretization& dd) {
            Vector raw(dd.age.steps + 1);
            for (int k = 0; k <= dd.age.steps; ++k)
                raw[k] = std::exp(dd.spectral.lambda1 * dd.age.age(k));
            const BirthProfile p =
                normalize_profile(Species::prey, raw, dd.spectral.lambda1, dd.age);
            return p.scale * dd.age.a_max;
        };
        const double coarse = scale_am(make_discretization(32, 1.0, 256, 1.0));
        const double fine = scale_am(make_discretization(32, 1.0, 2048, 1.0));
        CHECK(std::abs(fine - 1.0) < std::abs(coarse - 1.0));
        CHECK(fine == Approx(1.0).epsilon(0.03));
    }
    SECTION("profiles vanishing near the maximal age are rejected") {
        Vector raw = Vector::Zero(d.age.steps + 1);
        for (int k = 0; k <= d.age.steps / 2; ++k) raw[k] = 1.0;
        CHECK_THROWS_AS(normalize_profile(Species::prey, raw, d.spectral.lambda1, d.age),
                        std::invalid_argument);
        CHECK_THROWS_AS(
            normalize_profile(Species::prey, Vector::Zero(d.age.steps + 1), d.spectral.lambda1, d.age),
            std::invalid_argument);
        CHECK_THROWS_AS(normalize_profile(Species::prey, -Vector::Ones(d.age.steps + 1),
                                          d.spectral.lambda1, d.age),
                        std::invalid_argument);
    }
}

TEST_CASE("normalization keystone: r(H[0]) = 1 for both profiles") {
    const Discretization d = make_discretization(64, 1.0, 128, 1.0);
    for (Species s : {Species::prey, Species::predator}) {
        const BirthProfile p = constant_profile(s, d);
        const KreinRutmanResult kr = spectral_radius(d, zero_potential(d), p);
        CHECK(kr.converged);
        CHECK(std::abs(kr.radius - 1.0) <= 1e-8);
        CHECK((kr.eigvec - d.spectral.phi1).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
    const BirthProfile decaying = exp_decay_profile(Species::predator, 1.5, d);
    const KreinRutmanResult kr = spectral_radius(d, zero_potential(d), decaying);
    CHECK(std::abs(kr.radius - 1.0) <= 1e-8);
}

TEST_CASE("birth operator application") {
    const Discretization d = make_discretization(32, 1.0, 64, 1.0);
    const BirthProfile p = constant_profile(Species::prey, d);

    SECTION("zero potential fixes the principal mode") {
        const Vector out = apply_birth_operator(d, zero_potential(d), p, d.spectral.phi1);
        CHECK((out - d.spectral.phi1).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
    SECTION("constant potential reduces to the scalar recursion") {
        const double c = 2.3;
        const Vector out = apply_birth_operator(d, constant_potential(d, c), p, d.spectral.phi1);
        const double s = scalar_mode_radius(d, p, c);
        CHECK(s < 1.0);
        CHECK((out - s * d.spectral.phi1).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
    SECTION("linear: zero maps to zero") {
        const Vector out = apply_birth_operator(d, zero_potential(d), p, Vector::Zero(32));
        CHECK(out.lpNorm<Eigen::Infinity>() == 0.0);
    }
    SECTION("nonnegative maps to nonnegative") {
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        Vector phi(32);
        for (int i = 0; i < 32; ++i) phi[i] = dist(rng);
        const Vector out = apply_birth_operator(d, random_bump_field(d, 1.0), p, phi);
        CHECK(out.minCoeff() >= 0.0);
    }
}

TEST_CASE("spectral radius: scalar oracle, dense oracle, monotonicity, continuity") {
    const Discretization d = make_discretization(24, 1.0, 48, 1.0);
    const BirthProfile p = constant_profile(Species::prey, d);

    SECTION("constant potentials match the scalar reduction") {
        for (double c : {0.5, 1.0, 5.0}) {
            const KreinRutmanResult kr = spectral_radius(d, constant_potential(d, c), p);
            CHECK(std::abs(kr.radius - scalar_mode_radius(d, p, c)) <= 1e-10);
            CHECK(kr.eigvec.minCoeff() > 0.0);
            CHECK(kr.eigvec.maxCoeff() == Approx(1.0));
            CHECK(kr.residual <= 1e-10 * kr.radius);
        }
    }
    SECTION("dense eigensolver agrees on a random potential") {
        const AgeSpaceField h = random_bump_field(d, 2.0);
        const KreinRutmanResult kr = spectral_radius(d, h, p);
        const double ref = oracle::dense_spectral_radius(oracle::dense_birth_matrix(d, h, p));
        CHECK(kr.radius == Approx(ref).epsilon(1e-9));
    }
    SECTION("strictly monotone: larger potential, smaller radius") {
        for (int trial = 0; trial < 20; ++trial) {
            const AgeSpaceField h = random_bump_field(d, 1.0);
            AgeSpaceField g = h;
            std::uniform_int_distribution<int> pick_k(0, d.age.steps);
            std::uniform_int_distribution<int> pick_i(0, d.n_space() - 1);
            for (int b = 0; b < 3; ++b)
                g.values()(pick_k(rng), pick_i(rng)) += 0.5;
            const double rh = spectral_radius(d, h, p).radius;
            const double rg = spectral_radius(d, g, p).radius;
            CHECK(rg < rh);
        }
    }
    SECTION("radius is Lipschitz in small potential perturbations") {
        const AgeSpaceField h = random_bump_field(d, 1.0);
        const double r0 = spectral_radius(d, h, p).radius;
        for (double eps : {1e-3, 1e-4, 1e-5}) {
            AgeSpaceField g = h;
            g.values().array() += eps;
            const double r = spectral_radius(d, g, p).radius;
            CHECK(std::abs(r - r0) <= 2.0 * eps);  // |dr/dc| ≤ r·a_m ≈ 1 here
        }
    }
}

TEST_CASE("resolvent solves and refusals") {
    const Discretization d = make_discretization(24, 1.0, 48, 1.0);
    const BirthProfile p = constant_profile(Species::prey, d);
    const AgeSpaceField h = constant_potential(d, 1.0);
    BirthOperator op(d, h, p);
    const KreinRutmanResult kr = power_iteration(op, d.spectral.phi1);

    SECTION("eta = 0 is the identity") {
        const Vector rhs = Vector::Random(24).cwiseAbs();
        const Vector x = resolve_on_operator(0.0, op, kr.radius, rhs);
        CHECK((x - rhs).lpNorm<Eigen::Infinity>() <= 1e-13);
    }
    SECTION("eigenvector reduction") {
        const double eta = 0.5 / kr.radius;
        const Vector x = resolve_on_operator(eta, op, kr.radius, kr.eigvec);
        const Vector expected = kr.eigvec / (1.0 - eta * kr.radius);
        CHECK((x - expected).lpNorm<Eigen::Infinity>() <= 1e-9 * expected.lpNorm<Eigen::Infinity>());
    }
    SECTION("spectral condition enforced") {
        CHECK_THROWS_AS(resolve_on_operator(1.0001 / kr.radius, op, kr.radius, d.spectral.phi1),
                        SpectralConditionError);
        CHECK_THROWS_AS(resolve_birth(d, 2.0 / kr.radius, h, p, d.spectral.phi1),
                        SpectralConditionError);
    }
    SECTION("resolvent positivity") {
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        for (int trial = 0; trial < 10; ++trial) {
            Vector rhs(24);
            for (int i = 0; i < 24; ++i) rhs[i] = dist(rng);
            const Vector x = resolve_on_operator(0.9 / kr.radius, op, kr.radius, rhs);
            CHECK(x.minCoeff() >= -1e-12);
        }
    }
}

TEST_CASE("mis-normalized profile is caught by the keystone check") {
    const Discretization d = make_discretization(32, 1.0, 64, 1.0);
    BirthProfile p = constant_profile(Species::prey, d);
    p.scale *= 1.01;
    p.samples = p.scale * p.raw;
    const KreinRutmanResult kr = spectral_radius(d, zero_potential(d), p);
    CHECK(std::abs(kr.radius - 1.0) > 1e-8);
    CHECK(kr.radius == Approx(1.01).epsilon(1e-6));
}
