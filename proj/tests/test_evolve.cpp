#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "agebif/evolve.hpp"
#include "oracles.hpp"

using namespace agebif;
using Catch::Approx;

namespace {

Discretization small_disc() { return make_discretization(5, 1.0, 8, 1.0); }

AgeSpaceField constant_potential(const Discretization& d, double c) {
    AgeSpaceField h(d.age, d.n_space());
    h.values().setConstant(c);
    return h;
}

std::mt19937_64 rng(20240811);

Vector random_nonneg(int n, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(0.0, scale);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

AgeSpaceField random_nonneg_field(const Discretization& d, double scale = 1.0) {
    AgeSpaceField f(d.age, d.n_space());
    for (int k = 0; k < f.n_ages(); ++k) f.set_row(k, random_nonneg(d.n_space(), scale));
    return f;
}

}  // namespace

TEST_CASE("linear flow is exact on the principal mode") {
    const Discretization d = make_discretization(16, 1.0, 32, 1.0);
    const double da = d.age.da;
    const double l1 = d.spectral.lambda1;

    SECTION("zero potential") {
        const AgeSpaceField w = propagate_linear(d, constant_potential(d, 0.0), d.spectral.phi1);
        for (int k = 0; k <= d.age.steps; ++k) {
            const Vector expected = std::pow(1.0 + da * l1, -k) * d.spectral.phi1;
            CHECK((w.row(k) - expected).lpNorm<Eigen::Infinity>() <= 1e-14 * expected.maxCoeff() * 10);
        }
    }
    SECTION("constant potential") {
        const double c = 1.7;
        const AgeSpaceField w = propagate_linear(d, constant_potential(d, c), d.spectral.phi1);
        for (int k = 0; k <= d.age.steps; ++k) {
            const Vector expected = std::pow(1.0 + da * (l1 + c), -k) * d.spectral.phi1;
            CHECK((w.row(k) - expected).lpNorm<Eigen::Infinity>() <= 1e-13);
        }
    }
}

TEST_CASE("linear flow matches the dense oracle and stays positive") {
    const Discretization d = small_disc();
    const AgeSpaceField h = random_nonneg_field(d, 2.0);
    Vector phi0 = random_nonneg(d.n_space());
    phi0[2] = 0.0;  // nonnegative, not strictly positive
    const AgeSpaceField mine = propagate_linear(d, h, phi0);
    const AgeSpaceField ref = oracle::dense_propagate_linear(d, h, phi0);
    CHECK((mine.values() - ref.values()).cwiseAbs().maxCoeff() <= 1e-12);
    for (int k = 1; k <= d.age.steps; ++k) CHECK(mine.row(k).minCoeff() > 0.0);
}

TEST_CASE("negative potentials trigger substepping, violent ones are rejected") {
    const Discretization d = small_disc();
    // da = 1/8, potential -20: needs 2*da*20 = 5 substeps; still positive
    const AgeSpaceField w =
        propagate_linear(d, constant_potential(d, -20.0), d.spectral.phi1);
    CHECK(w.values().minCoeff() > 0.0);
    CHECK_THROWS_AS(propagate_linear(d, constant_potential(d, -1e6), d.spectral.phi1),
                    std::runtime_error);
}

TEST_CASE("monotone under initial data") {
    const Discretization d = small_disc();
    const AgeSpaceField h = random_nonneg_field(d, 1.0);
    const Vector psi0 = random_nonneg(d.n_space());
    const Vector phi0 = psi0 + random_nonneg(d.n_space(), 0.5);
    const AgeSpaceField big = propagate_linear(d, h, phi0);
    const AgeSpaceField small = propagate_linear(d, h, psi0);
    CHECK((big.values() - small.values()).minCoeff() >= -1e-14);
}

TEST_CASE("logistic flow basics") {
    const Discretization d = make_discretization(12, 1.0, 32, 1.0);

    SECTION("zero initial data stays zero") {
        const AgeSpaceField u = propagate_logistic(d, Vector::Zero(12), 1.0);
        CHECK(u.sup_norm() == 0.0);
    }
    SECTION("alpha = 0 reduces to the linear flow") {
        const Vector phi0 = random_nonneg(12);
        const AgeSpaceField u = propagate_logistic(d, phi0, 0.0);
        const AgeSpaceField w = propagate_linear(d, constant_potential(d, 0.0), phi0);
        CHECK((u.values() - w.values()).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SECTION("negative input rejected") {
        Vector bad = Vector::Ones(12);
        bad[3] = -1e-6;
        CHECK_THROWS_AS(propagate_logistic(d, bad, 1.0), std::invalid_argument);
    }
    SECTION("sup-norms non-increasing and scalar envelope holds") {
        const double alpha = 2.0;
        const Vector phi0 = random_nonneg(12, 3.0);
        const AgeSpaceField u = propagate_logistic(d, phi0, alpha);
        double prev = u.row(0).maxCoeff();
        const double m0 = phi0.maxCoeff();
        for (int k = 1; k <= d.age.steps; ++k) {
            const double cur = u.row(k).maxCoeff();
            CHECK(cur <= prev + 1e-15);
            const double envelope = 1.0 / (alpha * d.age.age(k) + 1.0 / m0);
            CHECK(cur <= envelope * (1.0 + 1e-12));
            prev = cur;
        }
        CHECK(u.in_cone());
    }
}

TEST_CASE("comparison: a nonnegative source dominates the source-free flow") {
    const Discretization d = make_discretization(10, 1.0, 24, 1.0);
    const Vector phi0 = random_nonneg(10, 2.0);
    const AgeSpaceField f = random_nonneg_field(d, 1.0);
    const AgeSpaceField with = propagate_logistic(d, phi0, 1.0, &f);
    const AgeSpaceField without = propagate_logistic(d, phi0, 1.0);
    CHECK((with.values() - without.values()).minCoeff() >= -1e-13);
}

TEST_CASE("coupled flow reductions") {
    const Discretization d = small_disc();
    ModelParams p;
    p.alpha1 = 1.3;
    p.alpha2 = 0.7;
    p.beta1 = 0.9;
    p.beta2 = 1.1;

    SECTION("zero predator decouples the prey") {
        const Vector u0 = random_nonneg(5, 2.0);
        auto [u, v] = propagate_coupled(d, u0, Vector::Zero(5), p);
        CHECK(v.sup_norm() == 0.0);
        const AgeSpaceField ref = propagate_logistic(d, u0, p.alpha1);
        CHECK((u.values() - ref.values()).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SECTION("zero prey decouples the predator") {
        const Vector v0 = random_nonneg(5, 2.0);
        auto [u, v] = propagate_coupled(d, Vector::Zero(5), v0, p);
        CHECK(u.sup_norm() == 0.0);
        const AgeSpaceField ref = propagate_logistic(d, v0, p.beta1);
        CHECK((v.values() - ref.values()).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SECTION("both components stay nonnegative") {
        auto [u, v] = propagate_coupled(d, random_nonneg(5, 3.0), random_nonneg(5, 3.0), p);
        CHECK(u.in_cone());
        CHECK(v.in_cone());
    }
}

TEST_CASE("coupled flow agrees with the per-step Newton oracle at first order") {
    const Discretization d = small_disc();
    ModelParams p;
    const Vector u0 = 2.0 * d.spectral.phi1;
    const Vector v0 = Vector::Ones(5);

    auto [u8, v8] = propagate_coupled(d, u0, v0, p);
    auto [ru8, rv8] = oracle::implicit_coupled_flow(d, u0, v0, p);
    const double err8 = std::max((u8.values() - ru8.values()).cwiseAbs().maxCoeff(),
                                 (v8.values() - rv8.values()).cwiseAbs().maxCoeff());
    CHECK(err8 <= 2.0 * d.age.da);  // O(da) agreement

    // halving da roughly halves the defect
    const Discretization d16 = make_discretization(5, 1.0, 16, 1.0);
    auto [u16, v16] = propagate_coupled(d16, u0, v0, p);
    auto [ru16, rv16] = oracle::implicit_coupled_flow(d16, u0, v0, p);
    const double err16 = std::max((u16.values() - ru16.values()).cwiseAbs().maxCoeff(),
                                  (v16.values() - rv16.values()).cwiseAbs().maxCoeff());
    CHECK(err16 <= 0.75 * err8);
}

TEST_CASE("linearized flow: decoupling and uniqueness limits") {
    const Discretization d = small_disc();
    ModelParams p;

    SECTION("zero base and zero rhs reduce to two independent linear flows") {
        const AgeSpaceField zero_base(d.age, 5);
        const Vector phi0 = random_nonneg(5);
        const Vector psi0 = random_nonneg(5);
        auto [du, dv] = propagate_linearized(d, zero_base, zero_base, p, nullptr, nullptr, phi0, psi0);
        const AgeSpaceField ref_u = propagate_linear(d, zero_base, phi0);
        const AgeSpaceField ref_v = propagate_linear(d, zero_base, psi0);
        CHECK((du.values() - ref_u.values()).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK((dv.values() - ref_v.values()).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SECTION("zero data gives the zero solution") {
        auto [u, v] = propagate_coupled(d, random_nonneg(5), random_nonneg(5), p);
        auto [du, dv] =
            propagate_linearized(d, u, v, p, nullptr, nullptr, Vector::Zero(5), Vector::Zero(5));
        CHECK(du.sup_norm() == 0.0);
        CHECK(dv.sup_norm() == 0.0);
    }
}

TEST_CASE("linearized flow is the derivative of the coupled flow") {
    const Discretization d = small_disc();
    ModelParams p;
    const Vector u0 = random_nonneg(5, 2.0) + 0.1 * Vector::Ones(5);
    const Vector v0 = random_nonneg(5, 2.0) + 0.1 * Vector::Ones(5);
    const Vector du0 = random_nonneg(5, 1.0);
    const Vector dv0 = random_nonneg(5, 1.0);

    auto [u, v] = propagate_coupled(d, u0, v0, p);
    auto [du, dv] = propagate_linearized(d, u, v, p, nullptr, nullptr, du0, dv0);

    const double eps = 1e-6;
    auto [up, vp] = propagate_coupled(d, u0 + eps * du0, v0 + eps * dv0, p);
    auto [um, vm] = propagate_coupled(d, u0 - eps * du0, v0 - eps * dv0, p);
    const Matrix fd_u = (up.values() - um.values()) / (2.0 * eps);
    const Matrix fd_v = (vp.values() - vm.values()) / (2.0 * eps);
    CHECK((fd_u - du.values()).cwiseAbs().maxCoeff() <= 5e-7);
    CHECK((fd_v - dv.values()).cwiseAbs().maxCoeff() <= 5e-7);
}

TEST_CASE("first-order age accuracy on the principal mode") {
    const double l1 = principal_eigenpair(assemble_laplacian(build_grid(16, 1.0))).lambda1;
    const double exact = std::exp(-l1);  // continuum decay at a = 1
    auto decay = [&](int steps) {
        const double da = 1.0 / steps;
        return std::pow(1.0 + da * l1, -steps);
    };
    const double e1 = std::abs(decay(256) - exact);
    const double e2 = std::abs(decay(512) - exact);
    CHECK(e1 / e2 == Approx(2.0).margin(0.2));
}
