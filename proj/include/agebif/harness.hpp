#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <sstream>

#include "agebif/bifurcate.hpp"
#include "agebif/config.hpp"
#include "agebif/report.hpp"

namespace agebif {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    exit_ok = 0,
    exit_validation_error = 1,
    exit_solver_failure = 2,
    exit_verification_failures = 3,
};

/// Immutable per-run bundle: discretization, normalized profiles, options.
struct HarnessContext {
    ScenarioConfig cfg;
    Discretization disc;
    BirthProfile b1;
    BirthProfile b2;
    bool parallel = false;
    uint64_t seed = 0;
};

namespace detail {

inline BirthProfile build_profile(Species kind, const ProfileSpec& spec,
                                  const Discretization& disc) {
    switch (spec.kind) {
        case ProfileSpec::Kind::constant:
            return constant_profile(kind, disc);
        case ProfileSpec::Kind::exp_decay:
            return exp_decay_profile(kind, spec.rate, disc);
        default: {
            Vector raw(disc.age.steps + 1);
            for (int k = 0; k <= disc.age.steps; ++k) raw[k] = spec.table[k];
            return normalize_profile(kind, raw, disc.spectral.lambda1, disc.age);
        }
    }
}

inline std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_param(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

/// Run fn(0..count-1), optionally via std::async; exceptions propagate.
template <typename Fn>
inline void parallel_for_index(int count, bool parallel, Fn&& fn) {
    if (!parallel || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::future<void>> futures;
    futures.reserve(count);
    for (int i = 0; i < count; ++i)
        futures.push_back(std::async(std::launch::async, [&fn, i] { fn(i); }));
    for (auto& f : futures) f.get();
}

}  // namespace detail

inline HarnessContext make_context(const ScenarioConfig& cfg, bool parallel = false,
                                   uint64_t seed = 0) {
    HarnessContext ctx;
    ctx.cfg = cfg;
    ctx.disc = make_discretization(cfg.n_interior, cfg.length, cfg.age_steps, cfg.a_max);
    ctx.b1 = detail::build_profile(Species::prey, cfg.prey, ctx.disc);
    ctx.b2 = detail::build_profile(Species::predator, cfg.predator, ctx.disc);
    if (cfg.prey_scale_factor != 1.0) {
        ctx.b1.scale *= cfg.prey_scale_factor;
        ctx.b1.samples = ctx.b1.scale * ctx.b1.raw;
    }
    ctx.parallel = parallel;
    ctx.seed = seed;
    return ctx;
}

/// Discretization-sensitive tolerances widen linearly in the age step when a
/// run is coarser than the default M = 128 per unit age; checks of identities
/// that hold exactly on the grid keep their fixed tolerances.
inline double discretization_slack(const ScenarioConfig& cfg) {
    const double da = cfg.a_max / cfg.age_steps;
    const double factor = std::max(1.0, da / (1.0 / 128.0));
    return std::min(0.5, cfg.tolerances.envelope_slack * factor);
}

// ---------------------------------------------------------------------------
// deterministic writers

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
        out_ << header << "\n";
    }
    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ",";
            out_ << cells[i];
        }
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

inline const char* kBranchCsvHeader = "param,sup_u,sup_v,l2_u,l2_v,residual,termination";

inline void write_branch_csv(const std::filesystem::path& path, const Branch& branch) {
    CsvWriter csv(path, kBranchCsvHeader);
    const std::string term = termination_name(branch.termination);
    for (const BranchPoint& pt : branch.points)
        csv.row({detail::fmt17(pt.param), detail::fmt17(pt.sup_u), detail::fmt17(pt.sup_v),
                 detail::fmt17(pt.l2_u), detail::fmt17(pt.l2_v), detail::fmt17(pt.residual),
                 term});
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

inline nlohmann::json config_echo_json(const ScenarioConfig& cfg) {
    return nlohmann::json{
        {"grid", {{"n_interior", cfg.n_interior}, {"length", cfg.length}}},
        {"age", {{"steps", cfg.age_steps}, {"a_max", cfg.a_max}}},
        {"params",
         {{"alpha1", cfg.params.alpha1},
          {"alpha2", cfg.params.alpha2},
          {"beta1", cfg.params.beta1},
          {"beta2", cfg.params.beta2}}},
        {"negative_control", {{"prey_scale_factor", cfg.prey_scale_factor}}}};
}

// ---------------------------------------------------------------------------
// run modes

/// eigen: principal eigenpair summary against the closed form.
inline int run_eigen(const HarnessContext& ctx, const std::filesystem::path& out_dir,
                     std::ostream& log) {
    const auto& sd = ctx.disc.spectral;
    const double h = ctx.disc.grid.spacing;
    const double pi = 3.14159265358979323846;
    const double closed = (2.0 / (h * h)) * (1.0 - std::cos(pi * h / ctx.disc.grid.length));
    nlohmann::json j{{"n_interior", ctx.disc.grid.n_interior},
                     {"lambda1", sd.lambda1},
                     {"closed_form", closed},
                     {"relative_gap", std::abs(sd.lambda1 - closed) / closed},
                     {"residual", sd.residual},
                     {"phi1", std::vector<double>(sd.phi1.data(), sd.phi1.data() + sd.phi1.size())}};
    write_json(out_dir / "eigen.json", j);
    log << "lambda1 = " << detail::fmt17(sd.lambda1) << " (closed form "
        << detail::fmt17(closed) << ")\n";
    return exit_ok;
}

/// semitrivial: sample the single-species branches over the configured values.
inline int run_semitrivial(const HarnessContext& ctx, const std::filesystem::path& out_dir,
                           std::ostream& log) {
    const auto sample = [&](Species kind, const std::vector<double>& values,
                            const BirthProfile& profile, double alpha,
                            const std::filesystem::path& path) {
        CsvWriter csv(path, kBranchCsvHeader);
        for (double p : values) {
            const SemiTrivialResult r = solve_semitrivial(ctx.disc, p, alpha, profile, nullptr,
                                                          ctx.cfg.tolerances.newton);
            const bool prey = kind == Species::prey;
            if (r.nontrivial) {
                const double sup = r.solution->field.sup_norm();
                const double l2 = field_l2(r.solution->field, ctx.disc.grid.spacing);
                csv.row({detail::fmt17(p), detail::fmt17(prey ? sup : 0.0),
                         detail::fmt17(prey ? 0.0 : sup), detail::fmt17(prey ? l2 : 0.0),
                         detail::fmt17(prey ? 0.0 : l2),
                         detail::fmt17(r.solution->newton_residual), "nontrivial"});
            } else {
                csv.row({detail::fmt17(p), "0", "0", "0", "0", "0", "trivial"});
            }
        }
    };
    sample(Species::prey, ctx.cfg.run.eta_values, ctx.b1, ctx.cfg.params.alpha1,
           out_dir / "semitrivial_prey.csv");
    sample(Species::predator, ctx.cfg.run.xi_values, ctx.b2, ctx.cfg.params.beta1,
           out_dir / "semitrivial_predator.csv");
    log << "semitrivial branches sampled at " << ctx.cfg.run.eta_values.size() << " + "
        << ctx.cfg.run.xi_values.size() << " parameter values\n";
    return exit_ok;
}

/// bifpoints: onset and join values plus the limit bounds and trend tables.
inline nlohmann::json bifpoints_json(const HarnessContext& ctx) {
    const ModelParams& p = ctx.cfg.params;
    nlohmann::json xi0 = nlohmann::json::array();
    nlohmann::json xi1 = nlohmann::json::array();
    nlohmann::json eta0 = nlohmann::json::array();
    nlohmann::json eta1 = nlohmann::json::array();

    for (double eta : ctx.cfg.run.eta_values) {
        if (!(eta > 1.0)) continue;
        const BifurcationPoint bp = compute_xi0(ctx.disc, eta, p, ctx.b1, ctx.b2);
        xi0.push_back(
            {{"eta", eta}, {"value", bp.value}, {"spectral_residual", bp.spectral_residual}});
        const auto j1 = compute_xi1(ctx.disc, eta, ctx.cfg.run.xi_max, p, ctx.b1, ctx.b2);
        if (j1)
            xi1.push_back({{"eta", eta},
                           {"found", true},
                           {"value", j1->value},
                           {"spectral_residual", j1->spectral_residual}});
        else
            xi1.push_back({{"eta", eta}, {"found", false}, {"value", nullptr}});
    }
    for (double xi : ctx.cfg.run.xi_values) {
        if (xi > 1.0) {
            const BifurcationPoint bp = compute_eta0(ctx.disc, xi, p, ctx.b1, ctx.b2);
            eta0.push_back(
                {{"xi", xi}, {"value", bp.value}, {"spectral_residual", bp.spectral_residual}});
        } else if (xi > 0.0 && xi < 1.0) {
            const auto j1 = compute_eta1(ctx.disc, xi, ctx.cfg.run.eta_max, p, ctx.b1, ctx.b2);
            if (j1)
                eta1.push_back({{"xi", xi},
                                {"found", true},
                                {"value", j1->value},
                                {"spectral_residual", j1->spectral_residual}});
            else
                eta1.push_back({{"xi", xi}, {"found", false}, {"value", nullptr}});
        }
    }

    nlohmann::json out{{"xi0", xi0}, {"xi1", xi1}, {"eta0", eta0}, {"eta1", eta1}};
    if (!ctx.cfg.run.eta_values.empty() || !ctx.cfg.run.xi_values.empty()) {
        const LimitEstimates le = estimate_limits(ctx.disc, ctx.cfg.run.eta_max,
                                                  ctx.cfg.run.xi_max, p, ctx.b1, ctx.b2);
        out["N_lower"] = le.n_lower;
        out["delta_upper"] = le.delta_upper;
        nlohmann::json t1 = nlohmann::json::array(), t2 = nlohmann::json::array();
        for (auto& [x, r] : le.r_prey_vs_xi) t1.push_back({x, r});
        for (auto& [x, r] : le.r_predator_vs_eta) t2.push_back({x, r});
        out["r_prey_vs_xi"] = t1;
        out["r_predator_vs_eta"] = t2;
    } else {
        out["N_lower"] = nullptr;
        out["delta_upper"] = nullptr;
    }
    out["config"] = config_echo_json(ctx.cfg);
    return out;
}

inline int run_bifpoints(const HarnessContext& ctx, const std::filesystem::path& out_dir,
                         std::ostream& log) {
    write_json(out_dir / "bifpoints.json", bifpoints_json(ctx));
    log << "bifurcation points written to bifpoints.json\n";
    return exit_ok;
}

inline ContinuationOptions continuation_options(const ScenarioConfig& cfg) {
    ContinuationOptions opts;
    opts.step0 = cfg.run.step0;
    opts.param_limit = cfg.run.param_limit;
    opts.point_cap = cfg.run.point_cap;
    opts.newton_tol = cfg.tolerances.newton;
    return opts;
}

inline BranchKind branch_kind_from_name(const std::string& name) {
    if (name == "B3_in_xi") return BranchKind::B3_in_xi;
    if (name == "S3_in_eta") return BranchKind::S3_in_eta;
    return BranchKind::S4_in_eta;
}

/// continue: one branch per the run configuration.
inline int run_continue(const HarnessContext& ctx, const std::filesystem::path& out_dir,
                        std::ostream& log) {
    const BranchKind kind = branch_kind_from_name(ctx.cfg.run.branch);
    const Branch br = continue_branch(ctx.disc, kind, ctx.cfg.run.fixed_param, ctx.cfg.params,
                                      ctx.b1, ctx.b2, continuation_options(ctx.cfg));
    const std::string tag = kind == BranchKind::B3_in_xi ? "eta" : "xi";
    const std::filesystem::path path =
        out_dir / ("branch_" + std::string(branch_kind_name(kind)) + "_" + tag +
                   detail::fmt_param(ctx.cfg.run.fixed_param) + ".csv");
    write_branch_csv(path, br);
    write_json(out_dir / "continue_summary.json",
               {{"kind", branch_kind_name(kind)},
                {"fixed_param", ctx.cfg.run.fixed_param},
                {"anchor_value", br.anchor_value},
                {"points", br.points.size()},
                {"termination", termination_name(br.termination)},
                {"terminal_param", br.terminal_param},
                {"config", config_echo_json(ctx.cfg)}});
    log << "branch " << branch_kind_name(kind) << " at fixed " << tag << " = "
        << ctx.cfg.run.fixed_param << ": " << br.points.size() << " points, "
        << termination_name(br.termination) << " at " << br.terminal_param << "\n";
    return exit_ok;
}

/// diagram: bifurcation points, all branches over the parameter sweeps, and
/// the semi-trivial branch samples. Solver errors abort with a partial flag.
inline int run_diagram(const HarnessContext& ctx, const std::filesystem::path& out_dir,
                       std::ostream& log) {
    bool partial = false;
    std::string failure;
    nlohmann::json points;
    try {
        points = bifpoints_json(ctx);
    } catch (const std::exception& e) {
        partial = true;
        failure = e.what();
        points = nlohmann::json{{"error", failure}};
    }

    if (!partial) {
        struct Task {
            BranchKind kind;
            double fixed;
        };
        std::vector<Task> tasks;
        for (double eta : ctx.cfg.run.eta_values)
            if (eta > 1.0) tasks.push_back({BranchKind::B3_in_xi, eta});
        for (double xi : ctx.cfg.run.xi_values) {
            if (xi > 1.0) tasks.push_back({BranchKind::S3_in_eta, xi});
            else if (xi > 0.0) tasks.push_back({BranchKind::S4_in_eta, xi});
        }
        std::vector<std::string> notes(tasks.size());
        std::vector<std::optional<Branch>> branches(tasks.size());
        try {
            detail::parallel_for_index(
                static_cast<int>(tasks.size()), ctx.parallel, [&](int i) {
                    try {
                        branches[i] = continue_branch(ctx.disc, tasks[i].kind, tasks[i].fixed,
                                                      ctx.cfg.params, ctx.b1, ctx.b2,
                                                      continuation_options(ctx.cfg));
                    } catch (const std::runtime_error& e) {
                        notes[i] = e.what();
                    }
                });
        } catch (const std::exception& e) {
            partial = true;
            failure = e.what();
        }
        for (size_t i = 0; i < tasks.size(); ++i) {
            if (!branches[i]) {
                if (!notes[i].empty())
                    log << "branch " << branch_kind_name(tasks[i].kind) << " at "
                        << tasks[i].fixed << " skipped: " << notes[i] << "\n";
                continue;
            }
            const std::string tag = tasks[i].kind == BranchKind::B3_in_xi ? "eta" : "xi";
            write_branch_csv(out_dir / ("branch_" +
                                        std::string(branch_kind_name(tasks[i].kind)) + "_" +
                                        tag + detail::fmt_param(tasks[i].fixed) + ".csv"),
                             *branches[i]);
        }
    }

    points["partial"] = partial;
    write_json(out_dir / "bifpoints.json", points);
    run_semitrivial(ctx, out_dir, log);
    if (partial) {
        log << "diagram aborted early: " << failure << "\n";
        return exit_solver_failure;
    }
    log << "diagram written to " << out_dir.string() << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// verification suite

namespace detail {

using CheckFn = std::function<std::vector<CheckRecord>()>;

inline CheckRecord record(const std::string& name, const std::string& claim, double measured,
                          double tolerance, bool pass) {
    CheckRecord r;
    r.name = name;
    r.claim = claim;
    r.measured = measured;
    r.tolerance = tolerance;
    r.pass = pass;
    return r;
}

inline CheckRecord record_le(const std::string& name, const std::string& claim, double measured,
                             double tolerance) {
    return record(name, claim, measured, tolerance, measured <= tolerance);
}

inline CheckRecord record_ge(const std::string& name, const std::string& claim, double measured,
                             double tolerance) {
    return record(name, claim, measured, tolerance, measured >= tolerance);
}

}  // namespace detail

/// Every module invariant as a runnable check at the configured scale.
/// Pure, deterministic for a fixed seed; tasks may run concurrently.
inline RunReport verify_suite(const HarnessContext& ctx) {
    const auto t_start = std::chrono::steady_clock::now();
    const Discretization& disc = ctx.disc;
    const ModelParams& mp = ctx.cfg.params;
    const double slack = discretization_slack(ctx.cfg);
    const double spectral_tol = ctx.cfg.tolerances.spectral_residual;
    const double consistency_tol = ctx.cfg.tolerances.consistency;
    const uint64_t seed = ctx.seed;
    const double pi = 3.14159265358979323846;

    auto zero_potential = [&] { return AgeSpaceField(disc.age, disc.n_space()); };
    auto constant_pot = [&](double c) {
        AgeSpaceField h(disc.age, disc.n_space());
        h.values().setConstant(c);
        return h;
    };
    auto random_field = [&](std::mt19937_64& rng, double scale) {
        std::uniform_real_distribution<double> dist(0.0, scale);
        AgeSpaceField f(disc.age, disc.n_space());
        for (int k = 0; k < f.n_ages(); ++k)
            for (int i = 0; i < disc.n_space(); ++i) f.values()(k, i) = dist(rng);
        return f;
    };

    std::vector<detail::CheckFn> tasks;

    // -- spatial ------------------------------------------------------------
    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        const double h = disc.grid.spacing;
        const double closed =
            (2.0 / (h * h)) * (1.0 - std::cos(pi * h / disc.grid.length));
        out.push_back(detail::record_le(
            "eigen_closed_form",
            "discrete principal eigenvalue equals (2/h^2)(1-cos(pi h/L)) to machine precision",
            std::abs(disc.spectral.lambda1 - closed) / closed, 1e-12));
        const SpectralData fine = principal_eigenpair(assemble_laplacian(build_grid(99, 1.0)));
        out.push_back(detail::record_le("eigen_continuum_limit",
                                        "principal eigenvalue approaches pi^2 at n = 99",
                                        std::abs(fine.lambda1 - pi * pi), 0.01));
        out.push_back(detail::record(
            "eigvec_positive", "principal eigenvector strictly positive with sup-norm one",
            disc.spectral.phi1.minCoeff(), 0.0,
            disc.spectral.phi1.minCoeff() > 0.0 &&
                std::abs(disc.spectral.phi1.maxCoeff() - 1.0) < 1e-14));
        const double e1 =
            pi * pi - principal_eigenpair(assemble_laplacian(build_grid(24, 1.0))).lambda1;
        const double e2 =
            pi * pi - principal_eigenpair(assemble_laplacian(build_grid(49, 1.0))).lambda1;
        const double e3 =
            pi * pi - principal_eigenpair(assemble_laplacian(build_grid(99, 1.0))).lambda1;
        const bool rate_ok = e1 > e2 && e2 > e3 && e1 / e2 > 3.5 && e1 / e2 < 4.5 &&
                             e2 / e3 > 3.5 && e2 / e3 < 4.5;
        out.push_back(detail::record("eigen_h2_convergence",
                                     "eigenvalue climbs to pi^2 from below at second order",
                                     e1 / e2, 4.0, rate_ok));
        return out;
    });

    // -- birth operator -----------------------------------------------------
    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        const KreinRutmanResult kr1 = spectral_radius(disc, zero_potential(), ctx.b1);
        out.push_back(detail::record_le(
            "keystone_prey", "normalized prey birth operator has unit spectral radius",
            std::abs(kr1.radius - 1.0), spectral_tol));
        const KreinRutmanResult kr2 = spectral_radius(disc, zero_potential(), ctx.b2);
        out.push_back(detail::record_le(
            "keystone_predator", "normalized predator birth operator has unit spectral radius",
            std::abs(kr2.radius - 1.0), spectral_tol));
        return out;
    });

    tasks.push_back([&]() {
        double worst = 0.0;
        for (double c : {0.5, 1.0, 5.0}) {
            const Vector wb = birth_weights(ctx.b1, disc.age);
            double s = 0.0, decay = 1.0;
            const double base = 1.0 / (1.0 + disc.age.da * (disc.spectral.lambda1 + c));
            for (int k = 0; k <= disc.age.steps; ++k) {
                s += wb[k] * decay;
                decay *= base;
            }
            const KreinRutmanResult kr = spectral_radius(disc, constant_pot(c), ctx.b1);
            worst = std::max(worst, std::abs(kr.radius - s));
        }
        return std::vector<CheckRecord>{detail::record_le(
            "scalar_reduction",
            "constant-potential spectral radius matches the principal-mode recursion", worst,
            1e-10)};
    });

    tasks.push_back([&]() {
        std::mt19937_64 rng(seed ^ 0x51a9u);
        std::uniform_int_distribution<int> pick_k(0, disc.age.steps);
        std::uniform_int_distribution<int> pick_i(0, disc.n_space() - 1);
        double min_gap = std::numeric_limits<double>::infinity();
        const int pairs = 100;
        for (int trial = 0; trial < pairs; ++trial) {
            const AgeSpaceField h = random_field(rng, 1.0);
            AgeSpaceField g = h;
            for (int b = 0; b < 3; ++b) g.values()(pick_k(rng), pick_i(rng)) += 0.5;
            const double rh = spectral_radius(disc, h, ctx.b1).radius;
            const double rg = spectral_radius(disc, g, ctx.b1).radius;
            min_gap = std::min(min_gap, rh - rg);
        }
        return std::vector<CheckRecord>{detail::record_ge(
            "radius_monotonicity",
            "spectral radius strictly decreases when the potential increases (100 pairs)",
            min_gap, 1e-14)};
    });

    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        std::mt19937_64 rng(seed ^ 0xc0ffee);
        const AgeSpaceField h = random_field(rng, 1.0);
        const double r0 = spectral_radius(disc, h, ctx.b1).radius;
        double worst_ratio = 0.0;
        for (double eps : {1e-3, 1e-4}) {
            AgeSpaceField g = h;
            g.values().array() += eps;
            worst_ratio =
                std::max(worst_ratio, std::abs(spectral_radius(disc, g, ctx.b1).radius - r0) / eps);
        }
        out.push_back(detail::record_le(
            "radius_continuity", "spectral radius is Lipschitz in uniform potential shifts",
            worst_ratio, 2.0));

        BirthOperator op(disc, constant_pot(1.0), ctx.b1);
        const KreinRutmanResult kr = power_iteration(op, disc.spectral.phi1);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        double min_x = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            Vector rhs(disc.n_space());
            for (int i = 0; i < disc.n_space(); ++i) rhs[i] = dist(rng);
            const Vector x = resolve_on_operator(0.9 / kr.radius, op, kr.radius, rhs);
            min_x = std::min(min_x, x.minCoeff());
        }
        out.push_back(detail::record_ge("resolvent_positivity",
                                        "(1 - eta H)^{-1} maps nonnegative to nonnegative",
                                        min_x, -1e-12));
        return out;
    });

    // -- evolution ----------------------------------------------------------
    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        const double c = 1.7;
        const AgeSpaceField w = propagate_linear(disc, constant_pot(c), disc.spectral.phi1);
        double worst = 0.0;
        for (int k = 0; k <= disc.age.steps; ++k) {
            const double factor = std::pow(1.0 + disc.age.da * (disc.spectral.lambda1 + c), -k);
            worst = std::max(
                worst, (w.row(k) - factor * disc.spectral.phi1).lpNorm<Eigen::Infinity>());
        }
        out.push_back(detail::record_le(
            "eigenmode_exactness",
            "constant-potential flow follows the scalar recursion on the principal mode", worst,
            1e-12));

        std::mt19937_64 rng(seed ^ 0xabcdefu);
        const AgeSpaceField h = random_field(rng, 2.0);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        Vector phi0(disc.n_space());
        for (int i = 0; i < disc.n_space(); ++i) phi0[i] = dist(rng);
        const AgeSpaceField flow = propagate_linear(disc, h, phi0);
        out.push_back(detail::record_ge("positivity_preservation",
                                        "nonnegative data stays nonnegative at every age row",
                                        flow.min_value(), -1e-12));

        Vector psi0 = phi0 * 0.5;
        const AgeSpaceField big = propagate_linear(disc, h, phi0);
        const AgeSpaceField small = propagate_linear(disc, h, psi0);
        out.push_back(detail::record_ge("monotone_initial_data",
                                        "larger initial data gives a larger flow everywhere",
                                        (big.values() - small.values()).minCoeff(), -1e-13));

        const AgeSpaceField f = random_field(rng, 1.0);
        const AgeSpaceField with = propagate_logistic(disc, phi0, mp.alpha1, &f);
        const AgeSpaceField without = propagate_logistic(disc, phi0, mp.alpha1);
        out.push_back(detail::record_ge(
            "comparison_source_dominance",
            "a nonnegative source dominates the source-free logistic flow pointwise",
            (with.values() - without.values()).minCoeff(), -1e-13));
        return out;
    });

    // -- semi-trivial branches ----------------------------------------------
    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        std::mt19937_64 rng(seed ^ 0x7777u);
        std::uniform_real_distribution<double> dist(0.05, 3.0);
        bool all_trivial = true;
        for (double eta : {0.5, 0.9}) {
            for (int trial = 0; trial < 5; ++trial) {
                Vector s(disc.n_space());
                for (int i = 0; i < disc.n_space(); ++i) s[i] = dist(rng);
                if (solve_semitrivial(disc, eta, mp.alpha1, ctx.b1, &s).nontrivial)
                    all_trivial = false;
            }
        }
        out.push_back(detail::record("dichotomy_subcritical",
                                     "strictly subcritical intensities only admit the trivial state",
                                     all_trivial ? 1.0 : 0.0, 1.0, all_trivial));

        double worst_consistency = 0.0;
        double worst_lower = std::numeric_limits<double>::infinity();
        double worst_upper = 0.0;
        double worst_trace = 0.0;
        bool all_nontrivial = true;
        for (double eta : {1.2, 2.0, 5.0}) {
            // the age-zero quadrature weight feeds the trace back with factor
            // eta·(da/2)·b(0); beyond ~1 the discrete problem degenerates, so
            // coarse runs only exercise the representable intensities
            if (eta * 0.5 * disc.age.da * ctx.b1.sup() > 0.9) continue;
            const SemiTrivialResult r = solve_semitrivial(disc, eta, mp.alpha1, ctx.b1);
            if (!r.nontrivial) {
                all_nontrivial = false;
                continue;
            }
            worst_consistency = std::max(worst_consistency, r.solution->consistency);
            const EnvelopeReport rep = verify_envelopes(disc, ctx.b1, *r.solution, slack);
            worst_lower = std::min(worst_lower, rep.lower_min_ratio);
            worst_upper = std::max(worst_upper, rep.upper_max_ratio);
            worst_trace = std::max(worst_trace, rep.trace_ratio);
        }
        out.push_back(detail::record(
            "dichotomy_supercritical",
            "supercritical intensities admit positive states with unit spectral identity",
            worst_consistency, consistency_tol,
            all_nontrivial && worst_consistency <= consistency_tol));
        out.push_back(detail::record_ge("envelope_lower",
                                        "positive states dominate the principal-mode lower envelope",
                                        worst_lower, 1.0 - slack));
        out.push_back(detail::record_le("envelope_upper",
                                        "sup-norms stay under the logistic decay envelope",
                                        worst_upper, 1.0 + slack));
        out.push_back(detail::record_le(
            "envelope_trace_log",
            "the age-zero trace obeys the logarithmic birth-integral bound", worst_trace,
            1.0 + slack));
        return out;
    });

    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        std::mt19937_64 rng(seed ^ 0x1234u);
        std::uniform_real_distribution<double> dist(0.05, 20.0);
        const SemiTrivialResult ref = solve_semitrivial(disc, 2.0, mp.alpha1, ctx.b1);
        double spread = 0.0;
        bool ok = ref.nontrivial;
        for (int trial = 0; trial < 5 && ok; ++trial) {
            Vector s(disc.n_space());
            for (int i = 0; i < disc.n_space(); ++i) s[i] = dist(rng);
            const SemiTrivialResult r = solve_semitrivial(disc, 2.0, mp.alpha1, ctx.b1, &s);
            if (!r.nontrivial) ok = false;
            else
                spread = std::max(spread, (r.solution->trace - ref.solution->trace)
                                              .lpNorm<Eigen::Infinity>());
        }
        out.push_back(detail::record("uniqueness_multiseed",
                                     "random seeds converge to one positive state", spread, 1e-8,
                                     ok && spread <= 1e-8));

        const SemiTrivialResult u15 = solve_semitrivial(disc, 1.5, mp.alpha1, ctx.b1);
        const SemiTrivialResult u20 = solve_semitrivial(disc, 2.0, mp.alpha1, ctx.b1);
        const SemiTrivialResult u40 = solve_semitrivial(disc, 4.0, mp.alpha1, ctx.b1);
        const bool mono =
            u15.nontrivial && u20.nontrivial && u40.nontrivial &&
            (u20.solution->field.values() - u15.solution->field.values()).minCoeff() >= -1e-10 &&
            (u40.solution->field.values() - u20.solution->field.values()).minCoeff() >= -1e-10;
        out.push_back(detail::record("monotone_in_intensity",
                                     "the positive branch is pointwise increasing in its intensity",
                                     mono ? 1.0 : 0.0, 1.0, mono));
        return out;
    });

    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        double min_entry = std::numeric_limits<double>::infinity();
        double worst_gap = 0.0;
        bool ok = true;
        for (double eta : {1.5, 3.0}) {
            const SemiTrivialResult r = solve_semitrivial(disc, eta, mp.alpha1, ctx.b1);
            if (!r.nontrivial) {
                ok = false;
                continue;
            }
            const AgeSpaceField z = derivative_wrt_param(disc, ctx.b1, *r.solution);
            min_entry = std::min(min_entry, z.min_value());
            const double eps = 1e-4;
            const auto rp =
                solve_semitrivial(disc, eta + eps, mp.alpha1, ctx.b1, &r.solution->trace);
            const auto rm =
                solve_semitrivial(disc, eta - eps, mp.alpha1, ctx.b1, &r.solution->trace);
            if (!rp.nontrivial || !rm.nontrivial) {
                ok = false;
                continue;
            }
            const double gap = ((rp.solution->field.values() - rm.solution->field.values()) /
                                    (2.0 * eps) -
                                z.values())
                                   .cwiseAbs()
                                   .maxCoeff() /
                               std::max(1.0, z.sup_norm());
            worst_gap = std::max(worst_gap, gap);
        }
        out.push_back(detail::record("derivative_positive",
                                     "the intensity derivative of the branch is strictly positive",
                                     min_entry, 0.0, ok && min_entry > 0.0));
        out.push_back(detail::record("derivative_fd_agreement",
                                     "the derivative matches central finite differences",
                                     worst_gap, 1e-4, ok && worst_gap <= 1e-4));
        return out;
    });

    // -- bifurcation values --------------------------------------------------
    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        double prev = 1.0;
        double worst_res = 0.0;
        bool dec = true, in_range = true;
        for (double eta : {1.2, 1.5, 2.0, 3.0}) {
            const BifurcationPoint bp = compute_xi0(disc, eta, mp, ctx.b1, ctx.b2);
            if (!(bp.value > 0.0 && bp.value < 1.0)) in_range = false;
            if (!(bp.value < prev)) dec = false;
            prev = bp.value;
            worst_res = std::max(worst_res, bp.spectral_residual);
        }
        out.push_back(detail::record(
            "xi0_structure", "predator onset values lie in (0,1) and decrease in the prey intensity",
            worst_res, spectral_tol, dec && in_range && worst_res <= spectral_tol));

        prev = 1.0;
        worst_res = 0.0;
        bool inc = true;
        in_range = true;
        for (double xi : {1.2, 1.5, 2.0, 3.0}) {
            const BifurcationPoint bp = compute_eta0(disc, xi, mp, ctx.b1, ctx.b2);
            if (!(bp.value > 1.0)) in_range = false;
            if (!(bp.value > prev)) inc = false;
            prev = bp.value;
            worst_res = std::max(worst_res, bp.spectral_residual);
        }
        out.push_back(detail::record(
            "eta0_structure", "prey onset values exceed 1 and increase in the predator intensity",
            worst_res, spectral_tol, inc && in_range && worst_res <= spectral_tol));

        const LimitEstimates le = estimate_limits(disc, ctx.cfg.run.eta_max, ctx.cfg.run.xi_max,
                                                  mp, ctx.b1, ctx.b2, 5);
        bool trend = le.n_lower > 1.0 && le.delta_upper < 1.0;
        for (size_t j = 1; j < le.r_prey_vs_xi.size() && trend; ++j)
            trend = le.r_prey_vs_xi[j].second < le.r_prey_vs_xi[j - 1].second;
        for (size_t j = 1; j < le.r_predator_vs_eta.size() && trend; ++j)
            trend = le.r_predator_vs_eta[j].second > le.r_predator_vs_eta[j - 1].second;
        out.push_back(detail::record("limit_bound_trends",
                                     "spectral-radius trends behind the limit bounds are monotone",
                                     le.n_lower, 1.0, trend));
        return out;
    });

    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        double worst = 0.0;
        double min_psi0 = std::numeric_limits<double>::infinity();
        for (double eta : {1.3, 2.0}) {
            const KernelBasis kb = kernel_basis_xi(disc, eta, mp, ctx.b1, ctx.b2);
            worst = std::max(worst, kb.eigen_residual);
            min_psi0 = std::min(min_psi0, kb.psi0.minCoeff());
        }
        try {
            const KernelBasis kb =
                kernel_basis_eta(disc, 0.9, ctx.cfg.run.eta_max, mp, ctx.b1, ctx.b2);
            worst = std::max(worst, kb.eigen_residual);
            min_psi0 = std::min(min_psi0, kb.psi0.minCoeff());
        } catch (const std::runtime_error&) {
            // eta1(0.9) above the bracket: acceptable for strongly coupled setups
        }
        out.push_back(detail::record(
            "kernel_residuals", "kernel bases reproduce themselves under the linearized map",
            worst, consistency_tol, worst <= consistency_tol && min_psi0 > 0.0));
        return out;
    });

    // -- coexistence branch --------------------------------------------------
    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        ContinuationOptions opts;
        opts.step0 = 0.05;
        opts.param_limit = ctx.cfg.run.xi_max;
        opts.point_cap = 200;
        const double eta = 1.3;
        const Branch br = continue_branch(disc, BranchKind::B3_in_xi, eta, mp, ctx.b1, ctx.b2, opts);

        bool right = true;
        double prev = br.anchor_value;
        for (const BranchPoint& pt : br.points) {
            if (!(pt.param > br.anchor_value) || !(pt.param > prev)) right = false;
            prev = pt.param;
        }
        out.push_back(detail::record("branch_right_bifurcation",
                                     "every coexistence branch point lies beyond its onset value",
                                     br.points.empty() ? 0.0 : br.points.front().param -
                                                                   br.anchor_value,
                                     0.0, right && !br.points.empty()));

        const SemiTrivialResult u_eta = solve_semitrivial(disc, eta, mp.alpha1, ctx.b1);
        bool member_ok = u_eta.nontrivial;
        double worst_env = 0.0;
        ModelParams pp = mp;
        pp.eta = eta;
        const size_t stride = std::max<size_t>(1, br.points.size() / 6);
        for (size_t idx = 0; idx < br.points.size() && member_ok; idx += stride) {
            const BranchPoint& pt = br.points[idx];
            pp.xi = pt.param;
            auto [u, v] = propagate_coupled(disc, pt.trace_u, pt.trace_v, pp);
            CoexistenceSolution sol;
            sol.eta = eta;
            sol.xi = pt.param;
            sol.u = u;
            sol.v = v;
            sol.trace_u = pt.trace_u;
            sol.trace_v = pt.trace_v;
            if ((u.values() - u_eta.solution->field.values()).maxCoeff() >
                1e-6 * (1.0 + u_eta.solution->field.sup_norm()))
                member_ok = false;
            if (pt.param > 1.0) {
                const SemiTrivialResult v_xi =
                    solve_semitrivial_predator(disc, pt.param, mp.beta1, ctx.b2);
                if (!v_xi.nontrivial ||
                    !ordering_check(sol, u_eta.solution->field, v_xi.solution->field, 1e-6)
                         .all_ok())
                    member_ok = false;
            }
            const double r_h =
                spectral_radius(disc, u_eta.solution->field.scaled(-mp.beta2), ctx.b2).radius;
            if (pt.param < 1.0 / r_h - consistency_tol) member_ok = false;
            const CoexistEnvelopeReport env =
                envelope_check(disc, ctx.b2, sol, mp.beta1, mp.beta2, slack);
            worst_env = std::max(worst_env, env.max_ratio);
            if (!env.all_ok()) member_ok = false;
        }
        out.push_back(detail::record(
            "branch_membership",
            "branch points satisfy the ordering, parameter, and envelope constraints", worst_env,
            1.0 + slack, member_ok));

        const auto xi1 = compute_xi1(disc, eta, ctx.cfg.run.xi_max, mp, ctx.b1, ctx.b2);
        const bool joined = br.termination == Termination::joined_B1 && xi1.has_value();
        const double join_gap = joined ? std::abs(br.terminal_param - xi1->value) : 1.0;
        out.push_back(detail::record("branch_join_agreement",
                                     "the branch terminus matches the join value from bisection",
                                     join_gap, 1e-2, joined && join_gap <= 1e-2));

        bool residuals_ok = true;
        for (const BranchPoint& pt : br.points)
            if (pt.residual > 1e-8) residuals_ok = false;
        out.push_back(detail::record("branch_residuals",
                                     "stored branch points re-validate their shooting residual",
                                     br.points.empty() ? 1.0 : br.points.back().residual, 1e-8,
                                     residuals_ok));
        return out;
    });

    tasks.push_back([&]() {
        std::vector<CheckRecord> out;
        const BifurcationPoint bp = compute_xi0(disc, 2.0, mp, ctx.b1, ctx.b2);
        const KernelBasis kb = detail::kernel_on_prey_background(disc, 2.0, bp.value,
                                                                 bp.anchored.field, mp, ctx.b1,
                                                                 ctx.b2);
        const double eps = 0.1 * bp.anchored.field.sup_norm() / kb.phi_star.sup_norm();
        const Vector seed_u = (bp.anchored.trace - eps * kb.phi0).cwiseMax(0.0);
        const Vector seed_v = eps * kb.psi0;
        const CoexistResult r = solve_coexistence(disc, 2.0, bp.value + 0.1, mp, ctx.b1, ctx.b2,
                                                  seed_u, seed_v);
        bool ok = r.cls == CoexistClass::coexistence;
        double rep_gap = 1.0;
        if (ok) {
            ModelParams pp = mp;
            pp.eta = 2.0;
            pp.xi = r.solution->xi;
            auto [u2, v2] = propagate_coupled(disc, r.solution->trace_u, r.solution->trace_v, pp);
            rep_gap = std::max((u2.values() - r.solution->u.values()).cwiseAbs().maxCoeff(),
                               (v2.values() - r.solution->v.values()).cwiseAbs().maxCoeff());
            ok = rep_gap <= 1e-10;
        }
        out.push_back(detail::record("coexist_residual_symmetry",
                                     "a converged coexistence state re-propagates from its traces",
                                     rep_gap, 1e-10, ok));
        return out;
    });

    // run all tasks, preserving record order
    std::vector<std::vector<CheckRecord>> results(tasks.size());
    detail::parallel_for_index(static_cast<int>(tasks.size()), ctx.parallel, [&](int i) {
        const auto t0 = std::chrono::steady_clock::now();
        results[i] = tasks[i]();
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (auto& r : results[i]) r.seconds = dt / results[i].size();
    });

    RunReport report;
    for (auto& group : results)
        for (auto& r : group) report.records.push_back(std::move(r));
    report.config_echo = config_echo_json(ctx.cfg).dump();
    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

inline int run_verify(const HarnessContext& ctx, const std::filesystem::path& out_dir,
                      std::ostream& log) {
    const RunReport report = verify_suite(ctx);
    for (const auto& r : report.records) {
        log << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  measured=" << r.measured
            << " tolerance=" << r.tolerance << "  (" << r.claim << ")\n";
    }
    log << (report.all_pass() ? "verification suite green" : "verification failures present")
        << " in " << report.total_seconds << " s\n";
    write_json(out_dir / "verify_report.json", to_json(report));
    return report.all_pass() ? exit_ok : exit_verification_failures;
}

/// Dispatch by mode name; creates the output directory.
inline int run_mode(const std::string& mode, const HarnessContext& ctx,
                    const std::filesystem::path& out_dir, std::ostream& log) {
    std::filesystem::create_directories(out_dir);
    if (mode == "eigen") return run_eigen(ctx, out_dir, log);
    if (mode == "semitrivial") return run_semitrivial(ctx, out_dir, log);
    if (mode == "bifpoints") return run_bifpoints(ctx, out_dir, log);
    if (mode == "continue") return run_continue(ctx, out_dir, log);
    if (mode == "diagram") return run_diagram(ctx, out_dir, log);
    if (mode == "verify") return run_verify(ctx, out_dir, log);
    throw ConfigError("unknown mode '" + mode + "'");
}

}  // namespace agebif
