// Command-line front end: steady states and bifurcation diagrams for the
// two-species age-structured system with nonlocal birth conditions.

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "agebif/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{
        "agebif - steady states and bifurcation diagrams for an age-structured "
        "predator-prey system"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    bool parallel = false;
    uint64_t seed = 0;

    const std::vector<std::string> modes = {"eigen",    "semitrivial", "bifpoints",
                                            "continue", "diagram",     "verify"};
    const std::vector<std::string> descriptions = {
        "principal eigenpair of the discrete Dirichlet Laplacian",
        "sample the single-species branches",
        "compute onset and join parameter values",
        "continue one coexistence branch",
        "full diagram: bifurcation points, branches, semi-trivial samples",
        "run the verification suite (exit 3 on failures)"};
    for (size_t i = 0; i < modes.size(); ++i) {
        CLI::App* sub = app.add_subcommand(modes[i], descriptions[i]);
        sub->add_option("--config", config_path, "scenario configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (default: from config)");
        sub->add_flag("--parallel", parallel, "run independent parameter points concurrently");
        sub->add_option("--seed", seed, "seed for randomized property trials");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string mode = app.get_subcommands().front()->get_name();

    try {
        const agebif::ScenarioConfig cfg = agebif::load_config(config_path);
        const agebif::HarnessContext ctx = agebif::make_context(cfg, parallel, seed);
        const std::string dir = out_dir.empty() ? cfg.output.directory : out_dir;
        return agebif::run_mode(mode, ctx, dir, std::cout);
    } catch (const agebif::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return agebif::exit_validation_error;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return agebif::exit_validation_error;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return agebif::exit_solver_failure;
    }
}
