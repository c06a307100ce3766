#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gwinfer/scenario.hpp"
#include "json.hpp"

namespace {

void print_error(const std::string& kind, const std::string& message) {
    nlohmann::json err;
    err["error"] = kind;
    err["message"] = message;
    std::cerr << err.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive surrogate-based Bayesian inversion for groundwater problems"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs/latest";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool resume = false;
    bool full_grid = false;
    bool long_run = false;

    auto* run = app.add_subcommand("run", "Run a scenario from a JSON config");
    run->add_option("config", config_path, "Path to the run config (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory for run artifacts");
    run->add_option("--seed", seed, "Override the config seed")->each([&](const std::string&) {
        seed_set = true;
    });
    run->add_flag("--resume", resume, "Continue an interrupted adaptive run in --out");
    run->add_flag("--full-grid", full_grid, "Use the full 81x41 grid");
    run->add_flag("--long", long_run, "Use the paper-scale chain settings for example 1");

    std::string summarize_dir_path;
    auto* summarize = app.add_subcommand("summarize", "Recompute posterior summaries for a run");
    summarize->add_option("dir", summarize_dir_path, "Run directory")->required();

    std::string dir_a, dir_b;
    auto* compare = app.add_subcommand("compare", "Compare the posteriors of two runs");
    compare->add_option("dirA", dir_a, "First run directory")->required();
    compare->add_option("dirB", dir_b, "Second run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            gwinfer::cli::RunConfig cfg = gwinfer::cli::RunConfig::parse_file(config_path);
            if (seed_set) cfg.seed = seed;
            if (full_grid) {
                cfg.grid.nx = 81;
                cfg.grid.ny = 41;
            }
            if (long_run) {
                cfg.mcmc.n_chains = 15;
                cfg.mcmc.n_generations = 60000;
                cfg.adaptive.n_initial = 200;
                cfg.adaptive.n_add = 20;
                cfg.adaptive.n_iterations = 25;
            }
            const auto art = gwinfer::cli::run_scenario(cfg, out_dir, resume);
            std::cout << "run complete: " << art.dir.string() << "\n"
                      << "  high-fidelity evaluations: " << art.hf_evaluations << "\n"
                      << "  mean acceptance rate: " << art.acceptance_rate << "\n"
                      << "  max R-hat: " << art.max_r_hat << "\n";
        } else if (summarize->parsed()) {
            gwinfer::cli::summarize_dir(summarize_dir_path);
            std::cout << "summaries written to " << summarize_dir_path << "\n";
        } else if (compare->parsed()) {
            std::cout << gwinfer::cli::compare_dirs(dir_a, dir_b);
        }
    } catch (const gwinfer::Error& e) {
        print_error(e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 2;
    }
    return 0;
}
