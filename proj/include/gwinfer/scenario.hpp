#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gwinfer/adaptive.hpp"
#include "gwinfer/fields.hpp"
#include "gwinfer/forward.hpp"

namespace gwinfer::cli {

/// Fully validated run description. Parsing applies scenario defaults,
/// rejects unknown keys and reports every violation at once; serialization is
/// canonical so parse/serialize round-trips are stable.
struct RunConfig {
    std::string scenario = "synthetic-smoke";
    std::string method = "b-pce-gp"; // Table-2 label or "high-fidelity"
    std::uint64_t seed = 20240801;
    std::string likelihood = "gaussian";
    double noise_std = 0.01;

    fields::GridSpec grid{41, 21, 20.0, 10.0};
    forward::FlowConfig flow;
    forward::TransportConfig transport;

    struct FieldSection {
        double variance = 0.4;
        double corr_len_x = 10.0;
        double corr_len_y = 5.0;
        std::string kernel = "separable-exponential";
        double mean = 2.0;
        int kl_terms = 20;
    } field;

    mcmc::McmcConfig mcmc; // high-fidelity MCMC settings

    struct AdaptiveSection {
        int n_initial = 40;
        int n_add = 10;
        int n_iterations = 10;
        std::string design_rule = "random"; // random | stretch | quintile
        double stretch_factor = 1.1;
        int subset_max = 0; // 0 = off
        mcmc::McmcConfig mcmc;
    } adaptive;

    pce::PceFitConfig pce;
    gp::GpFitConfig gp;

    struct StrategyASection {
        int ensemble_size = 50;
        std::string mode = "variance-inflation"; // or "realization-injection"
    } strategy_a;

    /// Only read for scenario = "custom": a pulse source problem with
    /// user-chosen wells, times, prior box and truth.
    struct CustomSection {
        double k_known = 8.0;
        std::vector<double> source_x_range = {3.0, 5.0};
        std::vector<double> source_y_range = {4.0, 6.0};
        std::vector<double> rate_range = {10.0, 13.0};
        double t_on = 2.0;
        double t_off = 6.0;
        std::vector<double> well_x = {8.0, 12.0, 12.0};
        std::vector<double> well_y = {5.0, 3.5, 6.5};
        std::vector<double> conc_times = {6.0, 9.0, 12.0};
        std::vector<double> truth = {4.1, 5.3, 11.5};
    } custom;

    static RunConfig parse(const std::string& json_text);
    static RunConfig parse_file(const std::filesystem::path& path);
    std::string serialize() const;
    bool operator==(const RunConfig& other) const { return serialize() == other.serialize(); }

    adaptive::AdaptiveConfig adaptive_config() const;
};

/// A self-contained inverse problem: prior, deterministic forward model,
/// synthesized noisy data and (for synthetic truths) the true parameters.
struct Scenario {
    Prior prior;
    adaptive::ForwardFn forward;
    Eigen::VectorXd data;
    Eigen::VectorXd noise_std;
    std::optional<Eigen::VectorXd> m_true;
    std::optional<Eigen::VectorXd> f_true; // noiseless outputs at m_true
    std::vector<std::string> param_names;
};

Scenario build_scenario(const RunConfig& cfg);

struct RunArtifacts {
    std::filesystem::path dir;
    long hf_evaluations = 0;
    double acceptance_rate = 0.0;
    double max_r_hat = 0.0;
    std::vector<adaptive::IterationRecord> records;
};

/// Synthesize truth and data, run the chosen method, write chains.csv,
/// design_points.csv, iteration_records.jsonl, posterior_summary.json,
/// densities.csv and metadata.json (all atomically).
RunArtifacts run_scenario(const RunConfig& cfg, const std::filesystem::path& out_dir,
                          bool resume = false);

/// Recompute posterior_summary.json and densities.csv from chains.csv.
void summarize_dir(const std::filesystem::path& dir);

/// Per-parameter mean/std deltas and density-overlap scores; writes
/// compare.json into dir_a and returns a printable summary.
std::string compare_dirs(const std::filesystem::path& dir_a, const std::filesystem::path& dir_b);

} // namespace gwinfer::cli
