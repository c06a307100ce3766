#pragma once

#include <Eigen/Core>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gwinfer/error_strategy.hpp"
#include "gwinfer/mcmc.hpp"
#include "gwinfer/surrogate.hpp"

namespace gwinfer::adaptive {

using ForwardFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Forward-model wrapper that counts high-fidelity evaluations. The budget
/// claim (exactly N_ini + N_a * I_max calls) is asserted against this counter.
class CountingForward {
public:
    explicit CountingForward(ForwardFn fn) : fn_(std::move(fn)) {}
    Eigen::VectorXd operator()(const Eigen::VectorXd& m) const {
        ++count_;
        return fn_(m);
    }
    long count() const { return count_.load(); }

private:
    ForwardFn fn_;
    mutable std::atomic<long> count_{0};
};

enum class Likelihood { Gaussian, Informal };

struct DesignRule {
    enum class Kind { Random, Stretch, Quintile };
    Kind kind = Kind::Random;
    double stretch_factor = 1.1;

    static DesignRule random() { return {Kind::Random, 1.0}; }
    static DesignRule stretch(double factor) { return {Kind::Stretch, factor}; }
    static DesignRule quintile() { return {Kind::Quintile, 1.0}; }
};

struct AdaptiveConfig {
    int n_initial = 40;
    int n_add = 10;
    int n_iterations = 10;
    errors::ErrorStrategy strategy;
    DesignRule design_rule;
    std::optional<int> subset_max; // off by default
    mcmc::McmcConfig mcmc;
    pce::PceFitConfig pce;
    gp::GpFitConfig gp;
    Likelihood likelihood = Likelihood::Gaussian;

    void validate(int dim) const {
        require(n_initial >= dim + 2, "invalid-config", "n_initial must be >= dim + 2");
        require(n_add >= 1, "invalid-config", "n_add must be >= 1");
        require(n_iterations >= 0, "invalid-config", "n_iterations must be >= 0");
        require(design_rule.stretch_factor >= 1.0, "invalid-config",
                "stretch factor must be >= 1");
        strategy.validate();
        require(!(strategy.variant == errors::Variant::A &&
                  strategy.mode == errors::Mode::VarianceInflation &&
                  likelihood == Likelihood::Informal),
                "invalid-config",
                "variance inflation needs a Gaussian likelihood; use realization injection");
    }
};

struct IterationRecord {
    int iteration = 0;
    Eigen::MatrixXd added_points; // 0 rows at iteration 0
    double surrogate_quality = 0.0; // max PCE corrected-LOO or mean GP nlml
    Eigen::VectorXd posterior_mean;
    Eigen::VectorXd posterior_std;
    std::optional<double> err; // Eq.-21-style indicator when truth is known
    double acceptance_rate = 0.0;
    double max_r_hat = 0.0;
    long hf_evaluations = 0;

    std::string to_json() const;
    static IterationRecord from_json(const std::string& line);
};

struct AdaptiveResult {
    mcmc::Chains chains;
    TrainingSet training;
    std::vector<IterationRecord> records;
    long hf_evaluations = 0;
    std::string abort_error; // empty on success; partial records retained
};

/// Noise-normalized RMS discrepancy between surrogate and high-fidelity
/// outputs: sqrt((1/N_y) sum ((f_j - fhat_j)/sigma_j)^2).
double error_indicator(const Eigen::VectorXd& surrogate_out, const Eigen::VectorXd& hf_out,
                       const Eigen::VectorXd& noise_std);
double error_indicator(const Surrogate& surrogate, const Eigen::VectorXd& m_true,
                       const ForwardFn& forward, const Eigen::VectorXd& noise_std);

/// Posterior-driven design points from retained chain states.
/// random: uniform draws without replacement; stretch: the same draws rescaled
/// about the retained mean; quintile: max-log-density state plus per-quintile
/// maximin picks in the prior-normalized metric.
Eigen::MatrixXd select_design_points(const mcmc::Chains& chains, int n, const DesignRule& rule,
                                     const Prior& prior, RngStream& rng,
                                     double discard_frac = 0.5,
                                     const Eigen::MatrixXd& avoid = Eigen::MatrixXd());

/// Keep the max_n points with the highest Gaussian log-likelihood score
/// against the measurements; ties break by insertion order.
TrainingSet subset_training(const TrainingSet& ts, const Eigen::VectorXd& data,
                            const Eigen::VectorXd& noise_std, int max_n);

/// Initial states (and archive) for the next MCMC run, drawn without
/// replacement from the thinned post-burn-in history of the previous one.
mcmc::WarmStart warm_start_states(const mcmc::Chains& prev, int n_chains, RngStream& rng,
                                  double discard_frac = 0.5, int thin = 10);

/// The fitted pieces one iteration of Algorithm 1 produces.
struct FittedStrategy {
    SurrogatePtr mean_surrogate; // corrected surrogate for B, primary otherwise
    mcmc::LogDensity log_likelihood;
    double quality = 0.0;
};

FittedStrategy fit_strategy(const TrainingSet& training, const Prior& prior,
                            const AdaptiveConfig& cfg, const Eigen::VectorXd& data,
                            const Eigen::VectorXd& noise_std, std::uint64_t seed);

/// State needed to continue an interrupted run; per-iteration RNG substreams
/// make the continuation identical to an uninterrupted run.
struct ResumeState {
    TrainingSet training;
    mcmc::Chains chains;
    std::vector<IterationRecord> records;
};

/// Algorithm-1 loop: initial prior design, fit + surrogate MCMC, then
/// n_iterations rounds of posterior-drawn design points, refit and
/// warm-started re-sampling. Exactly n_initial + n_add * n_iterations
/// high-fidelity evaluations are performed.
AdaptiveResult run_adaptive(const ForwardFn& forward, const Prior& prior,
                            const Eigen::VectorXd& data, const Eigen::VectorXd& noise_std,
                            const AdaptiveConfig& cfg, std::uint64_t seed,
                            const std::optional<Eigen::VectorXd>& m_true = std::nullopt,
                            const std::optional<Eigen::VectorXd>& f_true = std::nullopt,
                            const std::optional<ResumeState>& resume = std::nullopt);

} // namespace gwinfer::adaptive
