#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gwinfer/prior.hpp"

namespace gwinfer::mcmc {

/// Log posterior density. Deterministic for fixed inputs unless an
/// injection-mode error strategy is active; then deterministic given the
/// step's RNG substream.
using LogDensity = std::function<double(const Eigen::VectorXd&, RngStream&)>;

double gaussian_log_likelihood(const Eigen::VectorXd& model_out, const Eigen::VectorXd& data,
                               const Eigen::VectorXd& noise_std);

/// -(N_y/2) log(sum of squared residuals); zero SSE is clamped to 1e-300.
double informal_log_likelihood(const Eigen::VectorXd& model_out, const Eigen::VectorXd& data);

/// Metropolis rule: accept with probability min(1, exp(log_new - log_old)).
bool metropolis_accept(double log_new, double log_old, RngStream& rng);

struct McmcConfig {
    int n_chains = 10;
    int n_generations = 3000;
    double p_snooker = 0.1;
    int archive_thin = 10; // archive grows every k generations
    int gamma_unit_period = 5;
    double jitter_width = 0.05;   // e ~ U(-width, width)
    double eps_jump_std = 1e-12;  // per-dimension N(0, eps^2)
    double snooker_gamma_lo = 1.2;
    double snooker_gamma_hi = 2.2;
    int initial_archive = 0; // 0 = max(10*dim, 3*n_chains)
    double discard_frac = 0.5;
};

/// Multi-walker trajectory plus the thinned archive used for proposals.
struct Chains {
    int n_chains = 0;
    int dim = 0;
    std::uint64_t seed = 0;
    std::vector<Eigen::MatrixXd> states;    // per chain: generations x dim
    std::vector<Eigen::VectorXd> log_posts; // per chain: generations
    Eigen::MatrixXd archive;                // rows are archived states
    Eigen::VectorXd acceptance_rate;        // per chain

    int n_generations() const {
        return states.empty() ? 0 : static_cast<int>(states.front().rows());
    }
    /// All post-burn-in samples stacked (chain-major, step-minor) with log-posts.
    std::pair<Eigen::MatrixXd, Eigen::VectorXd> retained(double discard_frac) const;

    std::string to_csv() const;
};

struct Proposal {
    Eigen::VectorXd candidate;
    /// Snooker moves carry a (d-1) log |x*-z|/|x-z| Metropolis correction.
    double log_correction = 0.0;
};

/// DREAM_(ZS)-style candidate: parallel-direction jump over a random crossover
/// subset with probability 1-p_snooker, snooker update along the line through
/// the current state and a random archive point otherwise.
Proposal propose(const Eigen::VectorXd& current, const Eigen::MatrixXd& archive, RngStream& rng,
                 const McmcConfig& cfg, int generation);

struct WarmStart {
    std::vector<Eigen::VectorXd> states;
    Eigen::MatrixXd archive;
};

Chains run_mcmc(const LogDensity& target, const Prior& prior, const McmcConfig& cfg,
                std::uint64_t seed, const std::optional<WarmStart>& warm = std::nullopt);

struct GelmanRubinResult {
    Eigen::VectorXd r_hat;
    std::vector<bool> degenerate; // zero within-chain variance, all chains equal
};

GelmanRubinResult gelman_rubin(const Chains& chains, double discard_frac);

} // namespace gwinfer::mcmc
