#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "gwinfer/prior.hpp"
#include "gwinfer/surrogate.hpp"

namespace gwinfer::gp {

/// Squared-exponential ARD hyperparameters; stored and optimized in log-space.
struct GpHyper {
    double log_signal_std = 0.0;
    Eigen::VectorXd log_lengthscales;
    double log_noise_std = std::log(1e-3);

    int dim() const { return static_cast<int>(log_lengthscales.size()); }
    double signal_std() const { return std::exp(log_signal_std); }
    double noise_std() const { return std::exp(log_noise_std); }
    Eigen::VectorXd lengthscales() const { return log_lengthscales.array().exp(); }
};

/// k(m, m') = sigma^2 exp(-1/2 sum ((m_n - m'_n)/l_n)^2).
double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpHyper& hyper);

/// Negative log marginal likelihood 1/2 log|K| + 1/2 y^T K^-1 y + N/2 log 2pi
/// with K = k(M,M) + sigma_n^2 I. Inputs are used exactly as given.
double gp_nlml(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& y, const GpHyper& hyper);
/// Same value plus the gradient w.r.t. (log sigma, log l_1..log l_d, log sigma_n).
double gp_nlml_grad(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& y, const GpHyper& hyper,
                    Eigen::VectorXd& grad);

struct GpFitConfig {
    int restarts = 5;
    double noise_floor = 1e-6; // standardized output units
    int max_iterations = 200;
};

class GpSurrogate final : public Surrogate {
public:
    /// One independent zero-mean GP per output component, shared input scaling.
    static std::shared_ptr<GpSurrogate> fit(const TrainingSet& training, const Prior& prior,
                                            const GpFitConfig& cfg, std::uint64_t seed);
    /// Rebuild with the given hyperparameters, no optimization.
    static std::shared_ptr<GpSurrogate> from_hyper(const TrainingSet& training,
                                                   const Prior& prior,
                                                   const std::vector<GpHyper>& hyper);

    int input_dim() const override { return static_cast<int>(scaled_inputs_.cols()); }
    int output_dim() const override { return static_cast<int>(hyper_.size()); }
    Eigen::VectorXd predict_mean(const Eigen::VectorXd& m) const override;
    Eigen::VectorXd predict_variance(const Eigen::VectorXd& m) const override;
    bool has_variance() const override { return true; }

    /// Mean and variance in one pass (destandardized).
    std::pair<Eigen::VectorXd, Eigen::VectorXd> predict(const Eigen::VectorXd& m) const;

    const GpHyper& hyper(int output) const { return hyper_[static_cast<std::size_t>(output)]; }
    double nlml(int output) const { return nlml_[static_cast<std::size_t>(output)]; }
    const std::vector<std::vector<double>>& fit_trajectory() const { return trajectory_; }

    std::string to_json() const;
    static std::shared_ptr<GpSurrogate> from_json(const std::string& text,
                                                  const TrainingSet& training);

private:
    friend struct GpBuilder;
    GpSurrogate() = default;
    void factorize();

    Prior prior_;
    Eigen::MatrixXd scaled_inputs_;             // N_t x dim in prior-unit space
    Eigen::MatrixXd std_outputs_;               // N_t x N_y standardized
    Eigen::VectorXd out_mean_, out_std_;        // standardization record
    std::vector<GpHyper> hyper_;                // per output
    std::vector<double> nlml_;                  // per output, at the fitted hyper
    std::vector<Eigen::MatrixXd> chol_;         // lower factors, rebuilt on load
    std::vector<Eigen::VectorXd> alpha_;        // K^-1 y per output
    std::vector<std::vector<double>> trajectory_;
};

} // namespace gwinfer::gp
