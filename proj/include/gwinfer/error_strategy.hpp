#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "gwinfer/gp.hpp"
#include "gwinfer/pce.hpp"
#include "gwinfer/surrogate.hpp"

namespace gwinfer::errors {

enum class Variant { None, A, B };
enum class Mode { VarianceInflation, RealizationInjection };
enum class Kind { PCE, GP };

/// Which surrogate-error treatment runs, keyed by the run-config labels
/// none-pce, none-gp, a-pce, a-gp, b-pce-gp, b-pce-pce, b-gp-pce, b-gp-gp.
struct ErrorStrategy {
    Variant variant = Variant::None;
    Kind primary = Kind::PCE;
    Kind secondary = Kind::GP; // Strategy B only
    int ensemble_size = 50;    // Q, Strategy A with a PCE primary
    Mode mode = Mode::VarianceInflation;

    static ErrorStrategy parse(const std::string& label);
    std::string label() const;

    void validate() const {
        require(variant != Variant::A || ensemble_size >= 2, "invalid-config",
                "Strategy A needs ensemble_size >= 2");
    }
};

/// Surrogate approximation mean and variance at one point.
struct PredictiveEnvelope {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance; // >= 0
};

/// Q posterior draws of the retained PCE coefficients from the conjugate
/// normal-inverse-gamma linear-regression posterior (noninformative prior).
class PceCoefficientEnsemble {
public:
    PceCoefficientEnsemble(std::shared_ptr<const pce::PceSurrogate> primary,
                           std::vector<Eigen::MatrixXd> draws)
        : primary_(std::move(primary)), draws_(std::move(draws)) {}

    int ensemble_size() const {
        return draws_.empty() ? 0 : static_cast<int>(draws_.front().rows());
    }
    /// Prediction of every ensemble member at m: Q x N_y.
    Eigen::MatrixXd member_predictions(const Eigen::VectorXd& m) const;

    const pce::PceSurrogate& primary() const { return *primary_; }

private:
    std::shared_ptr<const pce::PceSurrogate> primary_;
    std::vector<Eigen::MatrixXd> draws_; // per output: Q x n_terms
};

PceCoefficientEnsemble strategy_a_posterior(std::shared_ptr<const pce::PceSurrogate> primary,
                                            const TrainingSet& training, int ensemble_size,
                                            std::uint64_t seed);

/// Envelope across ensemble member predictions (population 1/Q variance).
PredictiveEnvelope strategy_a_envelope(const PceCoefficientEnsemble& ensemble,
                                       const Eigen::VectorXd& m);
/// GP path: the native predictive is the analytic envelope.
PredictiveEnvelope strategy_a_envelope(const gp::GpSurrogate& surrogate, const Eigen::VectorXd& m);

/// Gaussian log-likelihood with the surrogate approximation variance folded
/// into the total variance (inflation mode). Injection mode instead adds a
/// random envelope realization to the mean and keeps the measurement noise.
double strategy_a_loglik(const PredictiveEnvelope& envelope, const Eigen::VectorXd& data,
                         const Eigen::VectorXd& noise_std, Mode mode, RngStream& rng);

/// Primary surrogate plus a secondary surrogate trained on the residuals
/// G_i = f(m_i) - fhat(m_i) at the existing design points.
class CorrectedSurrogate final : public Surrogate {
public:
    CorrectedSurrogate(SurrogatePtr primary, SurrogatePtr secondary)
        : primary_(std::move(primary)), secondary_(std::move(secondary)) {}

    int input_dim() const override { return primary_->input_dim(); }
    int output_dim() const override { return primary_->output_dim(); }
    Eigen::VectorXd predict_mean(const Eigen::VectorXd& m) const override {
        return primary_->predict_mean(m) + secondary_->predict_mean(m);
    }

    const Surrogate& primary() const { return *primary_; }
    const Surrogate& secondary() const { return *secondary_; }

private:
    SurrogatePtr primary_;
    SurrogatePtr secondary_;
};

struct StrategyBConfig {
    pce::PceFitConfig pce;
    gp::GpFitConfig gp; // secondary GP runs at the default noise floor
};

/// Fit the secondary surrogate on residuals; no extra high-fidelity
/// evaluations are performed.
std::shared_ptr<CorrectedSurrogate> strategy_b_fit(SurrogatePtr primary,
                                                   const TrainingSet& training,
                                                   const Prior& prior, Kind secondary_kind,
                                                   const StrategyBConfig& cfg,
                                                   std::uint64_t seed);

Eigen::VectorXd corrected_predict(const CorrectedSurrogate& corrected, const Eigen::VectorXd& m);

} // namespace gwinfer::errors
