#include "gwinfer/error_strategy.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>

#include "gwinfer/mcmc.hpp"

namespace gwinfer::errors {

ErrorStrategy ErrorStrategy::parse(const std::string& label) {
    ErrorStrategy s;
    auto kind_of = [](const std::string& t) {
        require(t == "pce" || t == "gp", "invalid-config", "unknown surrogate kind: " + t);
        return t == "pce" ? Kind::PCE : Kind::GP;
    };
    if (label.rfind("none-", 0) == 0) {
        s.variant = Variant::None;
        s.primary = kind_of(label.substr(5));
    } else if (label.rfind("a-", 0) == 0) {
        s.variant = Variant::A;
        s.primary = kind_of(label.substr(2));
    } else if (label.rfind("b-", 0) == 0) {
        const std::string rest = label.substr(2);
        const auto dash = rest.find('-');
        require(dash != std::string::npos, "invalid-config",
                "Strategy B label needs primary and secondary kinds: " + label);
        s.variant = Variant::B;
        s.primary = kind_of(rest.substr(0, dash));
        s.secondary = kind_of(rest.substr(dash + 1));
    } else {
        fail("invalid-config", "unknown error-strategy label: " + label);
    }
    return s;
}

std::string ErrorStrategy::label() const {
    auto name = [](Kind k) { return k == Kind::PCE ? "pce" : "gp"; };
    switch (variant) {
    case Variant::None: return std::string("none-") + name(primary);
    case Variant::A: return std::string("a-") + name(primary);
    case Variant::B: return std::string("b-") + name(primary) + "-" + name(secondary);
    }
    return {};
}

Eigen::MatrixXd PceCoefficientEnsemble::member_predictions(const Eigen::VectorXd& m) const {
    const int n_out = primary_->output_dim();
    const int q = ensemble_size();
    Eigen::MatrixXd preds(q, n_out);
    for (int k = 0; k < n_out; ++k) {
        const auto& idx = primary_->retained_indices(k);
        Eigen::VectorXd psi(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j)
            psi[static_cast<Eigen::Index>(j)] =
                pce::eval_basis(primary_->basis_spec(), idx[j], m);
        preds.col(k) = draws_[static_cast<std::size_t>(k)] * psi;
    }
    return preds;
}

PceCoefficientEnsemble strategy_a_posterior(std::shared_ptr<const pce::PceSurrogate> primary,
                                            const TrainingSet& training, int ensemble_size,
                                            std::uint64_t seed) {
    require(ensemble_size >= 2, "invalid-config", "ensemble size must be >= 2");
    const int n = training.size();
    const int n_out = training.output_dim();

    std::vector<Eigen::MatrixXd> draws;
    for (int k = 0; k < n_out; ++k) {
        const auto& idx = primary->retained_indices(k);
        const int q = static_cast<int>(idx.size());
        require(n > q, "underdetermined",
                "coefficient posterior needs more points than retained terms");
        const Eigen::MatrixXd design =
            pce::eval_design(primary->basis_spec(), idx, training.inputs);
        const Eigen::VectorXd y = training.outputs.col(k);

        // Conjugate posterior with p(c, s2) ~ 1/s2:
        //   s2 | y ~ Inv-Gamma(nu/2, RSS/2),  c | s2, y ~ N(chat, s2 (A^T A)^-1)
        Eigen::LDLT<Eigen::MatrixXd> gram(design.transpose() * design);
        require(gram.info() == Eigen::Success, "singular-design",
                "retained design is rank deficient");
        const Eigen::VectorXd chat = gram.solve(design.transpose() * y);
        const double rss = (y - design * chat).squaredNorm();
        const double nu = static_cast<double>(n - q);
        const Eigen::MatrixXd cov_unscaled = gram.solve(Eigen::MatrixXd::Identity(q, q));
        Eigen::LLT<Eigen::MatrixXd> chol(
            (cov_unscaled + cov_unscaled.transpose()) * 0.5 +
            1e-14 * Eigen::MatrixXd::Identity(q, q));
        require(chol.info() == Eigen::Success, "singular-design",
                "coefficient covariance not factorizable");

        RngStream rng = RngStream::substream(seed, 0xE5E0 + static_cast<std::uint64_t>(k));
        Eigen::MatrixXd d(ensemble_size, q);
        for (int r = 0; r < ensemble_size; ++r) {
            // s2 ~ InvGamma(nu/2, rss/2) via 1/Gamma(nu/2, 2/rss)
            double s2 = 0.0;
            if (rss > 0.0) {
                const double g = rng.gamma(0.5 * nu, 2.0 / rss);
                s2 = g > 0.0 ? 1.0 / g : 0.0;
            }
            Eigen::VectorXd z(q);
            for (int i = 0; i < q; ++i) z[i] = rng.normal();
            const Eigen::VectorXd lz = chol.matrixL() * z;
            d.row(r) = (chat + std::sqrt(s2) * lz).transpose();
        }
        draws.push_back(std::move(d));
    }
    return PceCoefficientEnsemble(std::move(primary), std::move(draws));
}

PredictiveEnvelope strategy_a_envelope(const PceCoefficientEnsemble& ensemble,
                                       const Eigen::VectorXd& m) {
    const Eigen::MatrixXd preds = ensemble.member_predictions(m);
    const int q = static_cast<int>(preds.rows());
    PredictiveEnvelope env;
    env.mean = preds.colwise().mean();
    env.variance.resize(preds.cols());
    for (Eigen::Index k = 0; k < preds.cols(); ++k)
        env.variance[k] =
            (preds.col(k).array() - env.mean[k]).square().sum() / static_cast<double>(q);
    return env;
}

PredictiveEnvelope strategy_a_envelope(const gp::GpSurrogate& surrogate,
                                       const Eigen::VectorXd& m) {
    auto [mean, var] = surrogate.predict(m);
    return {std::move(mean), std::move(var)};
}

double strategy_a_loglik(const PredictiveEnvelope& envelope, const Eigen::VectorXd& data,
                         const Eigen::VectorXd& noise_std, Mode mode, RngStream& rng) {
    require(envelope.mean.size() == data.size() && data.size() == noise_std.size(),
            "dimension-mismatch", "strategy_a_loglik lengths");
    if (mode == Mode::RealizationInjection) {
        Eigen::VectorXd injected = envelope.mean;
        for (Eigen::Index i = 0; i < injected.size(); ++i)
            injected[i] += std::sqrt(std::max(envelope.variance[i], 0.0)) * rng.normal();
        return mcmc::gaussian_log_likelihood(injected, data, noise_std);
    }
    Eigen::VectorXd total_std(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i)
        total_std[i] =
            std::sqrt(noise_std[i] * noise_std[i] + std::max(envelope.variance[i], 0.0));
    return mcmc::gaussian_log_likelihood(envelope.mean, data, total_std);
}

std::shared_ptr<CorrectedSurrogate> strategy_b_fit(SurrogatePtr primary,
                                                   const TrainingSet& training,
                                                   const Prior& prior, Kind secondary_kind,
                                                   const StrategyBConfig& cfg,
                                                   std::uint64_t seed) {
    require(primary->input_dim() == training.input_dim() &&
                primary->output_dim() == training.output_dim(),
            "dimension-mismatch", "primary surrogate does not match the training set");

    TrainingSet residuals;
    residuals.inputs = training.inputs;
    residuals.outputs.resize(training.size(), training.output_dim());
    for (int i = 0; i < training.size(); ++i)
        residuals.outputs.row(i) =
            training.outputs.row(i) -
            primary->predict_mean(training.inputs.row(i).transpose()).transpose();

    SurrogatePtr secondary;
    if (secondary_kind == Kind::GP) {
        secondary = gp::GpSurrogate::fit(residuals, prior, cfg.gp, seed);
    } else {
        secondary = pce::pce_fit(residuals, prior, cfg.pce);
    }
    return std::make_shared<CorrectedSurrogate>(std::move(primary), std::move(secondary));
}

Eigen::VectorXd corrected_predict(const CorrectedSurrogate& corrected, const Eigen::VectorXd& m) {
    return corrected.predict_mean(m);
}

} // namespace gwinfer::errors
