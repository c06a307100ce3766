#include "gwinfer/gp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "gwinfer/optim.hpp"
#include "json.hpp"

namespace gwinfer::gp {

double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpHyper& hyper) {
    require(a.size() == b.size() && a.size() == hyper.dim(), "dimension-mismatch",
            "kernel input dimensions");
    const Eigen::ArrayXd ls = hyper.log_lengthscales.array().exp();
    const double d2 = (((a - b).array() / ls).square()).sum();
    const double s = hyper.signal_std();
    return s * s * std::exp(-0.5 * d2);
}

namespace {

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& inputs, const GpHyper& hyper) {
    const Eigen::Index n = inputs.rows();
    const Eigen::ArrayXd ls = hyper.log_lengthscales.array().exp();
    const double s2 = hyper.signal_std() * hyper.signal_std();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = s2;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double d2 =
                (((inputs.row(i) - inputs.row(j)).transpose().array() / ls).square()).sum();
            const double v = s2 * std::exp(-0.5 * d2);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

// Cholesky of K + sigma_n^2 I with the shared jitter schedule.
Eigen::LLT<Eigen::MatrixXd> factor_k(const Eigen::MatrixXd& km, double noise_var) {
    Eigen::MatrixXd k = km;
    k.diagonal().array() += noise_var;
    const double base = 1e-12 * k.diagonal().mean();
    double jitter = 0.0;
    for (int attempt = 0; attempt <= 8; ++attempt) {
        Eigen::MatrixXd work = k;
        if (jitter > 0.0) work.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) return llt;
        jitter = jitter == 0.0 ? base : 2.0 * jitter;
    }
    fail("not-positive-definite", "GP kernel factorization failed after maximum jitter");
}

} // namespace

double gp_nlml(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& y, const GpHyper& hyper) {
    Eigen::VectorXd unused;
    return gp_nlml_grad(inputs, y, hyper, unused);
}

double gp_nlml_grad(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& y, const GpHyper& hyper,
                    Eigen::VectorXd& grad) {
    const Eigen::Index n = inputs.rows();
    require(n >= 1, "invalid-spec", "gp_nlml needs at least one training point");
    require(y.size() == n, "dimension-mismatch", "outputs do not match inputs");
    require(inputs.cols() == hyper.dim(), "dimension-mismatch", "hyper does not match inputs");

    const Eigen::MatrixXd km = kernel_matrix(inputs, hyper);
    const double noise_var = hyper.noise_std() * hyper.noise_std();
    const Eigen::LLT<Eigen::MatrixXd> llt = factor_k(km, noise_var);
    const Eigen::VectorXd alpha = llt.solve(y);

    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
    const double value = 0.5 * y.dot(alpha) + logdet +
                         0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);

    const int d = hyper.dim();
    grad.resize(d + 2);
    // W = K^-1 - alpha alpha^T;  dO/dtheta = 1/2 sum(W .* dK/dtheta)
    const Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd w = kinv - alpha * alpha.transpose();

    grad[0] = 0.5 * (w.array() * (2.0 * km.array())).sum(); // d/dlog sigma
    const Eigen::ArrayXd ls = hyper.log_lengthscales.array().exp();
    for (int m = 0; m < d; ++m) {
        Eigen::MatrixXd dk(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            dk(i, i) = 0.0;
            for (Eigen::Index j = 0; j < i; ++j) {
                const double diff = (inputs(i, m) - inputs(j, m)) / ls[m];
                const double v = km(i, j) * diff * diff;
                dk(i, j) = v;
                dk(j, i) = v;
            }
        }
        grad[1 + m] = 0.5 * (w.array() * dk.array()).sum();
    }
    grad[d + 1] = 0.5 * w.trace() * 2.0 * noise_var; // d/dlog sigma_n
    return value;
}

void GpSurrogate::factorize() {
    const Eigen::Index n = scaled_inputs_.rows();
    chol_.clear();
    alpha_.clear();
    for (std::size_t k = 0; k < hyper_.size(); ++k) {
        const Eigen::MatrixXd km = kernel_matrix(scaled_inputs_, hyper_[k]);
        const double nv = hyper_[k].noise_std() * hyper_[k].noise_std();
        Eigen::LLT<Eigen::MatrixXd> llt = factor_k(km, nv);
        chol_.push_back(llt.matrixL());
        alpha_.push_back(llt.solve(std_outputs_.col(static_cast<Eigen::Index>(k))));
        (void)n;
    }
}

std::shared_ptr<GpSurrogate> GpSurrogate::fit(const TrainingSet& training, const Prior& prior,
                                              const GpFitConfig& cfg, std::uint64_t seed) {
    const int n = training.size();
    require(n >= 2, "fit-failed", "GP fit needs at least two training points");
    require(prior.dim() == training.input_dim(), "dimension-mismatch",
            "prior does not match training inputs");

    auto s = std::shared_ptr<GpSurrogate>(new GpSurrogate());
    s->prior_ = prior;
    s->scaled_inputs_.resize(n, training.input_dim());
    for (int i = 0; i < n; ++i)
        s->scaled_inputs_.row(i) = prior.to_unit(training.inputs.row(i).transpose()).transpose();

    const int n_out = training.output_dim();
    s->out_mean_.resize(n_out);
    s->out_std_.resize(n_out);
    s->std_outputs_.resize(n, n_out);
    for (int k = 0; k < n_out; ++k) {
        const double mean = training.outputs.col(k).mean();
        double std = std::sqrt((training.outputs.col(k).array() - mean).square().sum() /
                               std::max(1, n - 1));
        if (std <= 1e-14 * (1.0 + std::abs(mean))) std = 1.0; // constant output
        s->out_mean_[k] = mean;
        s->out_std_[k] = std;
        s->std_outputs_.col(k) = (training.outputs.col(k).array() - mean) / std;
    }

    const int d = training.input_dim();
    const double floor2 = cfg.noise_floor * cfg.noise_floor;

    for (int k = 0; k < n_out; ++k) {
        const Eigen::VectorXd y = s->std_outputs_.col(k);
        // Optimize t with sigma_n^2 = floor^2 + exp(2 t_n): the floor stays a
        // smooth constraint and gradients chain through.
        auto objective = [&](const Eigen::VectorXd& t, Eigen::VectorXd& grad) {
            GpHyper h;
            h.log_signal_std = t[0];
            h.log_lengthscales = t.segment(1, d);
            const double sn2 = floor2 + std::exp(2.0 * t[d + 1]);
            h.log_noise_std = 0.5 * std::log(sn2);
            Eigen::VectorXd g;
            double v;
            try {
                v = gp_nlml_grad(s->scaled_inputs_, y, h, g);
            } catch (const Error&) {
                grad = Eigen::VectorXd::Zero(d + 2);
                return std::numeric_limits<double>::infinity();
            }
            grad = g;
            grad[d + 1] = g[d + 1] * (std::exp(2.0 * t[d + 1]) / sn2);
            return v;
        };

        RngStream rng = RngStream::substream(seed, 7700 + static_cast<std::uint64_t>(k));
        double best_val = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_t;
        std::vector<double> best_traj;
        for (int r = 0; r < cfg.restarts; ++r) {
            Eigen::VectorXd t0(d + 2);
            if (r == 0) {
                t0[0] = 0.0; // signal std 1 (outputs standardized)
                for (int m = 0; m < d; ++m) t0[1 + m] = std::log(0.5);
                t0[d + 1] = std::log(1e-2);
            } else {
                t0[0] = rng.uniform(-1.0, 1.0);
                for (int m = 0; m < d; ++m) t0[1 + m] = rng.uniform(std::log(0.05), std::log(2.0));
                t0[d + 1] = rng.uniform(std::log(1e-4), std::log(0.3));
            }
            optim::LbfgsOptions opts;
            opts.max_iterations = cfg.max_iterations;
            const auto res = optim::lbfgs_minimize(objective, t0, opts);
            if (res.value < best_val) {
                best_val = res.value;
                best_t = res.x;
                best_traj = res.trajectory;
            }
        }
        require(std::isfinite(best_val), "fit-failed", "all GP restarts failed");

        GpHyper h;
        h.log_signal_std = best_t[0];
        h.log_lengthscales = best_t.segment(1, d);
        h.log_noise_std = 0.5 * std::log(floor2 + std::exp(2.0 * best_t[d + 1]));
        s->hyper_.push_back(std::move(h));
        s->nlml_.push_back(best_val);
        s->trajectory_.push_back(std::move(best_traj));
    }
    s->factorize();
    return s;
}

std::shared_ptr<GpSurrogate> GpSurrogate::from_hyper(const TrainingSet& training,
                                                     const Prior& prior,
                                                     const std::vector<GpHyper>& hyper) {
    require(static_cast<int>(hyper.size()) == training.output_dim(), "dimension-mismatch",
            "one hyper set per output component required");
    auto s = std::shared_ptr<GpSurrogate>(new GpSurrogate());
    s->prior_ = prior;
    const int n = training.size();
    s->scaled_inputs_.resize(n, training.input_dim());
    for (int i = 0; i < n; ++i)
        s->scaled_inputs_.row(i) = prior.to_unit(training.inputs.row(i).transpose()).transpose();
    const int n_out = training.output_dim();
    s->out_mean_.resize(n_out);
    s->out_std_.resize(n_out);
    s->std_outputs_.resize(n, n_out);
    for (int k = 0; k < n_out; ++k) {
        const double mean = training.outputs.col(k).mean();
        double std = std::sqrt((training.outputs.col(k).array() - mean).square().sum() /
                               std::max(1, n - 1));
        if (std <= 1e-14 * (1.0 + std::abs(mean))) std = 1.0;
        s->out_mean_[k] = mean;
        s->out_std_[k] = std;
        s->std_outputs_.col(k) = (training.outputs.col(k).array() - mean) / std;
    }
    s->hyper_ = hyper;
    for (int k = 0; k < n_out; ++k)
        s->nlml_.push_back(gp_nlml(s->scaled_inputs_, s->std_outputs_.col(k), hyper[static_cast<std::size_t>(k)]));
    s->factorize();
    return s;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> GpSurrogate::predict(const Eigen::VectorXd& m) const {
    require(m.size() == scaled_inputs_.cols(), "dimension-mismatch", "gp_predict input dimension");
    const Eigen::VectorXd u = prior_.to_unit(m);
    const Eigen::Index n = scaled_inputs_.rows();
    const int n_out = output_dim();
    Eigen::VectorXd mean(n_out), var(n_out);
    for (int k = 0; k < n_out; ++k) {
        const GpHyper& h = hyper_[static_cast<std::size_t>(k)];
        Eigen::VectorXd kv(n);
        for (Eigen::Index i = 0; i < n; ++i)
            kv[i] = kernel(u, scaled_inputs_.row(i).transpose(), h);
        const double mu = kv.dot(alpha_[static_cast<std::size_t>(k)]);
        const Eigen::VectorXd v =
            chol_[static_cast<std::size_t>(k)].triangularView<Eigen::Lower>().solve(kv);
        const double s2 = h.signal_std() * h.signal_std();
        double pv = s2 - v.squaredNorm();
        if (pv < 0.0) pv = 0.0;
        mean[k] = out_mean_[k] + out_std_[k] * mu;
        var[k] = out_std_[k] * out_std_[k] * pv;
    }
    return {mean, var};
}

Eigen::VectorXd GpSurrogate::predict_mean(const Eigen::VectorXd& m) const {
    return predict(m).first;
}

Eigen::VectorXd GpSurrogate::predict_variance(const Eigen::VectorXd& m) const {
    return predict(m).second;
}

std::string GpSurrogate::to_json() const {
    nlohmann::json doc;
    auto& prior = doc["prior"] = nlohmann::json::array();
    for (const Marginal& mg : prior_.marginals())
        prior.push_back({{"kind", mg.kind == Marginal::Kind::Gaussian ? "gaussian" : "uniform"},
                         {"a", mg.a},
                         {"b", mg.b}});
    doc["out_mean"] = std::vector<double>(out_mean_.data(), out_mean_.data() + out_mean_.size());
    doc["out_std"] = std::vector<double>(out_std_.data(), out_std_.data() + out_std_.size());
    auto& hypers = doc["hyper"] = nlohmann::json::array();
    for (const GpHyper& h : hyper_)
        hypers.push_back(
            {{"log_signal_std", h.log_signal_std},
             {"log_lengthscales", std::vector<double>(h.log_lengthscales.data(),
                                                      h.log_lengthscales.data() +
                                                          h.log_lengthscales.size())},
             {"log_noise_std", h.log_noise_std}});
    doc["nlml"] = nlml_;
    return doc.dump();
}

std::shared_ptr<GpSurrogate> GpSurrogate::from_json(const std::string& text,
                                                    const TrainingSet& training) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    std::vector<Marginal> marginals;
    for (const auto& mg : doc.at("prior"))
        marginals.push_back(mg.at("kind").get<std::string>() == "gaussian"
                                ? Marginal::gaussian(mg.at("a").get<double>(),
                                                     mg.at("b").get<double>())
                                : Marginal::uniform(mg.at("a").get<double>(),
                                                    mg.at("b").get<double>()));
    std::vector<GpHyper> hyper;
    for (const auto& h : doc.at("hyper")) {
        GpHyper gh;
        gh.log_signal_std = h.at("log_signal_std").get<double>();
        const auto ls = h.at("log_lengthscales").get<std::vector<double>>();
        gh.log_lengthscales =
            Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
        gh.log_noise_std = h.at("log_noise_std").get<double>();
        hyper.push_back(std::move(gh));
    }
    // factorizations are rebuilt from the training set, never deserialized
    return from_hyper(training, Prior(std::move(marginals)), hyper);
}

} // namespace gwinfer::gp
