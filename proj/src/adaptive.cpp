#include "gwinfer/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace gwinfer::adaptive {

double error_indicator(const Eigen::VectorXd& surrogate_out, const Eigen::VectorXd& hf_out,
                       const Eigen::VectorXd& noise_std) {
    require(surrogate_out.size() == hf_out.size() && hf_out.size() == noise_std.size(),
            "dimension-mismatch", "error_indicator lengths");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < hf_out.size(); ++j) {
        const double z = (hf_out[j] - surrogate_out[j]) / noise_std[j];
        acc += z * z;
    }
    return std::sqrt(acc / static_cast<double>(hf_out.size()));
}

double error_indicator(const Surrogate& surrogate, const Eigen::VectorXd& m_true,
                       const ForwardFn& forward, const Eigen::VectorXd& noise_std) {
    return error_indicator(surrogate.predict_mean(m_true), forward(m_true), noise_std);
}

namespace {

double normalized_distance(const Prior& prior, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b) {
    return (prior.to_unit(a) - prior.to_unit(b)).norm();
}

bool near_duplicate(const Prior& prior, const Eigen::VectorXd& candidate,
                    const Eigen::MatrixXd& pool, double tol = 1e-10) {
    for (Eigen::Index r = 0; r < pool.rows(); ++r)
        if (normalized_distance(prior, candidate, pool.row(r).transpose()) < tol) return true;
    return false;
}

Eigen::MatrixXd append_row(Eigen::MatrixXd m, const Eigen::VectorXd& row) {
    m.conservativeResize(m.rows() + 1, row.size());
    m.row(m.rows() - 1) = row.transpose();
    return m;
}

} // namespace

Eigen::MatrixXd select_design_points(const mcmc::Chains& chains, int n, const DesignRule& rule,
                                     const Prior& prior, RngStream& rng, double discard_frac,
                                     const Eigen::MatrixXd& avoid) {
    auto [samples, logp] = chains.retained(discard_frac);
    require(samples.rows() >= 1, "insufficient-samples", "no retained chain states");
    const int dim = static_cast<int>(samples.cols());

    Eigen::MatrixXd selected(0, dim);

    if (rule.kind == DesignRule::Kind::Random || rule.kind == DesignRule::Kind::Stretch) {
        const double factor = rule.kind == DesignRule::Kind::Stretch ? rule.stretch_factor : 1.0;
        const Eigen::VectorXd mean = samples.colwise().mean();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(samples.rows()));
        std::iota(order.begin(), order.end(), 0);
        // Fisher-Yates draw without replacement
        for (Eigen::Index i = 0; i < samples.rows() && selected.rows() < n; ++i) {
            const Eigen::Index pick =
                i + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(
                        samples.rows() - i)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick)]);
            Eigen::VectorXd point = samples.row(order[static_cast<std::size_t>(i)]).transpose();
            point = mean + factor * (point - mean);
            if (near_duplicate(prior, point, avoid) || near_duplicate(prior, point, selected))
                continue;
            selected = append_row(std::move(selected), point);
        }
        require(selected.rows() == n, "insufficient-samples",
                "not enough distinct retained states for the requested design points");
        return selected;
    }

    // quintile rule: the max-log-density state first, then per log-density
    // quintile the state maximizing distance to its nearest selected neighbor
    std::vector<Eigen::Index> order(static_cast<std::size_t>(samples.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return logp[a] > logp[b]; });

    std::vector<bool> used(static_cast<std::size_t>(samples.rows()), false);
    auto try_add = [&](Eigen::Index row) {
        Eigen::VectorXd point = samples.row(row).transpose();
        if (near_duplicate(prior, point, avoid) || near_duplicate(prior, point, selected))
            return false;
        selected = append_row(std::move(selected), point);
        return true;
    };

    for (std::size_t k = 0; k < order.size() && selected.rows() == 0; ++k) {
        if (try_add(order[k])) used[k] = true;
    }

    const int n_bins = 5;
    const std::size_t total = order.size();
    int bin = 0;
    int stale = 0;
    while (selected.rows() < n && stale < n_bins) {
        const std::size_t lo = bin * total / n_bins;
        const std::size_t hi = (bin + 1) * total / n_bins;
        Eigen::Index best_row = -1;
        std::size_t best_pos = 0;
        double best_dist = -1.0;
        for (std::size_t k = lo; k < hi; ++k) {
            if (used[k]) continue;
            const Eigen::VectorXd point = samples.row(order[k]).transpose();
            double nearest = std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < selected.rows(); ++r)
                nearest = std::min(nearest,
                                   normalized_distance(prior, point, selected.row(r).transpose()));
            if (nearest > best_dist) {
                best_dist = nearest;
                best_row = order[k];
                best_pos = k;
            }
        }
        bin = (bin + 1) % n_bins;
        if (best_row < 0) {
            ++stale;
            continue;
        }
        used[best_pos] = true;
        if (try_add(best_row)) stale = 0;
    }
    require(selected.rows() == n, "insufficient-samples",
            "not enough distinct retained states for the quintile rule");
    return selected;
}

TrainingSet subset_training(const TrainingSet& ts, const Eigen::VectorXd& data,
                            const Eigen::VectorXd& noise_std, int max_n) {
    require(max_n >= 1, "invalid-config", "subset size must be >= 1");
    if (max_n >= ts.size()) return ts;

    std::vector<double> score(static_cast<std::size_t>(ts.size()));
    for (int i = 0; i < ts.size(); ++i)
        score[static_cast<std::size_t>(i)] =
            mcmc::gaussian_log_likelihood(ts.outputs.row(i).transpose(), data, noise_std);

    std::vector<int> order(static_cast<std::size_t>(ts.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(max_n));
    std::sort(order.begin(), order.end()); // original insertion order within the kept set

    TrainingSet out;
    out.inputs.resize(max_n, ts.input_dim());
    out.outputs.resize(max_n, ts.output_dim());
    for (int i = 0; i < max_n; ++i) {
        out.inputs.row(i) = ts.inputs.row(order[static_cast<std::size_t>(i)]);
        out.outputs.row(i) = ts.outputs.row(order[static_cast<std::size_t>(i)]);
    }
    return out;
}

mcmc::WarmStart warm_start_states(const mcmc::Chains& prev, int n_chains, RngStream& rng,
                                  double discard_frac, int thin) {
    require(prev.n_generations() >= 1, "insufficient-samples", "previous chains are empty");
    auto [samples, logp] = prev.retained(discard_frac);

    Eigen::MatrixXd history(0, samples.cols());
    for (Eigen::Index r = 0; r < samples.rows(); r += thin)
        history = append_row(std::move(history), samples.row(r).transpose());
    require(history.rows() >= n_chains, "insufficient-samples",
            "thinned history smaller than the number of chains");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(history.rows()));
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < n_chains; ++i) {
        const Eigen::Index pick =
            i + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(
                    history.rows() - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick)]);
    }

    mcmc::WarmStart warm;
    for (int i = 0; i < n_chains; ++i)
        warm.states.push_back(history.row(order[static_cast<std::size_t>(i)]).transpose());
    warm.archive = std::move(history);
    return warm;
}

FittedStrategy fit_strategy(const TrainingSet& training, const Prior& prior,
                            const AdaptiveConfig& cfg, const Eigen::VectorXd& data,
                            const Eigen::VectorXd& noise_std, std::uint64_t seed) {
    using errors::Kind;
    using errors::Mode;
    using errors::Variant;

    FittedStrategy fitted;
    const Kind primary_kind = cfg.strategy.primary;

    SurrogatePtr primary;
    std::shared_ptr<const pce::PceSurrogate> primary_pce;
    std::shared_ptr<const gp::GpSurrogate> primary_gp;
    if (primary_kind == Kind::PCE) {
        primary_pce = pce::pce_fit(training, prior, cfg.pce);
        primary = primary_pce;
        fitted.quality = primary_pce->loo_errors().maxCoeff();
    } else {
        primary_gp = gp::GpSurrogate::fit(training, prior, cfg.gp, seed);
        primary = primary_gp;
        double acc = 0.0;
        for (int k = 0; k < primary_gp->output_dim(); ++k) acc += primary_gp->nlml(k);
        fitted.quality = acc / primary_gp->output_dim();
    }

    const Likelihood lk = cfg.likelihood;
    auto point_loglik = [lk, data, noise_std](const Eigen::VectorXd& out) {
        return lk == Likelihood::Gaussian
                   ? mcmc::gaussian_log_likelihood(out, data, noise_std)
                   : mcmc::informal_log_likelihood(out, data);
    };

    switch (cfg.strategy.variant) {
    case Variant::None: {
        fitted.mean_surrogate = primary;
        fitted.log_likelihood = [primary, point_loglik](const Eigen::VectorXd& m, RngStream&) {
            return point_loglik(primary->predict_mean(m));
        };
        break;
    }
    case Variant::A: {
        const Mode mode = cfg.strategy.mode;
        if (primary_kind == Kind::PCE) {
            auto ensemble = std::make_shared<errors::PceCoefficientEnsemble>(
                errors::strategy_a_posterior(primary_pce, training, cfg.strategy.ensemble_size,
                                             seed));
            fitted.mean_surrogate = primary;
            if (lk == Likelihood::Gaussian) {
                fitted.log_likelihood = [ensemble, data, noise_std, mode](
                                            const Eigen::VectorXd& m, RngStream& rng) {
                    const auto env = errors::strategy_a_envelope(*ensemble, m);
                    return errors::strategy_a_loglik(env, data, noise_std, mode, rng);
                };
            } else {
                fitted.log_likelihood = [ensemble, data, point_loglik](const Eigen::VectorXd& m,
                                                                       RngStream& rng) {
                    auto env = errors::strategy_a_envelope(*ensemble, m);
                    for (Eigen::Index i = 0; i < env.mean.size(); ++i)
                        env.mean[i] += std::sqrt(std::max(env.variance[i], 0.0)) * rng.normal();
                    return point_loglik(env.mean);
                };
            }
        } else {
            fitted.mean_surrogate = primary;
            auto gp_surr = primary_gp;
            if (lk == Likelihood::Gaussian) {
                fitted.log_likelihood = [gp_surr, data, noise_std, mode](const Eigen::VectorXd& m,
                                                                         RngStream& rng) {
                    const auto env = errors::strategy_a_envelope(*gp_surr, m);
                    return errors::strategy_a_loglik(env, data, noise_std, mode, rng);
                };
            } else {
                fitted.log_likelihood = [gp_surr, data, point_loglik](const Eigen::VectorXd& m,
                                                                      RngStream& rng) {
                    auto env = errors::strategy_a_envelope(*gp_surr, m);
                    for (Eigen::Index i = 0; i < env.mean.size(); ++i)
                        env.mean[i] += std::sqrt(std::max(env.variance[i], 0.0)) * rng.normal();
                    return point_loglik(env.mean);
                };
            }
        }
        break;
    }
    case Variant::B: {
        errors::StrategyBConfig bcfg;
        bcfg.pce = cfg.pce;
        bcfg.gp = cfg.gp;
        auto corrected = errors::strategy_b_fit(primary, training, prior, cfg.strategy.secondary,
                                                bcfg, seed + 1);
        fitted.mean_surrogate = corrected;
        fitted.log_likelihood = [corrected, point_loglik](const Eigen::VectorXd& m, RngStream&) {
            return point_loglik(corrected->predict_mean(m));
        };
        break;
    }
    }
    return fitted;
}

namespace {

IterationRecord make_record(int iteration, const Eigen::MatrixXd& added,
                            const FittedStrategy& fitted, const mcmc::Chains& chains,
                            const std::optional<Eigen::VectorXd>& m_true,
                            const std::optional<Eigen::VectorXd>& f_true,
                            const Eigen::VectorXd& noise_std, long hf_count,
                            double discard_frac) {
    IterationRecord rec;
    rec.iteration = iteration;
    rec.added_points = added;
    rec.surrogate_quality = fitted.quality;
    auto [samples, logp] = chains.retained(discard_frac);
    rec.posterior_mean = samples.colwise().mean();
    rec.posterior_std.resize(samples.cols());
    for (Eigen::Index d = 0; d < samples.cols(); ++d)
        rec.posterior_std[d] = std::sqrt(
            (samples.col(d).array() - rec.posterior_mean[d]).square().sum() /
            std::max<Eigen::Index>(1, samples.rows() - 1));
    if (m_true && f_true)
        rec.err = error_indicator(fitted.mean_surrogate->predict_mean(*m_true), *f_true,
                                  noise_std);
    rec.acceptance_rate = chains.acceptance_rate.mean();
    rec.max_r_hat = mcmc::gelman_rubin(chains, discard_frac).r_hat.maxCoeff();
    rec.hf_evaluations = hf_count;
    return rec;
}

} // namespace

AdaptiveResult run_adaptive(const ForwardFn& forward, const Prior& prior,
                            const Eigen::VectorXd& data, const Eigen::VectorXd& noise_std,
                            const AdaptiveConfig& cfg, std::uint64_t seed,
                            const std::optional<Eigen::VectorXd>& m_true,
                            const std::optional<Eigen::VectorXd>& f_true,
                            const std::optional<ResumeState>& resume) {
    const int dim = prior.dim();
    cfg.validate(dim);
    require(data.size() == noise_std.size(), "dimension-mismatch", "data vs noise length");

    CountingForward counted(forward);
    AdaptiveResult res;

    int start_iter = 0;
    long eval_base = 0;
    if (resume) {
        res.training = resume->training;
        res.chains = resume->chains;
        res.records = resume->records;
        start_iter = static_cast<int>(resume->records.size());
        require(start_iter >= 1, "invalid-config", "resume state has no completed iterations");
        eval_base = resume->records.back().hf_evaluations;
    } else {
        // step 1: initial design from the prior
        RngStream init_rng = RngStream::substream(seed, 0xD0);
        res.training.inputs.resize(cfg.n_initial, dim);
        for (int i = 0; i < cfg.n_initial; ++i) {
            Eigen::VectorXd m = prior.sample(init_rng);
            while (near_duplicate(prior, m, res.training.inputs.topRows(i)))
                m = prior.sample(init_rng);
            res.training.inputs.row(i) = m.transpose();
        }
        res.training.outputs.resize(cfg.n_initial, data.size());
        for (int i = 0; i < cfg.n_initial; ++i)
            res.training.outputs.row(i) =
                counted(res.training.inputs.row(i).transpose()).transpose();
    }

    try {
        for (int iter = start_iter; iter <= cfg.n_iterations; ++iter) {
            Eigen::MatrixXd added(0, dim);
            if (iter > 0) {
                // steps 4a-4b: draw N_a points from the approximated posterior
                RngStream design_rng =
                    RngStream::substream(seed, 0xD000 + static_cast<std::uint64_t>(iter));
                added = select_design_points(res.chains, cfg.n_add, cfg.design_rule, prior,
                                             design_rng, cfg.mcmc.discard_frac,
                                             res.training.inputs);
                for (Eigen::Index r = 0; r < added.rows(); ++r)
                    res.training.append(added.row(r).transpose(),
                                        counted(added.row(r).transpose()));
            }

            TrainingSet fit_set = res.training;
            if (cfg.subset_max && *cfg.subset_max < fit_set.size())
                fit_set = subset_training(fit_set, data, noise_std, *cfg.subset_max);

            const FittedStrategy fitted =
                fit_strategy(fit_set, prior, cfg, data, noise_std,
                             seed + 31 * static_cast<std::uint64_t>(iter) + 11);

            mcmc::LogDensity target = [&prior, fitted](const Eigen::VectorXd& m, RngStream& rng) {
                const double lp = prior.log_density(m);
                if (!std::isfinite(lp)) return lp;
                return lp + fitted.log_likelihood(m, rng);
            };

            std::optional<mcmc::WarmStart> warm;
            if (iter > 0) {
                RngStream warm_rng =
                    RngStream::substream(seed, 0xE000 + static_cast<std::uint64_t>(iter));
                warm = warm_start_states(res.chains, cfg.mcmc.n_chains, warm_rng,
                                         cfg.mcmc.discard_frac, cfg.mcmc.archive_thin);
            }
            res.chains = mcmc::run_mcmc(target, prior, cfg.mcmc,
                                        seed + 1000003ULL * (static_cast<std::uint64_t>(iter) + 1),
                                        warm);

            res.records.push_back(make_record(iter, added, fitted, res.chains, m_true, f_true,
                                              noise_std, eval_base + counted.count(),
                                              cfg.mcmc.discard_frac));
        }
    } catch (const Error& e) {
        res.abort_error = e.what();
    }
    res.hf_evaluations = eval_base + counted.count();
    return res;
}

std::string IterationRecord::to_json() const {
    nlohmann::json doc;
    doc["iteration"] = iteration;
    auto& rows = doc["added_points"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < added_points.rows(); ++r)
        rows.push_back(std::vector<double>(added_points.row(r).data(),
                                           added_points.row(r).data() + added_points.cols()));
    doc["surrogate_quality"] = surrogate_quality;
    doc["posterior_mean"] =
        std::vector<double>(posterior_mean.data(), posterior_mean.data() + posterior_mean.size());
    doc["posterior_std"] =
        std::vector<double>(posterior_std.data(), posterior_std.data() + posterior_std.size());
    if (err) doc["err"] = *err;
    doc["acceptance_rate"] = acceptance_rate;
    doc["max_r_hat"] = max_r_hat;
    doc["hf_evaluations"] = hf_evaluations;
    return doc.dump();
}

IterationRecord IterationRecord::from_json(const std::string& line) {
    const nlohmann::json doc = nlohmann::json::parse(line);
    IterationRecord rec;
    rec.iteration = doc.at("iteration").get<int>();
    const auto& rows = doc.at("added_points");
    if (!rows.empty()) {
        const std::size_t cols = rows.front().size();
        rec.added_points.resize(static_cast<Eigen::Index>(rows.size()),
                                static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto row = rows[r].get<std::vector<double>>();
            rec.added_points.row(static_cast<Eigen::Index>(r)) =
                Eigen::Map<const Eigen::VectorXd>(row.data(),
                                                  static_cast<Eigen::Index>(row.size()));
        }
    }
    rec.surrogate_quality = doc.at("surrogate_quality").get<double>();
    const auto mean = doc.at("posterior_mean").get<std::vector<double>>();
    rec.posterior_mean =
        Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const auto std = doc.at("posterior_std").get<std::vector<double>>();
    rec.posterior_std =
        Eigen::Map<const Eigen::VectorXd>(std.data(), static_cast<Eigen::Index>(std.size()));
    if (doc.contains("err")) rec.err = doc.at("err").get<double>();
    rec.acceptance_rate = doc.at("acceptance_rate").get<double>();
    rec.max_r_hat = doc.at("max_r_hat").get<double>();
    rec.hf_evaluations = doc.at("hf_evaluations").get<long>();
    return rec;
}

} // namespace gwinfer::adaptive
