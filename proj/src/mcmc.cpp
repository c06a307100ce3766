#include "gwinfer/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace gwinfer::mcmc {

double gaussian_log_likelihood(const Eigen::VectorXd& model_out, const Eigen::VectorXd& data,
                               const Eigen::VectorXd& noise_std) {
    require(model_out.size() == data.size() && data.size() == noise_std.size(),
            "dimension-mismatch", "gaussian_log_likelihood lengths");
    double lp = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        require(noise_std[i] > 0.0, "invalid-config", "noise std must be > 0");
        const double z = (data[i] - model_out[i]) / noise_std[i];
        lp += -std::log(noise_std[i] * std::sqrt(2.0 * M_PI)) - 0.5 * z * z;
    }
    return lp;
}

double informal_log_likelihood(const Eigen::VectorXd& model_out, const Eigen::VectorXd& data) {
    require(model_out.size() == data.size(), "dimension-mismatch",
            "informal_log_likelihood lengths");
    double sse = (model_out - data).squaredNorm();
    if (sse <= 0.0) {
        std::cerr << "informal_log_likelihood: zero SSE clamped to 1e-300\n";
        sse = 1e-300;
    }
    return -0.5 * static_cast<double>(data.size()) * std::log(sse);
}

bool metropolis_accept(double log_new, double log_old, RngStream& rng) {
    require(std::isfinite(log_old), "bad-initialization",
            "current state must have finite log-density");
    if (std::isinf(log_new) && log_new < 0.0) return false;
    if (log_new >= log_old) return true;
    return std::log(rng.uniform()) < log_new - log_old;
}

Proposal propose(const Eigen::VectorXd& current, const Eigen::MatrixXd& archive, RngStream& rng,
                 const McmcConfig& cfg, int generation) {
    const Eigen::Index n_arch = archive.rows();
    require(n_arch >= 3, "archive-too-small", "proposal needs at least three archived states");
    const int dim = static_cast<int>(current.size());

    Proposal prop;
    if (rng.uniform() >= cfg.p_snooker) {
        // parallel direction over a crossover subset
        Eigen::Index ia = rng.index(static_cast<std::uint64_t>(n_arch));
        Eigen::Index ib = rng.index(static_cast<std::uint64_t>(n_arch - 1));
        if (ib >= ia) ++ib; // without replacement
        const double cr = 0.1 * (1.0 + static_cast<double>(rng.index(10)));
        std::vector<int> subset;
        for (int d = 0; d < dim; ++d)
            if (rng.uniform() < cr) subset.push_back(d);
        if (subset.empty()) subset.push_back(static_cast<int>(rng.index(static_cast<std::uint64_t>(dim))));
        const double gamma = (generation % cfg.gamma_unit_period == 0)
                                 ? 1.0
                                 : 2.38 / std::sqrt(2.0 * static_cast<double>(subset.size()));
        prop.candidate = current;
        for (int d : subset) {
            const double e = rng.uniform(-cfg.jitter_width, cfg.jitter_width);
            const double eps = cfg.eps_jump_std * rng.normal();
            prop.candidate[d] +=
                gamma * (archive(ia, d) - archive(ib, d)) * (1.0 + e) + eps;
        }
        return prop;
    }

    // snooker update along the line through current and a random archive point
    Eigen::Index iz = rng.index(static_cast<std::uint64_t>(n_arch));
    Eigen::Index i1 = rng.index(static_cast<std::uint64_t>(n_arch - 1));
    if (i1 >= iz) ++i1;
    Eigen::Index i2 = rng.index(static_cast<std::uint64_t>(n_arch - 2));
    if (i2 >= std::min(iz, i1)) ++i2;
    if (i2 >= std::max(iz, i1)) ++i2;

    const Eigen::VectorXd z = archive.row(iz).transpose();
    Eigen::VectorXd line = current - z;
    const double norm2 = line.squaredNorm();
    const double gamma_s = rng.uniform(cfg.snooker_gamma_lo, cfg.snooker_gamma_hi);
    if (norm2 <= 0.0) {
        // degenerate line: fall back to a pure jitter move
        prop.candidate = current;
        for (int d = 0; d < dim; ++d) prop.candidate[d] += cfg.eps_jump_std * rng.normal();
        return prop;
    }
    const Eigen::VectorXd z1 = archive.row(i1).transpose();
    const Eigen::VectorXd z2 = archive.row(i2).transpose();
    const Eigen::VectorXd zp1 = z + (line.dot(z1 - z) / norm2) * line;
    const Eigen::VectorXd zp2 = z + (line.dot(z2 - z) / norm2) * line;
    prop.candidate = current + gamma_s * (zp1 - zp2);

    const double d_new = (prop.candidate - z).norm();
    const double d_old = std::sqrt(norm2);
    if (d_new > 0.0 && d_old > 0.0)
        prop.log_correction = (static_cast<double>(dim) - 1.0) * std::log(d_new / d_old);
    return prop;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> Chains::retained(double discard_frac) const {
    const int total = n_generations();
    const int discard = static_cast<int>(std::floor(discard_frac * total));
    const int keep = total - discard;
    require(keep >= 1, "invalid-config", "discard fraction leaves no samples");
    Eigen::MatrixXd samples(static_cast<Eigen::Index>(keep) * n_chains, dim);
    Eigen::VectorXd lp(static_cast<Eigen::Index>(keep) * n_chains);
    Eigen::Index r = 0;
    for (int c = 0; c < n_chains; ++c)
        for (int t = discard; t < total; ++t, ++r) {
            samples.row(r) = states[static_cast<std::size_t>(c)].row(t);
            lp[r] = log_posts[static_cast<std::size_t>(c)][t];
        }
    return {samples, lp};
}

std::string Chains::to_csv() const {
    std::ostringstream out;
    out << "chain,step";
    for (int d = 0; d < dim; ++d) out << ",m" << d;
    out << ",log_post\n";
    out.precision(17);
    for (int c = 0; c < n_chains; ++c)
        for (int t = 0; t < n_generations(); ++t) {
            out << c << "," << t;
            for (int d = 0; d < dim; ++d) out << "," << states[static_cast<std::size_t>(c)](t, d);
            out << "," << log_posts[static_cast<std::size_t>(c)][t] << "\n";
        }
    return out.str();
}

Chains run_mcmc(const LogDensity& target, const Prior& prior, const McmcConfig& cfg,
                std::uint64_t seed, const std::optional<WarmStart>& warm) {
    require(cfg.n_chains >= 3, "invalid-config", "need at least three chains");
    require(cfg.n_generations >= 1, "invalid-config", "need at least one generation");
    const int dim = prior.dim();

    Chains chains;
    chains.n_chains = cfg.n_chains;
    chains.dim = dim;
    chains.seed = seed;

    RngStream init_rng = RngStream::substream(seed, 0xA001);
    std::vector<RngStream> chain_rng;
    for (int c = 0; c < cfg.n_chains; ++c)
        chain_rng.push_back(RngStream::substream(seed, 0xC000 + static_cast<std::uint64_t>(c)));

    // initial states: prior draws, or the supplied warm-start list
    std::vector<Eigen::VectorXd> current(static_cast<std::size_t>(cfg.n_chains));
    std::vector<double> current_lp(static_cast<std::size_t>(cfg.n_chains));
    for (int c = 0; c < cfg.n_chains; ++c) {
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            Eigen::VectorXd m;
            if (warm && attempt == 0) {
                require(static_cast<int>(warm->states.size()) == cfg.n_chains,
                        "invalid-config", "warm start needs one state per chain");
                m = warm->states[static_cast<std::size_t>(c)];
            } else {
                m = prior.sample(init_rng);
            }
            const double lp = target(m, chain_rng[static_cast<std::size_t>(c)]);
            if (std::isfinite(lp)) {
                current[static_cast<std::size_t>(c)] = std::move(m);
                current_lp[static_cast<std::size_t>(c)] = lp;
                ok = true;
            }
        }
        require(ok, "bad-initialization", "could not find a finite-density initial state");
    }

    // initial archive
    const int arch0 = cfg.initial_archive > 0 ? cfg.initial_archive
                                              : std::max(10 * dim, 3 * cfg.n_chains);
    Eigen::MatrixXd archive;
    if (warm && warm->archive.rows() >= 3) {
        archive = warm->archive;
    } else {
        archive.resize(arch0, dim);
        for (int r = 0; r < arch0; ++r) archive.row(r) = prior.sample(init_rng).transpose();
    }

    for (int c = 0; c < cfg.n_chains; ++c) {
        chains.states.emplace_back(cfg.n_generations, dim);
        chains.log_posts.emplace_back(cfg.n_generations);
    }
    Eigen::VectorXi accepted = Eigen::VectorXi::Zero(cfg.n_chains);

    for (int gen = 1; gen <= cfg.n_generations; ++gen) {
        // archive grows at the start of generations 1, k+1, 2k+1, ...
        if ((gen - 1) % cfg.archive_thin == 0) {
            const Eigen::Index base = archive.rows();
            archive.conservativeResize(base + cfg.n_chains, dim);
            for (int c = 0; c < cfg.n_chains; ++c)
                archive.row(base + c) = current[static_cast<std::size_t>(c)].transpose();
        }
        // candidate evaluations are independent across chains and may run
        // concurrently; archive updates only happen at generation boundaries
        for (int c = 0; c < cfg.n_chains; ++c) {
            RngStream& rng = chain_rng[static_cast<std::size_t>(c)];
            const Proposal prop = propose(current[static_cast<std::size_t>(c)], archive, rng,
                                          cfg, gen);
            const double lprior = prior.log_density(prop.candidate);
            double lp = -std::numeric_limits<double>::infinity();
            if (std::isfinite(lprior)) lp = target(prop.candidate, rng);
            if (metropolis_accept(lp + prop.log_correction,
                                  current_lp[static_cast<std::size_t>(c)], rng)) {
                current[static_cast<std::size_t>(c)] = prop.candidate;
                current_lp[static_cast<std::size_t>(c)] = lp;
                ++accepted[c];
            }
            chains.states[static_cast<std::size_t>(c)].row(gen - 1) =
                current[static_cast<std::size_t>(c)].transpose();
            chains.log_posts[static_cast<std::size_t>(c)][gen - 1] =
                current_lp[static_cast<std::size_t>(c)];
        }
    }

    chains.archive = std::move(archive);
    chains.acceptance_rate =
        accepted.cast<double>() / static_cast<double>(cfg.n_generations);
    return chains;
}

GelmanRubinResult gelman_rubin(const Chains& chains, double discard_frac) {
    require(chains.n_chains >= 2, "invalid-config", "Gelman-Rubin needs at least two chains");
    const int total = chains.n_generations();
    const int discard = static_cast<int>(std::floor(discard_frac * total));
    const int n = total - discard;
    require(n >= 10, "invalid-config", "Gelman-Rubin needs at least ten retained steps");

    const int m = chains.n_chains;
    GelmanRubinResult res;
    res.r_hat.resize(chains.dim);
    res.degenerate.assign(static_cast<std::size_t>(chains.dim), false);

    for (int d = 0; d < chains.dim; ++d) {
        Eigen::VectorXd means(m), vars(m);
        for (int c = 0; c < m; ++c) {
            const auto col = chains.states[static_cast<std::size_t>(c)].col(d).segment(discard, n);
            means[c] = col.mean();
            vars[c] = (col.array() - means[c]).square().sum() / (n - 1);
        }
        const double w = vars.mean();
        const double grand = means.mean();
        const double b_over_n = (means.array() - grand).square().sum() / (m - 1);
        if (w <= 0.0) {
            if (b_over_n <= 0.0) {
                res.r_hat[d] = 1.0;
                res.degenerate[static_cast<std::size_t>(d)] = true;
            } else {
                res.r_hat[d] = std::numeric_limits<double>::infinity();
            }
            continue;
        }
        const double var_plus = (static_cast<double>(n - 1) / n) * w + b_over_n;
        res.r_hat[d] = std::sqrt(var_plus / w);
    }
    return res;
}

} // namespace gwinfer::mcmc
