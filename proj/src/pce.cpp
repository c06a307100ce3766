#include "gwinfer/pce.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "json.hpp"

namespace gwinfer::pce {

namespace {

void enumerate_total_degree(int dim, int max_total, MultiIndex& current, int pos, int remaining,
                            std::vector<MultiIndex>& out) {
    if (pos == dim) {
        out.push_back(current);
        return;
    }
    for (int d = 0; d <= remaining; ++d) {
        current[static_cast<std::size_t>(pos)] = d;
        enumerate_total_degree(dim, max_total, current, pos + 1, remaining - d, out);
    }
    current[static_cast<std::size_t>(pos)] = 0;
}

double q_norm_of(const MultiIndex& alpha, double q) {
    double s = 0.0;
    for (int d : alpha) s += std::pow(static_cast<double>(d), q);
    return std::pow(s, 1.0 / q);
}

int total_degree(const MultiIndex& alpha) {
    int s = 0;
    for (int d : alpha) s += d;
    return s;
}

// Orthonormal univariate value: probabilists' Hermite / sqrt(k!) for Gaussian
// coordinates, Legendre * sqrt(2k+1) for uniform coordinates on [-1,1].
double ortho_poly(Marginal::Kind kind, int degree, double x) {
    if (degree == 0) return 1.0;
    double pm1 = 1.0, p = x;
    if (kind == Marginal::Kind::Gaussian) {
        for (int k = 1; k < degree; ++k) {
            const double next = x * p - k * pm1;
            pm1 = p;
            p = next;
        }
        double fact = 1.0;
        for (int k = 2; k <= degree; ++k) fact *= k;
        return p / std::sqrt(fact);
    }
    for (int k = 1; k < degree; ++k) {
        const double next = ((2.0 * k + 1.0) * x * p - k * pm1) / (k + 1.0);
        pm1 = p;
        p = next;
    }
    return p * std::sqrt(2.0 * degree + 1.0);
}

// Map to the polynomial family's standard variable: z-score for Gaussian,
// [-1,1] for uniform.
Eigen::VectorXd standardize(const Prior& prior, const Eigen::VectorXd& m) {
    Eigen::VectorXd u = prior.to_unit(m);
    for (int i = 0; i < prior.dim(); ++i)
        if (prior.marginal(i).kind == Marginal::Kind::Uniform) u[i] = 2.0 * u[i] - 1.0;
    return u;
}

} // namespace

std::vector<MultiIndex> build_index_set(const PceBasisSpec& spec) {
    spec.validate();
    std::vector<MultiIndex> all;
    MultiIndex current(static_cast<std::size_t>(spec.dim), 0);
    enumerate_total_degree(spec.dim, spec.order, current, 0, spec.order, all);

    std::vector<MultiIndex> kept;
    for (const MultiIndex& alpha : all)
        if (q_norm_of(alpha, spec.q_norm) <= spec.order + 1e-9) kept.push_back(alpha);

    std::sort(kept.begin(), kept.end(), [](const MultiIndex& a, const MultiIndex& b) {
        const int ta = total_degree(a), tb = total_degree(b);
        if (ta != tb) return ta < tb;
        return a < b;
    });
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    return kept;
}

double eval_basis(const PceBasisSpec& spec, const MultiIndex& index, const Eigen::VectorXd& m) {
    require(m.size() == spec.dim && static_cast<int>(index.size()) == spec.dim,
            "dimension-mismatch", "eval_basis dimensions");
    const Eigen::VectorXd z = standardize(spec.prior, m);
    double v = 1.0;
    for (int i = 0; i < spec.dim; ++i)
        v *= ortho_poly(spec.prior.marginal(i).kind, index[static_cast<std::size_t>(i)], z[i]);
    return v;
}

Eigen::MatrixXd eval_design(const PceBasisSpec& spec, const std::vector<MultiIndex>& indices,
                            const Eigen::MatrixXd& points) {
    Eigen::MatrixXd design(points.rows(), static_cast<Eigen::Index>(indices.size()));
    for (Eigen::Index r = 0; r < points.rows(); ++r)
        for (std::size_t c = 0; c < indices.size(); ++c)
            design(r, static_cast<Eigen::Index>(c)) =
                eval_basis(spec, indices[c], points.row(r).transpose());
    return design;
}

namespace {

// OLS on the given column subset; returns full-size coefficient vector and the
// rank flag. Uses column-pivoted QR.
bool ols_subset(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                const std::vector<int>& cols, Eigen::VectorXd& full_coef) {
    Eigen::MatrixXd a(design.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) a.col(static_cast<Eigen::Index>(k)) = design.col(cols[k]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < a.cols()) return false;
    const Eigen::VectorXd c = qr.solve(y);
    full_coef = Eigen::VectorXd::Zero(design.cols());
    for (std::size_t k = 0; k < cols.size(); ++k) full_coef[cols[k]] = c[static_cast<Eigen::Index>(k)];
    return true;
}

} // namespace

LarsPath lars_select(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    require(design.cols() >= 1, "invalid-spec", "design needs at least one column");
    require(design.rows() == y.size(), "dimension-mismatch", "design rows must match y");
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();

    LarsPath path;
    // Standardize; zero-variance columns are dropped from selection with a
    // warning but folded into every OLS refit.
    Eigen::MatrixXd x(n, p);
    std::vector<bool> selectable(static_cast<std::size_t>(p), true);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double mean = design.col(j).mean();
        Eigen::VectorXd col = design.col(j).array() - mean;
        const double norm = col.norm();
        if (norm <= 1e-12 * std::sqrt(static_cast<double>(n)) * (1.0 + std::abs(mean))) {
            selectable[static_cast<std::size_t>(j)] = false;
            path.always_included.push_back(static_cast<int>(j));
            x.col(j).setZero();
            // the all-ones intercept column is structural, anything else is
            // degenerate training data worth flagging
            if ((design.col(j).array() != 1.0).any())
                std::cerr << "lars_select: dropping zero-variance column " << j
                          << " from selection\n";
        } else {
            x.col(j) = col / norm;
        }
    }
    const double ymean = y.mean();
    Eigen::VectorXd r = y.array() - ymean;

    std::vector<int> active;
    std::vector<bool> in_active(static_cast<std::size_t>(p), false);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);

    const Eigen::Index max_active =
        std::min<Eigen::Index>(p, n - 1 - static_cast<Eigen::Index>(path.always_included.size()));
    while (static_cast<Eigen::Index>(active.size()) < max_active) {
        // entering column: maximal absolute correlation with the residual
        Eigen::VectorXd corr = x.transpose() * (r - mu);
        int best = -1;
        double cmax = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (!selectable[static_cast<std::size_t>(j)] || in_active[static_cast<std::size_t>(j)])
                continue;
            if (std::abs(corr[j]) > cmax) {
                cmax = std::abs(corr[j]);
                best = static_cast<int>(j);
            }
        }
        if (best < 0 || cmax < 1e-14) break;
        active.push_back(best);
        in_active[static_cast<std::size_t>(best)] = true;

        // hybrid step: OLS refit on always-included + active set
        std::vector<int> cols = path.always_included;
        cols.insert(cols.end(), active.begin(), active.end());
        Eigen::VectorXd coef;
        if (!ols_subset(design, y, cols, coef)) {
            active.pop_back();
            in_active[static_cast<std::size_t>(best)] = false;
            if (path.entering.empty())
                fail("singular-design", "selected set is rank deficient from the first step");
            break;
        }
        path.entering.push_back(best);
        path.coefs.push_back(std::move(coef));

        if (static_cast<Eigen::Index>(active.size()) >= max_active) break;

        // equiangular advance of the LARS fit (drives the next selection)
        const std::size_t na = active.size();
        Eigen::MatrixXd xa(n, static_cast<Eigen::Index>(na));
        Eigen::VectorXd sgn(static_cast<Eigen::Index>(na));
        for (std::size_t k = 0; k < na; ++k) {
            const double s = corr[active[k]] >= 0.0 ? 1.0 : -1.0;
            // sign from current correlation of that column
            const double ck = x.col(active[k]).dot(r - mu);
            sgn[static_cast<Eigen::Index>(k)] = ck >= 0.0 ? 1.0 : (ck < 0.0 ? -1.0 : s);
            xa.col(static_cast<Eigen::Index>(k)) =
                sgn[static_cast<Eigen::Index>(k)] * x.col(active[k]);
        }
        Eigen::MatrixXd gram = xa.transpose() * xa;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        if (ldlt.info() != Eigen::Success) break;
        const Eigen::VectorXd w = ldlt.solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(na)));
        const double denom = w.sum();
        if (denom <= 0.0) break;
        const double aa = 1.0 / std::sqrt(denom);
        const Eigen::VectorXd u = xa * (aa * w);
        const Eigen::VectorXd ax = x.transpose() * u;
        const double cmax_now = std::abs(x.col(active[0]).dot(r - mu));

        double gamma = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < p; ++j) {
            if (!selectable[static_cast<std::size_t>(j)] || in_active[static_cast<std::size_t>(j)])
                continue;
            const double cj = x.col(j).dot(r - mu);
            const double c1 = (cmax_now - cj) / (aa - ax[j]);
            const double c2 = (cmax_now + cj) / (aa + ax[j]);
            if (c1 > 1e-14 && c1 < gamma) gamma = c1;
            if (c2 > 1e-14 && c2 < gamma) gamma = c2;
        }
        if (!std::isfinite(gamma)) gamma = cmax_now / aa; // last step: to the LS fit
        mu += gamma * u;
    }
    return path;
}

double loo_error_raw(const Eigen::MatrixXd& selected_design, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& coefficients) {
    const Eigen::Index n = selected_design.rows();
    const Eigen::Index q = selected_design.cols();
    require(n > q, "underdetermined", "need more points than retained terms");
    require(y.size() == n && coefficients.size() == q, "dimension-mismatch", "loo_error inputs");

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(selected_design);
    const Eigen::MatrixXd thin_q =
        qr.householderQ() * Eigen::MatrixXd::Identity(n, q);
    const Eigen::VectorXd resid = y - selected_design * coefficients;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = thin_q.row(i).squaredNorm();
        const double denom = std::max(1.0 - h, 1e-12);
        const double term = resid[i] / denom;
        acc += term * term;
    }
    return acc / static_cast<double>(n);
}

double loo_error(const Eigen::MatrixXd& selected_design, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& coefficients) {
    const Eigen::Index n = selected_design.rows();
    const Eigen::Index q = selected_design.cols();
    const double raw = loo_error_raw(selected_design, y, coefficients);

    const Eigen::MatrixXd gram = selected_design.transpose() * selected_design;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    require(ldlt.info() == Eigen::Success, "singular-design", "Gram matrix not factorizable");
    const double tr_inv = ldlt.solve(Eigen::MatrixXd::Identity(q, q)).trace();
    const double t_factor =
        (static_cast<double>(n) / static_cast<double>(n - q)) * (1.0 + tr_inv);

    const double ymean = y.mean();
    const double yvar = (y.array() - ymean).square().sum() / static_cast<double>(n - 1);
    if (yvar <= 0.0) return raw == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return raw * t_factor / yvar;
}

Eigen::VectorXd PceSurrogate::predict_mean(const Eigen::VectorXd& m) const {
    require(m.size() == spec_.dim, "dimension-mismatch", "pce_predict input dimension");
    Eigen::VectorXd out(output_dim());
    for (int k = 0; k < output_dim(); ++k) {
        const auto& idx = indices_[static_cast<std::size_t>(k)];
        const auto& c = coefs_[static_cast<std::size_t>(k)];
        double acc = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j)
            acc += c[static_cast<Eigen::Index>(j)] * eval_basis(spec_, idx[j], m);
        out[k] = acc;
    }
    return out;
}

std::shared_ptr<PceSurrogate> pce_fit(const TrainingSet& training, const Prior& prior,
                                      const PceFitConfig& cfg) {
    const int n = training.size();
    const int dim = training.input_dim();
    require(n >= 2, "fit-failed", "need at least two training points");
    require(prior.dim() == dim, "dimension-mismatch", "prior does not match training inputs");
    if (n < 3 * dim)
        std::cerr << "pce_fit: only " << n << " training points for dim " << dim
                  << " (recommended minimum is 3*dim)\n";

    const int n_out = training.output_dim();
    std::vector<std::vector<MultiIndex>> retained(static_cast<std::size_t>(n_out));
    std::vector<Eigen::VectorXd> coefs(static_cast<std::size_t>(n_out));
    Eigen::VectorXd loo(n_out);

    // Highest order first would bias toward big candidate sets on ties; sweep
    // ascending and require strict improvement instead.
    PceBasisSpec best_spec;
    int fitted_outputs = 0;
    for (int k = 0; k < n_out; ++k) {
        const Eigen::VectorXd y = training.outputs.col(k);
        const double ymean = y.mean();
        const double ystd = std::sqrt((y.array() - ymean).square().sum() /
                                      std::max(1, n - 1));
        if (ystd <= 1e-14 * (1.0 + std::abs(ymean))) {
            retained[static_cast<std::size_t>(k)] = {MultiIndex(static_cast<std::size_t>(dim), 0)};
            coefs[static_cast<std::size_t>(k)] = Eigen::VectorXd::Constant(1, ymean);
            loo[k] = 0.0;
            ++fitted_outputs;
            continue;
        }

        double best_loo = std::numeric_limits<double>::infinity();
        std::vector<MultiIndex> best_idx;
        Eigen::VectorXd best_coef;
        for (int order : cfg.candidate_orders) {
            PceBasisSpec spec;
            spec.dim = dim;
            spec.order = order;
            spec.q_norm = cfg.q_norm;
            spec.prior = prior;
            const std::vector<MultiIndex> indices = build_index_set(spec);
            const Eigen::MatrixXd design = eval_design(spec, indices, training.inputs);

            LarsPath path;
            try {
                path = lars_select(design, y);
            } catch (const Error&) {
                continue;
            }

            auto consider = [&](const std::vector<int>& cols, const Eigen::VectorXd& full_coef,
                                double err) {
                const bool improved =
                    !std::isfinite(best_loo)
                        ? std::isfinite(err)
                        : err < best_loo - std::max(1e-14, 1e-6 * best_loo);
                if (improved) {
                    best_loo = err;
                    best_idx.clear();
                    best_coef.resize(static_cast<Eigen::Index>(cols.size()));
                    for (std::size_t c = 0; c < cols.size(); ++c) {
                        best_idx.push_back(indices[static_cast<std::size_t>(cols[c])]);
                        best_coef[static_cast<Eigen::Index>(c)] = full_coef[cols[c]];
                    }
                    best_spec = spec;
                    return true;
                }
                return false;
            };

            // intercept-only candidate
            if (!path.always_included.empty()) {
                Eigen::VectorXd c0;
                std::vector<int> cols = path.always_included;
                if (ols_subset(design, y, cols, c0)) {
                    Eigen::MatrixXd a(design.rows(), static_cast<Eigen::Index>(cols.size()));
                    Eigen::VectorXd sub(static_cast<Eigen::Index>(cols.size()));
                    for (std::size_t c = 0; c < cols.size(); ++c) {
                        a.col(static_cast<Eigen::Index>(c)) = design.col(cols[c]);
                        sub[static_cast<Eigen::Index>(c)] = c0[cols[c]];
                    }
                    consider(cols, c0, loo_error(a, y, sub));
                }
            }

            int since_improved = 0;
            for (std::size_t s = 0; s < path.entering.size(); ++s) {
                std::vector<int> cols = path.always_included;
                for (std::size_t e = 0; e <= s; ++e) cols.push_back(path.entering[e]);
                if (static_cast<int>(cols.size()) >= n) break;
                Eigen::MatrixXd a(design.rows(), static_cast<Eigen::Index>(cols.size()));
                Eigen::VectorXd sub(static_cast<Eigen::Index>(cols.size()));
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    a.col(static_cast<Eigen::Index>(c)) = design.col(cols[c]);
                    sub[static_cast<Eigen::Index>(c)] = path.coefs[s][cols[c]];
                }
                const double err = loo_error(a, y, sub);
                if (consider(cols, path.coefs[s], err)) {
                    since_improved = 0;
                } else if (++since_improved >= cfg.patience) {
                    break;
                }
            }
        }
        if (!best_idx.empty()) {
            retained[static_cast<std::size_t>(k)] = std::move(best_idx);
            coefs[static_cast<std::size_t>(k)] = std::move(best_coef);
            loo[k] = best_loo;
            ++fitted_outputs;
        }
    }
    require(fitted_outputs == n_out, "fit-failed", "no candidate basis produced a valid fit");

    PceBasisSpec spec = best_spec;
    if (spec.prior.dim() != dim) {
        spec.dim = dim;
        spec.order = cfg.candidate_orders.empty() ? 0 : cfg.candidate_orders.back();
        spec.q_norm = cfg.q_norm;
        spec.prior = prior;
    }
    return std::make_shared<PceSurrogate>(std::move(spec), std::move(retained), std::move(coefs),
                                          std::move(loo));
}

std::string PceSurrogate::to_json() const {
    nlohmann::json doc;
    doc["dim"] = spec_.dim;
    doc["order"] = spec_.order;
    doc["q_norm"] = spec_.q_norm;
    auto& prior = doc["prior"] = nlohmann::json::array();
    for (const Marginal& mg : spec_.prior.marginals())
        prior.push_back({{"kind", mg.kind == Marginal::Kind::Gaussian ? "gaussian" : "uniform"},
                         {"a", mg.a},
                         {"b", mg.b}});
    auto& outputs = doc["outputs"] = nlohmann::json::array();
    for (std::size_t k = 0; k < indices_.size(); ++k) {
        nlohmann::json entry;
        entry["indices"] = indices_[k];
        entry["coefficients"] = std::vector<double>(
            coefs_[k].data(), coefs_[k].data() + coefs_[k].size());
        entry["loo_error"] = loo_[static_cast<Eigen::Index>(k)];
        outputs.push_back(std::move(entry));
    }
    return doc.dump();
}

std::shared_ptr<PceSurrogate> PceSurrogate::from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    PceBasisSpec spec;
    spec.dim = doc.at("dim").get<int>();
    spec.order = doc.at("order").get<int>();
    spec.q_norm = doc.at("q_norm").get<double>();
    std::vector<Marginal> marginals;
    for (const auto& mg : doc.at("prior"))
        marginals.push_back(mg.at("kind").get<std::string>() == "gaussian"
                                ? Marginal::gaussian(mg.at("a").get<double>(),
                                                     mg.at("b").get<double>())
                                : Marginal::uniform(mg.at("a").get<double>(),
                                                    mg.at("b").get<double>()));
    spec.prior = Prior(std::move(marginals));

    std::vector<std::vector<MultiIndex>> indices;
    std::vector<Eigen::VectorXd> coefs;
    std::vector<double> loo;
    for (const auto& entry : doc.at("outputs")) {
        indices.push_back(entry.at("indices").get<std::vector<MultiIndex>>());
        const auto c = entry.at("coefficients").get<std::vector<double>>();
        coefs.push_back(
            Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())));
        loo.push_back(entry.at("loo_error").get<double>());
    }
    Eigen::VectorXd loo_vec =
        Eigen::Map<const Eigen::VectorXd>(loo.data(), static_cast<Eigen::Index>(loo.size()));
    return std::make_shared<PceSurrogate>(std::move(spec), std::move(indices), std::move(coefs),
                                          std::move(loo_vec));
}

} // namespace gwinfer::pce
