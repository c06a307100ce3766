#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "gwinfer/prior.hpp"
#include "gwinfer/surrogate.hpp"

namespace gwinfer::pce {

/// One multivariate polynomial degree tuple.
using MultiIndex = std::vector<int>;

struct PceBasisSpec {
    int dim = 1;
    int order = 2;
    double q_norm = 0.75;
    Prior prior; // fixes the polynomial family per dimension

    void validate() const {
        require(dim >= 1, "invalid-spec", "basis dim must be >= 1");
        require(order >= 0, "invalid-spec", "basis order must be >= 0");
        require(q_norm > 0.0 && q_norm <= 1.0, "invalid-spec", "q_norm must be in (0,1]");
        require(prior.dim() == dim, "invalid-spec", "prior dimension must match basis dim");
    }
};

/// All multi-indices with hyperbolic q-norm <= order, sorted by
/// (total degree asc, lexicographic asc).
std::vector<MultiIndex> build_index_set(const PceBasisSpec& spec);

/// Product of univariate orthonormal polynomials at the prior-standardized
/// coordinates of m (probabilists' Hermite / shifted Legendre).
double eval_basis(const PceBasisSpec& spec, const MultiIndex& index, const Eigen::VectorXd& m);

/// Design matrix of all indices at the given points (rows).
Eigen::MatrixXd eval_design(const PceBasisSpec& spec, const std::vector<MultiIndex>& indices,
                            const Eigen::MatrixXd& points);

/// Ordered LARS entering path with hybrid OLS refits. Columns whose training
/// variance is (near) zero are excluded from selection but kept in every
/// refit, so a constant column acts as the intercept.
struct LarsPath {
    std::vector<int> entering;            // column index entering at each step
    std::vector<Eigen::VectorXd> coefs;   // full-size OLS coefficients after each step
    std::vector<int> always_included;     // degenerate columns present in every refit
};
LarsPath lars_select(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

/// Corrected leave-one-out error of an OLS fit on the selected design:
/// hat-matrix shortcut times T = (N/(N-Q)) (1 + tr((A^T A)^-1)), normalized by
/// the empirical variance of y.
double loo_error(const Eigen::MatrixXd& selected_design, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& coefficients);
/// The uncorrected, unnormalized hat-matrix shortcut (1/N) sum ((y-yhat)/(1-h))^2.
double loo_error_raw(const Eigen::MatrixXd& selected_design, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& coefficients);

struct PceFitConfig {
    std::vector<int> candidate_orders = {2, 3, 4};
    double q_norm = 0.75;
    int patience = 2; // LOO early-stopping patience along the LARS path
};

class PceSurrogate final : public Surrogate {
public:
    PceSurrogate(PceBasisSpec spec, std::vector<std::vector<MultiIndex>> indices,
                 std::vector<Eigen::VectorXd> coefs, Eigen::VectorXd loo)
        : spec_(std::move(spec)), indices_(std::move(indices)), coefs_(std::move(coefs)),
          loo_(std::move(loo)) {}

    int input_dim() const override { return spec_.dim; }
    int output_dim() const override { return static_cast<int>(indices_.size()); }
    Eigen::VectorXd predict_mean(const Eigen::VectorXd& m) const override;

    const PceBasisSpec& basis_spec() const { return spec_; }
    const std::vector<MultiIndex>& retained_indices(int output) const {
        return indices_[static_cast<std::size_t>(output)];
    }
    const Eigen::VectorXd& coefficients(int output) const {
        return coefs_[static_cast<std::size_t>(output)];
    }
    const Eigen::VectorXd& loo_errors() const { return loo_; }

    std::string to_json() const;
    static std::shared_ptr<PceSurrogate> from_json(const std::string& text);

private:
    PceBasisSpec spec_;
    std::vector<std::vector<MultiIndex>> indices_; // per output component
    std::vector<Eigen::VectorXd> coefs_;           // per output component
    Eigen::VectorXd loo_;                          // per output component
};

/// Independent sparse PCE per output component: LARS path per candidate order,
/// corrected-LOO early stopping, best model kept.
std::shared_ptr<PceSurrogate> pce_fit(const TrainingSet& training, const Prior& prior,
                                      const PceFitConfig& cfg = {});

} // namespace gwinfer::pce
