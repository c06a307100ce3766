#pragma once

#include <Eigen/Core>

#include "gwinfer/common.hpp"

namespace gwinfer::kde {

struct DensityCurve {
    Eigen::VectorXd x;   // evaluation grid
    Eigen::VectorXd pdf; // Gaussian-kernel density estimate
};

/// Silverman's rule of thumb: 0.9 min(std, IQR/1.34) n^(-1/5).
double silverman_bandwidth(const Eigen::VectorXd& samples);

/// Gaussian-kernel density on n_grid points over [lo, hi]. A degenerate
/// (zero-bandwidth) sample produces a single-bin spike integrating to one.
DensityCurve gaussian_kde(const Eigen::VectorXd& samples, double lo, double hi, int n_grid = 256);

struct SummaryStats {
    double mean = 0.0;
    double std = 0.0;
    Eigen::VectorXd quantiles; // at the requested levels
};

SummaryStats summarize_samples(const Eigen::VectorXd& samples,
                               const Eigen::VectorXd& levels);

/// Overlap coefficient of two densities on a shared grid: integral of the
/// pointwise minimum (1 = identical, 0 = disjoint).
double density_overlap(const DensityCurve& a, const DensityCurve& b);

/// Local maxima of a density curve above a relative prominence threshold.
int count_modes(const DensityCurve& curve, double rel_threshold = 0.05,
                Eigen::VectorXd* locations = nullptr);

} // namespace gwinfer::kde
