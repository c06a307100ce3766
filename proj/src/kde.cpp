#include "gwinfer/kde.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gwinfer::kde {

namespace {
double quantile_sorted(const std::vector<double>& sorted, double level) {
    const double pos = level * (static_cast<double>(sorted.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[hi];
}
} // namespace

double silverman_bandwidth(const Eigen::VectorXd& samples) {
    const Eigen::Index n = samples.size();
    require(n >= 2, "invalid-spec", "bandwidth needs at least two samples");
    const double mean = samples.mean();
    const double sd = std::sqrt((samples.array() - mean).square().sum() / (n - 1));
    std::vector<double> sorted(samples.data(), samples.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

DensityCurve gaussian_kde(const Eigen::VectorXd& samples, double lo, double hi, int n_grid) {
    require(samples.size() >= 1, "invalid-spec", "KDE needs samples");
    require(hi > lo && n_grid >= 2, "invalid-spec", "KDE grid invalid");
    DensityCurve curve;
    curve.x.resize(n_grid);
    curve.pdf = Eigen::VectorXd::Zero(n_grid);
    const double step = (hi - lo) / (n_grid - 1);
    for (int i = 0; i < n_grid; ++i) curve.x[i] = lo + step * i;

    const double h = samples.size() >= 2 ? silverman_bandwidth(samples) : 0.0;
    if (h <= 0.0) {
        // all samples (numerically) identical: a one-bin spike
        const double c = samples[0];
        int nearest = 0;
        for (int i = 1; i < n_grid; ++i)
            if (std::abs(curve.x[i] - c) < std::abs(curve.x[nearest] - c)) nearest = i;
        curve.pdf[nearest] = 1.0 / step;
        return curve;
    }
    const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * M_PI));
    for (int i = 0; i < n_grid; ++i) {
        double acc = 0.0;
        for (Eigen::Index s = 0; s < samples.size(); ++s) {
            const double z = (curve.x[i] - samples[s]) / h;
            acc += std::exp(-0.5 * z * z);
        }
        curve.pdf[i] = norm * acc;
    }
    return curve;
}

SummaryStats summarize_samples(const Eigen::VectorXd& samples, const Eigen::VectorXd& levels) {
    require(samples.size() >= 1, "invalid-spec", "summary needs samples");
    SummaryStats st;
    st.mean = samples.mean();
    st.std = samples.size() > 1
                 ? std::sqrt((samples.array() - st.mean).square().sum() / (samples.size() - 1))
                 : 0.0;
    std::vector<double> sorted(samples.data(), samples.data() + samples.size());
    std::sort(sorted.begin(), sorted.end());
    st.quantiles.resize(levels.size());
    for (Eigen::Index i = 0; i < levels.size(); ++i)
        st.quantiles[i] = quantile_sorted(sorted, levels[i]);
    return st;
}

double density_overlap(const DensityCurve& a, const DensityCurve& b) {
    require(a.x.size() == b.x.size(), "dimension-mismatch", "density grids differ");
    double acc = 0.0;
    for (Eigen::Index i = 0; i + 1 < a.x.size(); ++i) {
        const double dx = a.x[i + 1] - a.x[i];
        acc += 0.5 * dx *
               (std::min(a.pdf[i], b.pdf[i]) + std::min(a.pdf[i + 1], b.pdf[i + 1]));
    }
    return acc;
}

int count_modes(const DensityCurve& curve, double rel_threshold, Eigen::VectorXd* locations) {
    const double peak = curve.pdf.maxCoeff();
    const double floor = rel_threshold * peak;
    std::vector<double> found_x, found_h;
    std::vector<Eigen::Index> found_i;
    const Eigen::Index n = curve.pdf.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double left = i > 0 ? curve.pdf[i - 1] : -1.0;
        const double right = i + 1 < n ? curve.pdf[i + 1] : -1.0;
        if (curve.pdf[i] <= floor || curve.pdf[i] < left || curve.pdf[i] <= right) continue;
        if (!found_i.empty()) {
            // an actual dip between consecutive modes, not a shoulder
            double valley = curve.pdf[i];
            for (Eigen::Index j = found_i.back(); j <= i; ++j)
                valley = std::min(valley, curve.pdf[j]);
            const double lower_mode = std::min(curve.pdf[i], found_h.back());
            if (valley > 0.8 * lower_mode) {
                // merge into the taller peak
                if (curve.pdf[i] > found_h.back()) {
                    found_x.back() = curve.x[i];
                    found_h.back() = curve.pdf[i];
                    found_i.back() = i;
                }
                continue;
            }
        }
        found_x.push_back(curve.x[i]);
        found_h.push_back(curve.pdf[i]);
        found_i.push_back(i);
    }
    if (locations) {
        locations->resize(static_cast<Eigen::Index>(found_x.size()));
        for (std::size_t k = 0; k < found_x.size(); ++k)
            (*locations)[static_cast<Eigen::Index>(k)] = found_x[k];
    }
    return static_cast<int>(found_x.size());
}

} // namespace gwinfer::kde
