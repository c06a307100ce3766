#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <vector>

#include "gwinfer/common.hpp"

namespace gwinfer {

/// Independent per-dimension marginal: Gaussian(mean, std) or Uniform(low, high).
struct Marginal {
    enum class Kind { Gaussian, Uniform };
    Kind kind = Kind::Gaussian;
    double a = 0.0; // mean (Gaussian) or low (Uniform)
    double b = 1.0; // std  (Gaussian) or high (Uniform)

    static Marginal gaussian(double mean, double std) {
        require(std > 0.0, "invalid-spec", "Gaussian marginal needs std > 0");
        return {Kind::Gaussian, mean, std};
    }
    static Marginal uniform(double low, double high) {
        require(low < high, "invalid-spec", "Uniform marginal needs low < high");
        return {Kind::Uniform, low, high};
    }
};

class Prior {
public:
    Prior() = default;
    explicit Prior(std::vector<Marginal> marginals) : marginals_(std::move(marginals)) {}

    int dim() const { return static_cast<int>(marginals_.size()); }
    const Marginal& marginal(int i) const { return marginals_[static_cast<std::size_t>(i)]; }
    const std::vector<Marginal>& marginals() const { return marginals_; }

    /// log p(m); -inf outside the support of any uniform coordinate.
    double log_density(const Eigen::VectorXd& m) const {
        require(m.size() == dim(), "dimension-mismatch", "prior log_density");
        double lp = 0.0;
        for (int i = 0; i < dim(); ++i) {
            const Marginal& mg = marginals_[static_cast<std::size_t>(i)];
            if (mg.kind == Marginal::Kind::Gaussian) {
                const double z = (m[i] - mg.a) / mg.b;
                lp += -0.5 * z * z - std::log(mg.b) - 0.5 * std::log(2.0 * M_PI);
            } else {
                if (m[i] < mg.a || m[i] > mg.b)
                    return -std::numeric_limits<double>::infinity();
                lp += -std::log(mg.b - mg.a);
            }
        }
        return lp;
    }

    Eigen::VectorXd sample(RngStream& rng) const {
        Eigen::VectorXd m(dim());
        for (int i = 0; i < dim(); ++i) {
            const Marginal& mg = marginals_[static_cast<std::size_t>(i)];
            m[i] = mg.kind == Marginal::Kind::Gaussian ? mg.a + mg.b * rng.normal()
                                                       : rng.uniform(mg.a, mg.b);
        }
        return m;
    }

    /// Map to the prior-normalized space: Uniform -> [0,1], Gaussian -> z-score.
    /// Both surrogates and the design-point distance metric work here.
    Eigen::VectorXd to_unit(const Eigen::VectorXd& m) const {
        require(m.size() == dim(), "dimension-mismatch", "prior to_unit");
        Eigen::VectorXd u(dim());
        for (int i = 0; i < dim(); ++i) {
            const Marginal& mg = marginals_[static_cast<std::size_t>(i)];
            u[i] = mg.kind == Marginal::Kind::Gaussian ? (m[i] - mg.a) / mg.b
                                                       : (m[i] - mg.a) / (mg.b - mg.a);
        }
        return u;
    }

    Eigen::VectorXd from_unit(const Eigen::VectorXd& u) const {
        require(u.size() == dim(), "dimension-mismatch", "prior from_unit");
        Eigen::VectorXd m(dim());
        for (int i = 0; i < dim(); ++i) {
            const Marginal& mg = marginals_[static_cast<std::size_t>(i)];
            m[i] = mg.kind == Marginal::Kind::Gaussian ? mg.a + mg.b * u[i]
                                                       : mg.a + (mg.b - mg.a) * u[i];
        }
        return m;
    }

    /// Span of each coordinate used for normalized error metrics and KDE grids:
    /// high-low for uniform, 8 std centered on the mean for Gaussian.
    std::pair<double, double> range(int i) const {
        const Marginal& mg = marginals_[static_cast<std::size_t>(i)];
        if (mg.kind == Marginal::Kind::Uniform) return {mg.a, mg.b};
        return {mg.a - 4.0 * mg.b, mg.a + 4.0 * mg.b};
    }

private:
    std::vector<Marginal> marginals_;
};

} // namespace gwinfer
