#pragma once

#include <Eigen/Core>
#include <memory>

#include "gwinfer/common.hpp"
#include "gwinfer/prior.hpp"

namespace gwinfer {

/// Design points paired with high-fidelity outputs.
struct TrainingSet {
    Eigen::MatrixXd inputs;  // N_t x dim, one design point per row
    Eigen::MatrixXd outputs; // N_t x N_y

    int size() const { return static_cast<int>(inputs.rows()); }
    int input_dim() const { return static_cast<int>(inputs.cols()); }
    int output_dim() const { return static_cast<int>(outputs.cols()); }

    void append(const Eigen::VectorXd& m, const Eigen::VectorXd& y) {
        inputs.conservativeResize(inputs.rows() + 1, m.size());
        inputs.row(inputs.rows() - 1) = m.transpose();
        outputs.conservativeResize(outputs.rows() + 1, y.size());
        outputs.row(outputs.rows() - 1) = y.transpose();
    }
};

/// Trained cheap approximation of the forward model. Immutable after
/// construction and safe for concurrent prediction.
class Surrogate {
public:
    virtual ~Surrogate() = default;
    virtual int input_dim() const = 0;
    virtual int output_dim() const = 0;
    virtual Eigen::VectorXd predict_mean(const Eigen::VectorXd& m) const = 0;
    /// Per-output predictive variance; zero for surrogates without one.
    virtual Eigen::VectorXd predict_variance(const Eigen::VectorXd& /*m*/) const {
        return Eigen::VectorXd::Zero(output_dim());
    }
    virtual bool has_variance() const { return false; }
};

using SurrogatePtr = std::shared_ptr<const Surrogate>;

} // namespace gwinfer
