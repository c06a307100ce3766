#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gwinfer/common.hpp"

namespace gwinfer::fields {

/// Regular 2D grid of cells; field values and PDE unknowns live at cell centers.
struct GridSpec {
    int nx = 2;
    int ny = 2;
    double length_x = 1.0;
    double length_y = 1.0;

    void validate() const {
        require(nx >= 2 && ny >= 2, "invalid-spec", "grid needs nx >= 2 and ny >= 2");
        require(length_x > 0.0 && length_y > 0.0, "invalid-spec", "grid extents must be > 0");
    }

    int n_nodes() const { return nx * ny; }
    double dx() const { return length_x / nx; }
    double dy() const { return length_y / ny; }
    double cell_x(int i) const { return (i + 0.5) * dx(); }
    double cell_y(int j) const { return (j + 0.5) * dy(); }
    /// Row-major node id: rows are y, columns are x.
    int node(int i, int j) const { return j * nx + i; }
    int cell_index_x(double x) const {
        int i = static_cast<int>(std::floor(x / dx()));
        return std::min(std::max(i, 0), nx - 1);
    }
    int cell_index_y(double y) const {
        int j = static_cast<int>(std::floor(y / dy()));
        return std::min(std::max(j, 0), ny - 1);
    }

    bool operator==(const GridSpec&) const = default;
};

enum class KernelKind { SeparableExponential, IsotropicExponential };

struct CovarianceSpec {
    double variance = 1.0;   // sigma_Y^2 in log-conductivity space
    double corr_len_x = 1.0; // l_x
    double corr_len_y = 1.0; // l_y
    KernelKind kernel_kind = KernelKind::SeparableExponential;
    double mean = 0.0; // constant mean of the Y field

    void validate() const {
        require(variance > 0.0, "invalid-spec", "covariance variance must be > 0");
        require(corr_len_x > 0.0 && corr_len_y > 0.0, "invalid-spec",
                "correlation lengths must be > 0");
    }
};

/// Truncated Karhunen-Loeve basis of a field covariance on the discrete grid.
struct KLBasis {
    Eigen::VectorXd eigenvalues;  // tau_i, nonincreasing, clamped >= 0
    Eigen::MatrixXd eigenvectors; // n_nodes x n_terms, orthonormal columns
    int n_terms = 0;
    double retained_fraction = 0.0; // sum(tau_i) / trace(C)
    Eigen::VectorXd mean_field;     // Ybar per node
    GridSpec grid;

    std::string to_json() const;
    static KLBasis from_json(const std::string& text);
};

struct FieldRealization {
    Eigen::VectorXd values; // Y = ln K per node, row-major
    GridSpec grid;

    std::string to_csv() const;
};

/// Dense covariance matrix between cell centers. Entry (a,b) is
/// sigma^2 exp(-|dx|/lx - |dy|/ly) for the separable kernel or
/// sigma^2 exp(-sqrt(dx^2/lx^2 + dy^2/ly^2)) for the isotropic one.
Eigen::MatrixXd build_covariance(const GridSpec& grid, const CovarianceSpec& spec);

/// Largest n_terms eigenpairs of the grid covariance. The separable kernel
/// uses the Kronecker 1D-eigenproblem path; a dense matrix goes through
/// Eigen's self-adjoint solver.
KLBasis kl_decompose(const GridSpec& grid, const CovarianceSpec& spec, int n_terms);
KLBasis kl_decompose(const Eigen::MatrixXd& cov, const GridSpec& grid, double mean, int n_terms);

/// Y(x) = Ybar(x) + sum_i sqrt(tau_i) s_i(x) xi_i.
FieldRealization kl_realize(const KLBasis& basis, const Eigen::VectorXd& xi);

/// Direct draw Ybar + L z with L a (jittered) Cholesky factor of cov.
FieldRealization sample_field(const Eigen::MatrixXd& cov, const GridSpec& grid, double mean,
                              std::uint64_t seed);

/// Cholesky with the shared jitter schedule: add 1e-12*mean(diag), doubling up
/// to 8 times; throws not-positive-definite if all attempts fail.
Eigen::MatrixXd jittered_cholesky(const Eigen::MatrixXd& a);

} // namespace gwinfer::fields
