#include "gwinfer/fields.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace gwinfer::fields {

Eigen::MatrixXd build_covariance(const GridSpec& grid, const CovarianceSpec& spec) {
    grid.validate();
    spec.validate();
    const int n = grid.n_nodes();
    Eigen::VectorXd xs(n), ys(n);
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) {
            xs[grid.node(i, j)] = grid.cell_x(i);
            ys[grid.node(i, j)] = grid.cell_y(j);
        }

    Eigen::MatrixXd cov(n, n);
    for (int a = 0; a < n; ++a) {
        cov(a, a) = spec.variance;
        for (int b = 0; b < a; ++b) {
            const double ddx = std::abs(xs[a] - xs[b]);
            const double ddy = std::abs(ys[a] - ys[b]);
            double c;
            if (spec.kernel_kind == KernelKind::SeparableExponential) {
                c = spec.variance * std::exp(-ddx / spec.corr_len_x - ddy / spec.corr_len_y);
            } else {
                const double rx = ddx / spec.corr_len_x;
                const double ry = ddy / spec.corr_len_y;
                c = spec.variance * std::exp(-std::sqrt(rx * rx + ry * ry));
            }
            cov(a, b) = c;
            cov(b, a) = c; // exact symmetry by construction
        }
    }
    return cov;
}

namespace {

// Eigenpairs of the 1D exponential correlation matrix exp(-|xi-xj|/l) at the
// given coordinates, sorted descending.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> eig_1d_exponential(const Eigen::VectorXd& coords,
                                                               double corr_len) {
    const int n = static_cast<int>(coords.size());
    Eigen::MatrixXd c(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b <= a; ++b) {
            const double v = std::exp(-std::abs(coords[a] - coords[b]) / corr_len);
            c(a, b) = v;
            c(b, a) = v;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    if (es.info() != Eigen::Success) fail("decomposition-failed", "1D eigen-solver failed");
    // Eigen returns ascending order; flip.
    Eigen::VectorXd vals = es.eigenvalues().reverse();
    Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
    return {vals, vecs};
}

KLBasis finalize_basis(Eigen::VectorXd vals, Eigen::MatrixXd vecs, double trace,
                       const GridSpec& grid, double mean, int n_terms) {
    // Clamp tiny negative eigenvalues from floating point.
    const double eps_eig = 1e-10 * trace / grid.n_nodes();
    for (int i = 0; i < vals.size(); ++i) {
        require(vals[i] >= -eps_eig, "decomposition-failed",
                "eigenvalue below the negative-noise tolerance");
        if (vals[i] < 0.0) vals[i] = 0.0;
    }
    KLBasis basis;
    basis.eigenvalues = std::move(vals);
    basis.eigenvectors = std::move(vecs);
    basis.n_terms = n_terms;
    basis.retained_fraction = basis.eigenvalues.sum() / trace;
    basis.mean_field = Eigen::VectorXd::Constant(grid.n_nodes(), mean);
    basis.grid = grid;
    return basis;
}

} // namespace

KLBasis kl_decompose(const GridSpec& grid, const CovarianceSpec& spec, int n_terms) {
    grid.validate();
    spec.validate();
    require(n_terms >= 1 && n_terms <= grid.n_nodes(), "invalid-spec",
            "n_terms must be in [1, n_nodes]");

    if (spec.kernel_kind != KernelKind::SeparableExponential)
        return kl_decompose(build_covariance(grid, spec), grid, spec.mean, n_terms);

    // Kronecker path: C = sigma^2 * Cx (x) Cy, so eigenvalues are
    // sigma^2 * lambda_x * lambda_y and eigenvectors are products.
    Eigen::VectorXd xs(grid.nx), ys(grid.ny);
    for (int i = 0; i < grid.nx; ++i) xs[i] = grid.cell_x(i);
    for (int j = 0; j < grid.ny; ++j) ys[j] = grid.cell_y(j);
    auto [lx, ux] = eig_1d_exponential(xs, spec.corr_len_x);
    auto [ly, uy] = eig_1d_exponential(ys, spec.corr_len_y);

    struct Entry {
        double value;
        int ix;
        int iy;
    };
    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(grid.nx) * grid.ny);
    for (int ix = 0; ix < grid.nx; ++ix)
        for (int iy = 0; iy < grid.ny; ++iy)
            entries.push_back({spec.variance * lx[ix] * ly[iy], ix, iy});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(b.value, a.ix, a.iy) < std::tie(a.value, b.ix, b.iy);
    });

    Eigen::VectorXd vals(n_terms);
    Eigen::MatrixXd vecs(grid.n_nodes(), n_terms);
    for (int k = 0; k < n_terms; ++k) {
        vals[k] = entries[static_cast<std::size_t>(k)].value;
        const int ix = entries[static_cast<std::size_t>(k)].ix;
        const int iy = entries[static_cast<std::size_t>(k)].iy;
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i)
                vecs(grid.node(i, j), k) = ux(i, ix) * uy(j, iy);
    }
    const double trace = spec.variance * grid.n_nodes();
    return finalize_basis(std::move(vals), std::move(vecs), trace, grid, spec.mean, n_terms);
}

KLBasis kl_decompose(const Eigen::MatrixXd& cov, const GridSpec& grid, double mean, int n_terms) {
    grid.validate();
    require(cov.rows() == grid.n_nodes() && cov.cols() == grid.n_nodes(), "dimension-mismatch",
            "covariance size does not match grid");
    require(n_terms >= 1 && n_terms <= grid.n_nodes(), "invalid-spec",
            "n_terms must be in [1, n_nodes]");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) fail("decomposition-failed", "dense eigen-solver failed");
    const int n = grid.n_nodes();
    Eigen::VectorXd vals(n_terms);
    Eigen::MatrixXd vecs(n, n_terms);
    for (int k = 0; k < n_terms; ++k) {
        vals[k] = es.eigenvalues()[n - 1 - k];
        vecs.col(k) = es.eigenvectors().col(n - 1 - k);
    }
    return finalize_basis(std::move(vals), std::move(vecs), cov.trace(), grid, mean, n_terms);
}

FieldRealization kl_realize(const KLBasis& basis, const Eigen::VectorXd& xi) {
    require(xi.size() == basis.n_terms, "dimension-mismatch",
            "xi length must equal the number of KL terms");
    FieldRealization field;
    field.grid = basis.grid;
    field.values = basis.mean_field;
    for (int k = 0; k < basis.n_terms; ++k)
        field.values += std::sqrt(basis.eigenvalues[k]) * xi[k] * basis.eigenvectors.col(k);
    for (int i = 0; i < field.values.size(); ++i)
        require(std::isfinite(field.values[i]), "invalid-spec", "non-finite field value");
    return field;
}

Eigen::MatrixXd jittered_cholesky(const Eigen::MatrixXd& a) {
    const double base = 1e-12 * a.diagonal().mean();
    double jitter = 0.0;
    for (int attempt = 0; attempt <= 8; ++attempt) {
        Eigen::MatrixXd work = a;
        if (jitter > 0.0) work.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        jitter = jitter == 0.0 ? base : 2.0 * jitter;
    }
    fail("not-positive-definite", "Cholesky failed after maximum jitter");
}

FieldRealization sample_field(const Eigen::MatrixXd& cov, const GridSpec& grid, double mean,
                              std::uint64_t seed) {
    grid.validate();
    require(cov.rows() == grid.n_nodes() && cov.cols() == grid.n_nodes(), "dimension-mismatch",
            "covariance size does not match grid");
    if (cov.cwiseAbs().maxCoeff() == 0.0) {
        FieldRealization field;
        field.grid = grid;
        field.values = Eigen::VectorXd::Constant(grid.n_nodes(), mean);
        return field;
    }
    const Eigen::MatrixXd chol = jittered_cholesky(cov);
    RngStream rng(seed);
    Eigen::VectorXd z(grid.n_nodes());
    for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
    FieldRealization field;
    field.grid = grid;
    field.values = Eigen::VectorXd::Constant(grid.n_nodes(), mean) + chol * z;
    return field;
}

std::string FieldRealization::to_csv() const {
    std::ostringstream out;
    out << "nx,ny,length_x,length_y\n";
    out << grid.nx << "," << grid.ny << "," << grid.length_x << "," << grid.length_y << "\n";
    out.precision(17);
    for (int i = 0; i < values.size(); ++i) out << values[i] << "\n";
    return out.str();
}

std::string KLBasis::to_json() const {
    nlohmann::json doc;
    doc["grid"] = {{"nx", grid.nx},
                   {"ny", grid.ny},
                   {"length_x", grid.length_x},
                   {"length_y", grid.length_y}};
    doc["n_terms"] = n_terms;
    doc["retained_fraction"] = retained_fraction;
    doc["eigenvalues"] = std::vector<double>(eigenvalues.data(), eigenvalues.data() + n_terms);
    doc["mean_field"] =
        std::vector<double>(mean_field.data(), mean_field.data() + mean_field.size());
    auto& vecs = doc["eigenvectors"] = nlohmann::json::array();
    for (int k = 0; k < n_terms; ++k)
        vecs.push_back(std::vector<double>(eigenvectors.col(k).data(),
                                           eigenvectors.col(k).data() + eigenvectors.rows()));
    return doc.dump();
}

KLBasis KLBasis::from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    KLBasis basis;
    basis.grid.nx = doc.at("grid").at("nx").get<int>();
    basis.grid.ny = doc.at("grid").at("ny").get<int>();
    basis.grid.length_x = doc.at("grid").at("length_x").get<double>();
    basis.grid.length_y = doc.at("grid").at("length_y").get<double>();
    basis.n_terms = doc.at("n_terms").get<int>();
    basis.retained_fraction = doc.at("retained_fraction").get<double>();
    const auto vals = doc.at("eigenvalues").get<std::vector<double>>();
    basis.eigenvalues = Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                          static_cast<Eigen::Index>(vals.size()));
    const auto mean = doc.at("mean_field").get<std::vector<double>>();
    basis.mean_field =
        Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const auto& vecs = doc.at("eigenvectors");
    basis.eigenvectors.resize(basis.grid.n_nodes(), basis.n_terms);
    for (int k = 0; k < basis.n_terms; ++k) {
        const auto col = vecs.at(static_cast<std::size_t>(k)).get<std::vector<double>>();
        basis.eigenvectors.col(k) =
            Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
    }
    return basis;
}

} // namespace gwinfer::fields
