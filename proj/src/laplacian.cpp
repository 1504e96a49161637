#include "wbrain/laplacian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "wbrain/errors.hpp"

namespace wbrain {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Largest absolute row sum, an upper bound on ||C||_2 for symmetric C.
double infinity_norm(const SparseMatrix& c) {
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(c.rows());
    for (Eigen::Index col = 0; col < c.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(c, col); it; ++it) rows(it.row()) += std::abs(it.value());
    return rows.size() ? rows.maxCoeff() : 0.0;
}

void normalize_signs(Eigen::MatrixXd& vectors) {
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
        Eigen::Index idx = 0;
        vectors.col(j).cwiseAbs().maxCoeff(&idx);
        if (vectors(idx, j) < 0.0) vectors.col(j) = -vectors.col(j);
    }
}

EigenSystem dense_eigensystem(const LaplacianSystem& system, Eigen::Index k) {
    const Eigen::VectorXd inv_sqrt_mass = system.mass.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd scaled = Eigen::MatrixXd(system.stiffness);
    scaled = inv_sqrt_mass.asDiagonal() * scaled * inv_sqrt_mass.asDiagonal();
    scaled = 0.5 * (scaled + scaled.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scaled);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("dense symmetric eigensolver failed", 0, std::numeric_limits<double>::quiet_NaN());

    EigenSystem out;
    out.eigenvalues = solver.eigenvalues().head(k);
    out.eigenvectors = inv_sqrt_mass.asDiagonal() * solver.eigenvectors().leftCols(k);
    out.mesh_area = system.mesh_area;
    normalize_signs(out.eigenvectors);
    return out;
}

// Block Lanczos on the shift-inverted pencil, (C + delta A)^{-1} A, which is
// self-adjoint in the A inner product. The basis is kept A-orthonormal by
// full block reorthogonalization; Ritz pairs come from a Rayleigh-Ritz step
// on C itself, so eigenvalues do not depend on delta.
class BlockLanczos {
public:
    BlockLanczos(const LaplacianSystem& system, Eigen::Index k, const EigenOptions& options)
        : c_(system.stiffness), mass_(system.mass), k_(k), options_(options), rng_(options.seed) {
        m_ = mass_.size();
        block_ = std::max<Eigen::Index>(1, std::min(options.block_size, m_));
        max_basis_ = options.max_basis > 0 ? std::min(options.max_basis, m_)
                                           : std::min(m_, std::max<Eigen::Index>(6 * k_, k_ + 400));
        max_basis_ = std::max(max_basis_, std::min(m_, k_ + block_));
        norm_c_ = infinity_norm(c_);
        factorize(system);
    }

    EigenSystem solve(double mesh_area, EigenStats* stats) {
        basis_.resize(m_, max_basis_);
        projected_.setZero(max_basis_, max_basis_);

        Eigen::MatrixXd start(m_, block_);
        fill_random(start);
        Eigen::Index block_begin = 0;
        Eigen::Index block_cols = append(start);

        const Eigen::Index first_check = std::min(max_basis_, k_ + k_ / 2 + block_);
        const Eigen::Index interval = std::max<Eigen::Index>(2 * block_, k_ / 2);
        Eigen::Index last_check = 0;
        double worst = std::numeric_limits<double>::infinity();

        for (;;) {
            const bool exhausted = size_ >= max_basis_;
            if ((size_ >= first_check && size_ - last_check >= interval) || exhausted) {
                last_check = size_;
                if (rayleigh_ritz(worst)) break;
                if (exhausted) {
                    if (size_ == m_) break;  // full space: Ritz pairs are exact up to rounding
                    throw ConvergenceError("block Lanczos did not converge within the basis limit of " +
                                               std::to_string(max_basis_),
                                           static_cast<std::size_t>(applications_), worst);
                }
            }
            Eigen::MatrixXd next = apply(basis_.middleCols(block_begin, block_cols));
            block_begin = size_;
            block_cols = append(next);
            if (block_cols == 0) {
                // Krylov space closed; continue with fresh random directions.
                Eigen::MatrixXd fresh(m_, std::min(block_, max_basis_ - size_));
                fill_random(fresh);
                block_begin = size_;
                block_cols = append(fresh);
            }
        }

        EigenSystem out;
        out.eigenvalues = ritz_values_;
        out.eigenvectors = std::move(ritz_vectors_);
        out.mesh_area = mesh_area;
        normalize_signs(out.eigenvectors);
        if (stats) {
            stats->basis_size = size_;
            stats->operator_applications = applications_;
            stats->max_relative_residual = worst;
            stats->used_dense = false;
        }
        return out;
    }

private:
    void factorize(const LaplacianSystem& system) {
        const double trace_ratio = c_.diagonal().sum() / mass_.sum();
        double delta = 1e-8 * trace_ratio;
        for (int attempt = 0; attempt < 4; ++attempt, delta *= 100.0) {
            SparseMatrix shifted = c_;
            for (Eigen::Index i = 0; i < m_; ++i) shifted.coeffRef(i, i) += delta * system.mass(i);
            ldlt_.compute(shifted);
            if (ldlt_.info() == Eigen::Success && (ldlt_.vectorD().array() > 0.0).all()) return;
        }
        throw ConvergenceError("cannot factorize shifted stiffness matrix", 0, std::numeric_limits<double>::quiet_NaN());
    }

    void fill_random(Eigen::MatrixXd& block) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index j = 0; j < block.cols(); ++j)
            for (Eigen::Index i = 0; i < block.rows(); ++i) block(i, j) = normal(rng_);
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& block) {
        applications_ += block.cols();
        Eigen::MatrixXd rhs = mass_.asDiagonal() * block;
        return ldlt_.solve(rhs);
    }

    double a_norm(const Eigen::VectorXd& x) const {
        return std::sqrt(x.dot(mass_.asDiagonal() * x));
    }

    void project_out(Eigen::Ref<Eigen::MatrixXd> block, Eigen::Index upto) const {
        if (upto == 0) return;
        const auto q = basis_.leftCols(upto);
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::MatrixXd coeffs = q.transpose() * (mass_.asDiagonal() * block);
            block.noalias() -= q * coeffs;
        }
    }

    // A-orthonormalizes `block` against the basis and appends it; returns the
    // number of appended columns. Dependent columns are replaced by random ones.
    Eigen::Index append(Eigen::MatrixXd block) {
        const Eigen::Index room = max_basis_ - size_;
        if (block.cols() > room) block.conservativeResize(Eigen::NoChange, room);
        if (block.cols() == 0) return 0;

        Eigen::VectorXd before(block.cols());
        for (Eigen::Index j = 0; j < block.cols(); ++j) before(j) = a_norm(block.col(j));
        project_out(block, size_);

        const Eigen::Index start = size_;
        for (Eigen::Index j = 0; j < block.cols(); ++j) {
            Eigen::VectorXd x = block.col(j);
            double reference = before(j);
            for (int attempt = 0;; ++attempt) {
                for (int pass = 0; pass < 2; ++pass)
                    for (Eigen::Index i = start; i < size_; ++i)
                        x -= basis_.col(i).dot(mass_.asDiagonal() * x) * basis_.col(i);
                const double norm = a_norm(x);
                if (norm > 1e-8 * reference && norm > 0.0) {
                    basis_.col(size_) = x / norm;
                    break;
                }
                if (attempt > 3 || size_ >= m_) return finish_append(start);
                Eigen::MatrixXd fresh(m_, 1);
                fill_random(fresh);
                reference = a_norm(fresh.col(0));
                project_out(fresh, size_);
                x = fresh.col(0);
            }
            ++size_;
        }
        return finish_append(start);
    }

    Eigen::Index finish_append(Eigen::Index start) {
        const Eigen::Index added = size_ - start;
        if (added == 0) return 0;
        const Eigen::MatrixXd c_block = c_ * basis_.middleCols(start, added);
        const Eigen::MatrixXd col = basis_.leftCols(size_).transpose() * c_block;
        projected_.block(0, start, size_, added) = col;
        projected_.block(start, 0, added, size_) = col.transpose();
        return added;
    }

    bool rayleigh_ritz(double& worst) {
        Eigen::MatrixXd h = projected_.topLeftCorner(size_, size_);
        h = 0.5 * (h + h.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
        if (solver.info() != Eigen::Success)
            throw ConvergenceError("projected eigenproblem failed", static_cast<std::size_t>(applications_), worst);

        ritz_values_ = solver.eigenvalues().head(k_);
        ritz_vectors_ = basis_.leftCols(size_) * solver.eigenvectors().leftCols(k_);

        const Eigen::MatrixXd c_y = c_ * ritz_vectors_;
        const Eigen::MatrixXd a_y = mass_.asDiagonal() * ritz_vectors_;
        const double norm_a = mass_.maxCoeff();
        bool converged = true;
        worst = 0.0;
        for (Eigen::Index j = 0; j < k_; ++j) {
            const double lambda = ritz_values_(j);
            const double r = (c_y.col(j) - lambda * a_y.col(j)).norm();
            const double scale = c_y.col(j).norm() + std::abs(lambda) * a_y.col(j).norm();
            const double backward = r / ((norm_c_ + std::abs(lambda) * norm_a) * ritz_vectors_.col(j).norm());
            const bool ok = r <= options_.tolerance * scale || backward <= 1e3 * kEps;
            converged = converged && ok;
            worst = std::max(worst, scale > 0.0 ? r / scale : r);
        }
        return converged;
    }

    const SparseMatrix& c_;
    const Eigen::VectorXd& mass_;
    Eigen::Index k_;
    EigenOptions options_;
    std::mt19937_64 rng_;

    Eigen::Index m_ = 0;
    Eigen::Index block_ = 0;
    Eigen::Index max_basis_ = 0;
    Eigen::Index size_ = 0;
    Eigen::Index applications_ = 0;
    double norm_c_ = 0.0;

    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    Eigen::MatrixXd basis_;
    Eigen::MatrixXd projected_;
    Eigen::VectorXd ritz_values_;
    Eigen::MatrixXd ritz_vectors_;
};

}  // namespace

LaplacianSystem cotangent_system(const TriangleMesh& mesh) {
    const Eigen::Index m = mesh.num_vertices();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 6);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(m);
    double total_area = 0.0;

    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t) {
        const int idx[3] = {mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2)};
        for (int corner = 0; corner < 3; ++corner) {
            const int i = idx[corner];
            const int j = idx[(corner + 1) % 3];
            const int l = idx[(corner + 2) % 3];
            const Eigen::Vector3d e1 = mesh.vertices.row(j) - mesh.vertices.row(i);
            const Eigen::Vector3d e2 = mesh.vertices.row(l) - mesh.vertices.row(i);
            const double cross = e1.cross(e2).norm();
            const double cot = cross > 0.0 ? e1.dot(e2) / cross : std::numeric_limits<double>::infinity();
            if (!(std::abs(cot) <= kMaxCotangent))
                throw DegenerateMeshError("triangle " + std::to_string(t) + " of '" + mesh.label +
                                          "' has a near-zero angle (|cot| > 1e8)");
            // Edge (j, l) is opposite corner i.
            const double w = 0.5 * cot;
            triplets.emplace_back(j, l, w);
            triplets.emplace_back(l, j, w);
        }
        const double area = triangle_area(mesh, t);
        total_area += area;
        for (int corner = 0; corner < 3; ++corner) mass(idx[corner]) += area / 3.0;
    }

    SparseMatrix weights(m, m);
    weights.setFromTriplets(triplets.begin(), triplets.end());

    // C = D - W with d_i the row sums of W.
    LaplacianSystem out;
    out.stiffness = -weights;
    const Eigen::VectorXd degree = weights * Eigen::VectorXd::Ones(m);
    for (Eigen::Index i = 0; i < m; ++i) out.stiffness.coeffRef(i, i) += degree(i);
    out.stiffness.makeCompressed();
    out.mass = std::move(mass);
    out.mesh_area = total_area;
    return out;
}

EigenSystem eigendecompose(const LaplacianSystem& system, Eigen::Index k, const EigenOptions& options,
                           EigenStats* stats) {
    const Eigen::Index m = system.size();
    if (k < 1 || k > m)
        throw DimensionError("requested " + std::to_string(k) + " eigenpairs of a " + std::to_string(m) +
                             "-vertex system");
    if ((system.mass.array() <= 0.0).any()) throw DegenerateMeshError("mass matrix has a nonpositive entry");

    const bool dense = options.method == EigenMethod::dense ||
                       (options.method == EigenMethod::automatic && m <= options.dense_threshold);
    if (dense) {
        EigenSystem out = dense_eigensystem(system, k);
        if (stats) {
            *stats = {};
            stats->basis_size = m;
            stats->used_dense = true;
            stats->max_relative_residual = relative_residuals(system, out).maxCoeff();
        }
        return out;
    }
    BlockLanczos solver(system, k, options);
    return solver.solve(system.mesh_area, stats);
}

Eigen::VectorXd relative_residuals(const LaplacianSystem& system, const EigenSystem& eig) {
    const Eigen::MatrixXd c_xi = system.stiffness * eig.eigenvectors;
    const Eigen::MatrixXd a_xi = system.mass.asDiagonal() * eig.eigenvectors;
    const double floor = 1e3 * kEps * infinity_norm(system.stiffness);
    Eigen::VectorXd out(eig.num_pairs());
    for (Eigen::Index j = 0; j < eig.num_pairs(); ++j) {
        const double lambda = eig.eigenvalues(j);
        const double r = (c_xi.col(j) - lambda * a_xi.col(j)).norm();
        out(j) = r / (c_xi.col(j).norm() + std::abs(lambda) * a_xi.col(j).norm() +
                      floor * eig.eigenvectors.col(j).norm());
    }
    return out;
}

Eigen::VectorXd mht(const EigenSystem& eig, const Eigen::VectorXd& f, const Eigen::VectorXd& mass) {
    if (f.size() != eig.num_vertices() || mass.size() != eig.num_vertices())
        throw DimensionError("signal length " + std::to_string(f.size()) + " does not match " +
                             std::to_string(eig.num_vertices()) + " vertices");
    return eig.eigenvectors.transpose() * mass.cwiseProduct(f);
}

Eigen::VectorXd imht(const EigenSystem& eig, const Eigen::VectorXd& coeffs) {
    if (coeffs.size() != eig.num_pairs())
        throw DimensionError("expected " + std::to_string(eig.num_pairs()) + " coefficients, got " +
                             std::to_string(coeffs.size()));
    return eig.eigenvectors * coeffs;
}

Eigen::VectorXd shape_dna(const EigenSystem& eig, Eigen::Index d) {
    if (d < 1 || d >= eig.num_pairs())
        throw DimensionError("ShapeDNA length " + std::to_string(d) + " needs more than " + std::to_string(d) +
                             " eigenpairs, have " + std::to_string(eig.num_pairs()));
    return eig.eigenvalues.segment(1, d) * eig.mesh_area;
}

}  // namespace wbrain
