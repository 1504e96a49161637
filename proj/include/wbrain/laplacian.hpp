// Cotangent Laplace-Beltrami discretization and its generalized eigenproblem
//
//     C xi = lambda A xi,   C = D - W (stiffness),  A = diag(a_i) (lumped mass).
//
// Eigenvectors are A-orthonormal, so the manifold harmonic transform uses the
// A-weighted inner product and the inverse transform is exact when k = m.
#pragma once

#include <cstdint>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "wbrain/mesh.hpp"

namespace wbrain {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct LaplacianSystem {
    SparseMatrix stiffness;  // C = D - W, symmetric, zero row sums
    Eigen::VectorXd mass;    // diagonal of A, barycentric vertex areas
    double mesh_area = 0.0;

    Eigen::Index size() const { return mass.size(); }
};

struct EigenSystem {
    Eigen::VectorXd eigenvalues;   // ascending
    Eigen::MatrixXd eigenvectors;  // m x k, A-orthonormal columns
    double mesh_area = 0.0;

    Eigen::Index num_pairs() const { return eigenvalues.size(); }
    Eigen::Index num_vertices() const { return eigenvectors.rows(); }
};

// Cotangents above this magnitude mark a near-zero angle.
inline constexpr double kMaxCotangent = 1e8;

LaplacianSystem cotangent_system(const TriangleMesh& mesh);

enum class EigenMethod { automatic, dense, sparse };

struct EigenOptions {
    EigenMethod method = EigenMethod::automatic;
    // automatic picks the dense solver up to this many vertices.
    Eigen::Index dense_threshold = 512;
    // Sparse solver: relative residual target and Krylov block width.
    double tolerance = 1e-10;
    Eigen::Index block_size = 8;
    // Upper bound on the Krylov basis dimension; 0 means min(m, max(6k, k + 400)).
    Eigen::Index max_basis = 0;
    std::uint64_t seed = 0x5eedULL;
};

struct EigenStats {
    Eigen::Index basis_size = 0;
    Eigen::Index operator_applications = 0;
    double max_relative_residual = 0.0;
    bool used_dense = false;
};

EigenSystem eigendecompose(const LaplacianSystem& system, Eigen::Index k, const EigenOptions& options = {},
                           EigenStats* stats = nullptr);

// Relative residual ||C xi - lambda A xi|| / (||C xi|| + |lambda| ||A xi|| + floor) per pair.
Eigen::VectorXd relative_residuals(const LaplacianSystem& system, const EigenSystem& eig);

// Forward manifold harmonic transform: coeff_l = xi_l^T A f.
Eigen::VectorXd mht(const EigenSystem& eig, const Eigen::VectorXd& f, const Eigen::VectorXd& mass);

// Inverse transform: f = Xi coeffs.
Eigen::VectorXd imht(const EigenSystem& eig, const Eigen::VectorXd& coeffs);

// (lambda_2, ..., lambda_{d+1}) scaled by the total surface area.
Eigen::VectorXd shape_dna(const EigenSystem& eig, Eigen::Index d);

}  // namespace wbrain
