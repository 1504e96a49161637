// Shared fixtures for the unit tests.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <unistd.h>

#include "wbrain/mesh.hpp"
#include "wbrain/synth.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "wbrain") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Regular tetrahedron with unit edges, outward orientation.
inline wbrain::TriangleMesh tetrahedron() {
    wbrain::TriangleMesh mesh;
    mesh.vertices.resize(4, 3);
    const double s = 1.0 / std::sqrt(2.0);
    mesh.vertices << 1, 0, -s, -1, 0, -s, 0, 1, s, 0, -1, s;
    mesh.vertices *= 0.5;
    mesh.triangles.resize(4, 3);
    mesh.triangles << 0, 1, 2, 0, 3, 1, 0, 2, 3, 1, 3, 2;
    return mesh;
}

// Haar-distributed rotation from a QR factorization of a Gaussian matrix.
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::Matrix3d g;
    for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = normal(rng);
    Eigen::HouseholderQR<Eigen::Matrix3d> qr(g);
    Eigen::Matrix3d q = qr.householderQ();
    const Eigen::Vector3d d = qr.matrixQR().diagonal();
    for (int i = 0; i < 3; ++i)
        if (d(i) < 0) q.col(i) *= -1.0;
    if (q.determinant() < 0) q.col(0) *= -1.0;
    return q;
}

inline wbrain::TriangleMesh rigid_motion(const wbrain::TriangleMesh& mesh, const Eigen::Matrix3d& r,
                                         const Eigen::RowVector3d& t) {
    wbrain::TriangleMesh out = mesh;
    out.vertices = (mesh.vertices * r.transpose()).rowwise() + t;
    return out;
}

// Relabels vertices so that new vertex i is old vertex perm[i].
inline wbrain::TriangleMesh permute_vertices(const wbrain::TriangleMesh& mesh, const std::vector<int>& perm) {
    wbrain::TriangleMesh out = mesh;
    std::vector<int> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out.vertices.row(static_cast<Eigen::Index>(i)) = mesh.vertices.row(perm[i]);
        inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    }
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t)
        for (int c = 0; c < 3; ++c) out.triangles(t, c) = inverse[static_cast<std::size_t>(mesh.triangles(t, c))];
    return out;
}

// Closed 50-vertex mesh: the once-subdivided icosahedron (42 vertices) with
// eight faces split at their centroids, radially jittered.
inline wbrain::TriangleMesh fifty_vertex_mesh(std::uint64_t seed = 11) {
    const wbrain::TriangleMesh base = wbrain::icosphere(1);
    wbrain::TriangleMesh mesh;
    mesh.vertices.resize(50, 3);
    mesh.vertices.topRows(42) = base.vertices;
    mesh.triangles.resize(base.num_triangles() + 16, 3);
    Eigen::Index next_tri = 0;
    for (Eigen::Index t = 0; t < base.num_triangles(); ++t) {
        const auto tri = base.triangles.row(t);
        if (t % 10 == 0 && t / 10 < 8) {
            const Eigen::Index c = 42 + t / 10;
            mesh.vertices.row(c) = (base.vertices.row(tri(0)) + base.vertices.row(tri(1)) + base.vertices.row(tri(2))) / 3.0;
            mesh.triangles.row(next_tri++) << tri(0), tri(1), static_cast<int>(c);
            mesh.triangles.row(next_tri++) << tri(1), tri(2), static_cast<int>(c);
            mesh.triangles.row(next_tri++) << tri(2), tri(0), static_cast<int>(c);
        } else {
            mesh.triangles.row(next_tri++) = tri;
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    for (Eigen::Index i = 0; i < 50; ++i) mesh.vertices.row(i) *= jitter(rng) / mesh.vertices.row(i).norm();
    mesh.label = "fifty";
    return mesh;
}

inline std::vector<int> random_permutation(int n, std::mt19937_64& rng) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

}  // namespace testsupport
