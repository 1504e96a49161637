#include "wbrain/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "wbrain/errors.hpp"

namespace wbrain {

namespace {

std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

struct TripleHash {
    std::size_t operator()(const std::array<int, 3>& t) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (int v : t) {
            h ^= static_cast<std::uint32_t>(v);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

std::array<int, 3> sorted_triangle(const TriangleMesh& mesh, Eigen::Index t) {
    std::array<int, 3> tri{mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2)};
    std::sort(tri.begin(), tri.end());
    return tri;
}

double degenerate_area_threshold(const TriangleMesh& mesh) {
    const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
    const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
    return kDegenerateAreaFraction * (hi - lo).squaredNorm();
}

void check_structure(const TriangleMesh& mesh) {
    if (mesh.num_vertices() == 0 || mesh.num_triangles() == 0)
        throw DegenerateMeshError("mesh '" + mesh.label + "' is empty");
    if (!mesh.vertices.allFinite())
        throw DegenerateMeshError("mesh '" + mesh.label + "' has non-finite coordinates");
    const int m = static_cast<int>(mesh.num_vertices());
    if (mesh.triangles.minCoeff() < 0 || mesh.triangles.maxCoeff() >= m)
        throw DegenerateMeshError("mesh '" + mesh.label + "' has a triangle index out of range");
}

std::string describe(const ValidationReport& report) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [kind, count] : report.issue_counts) {
        if (count == 0) continue;
        os << (first ? "" : ", ") << kind << "=" << count;
        first = false;
    }
    return os.str();
}

}  // namespace

double triangle_area(const TriangleMesh& mesh, Eigen::Index t) {
    const Eigen::Vector3d a = mesh.vertices.row(mesh.triangles(t, 0));
    const Eigen::Vector3d b = mesh.vertices.row(mesh.triangles(t, 1));
    const Eigen::Vector3d c = mesh.vertices.row(mesh.triangles(t, 2));
    return 0.5 * (b - a).cross(c - a).norm();
}

double surface_area(const TriangleMesh& mesh) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t) total += triangle_area(mesh, t);
    return total;
}

ValidationReport inspect_mesh(const TriangleMesh& mesh, bool nonmanifold_fatal) {
    check_structure(mesh);

    const Eigen::Index m = mesh.num_vertices();
    const Eigen::Index g = mesh.num_triangles();
    const double threshold = degenerate_area_threshold(mesh);

    long degenerate = 0;
    long duplicates = 0;
    std::vector<char> referenced(static_cast<std::size_t>(m), 0);
    std::unordered_set<std::array<int, 3>, TripleHash> seen;
    std::unordered_map<std::uint64_t, int> edge_use;
    seen.reserve(static_cast<std::size_t>(g));
    edge_use.reserve(static_cast<std::size_t>(3 * g));

    for (Eigen::Index t = 0; t < g; ++t) {
        const auto tri = sorted_triangle(mesh, t);
        for (int v : tri) referenced[static_cast<std::size_t>(v)] = 1;
        const bool repeated = tri[0] == tri[1] || tri[1] == tri[2];
        if (repeated || triangle_area(mesh, t) < threshold) ++degenerate;
        if (!seen.insert(tri).second) {
            ++duplicates;
            continue;
        }
        if (repeated) continue;
        ++edge_use[edge_key(tri[0], tri[1])];
        ++edge_use[edge_key(tri[1], tri[2])];
        ++edge_use[edge_key(tri[0], tri[2])];
    }

    long nonmanifold = 0;
    for (const auto& [key, count] : edge_use)
        if (count > 2) ++nonmanifold;
    const long isolated = static_cast<long>(std::count(referenced.begin(), referenced.end(), 0));

    ValidationReport report;
    report.issue_counts = {{"nonmanifold_edges", nonmanifold},
                           {"duplicate_triangles", duplicates},
                           {"degenerate_triangles", degenerate},
                           {"isolated_vertices", isolated}};
    report.is_valid = degenerate == 0 && duplicates == 0 && isolated == 0 &&
                      (!nonmanifold_fatal || nonmanifold == 0);
    return report;
}

ValidatedMesh validate_mesh(const TriangleMesh& mesh, ValidationOptions options) {
    ValidationReport report = inspect_mesh(mesh, options.nonmanifold_fatal);

    if (options.policy == ValidationPolicy::strict) {
        if (!report.is_valid)
            throw DegenerateMeshError("mesh '" + mesh.label + "' failed strict validation: " +
                                      describe(report));
        return {mesh, report};
    }

    if (report.issue_counts.at("degenerate_triangles") > 0)
        throw DegenerateMeshError("mesh '" + mesh.label +
                                  "' has degenerate triangles that pruning cannot fix: " +
                                  describe(report));
    if (options.nonmanifold_fatal && report.issue_counts.at("nonmanifold_edges") > 0)
        throw DegenerateMeshError("mesh '" + mesh.label + "' has nonmanifold edges");

    if (report.is_valid) return {mesh, report};

    // Drop exact-duplicate triangles (first occurrence wins), then unreferenced vertices.
    const Eigen::Index m = mesh.num_vertices();
    std::vector<Eigen::Index> kept_triangles;
    kept_triangles.reserve(static_cast<std::size_t>(mesh.num_triangles()));
    std::unordered_set<std::array<int, 3>, TripleHash> seen;
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t)
        if (seen.insert(sorted_triangle(mesh, t)).second) kept_triangles.push_back(t);

    std::vector<int> remap(static_cast<std::size_t>(m), -1);
    for (Eigen::Index t : kept_triangles)
        for (int c = 0; c < 3; ++c) remap[static_cast<std::size_t>(mesh.triangles(t, c))] = 0;
    int next = 0;
    for (auto& r : remap)
        if (r == 0) r = next++;

    TriangleMesh out;
    out.label = mesh.label;
    out.vertices.resize(next, 3);
    for (Eigen::Index v = 0; v < m; ++v)
        if (remap[static_cast<std::size_t>(v)] >= 0)
            out.vertices.row(remap[static_cast<std::size_t>(v)]) = mesh.vertices.row(v);
    out.triangles.resize(static_cast<Eigen::Index>(kept_triangles.size()), 3);
    for (std::size_t i = 0; i < kept_triangles.size(); ++i)
        for (int c = 0; c < 3; ++c)
            out.triangles(static_cast<Eigen::Index>(i), c) =
                remap[static_cast<std::size_t>(mesh.triangles(kept_triangles[i], c))];

    report.pruned_vertices = static_cast<long>(m - next);
    report.pruned_triangles = static_cast<long>(mesh.num_triangles()) -
                              static_cast<long>(kept_triangles.size());
    return {std::move(out), report};
}

}  // namespace wbrain
