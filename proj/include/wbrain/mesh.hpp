// Triangle surface container, validation, and OFF / ASCII PLY / FreeSurfer I/O.
//
// Vertices are stored in double precision regardless of the source format.
// Indices are 0-based. A TriangleMesh returned by load_mesh or validate_mesh
// satisfies the validity invariants: finite coordinates, in-range indices,
// no repeated index within a triangle, every vertex referenced, and no
// triangle below the degeneracy threshold.
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace wbrain {

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct TriangleMesh {
    Vertices vertices;
    Triangles triangles;
    std::string label;

    Eigen::Index num_vertices() const { return vertices.rows(); }
    Eigen::Index num_triangles() const { return triangles.rows(); }
};

enum class MeshFormat { off, ply_ascii, freesurfer_binary, auto_detect };

enum class ValidationPolicy { strict, prune };

struct ValidationOptions {
    ValidationPolicy policy = ValidationPolicy::prune;
    // Upgrades nonmanifold edges from a reported issue to a fatal one.
    bool nonmanifold_fatal = false;
};

struct ValidationReport {
    bool is_valid = true;
    // Keys: "nonmanifold_edges", "duplicate_triangles", "degenerate_triangles",
    // "isolated_vertices".
    std::map<std::string, long> issue_counts;
    long pruned_vertices = 0;
    long pruned_triangles = 0;
};

struct ValidatedMesh {
    TriangleMesh mesh;
    ValidationReport report;
};

// Triangles with area below this fraction of the squared bounding-box
// diagonal are degenerate.
inline constexpr double kDegenerateAreaFraction = 1e-12;

ValidatedMesh validate_mesh(const TriangleMesh& mesh, ValidationOptions options = {});

// Issue counts without modifying or rejecting anything.
ValidationReport inspect_mesh(const TriangleMesh& mesh, bool nonmanifold_fatal = false);

double triangle_area(const TriangleMesh& mesh, Eigen::Index t);
double surface_area(const TriangleMesh& mesh);

// Parsing only: structural checks (counts, index range, finiteness) but no
// topological validation.
TriangleMesh read_mesh(const std::filesystem::path& path, MeshFormat format = MeshFormat::auto_detect);

// read_mesh followed by validate_mesh.
TriangleMesh load_mesh(const std::filesystem::path& path,
                       MeshFormat format = MeshFormat::auto_detect,
                       ValidationOptions options = {});

MeshFormat detect_format(const std::filesystem::path& path);
MeshFormat parse_format(const std::string& name);

void write_off(const TriangleMesh& mesh, const std::filesystem::path& path);
void write_ply_ascii(const TriangleMesh& mesh, const std::filesystem::path& path);
void write_freesurfer(const TriangleMesh& mesh, const std::filesystem::path& path,
                      const std::string& creator = "created by wbrain");
void write_mesh(const TriangleMesh& mesh, const std::filesystem::path& path,
                MeshFormat format = MeshFormat::auto_detect);

}  // namespace wbrain
