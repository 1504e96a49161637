#include <doctest.h>

#include <cmath>
#include <set>
#include <utility>

#include "wbrain/errors.hpp"
#include "wbrain/laplacian.hpp"
#include "wbrain/mesh.hpp"
#include "wbrain/synth.hpp"

using namespace wbrain;

namespace {

long edge_count(const TriangleMesh& mesh) {
    std::set<std::pair<int, int>> edges;
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t)
        for (int c = 0; c < 3; ++c) {
            int a = mesh.triangles(t, c), b = mesh.triangles(t, (c + 1) % 3);
            edges.emplace(std::min(a, b), std::max(a, b));
        }
    return static_cast<long>(edges.size());
}

Eigen::VectorXd dna(double eps, std::uint64_t seed) {
    const TriangleMesh mesh = bump_sphere({SynthFamily::bump_sphere, 3, eps, 30, 0.3, seed});
    return shape_dna(eigendecompose(cotangent_system(mesh), 12), 10);
}

// Largest entrywise relative difference.
double relative_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return ((a - b).array().abs() / b.array().abs()).maxCoeff();
}

}  // namespace

TEST_CASE("icosphere counts and topology") {
    const TriangleMesh s0 = icosphere(0);
    CHECK(s0.num_vertices() == 12);
    CHECK(s0.num_triangles() == 20);
    const TriangleMesh s4 = icosphere(4);
    CHECK(s4.num_vertices() == 2562);
    CHECK(s4.num_triangles() == 5120);
    for (int s = 0; s <= 4; ++s) {
        const TriangleMesh mesh = icosphere(s);
        CHECK(mesh.num_vertices() == 10 * (1L << (2 * s)) + 2);
        CHECK(mesh.num_vertices() - edge_count(mesh) + mesh.num_triangles() == 2);
        CHECK((mesh.vertices.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-15);
        CHECK(inspect_mesh(mesh, true).is_valid);
    }
    CHECK_THROWS_AS(icosphere(8), DomainError);
    CHECK_THROWS_AS(icosphere(-1), DomainError);
}

TEST_CASE("bump sphere construction") {
    SynthSpec spec{SynthFamily::bump_sphere, 3, 0.0, 10, 0.3, 4};
    const TriangleMesh flat = bump_sphere(spec);
    const TriangleMesh sphere = icosphere(3);
    CHECK(flat.vertices == sphere.vertices);
    CHECK(flat.triangles == sphere.triangles);

    spec.amplitude = 0.08;
    const TriangleMesh a = bump_sphere(spec);
    const TriangleMesh b = bump_sphere(spec);
    CHECK(a.vertices == b.vertices);
    CHECK(a.triangles == b.triangles);
    CHECK(a.triangles == sphere.triangles);

    // Radii follow the displacement law, so every vertex lies at r >= 1.
    CHECK((a.vertices.rowwise().norm().array() >= 1.0).all());

    double previous = surface_area(flat);
    for (double eps : {0.03, 0.06, 0.12}) {
        spec.amplitude = eps;
        const double area = surface_area(bump_sphere(spec));
        CHECK(area > previous);
        previous = area;
    }

    spec.seed = 5;
    spec.amplitude = 0.08;
    CHECK(bump_sphere(spec).vertices != a.vertices);

    SynthSpec bad = spec;
    bad.amplitude = 1.0;
    CHECK_THROWS_AS(bump_sphere(bad), DomainError);
    bad.amplitude = -0.1;
    CHECK_THROWS_AS(bump_sphere(bad), DomainError);
    bad = spec;
    bad.bump_width = 0.0;
    CHECK_THROWS_AS(bump_sphere(bad), DomainError);
    bad = spec;
    bad.subdivision = 8;
    CHECK_THROWS_AS(bump_sphere(bad), DomainError);
}

TEST_CASE("single bump displacement profile") {
    const SynthSpec spec{SynthFamily::bump_sphere, 2, 0.2, 1, 0.3, 21};
    const TriangleMesh mesh = bump_sphere(spec);
    const TriangleMesh sphere = icosphere(2);
    // The highest vertex marks the bump center; every radius must obey
    // 1 + eps exp(-angle^2 / (2 w^2)) about the true center, which the peak
    // approximates to within one mesh spacing.
    Eigen::Index peak = 0;
    mesh.vertices.rowwise().norm().maxCoeff(&peak);
    const double r_peak = mesh.vertices.row(peak).norm();
    CHECK(r_peak <= 1.2 + 1e-12);
    CHECK(r_peak >= 1.0 + 0.2 * std::exp(-0.2 * 0.2 / (2 * 0.09)));
    for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
        const Eigen::RowVector3d dir = mesh.vertices.row(i) / mesh.vertices.row(i).norm();
        CHECK((dir - sphere.vertices.row(i)).norm() <= 1e-12);
    }
}

TEST_CASE("synthesize dispatch and family names") {
    CHECK(parse_family("icosphere") == SynthFamily::icosphere);
    CHECK(parse_family("bump_sphere") == SynthFamily::bump_sphere);
    CHECK_THROWS_AS(parse_family("torus"), DomainError);
    const SynthSpec ico{SynthFamily::icosphere, 2, 0.5, 7, 0.3, 1};
    CHECK(synthesize(ico).vertices == icosphere(2).vertices);
}

TEST_CASE("ShapeDNA: seeds agree within 5%, amplitude classes separate only on average") {
    // Measured on subdivision 3, 30 bumps, width 0.3. Single surfaces of one
    // class differ by 1.7 to 4.2%, but single surfaces of the 0.05 and 0.10
    // classes differ by as little as 1.9%, so per-surface separation above 5%
    // does not hold. Eight-seed class means differ by 0.5% within a class and
    // 3.9% across classes.
    const Eigen::VectorXd a1 = dna(0.05, 1), a2 = dna(0.05, 2), a3 = dna(0.05, 3);
    const Eigen::VectorXd b1 = dna(0.10, 1), b2 = dna(0.10, 2);
    CHECK(relative_gap(a1, a2) < 0.05);
    CHECK(relative_gap(a1, a3) < 0.05);
    CHECK(relative_gap(b1, b2) < 0.05);

    Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(10), mean_a2 = mean_a, mean_b = mean_a;
    for (std::uint64_t s = 1; s <= 8; ++s) {
        mean_a += dna(0.05, s) / 8.0;
        mean_a2 += dna(0.05, s + 50) / 8.0;
        mean_b += dna(0.10, s + 100) / 8.0;
    }
    MESSAGE("class means: within " << relative_gap(mean_a, mean_a2) << ", between " << relative_gap(mean_a, mean_b));
    CHECK(relative_gap(mean_a, mean_a2) < 0.01);
    CHECK(relative_gap(mean_a, mean_b) > 0.03);
    CHECK(relative_gap(mean_a2, mean_b) > 0.03);
}
