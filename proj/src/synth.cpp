#include "wbrain/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "wbrain/errors.hpp"

namespace wbrain {

TriangleMesh icosphere(int subdivision) {
    if (subdivision < 0 || subdivision > kMaxSubdivision)
        throw DomainError("icosphere subdivision must lie in [0, " + std::to_string(kMaxSubdivision) + "]");

    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> points = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& p : points) p.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };

    for (int level = 0; level < subdivision; ++level) {
        std::map<std::pair<int, int>, int> midpoints;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
            points.push_back((points[static_cast<std::size_t>(a)] + points[static_cast<std::size_t>(b)]).normalized());
            const int id = static_cast<int>(points.size()) - 1;
            midpoints.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> refined;
        refined.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int ab = midpoint(f[0], f[1]);
            const int bc = midpoint(f[1], f[2]);
            const int ca = midpoint(f[2], f[0]);
            refined.push_back({f[0], ab, ca});
            refined.push_back({f[1], bc, ab});
            refined.push_back({f[2], ca, bc});
            refined.push_back({ab, bc, ca});
        }
        faces = std::move(refined);
    }

    TriangleMesh mesh;
    mesh.label = "icosphere" + std::to_string(subdivision);
    mesh.vertices.resize(static_cast<Eigen::Index>(points.size()), 3);
    for (std::size_t i = 0; i < points.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = points[i];
    mesh.triangles.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i)
        for (int c = 0; c < 3; ++c) mesh.triangles(static_cast<Eigen::Index>(i), c) = faces[i][static_cast<std::size_t>(c)];
    return mesh;
}

TriangleMesh bump_sphere(const SynthSpec& spec) {
    if (spec.amplitude < 0.0 || spec.amplitude >= 1.0 || !std::isfinite(spec.amplitude))
        throw DomainError("bump amplitude must lie in [0, 1)");
    if (spec.n_bumps < 0) throw DomainError("bump count must be nonnegative");
    if (!(spec.bump_width > 0.0)) throw DomainError("bump width must be positive");

    TriangleMesh mesh = icosphere(spec.subdivision);
    mesh.label = "bump_sphere";

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Eigen::Vector3d> centers;
    centers.reserve(static_cast<std::size_t>(spec.n_bumps));
    while (static_cast<int>(centers.size()) < spec.n_bumps) {
        Eigen::Vector3d c(normal(rng), normal(rng), normal(rng));
        const double norm = c.norm();
        if (norm < 1e-12) continue;
        centers.push_back(c / norm);
    }

    const double denom = 2.0 * spec.bump_width * spec.bump_width;
    for (Eigen::Index v = 0; v < mesh.num_vertices(); ++v) {
        const Eigen::Vector3d p = mesh.vertices.row(v);
        double bump = 0.0;
        for (const auto& c : centers) {
            const double angle = std::acos(std::clamp(p.dot(c), -1.0, 1.0));
            bump += std::exp(-angle * angle / denom);
        }
        mesh.vertices.row(v) = p * (1.0 + spec.amplitude * bump);
    }
    return mesh;
}

TriangleMesh synthesize(const SynthSpec& spec) {
    return spec.family == SynthFamily::icosphere ? icosphere(spec.subdivision) : bump_sphere(spec);
}

SynthFamily parse_family(const std::string& name) {
    if (name == "icosphere") return SynthFamily::icosphere;
    if (name == "bump_sphere" || name == "bump-sphere") return SynthFamily::bump_sphere;
    throw DomainError("unknown synthetic family '" + name + "'");
}

}  // namespace wbrain
