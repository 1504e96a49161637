// Synthetic surfaces with known spectral ground truth.
#pragma once

#include <cstdint>
#include <string>

#include "wbrain/mesh.hpp"

namespace wbrain {

enum class SynthFamily { icosphere, bump_sphere };

struct SynthSpec {
    SynthFamily family = SynthFamily::icosphere;
    int subdivision = 4;
    double amplitude = 0.0;   // bump height epsilon
    int n_bumps = 0;
    double bump_width = 0.3;  // angular radius, radians
    std::uint64_t seed = 0;
};

inline constexpr int kMaxSubdivision = 7;

// Icosahedron subdivided `subdivision` times and projected to the unit sphere;
// 10 * 4^s + 2 vertices.
TriangleMesh icosphere(int subdivision);

// Icosphere with radial displacement r(v) = 1 + eps * sum_b exp(-angle(v, c_b)^2 / (2 width^2)),
// bump centers drawn uniformly on the sphere from spec.seed.
TriangleMesh bump_sphere(const SynthSpec& spec);

TriangleMesh synthesize(const SynthSpec& spec);

SynthFamily parse_family(const std::string& name);

}  // namespace wbrain
