#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "wbrain/bof.hpp"
#include "wbrain/errors.hpp"
#include "wbrain/laplacian.hpp"
#include "wbrain/synth.hpp"

using namespace wbrain;

namespace {

Eigen::MatrixXd planted_clusters(const Eigen::MatrixXd& means, int per_cluster, double spread, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, spread);
    Eigen::MatrixXd x(means.rows(), means.cols() * per_cluster);
    for (Eigen::Index c = 0; c < means.cols(); ++c)
        for (int i = 0; i < per_cluster; ++i) {
            const Eigen::Index col = c * per_cluster + i;
            for (Eigen::Index r = 0; r < means.rows(); ++r) x(r, col) = means(r, c) + normal(rng);
        }
    return x;
}

SurfaceHistogram hist(std::initializer_list<double> values, const std::string& tag) {
    SurfaceHistogram h;
    h.values = Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Eigen::Index>(values.size()));
    h.surface_label = tag;
    return h;
}

}  // namespace

TEST_CASE("planted three-cluster dictionary recovery") {
    Eigen::MatrixXd means(4, 3);
    means << 0, 10, 0, 0, 0, 10, 0, 0, 0, 5, 5, 5;
    const Eigen::MatrixXd x = planted_clusters(means, 400, 0.05, 1);
    const Dictionary d = build_dictionary(x, 3, 7);
    // Oracle: per-cluster sample means (cluster membership known by construction).
    for (Eigen::Index c = 0; c < 3; ++c) {
        const Eigen::VectorXd truth = x.middleCols(c * 400, 400).rowwise().mean();
        double best = 1e300;
        for (Eigen::Index r = 0; r < 3; ++r) best = std::min(best, (d.atoms.col(r) - truth).cwiseAbs().maxCoeff());
        CHECK(best <= 1e-3);
    }
    CHECK(d.iterations >= 1);
    CHECK(d.iterations <= 300);
}

TEST_CASE("k equal to the number of distinct samples gives zero inertia") {
    Eigen::MatrixXd x(2, 12);
    for (int i = 0; i < 12; ++i) x.col(i) << (i % 4), 3.0 * (i % 4);
    const Dictionary d = build_dictionary(x, 4, 3);
    CHECK(d.inertia == 0.0);
}

TEST_CASE("dictionary training is deterministic and validates inputs") {
    Eigen::MatrixXd means(2, 3);
    means << 0, 4, 8, 1, -1, 3;
    const Eigen::MatrixXd x = planted_clusters(means, 50, 1.0, 5);
    const Dictionary a = build_dictionary(x, 5, 99);
    const Dictionary b = build_dictionary(x, 5, 99);
    CHECK(a.atoms == b.atoms);
    CHECK(a.inertia == b.inertia);
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = i + 1; j < 5; ++j) CHECK((a.atoms.col(i) - a.atoms.col(j)).norm() > 0.0);

    CHECK_THROWS_AS(build_dictionary(x, 0, 1), DomainError);
    CHECK_THROWS_AS(build_dictionary(x, x.cols() + 1, 1), DomainError);
    CHECK_THROWS_AS(build_dictionary(Eigen::MatrixXd::Ones(3, 20), 2, 1), DegenerateDataError);

    SgwsMatrix s1, s2;
    s1.values = Eigen::MatrixXd::Random(4, 10);
    s2.values = Eigen::MatrixXd::Random(3, 10);
    const std::vector<SgwsMatrix> mixed{s1, s2};
    CHECK_THROWS_AS(build_dictionary(mixed, 2, 1), DimensionError);
}

TEST_CASE("soft assignment is a column-stochastic softmax") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    Dictionary d;
    d.atoms.resize(3, 6);
    for (auto& v : d.atoms.reshaped()) v = normal(rng);
    Eigen::MatrixXd x(3, 200);
    for (auto& v : x.reshaped()) v = 2.0 * normal(rng);

    const Eigen::MatrixXd u = soft_assign(x, d, 0.7);
    CHECK((u.array() >= 0.0).all());
    CHECK((u.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);

    // Independent evaluation of one column without max-subtraction.
    Eigen::VectorXd w(6);
    for (int r = 0; r < 6; ++r) w(r) = std::exp(-(x.col(17) - d.atoms.col(r)).squaredNorm() / (2 * 0.49));
    CHECK((u.col(17) - w / w.sum()).cwiseAbs().maxCoeff() <= 1e-14);

    CHECK_THROWS_AS(soft_assign(x, d, 0.0), DomainError);
    CHECK_THROWS_AS(soft_assign(Eigen::MatrixXd::Zero(2, 5), d, 1.0), DimensionError);
}

TEST_CASE("soft assignment limit cases") {
    Dictionary d;
    d.atoms.resize(2, 4);
    d.atoms << 1, -1, 0, 0, 0, 0, 1, -1;
    SUBCASE("a sample on an atom far from the rest") {
        Dictionary far = d;
        far.atoms *= 100.0;
        const Eigen::MatrixXd u = soft_assign(Eigen::MatrixXd(far.atoms.col(2)), far, 1.0);
        CHECK(u(2, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(u(0, 0) < 1e-12);
    }
    SUBCASE("an equidistant sample") {
        const Eigen::MatrixXd u = soft_assign(Eigen::MatrixXd::Zero(2, 1), d, 0.3);
        for (int r = 0; r < 4; ++r) CHECK(u(r, 0) == doctest::Approx(0.25).epsilon(1e-14));
    }
}

TEST_CASE("sigma to zero recovers nearest-atom assignment") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Dictionary d;
    d.atoms.resize(4, 8);
    for (auto& v : d.atoms.reshaped()) v = uni(rng);
    Eigen::MatrixXd x(4, 100);
    for (auto& v : x.reshaped()) v = uni(rng);
    const Eigen::MatrixXd u = soft_assign(x, d, 1e-4);
    const auto nearest = nearest_atoms(x, d);
    for (Eigen::Index i = 0; i < 100; ++i) {
        Eigen::Index arg = 0;
        u.col(i).maxCoeff(&arg);
        // Brute-force nearest atom.
        Eigen::Index brute = 0;
        for (Eigen::Index r = 1; r < 8; ++r)
            if ((x.col(i) - d.atoms.col(r)).squaredNorm() < (x.col(i) - d.atoms.col(brute)).squaredNorm()) brute = r;
        CHECK(arg == brute);
        CHECK(nearest[static_cast<std::size_t>(i)] == brute);
    }
}

TEST_CASE("sum pooling") {
    std::mt19937_64 rng(4);
    Dictionary d;
    d.atoms = Eigen::MatrixXd::Random(3, 5);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 100);
    const Eigen::MatrixXd u = soft_assign(x, d, 0.5);

    const SurfaceHistogram h = pool_histogram(u, 2.0, false, "LW");
    CHECK(h.values.sum() == doctest::Approx(100.0).epsilon(1e-12));
    CHECK((h.values.array() >= 0.0).all());
    CHECK_FALSE(h.area_normalized);

    const SurfaceHistogram hn = pool_histogram(u, 2.0, true, "LW");
    CHECK(hn.area_normalized);
    CHECK((hn.values - h.values / 2.0).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd doubled(5, 200);
    doubled << u, u;
    CHECK((pool_histogram(doubled, 1.0, false).values - 2.0 * h.values).cwiseAbs().maxCoeff() <= 1e-12);

    const auto perm = testsupport::random_permutation(100, rng);
    Eigen::MatrixXd shuffled(5, 100);
    for (int i = 0; i < 100; ++i) shuffled.col(i) = u.col(perm[static_cast<std::size_t>(i)]);
    CHECK((pool_histogram(shuffled, 1.0, false).values - h.values).cwiseAbs().maxCoeff() <= 1e-12);

    CHECK_THROWS_AS(pool_histogram(u, 0.0, true), DomainError);
}

TEST_CASE("WaveletBrain assembly layout") {
    std::map<std::string, SurfaceHistogram> m{{"RG", hist({0, 2}, "RG")},
                                              {"LW", hist({1, 0}, "LW")},
                                              {"RW", hist({2, 0}, "RW")},
                                              {"LG", hist({0, 1}, "LG")}};
    Eigen::VectorXd expected(8);
    expected << 1, 0, 0, 1, 2, 0, 0, 2;
    CHECK(assemble_waveletbrain(m, false) == expected);

    Eigen::VectorXd with_diffs(12);
    with_diffs << 1, 0, 0, 1, 2, 0, 0, 2, -1, 1, -2, 2;
    CHECK(assemble_waveletbrain(m, true) == with_diffs);
    CHECK(block_layout(true) == std::vector<std::string>{"LW", "LG", "RW", "RG", "LG-LW", "RG-RW"});

    auto missing = m;
    missing.erase("RW");
    CHECK_THROWS_AS(assemble_waveletbrain(missing, false), MissingSurfaceError);

    auto mismatched = m;
    mismatched["LG"] = hist({0, 1, 3}, "LG");
    CHECK_THROWS_AS(assemble_waveletbrain(mismatched, false), MismatchError);

    auto mixed = m;
    mixed["LG"].area_normalized = true;
    CHECK_THROWS_AS(assemble_waveletbrain(mixed, false), MismatchError);
}

TEST_CASE("histogram is invariant to rigid motion and vertex permutation") {
    const TriangleMesh mesh = bump_sphere({SynthFamily::bump_sphere, 3, 0.1, 8, 0.3, 19});
    auto signature = [](const TriangleMesh& m) {
        const LaplacianSystem s = cotangent_system(m);
        return std::make_pair(compute_sgws(eigendecompose(s, 40), 3), s.mesh_area);
    };
    const auto [base, area] = signature(mesh);
    const std::vector<SgwsMatrix> training{base};
    const Dictionary d = build_dictionary(training, 16, 3);
    const SurfaceHistogram h = pool_histogram(soft_assign(base, d, d.mean_nearest_distance), area, true);

    std::mt19937_64 rng(6);
    const TriangleMesh moved =
        testsupport::rigid_motion(mesh, testsupport::random_rotation(rng), Eigen::RowVector3d(-1, 0.5, 9));
    const auto [ms, marea] = signature(moved);
    const SurfaceHistogram hm = pool_histogram(soft_assign(ms, d, d.mean_nearest_distance), marea, true);
    CHECK((hm.values - h.values).cwiseAbs().maxCoeff() <= 1e-9);

    const TriangleMesh permuted =
        testsupport::permute_vertices(mesh, testsupport::random_permutation(static_cast<int>(mesh.num_vertices()), rng));
    const auto [ps, parea] = signature(permuted);
    const SurfaceHistogram hp = pool_histogram(soft_assign(ps, d, d.mean_nearest_distance), parea, true);
    CHECK((hp.values - h.values).cwiseAbs().maxCoeff() <= 1e-9);
}
