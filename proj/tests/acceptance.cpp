// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "support.hpp"
#include "wbrain/bof.hpp"
#include "wbrain/errors.hpp"
#include "wbrain/laplacian.hpp"
#include "wbrain/learn.hpp"
#include "wbrain/pipeline.hpp"
#include "wbrain/sgwt.hpp"
#include "wbrain/store.hpp"
#include "wbrain/synth.hpp"

namespace fs = std::filesystem;
using namespace wbrain;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Two classes of 40 subjects, eps 0.05 against 0.10. The bump count varies
// 16-fold per subject inside each class. Total area and the low spectrum
// track eps^2 * count, so the class signal is mostly local bump height.
const char* kClassificationCohort = R"({
  "subdivision": 3, "bump_width": 0.2, "seed": 2024,
  "classes": [
    {"diagnosis": "AD", "count": 40, "amplitude": 0.10, "bumps_range": [5, 80]},
    {"diagnosis": "NC", "count": 40, "amplitude": 0.05, "bumps_range": [5, 80]}
  ],
  "age": {"intercept": 60, "slope": 100, "noise_sd": 1}
})";

// 80 subjects with eps spread uniformly and 20 bumps each;
// age = 60 + 100 eps + N(0, 1).
const char* kRegressionCohort = R"({
  "subdivision": 3, "bump_width": 0.2, "seed": 77,
  "classes": [
    {"diagnosis": "NC", "count": 80, "amplitude_range": [0.03, 0.12], "bumps_range": [20, 20]}
  ],
  "age": {"intercept": 60, "slope": 100, "noise_sd": 1}
})";

PipelineConfig cohort_config() {
    PipelineConfig c;
    c.eigenpairs = 101;
    c.level = 3;
    c.folds = 10;
    c.shapedna_d = 10;
    c.jobs = 1;
    return c;
}

EigenSystem truncated(const EigenSystem& eig, Eigen::Index k) {
    EigenSystem out;
    out.eigenvalues = eig.eigenvalues.head(k);
    out.eigenvectors = eig.eigenvectors.leftCols(k);
    out.mesh_area = eig.mesh_area;
    return out;
}

// diag(Xi f(Lambda) Xi^T) through an explicit dense matrix function.
Eigen::VectorXd matrix_function_diagonal(const EigenSystem& eig, const std::function<double(double)>& f) {
    Eigen::VectorXd fl(eig.num_pairs());
    for (Eigen::Index l = 0; l < eig.num_pairs(); ++l) fl(l) = f(eig.eigenvalues(l));
    return (eig.eigenvectors * fl.asDiagonal() * eig.eigenvectors.transpose()).diagonal();
}

Outcome sphere_spectrum() {
    const auto t0 = Clock::now();
    const EigenSystem eig = eigendecompose(cotangent_system(icosphere(4)), 16);
    const double elapsed = seconds_since(t0);
    double worst = 0.0;
    Eigen::Index idx = 1;
    for (int l = 1; l <= 3; ++l)
        for (int j = 0; j < 2 * l + 1; ++j, ++idx) {
            const double exact = l * (l + 1.0);
            worst = std::max(worst, std::abs(eig.eigenvalues(idx) - exact) / exact);
        }
    return {worst <= 0.02 && elapsed < 30.0,
            fmt::format("max relative error {:.4f} (<= 0.02), {:.1f} s (< 30 s)", worst, elapsed)};
}

Outcome dense_oracle() {
    const auto t0 = Clock::now();
    double worst_lambda = 0.0, worst_coeff = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const TriangleMesh mesh = bump_sphere({SynthFamily::bump_sphere, 2, 0.04 * static_cast<double>(seed), 4 + static_cast<int>(seed), 0.3, seed});
        const LaplacianSystem system = cotangent_system(mesh);
        EigenOptions sparse;
        sparse.method = EigenMethod::sparse;
        const EigenSystem eig = eigendecompose(system, 20, sparse);
        EigenOptions dense;
        dense.method = EigenMethod::dense;
        const EigenSystem oracle = truncated(eigendecompose(system, system.size(), dense), 20);
        for (Eigen::Index l = 1; l < 20; ++l)
            worst_lambda = std::max(worst_lambda, std::abs(eig.eigenvalues(l) - oracle.eigenvalues(l)) / oracle.eigenvalues(l));
        worst_lambda = std::max(worst_lambda, std::abs(eig.eigenvalues(0)) / oracle.eigenvalues(1));

        const SgwsMatrix s = compute_sgws(eig, 3);
        const KernelConfig config = select_scales(oracle.eigenvalues(19), 3);
        for (int r = 0; r <= 3; ++r) {
            const Eigen::VectorXd expected =
                r < 3 ? matrix_function_diagonal(oracle, [&](double x) { return kernel_g(config.scales[static_cast<std::size_t>(r)] * x); })
                      : matrix_function_diagonal(oracle, [&](double x) { return kernel_h(x, config); });
            const double scale = expected.cwiseAbs().maxCoeff();
            worst_coeff = std::max(worst_coeff, (s.values.row(r).transpose() - expected).cwiseAbs().maxCoeff() / scale);
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst_lambda <= 1e-8 && worst_coeff <= 1e-8 && elapsed < 60.0,
            fmt::format("eigenvalue rel err {:.2e}, coefficient rel err {:.2e} (<= 1e-8), {:.1f} s (< 60 s)",
                        worst_lambda, worst_coeff, elapsed)};
}

Outcome harmonic_round_trip() {
    const TriangleMesh mesh = testsupport::fifty_vertex_mesh();
    const LaplacianSystem system = cotangent_system(mesh);
    const EigenSystem eig = eigendecompose(system, system.size());
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd f(system.size());
        for (auto& v : f) v = normal(rng);
        worst = std::max(worst, (imht(eig, mht(eig, f, system.mass)) - f).cwiseAbs().maxCoeff());
    }
    return {system.size() == 50 && worst < 1e-8,
            fmt::format("m = {}, max abs error {:.2e} (< 1e-8)", system.size(), worst)};
}

Outcome kernel_schedule() {
    const KernelConfig c = select_scales(15.0, 3);
    const double gamma = 2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25));
    const double expected[3] = {2.0, std::sqrt(4.0 / 15.0), 2.0 / 15.0};
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(c.scales[static_cast<std::size_t>(i)] - expected[i]));
    const double gamma_err = std::abs(c.gamma - gamma);
    return {c.scales.size() == 3 && worst <= 1e-12 && gamma_err <= 1e-12,
            fmt::format("scales ({}, {}, {}), max err {:.1e}; gamma {} err {:.1e}", c.scales[0], c.scales[1],
                        c.scales[2], worst, c.gamma, gamma_err)};
}

Outcome invariance_suite() {
    const TriangleMesh mesh = bump_sphere({SynthFamily::bump_sphere, 3, 0.1, 8, 0.3, 31});
    struct Products {
        SgwsMatrix sgws;
        EigenSystem eig;
        Eigen::VectorXd dna;
    };
    auto products = [](const TriangleMesh& m) {
        Products p;
        p.eig = eigendecompose(cotangent_system(m), 60);
        p.sgws = compute_sgws(p.eig, 3);
        p.dna = shape_dna(p.eig, 10);
        return p;
    };
    const Products base = products(mesh);
    const std::vector<SgwsMatrix> training{base.sgws};
    const Dictionary dict = build_dictionary(training, 16, 1);
    auto histogram = [&](const Products& p) {
        return pool_histogram(soft_assign(p.sgws, dict, dict.mean_nearest_distance), p.eig.mesh_area, true).values;
    };
    const Eigen::VectorXd h0 = histogram(base);

    std::mt19937_64 rng(5);
    const Products moved = products(testsupport::rigid_motion(mesh, testsupport::random_rotation(rng), {0.3, -2.0, 5.0}));
    const double rigid_sgws = (moved.sgws.values - base.sgws.values).cwiseAbs().maxCoeff();
    // Histogram entries are sums over all vertices, so they are compared relative to the largest bin.
    const double hist_scale = h0.cwiseAbs().maxCoeff();
    const double rigid_hist = (histogram(moved) - h0).cwiseAbs().maxCoeff() / hist_scale;
    const double rigid_dna = (moved.dna - base.dna).cwiseAbs().maxCoeff();

    const auto perm = testsupport::random_permutation(static_cast<int>(mesh.num_vertices()), rng);
    const Products permuted = products(testsupport::permute_vertices(mesh, perm));
    double perm_sgws = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
        perm_sgws = std::max(perm_sgws, (permuted.sgws.values.col(static_cast<Eigen::Index>(i)) -
                                         base.sgws.values.col(perm[i])).cwiseAbs().maxCoeff());
    const double perm_hist = (histogram(permuted) - h0).cwiseAbs().maxCoeff() / hist_scale;
    const double perm_dna = (permuted.dna - base.dna).cwiseAbs().maxCoeff();

    // Given the same eigenbasis with rows permuted, the signature columns are
    // permuted bit for bit.
    EigenSystem row_permuted = base.eig;
    for (std::size_t i = 0; i < perm.size(); ++i)
        row_permuted.eigenvectors.row(static_cast<Eigen::Index>(i)) = base.eig.eigenvectors.row(perm[i]);
    const SgwsMatrix exact = compute_sgws(row_permuted, 3);
    bool bitwise = true;
    for (std::size_t i = 0; i < perm.size(); ++i)
        bitwise = bitwise && exact.values.col(static_cast<Eigen::Index>(i)) == base.sgws.values.col(perm[i]);

    TriangleMesh scaled = mesh;
    scaled.vertices *= 2.7;
    const Eigen::VectorXd dna_scaled = products(scaled).dna;
    const double scale_rel = ((dna_scaled - base.dna).array().abs() / base.dna.array().abs()).maxCoeff();

    const bool pass = rigid_sgws <= 1e-9 && rigid_hist <= 1e-9 && rigid_dna <= 1e-9 * base.dna.cwiseAbs().maxCoeff() &&
                      perm_sgws <= 1e-9 && perm_hist <= 1e-9 && perm_dna <= 1e-9 * base.dna.cwiseAbs().maxCoeff() &&
                      bitwise && scale_rel <= 1e-6;
    return {pass, fmt::format("rigid: sgws {:.1e} hist (rel) {:.1e} dna {:.1e}; permutation: sgws {:.1e} hist (rel) {:.1e} dna "
                              "{:.1e}, fixed-basis bitwise {}; scaling rel {:.1e}",
                              rigid_sgws, rigid_hist, rigid_dna, perm_sgws, perm_hist, perm_dna, bitwise, scale_rel)};
}

Outcome bof_contracts() {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    Dictionary random_dict;
    random_dict.atoms.resize(4, 12);
    for (auto& v : random_dict.atoms.reshaped()) v = normal(rng);
    Eigen::MatrixXd x(4, 500);
    for (auto& v : x.reshaped()) v = 2.0 * normal(rng);
    const double sum_err = (soft_assign(x, random_dict, 0.8).colwise().sum().array() - 1.0).abs().maxCoeff();

    Eigen::MatrixXd means(4, 3);
    means << 0, 10, 0, 0, 0, 10, 3, 3, -3, 1, 2, 3;
    Eigen::MatrixXd samples(4, 900);
    for (Eigen::Index c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < 300; ++i)
            for (Eigen::Index r = 0; r < 4; ++r) samples(r, 300 * c + i) = means(r, c) + 0.05 * normal(rng);
    const Dictionary planted = build_dictionary(samples, 3, 4);
    double recovery = 0.0;
    for (Eigen::Index c = 0; c < 3; ++c) {
        const Eigen::VectorXd truth = samples.middleCols(300 * c, 300).rowwise().mean();
        double best = 1e300;
        for (Eigen::Index a = 0; a < 3; ++a) best = std::min(best, (planted.atoms.col(a) - truth).cwiseAbs().maxCoeff());
        recovery = std::max(recovery, best);
    }

    Dictionary small;
    small.atoms.resize(3, 7);
    for (auto& v : small.atoms.reshaped()) v = uni(rng);
    Eigen::MatrixXd points(3, 100);
    for (auto& v : points.reshaped()) v = uni(rng);
    const Eigen::MatrixXd hard = soft_assign(points, small, 1e-4);
    int agree = 0;
    for (Eigen::Index i = 0; i < 100; ++i) {
        Eigen::Index arg = 0, nearest = 0;
        hard.col(i).maxCoeff(&arg);
        for (Eigen::Index a = 1; a < 7; ++a)
            if ((points.col(i) - small.atoms.col(a)).squaredNorm() < (points.col(i) - small.atoms.col(nearest)).squaredNorm())
                nearest = a;
        agree += arg == nearest;
    }
    return {sum_err <= 1e-12 && recovery <= 1e-3 && agree == 100,
            fmt::format("column-sum err {:.1e} (<= 1e-12), cluster recovery {:.1e} (<= 1e-3), argmax agreement {}/100",
                        sum_err, recovery, agree)};
}

struct CohortRun {
    Manifest manifest;
    PipelineResult result;
    double seconds = 0.0;
};

Outcome classification(const CohortRun& run, const fs::path& out) {
    const PipelineConfig config = cohort_config();
    const auto t0 = Clock::now();
    const LabeledDataset wb = classification_dataset(to_feature_table(run.result.z), run.manifest, "AD-NC");
    const LabeledDataset sd = classification_dataset(run.result.shapedna, run.manifest, "AD-NC");
    const ClassificationReport a = cross_validate_svm(wb, config.folds, config.svm_c, config.cv_seed, task_classes("AD-NC"));
    const ClassificationReport b = cross_validate_svm(sd, config.folds, config.svm_c, config.cv_seed, task_classes("AD-NC"));
    const PairedTestResult test = paired_comparison(a.fold_accuracies, b.fold_accuracies);
    write_report(make_report("classification", config, classification_json(a, wb, "AD-NC")), out / "classify_waveletbrain.json");
    write_report(make_report("classification", config, classification_json(b, sd, "AD-NC")), out / "classify_shapedna.json");
    write_report(make_report("comparison", config, comparison_json(a, b, test)), out / "compare.json");
    const double elapsed = run.seconds + seconds_since(t0);
    const bool pass = wb.size() == 80 && a.mean_accuracy >= 90.0 && a.mean_accuracy >= b.mean_accuracy &&
                      test.p_value < 0.05 && elapsed < 600.0;
    return {pass, fmt::format("n = {}, WaveletBrain {:.2f}% (>= 90), ShapeDNA {:.2f}%, paired p = {:.3g}{} (< 0.05), "
                              "{:.0f} s (< 600 s)",
                              wb.size(), a.mean_accuracy, b.mean_accuracy, test.p_value,
                              test.degenerate ? " [degenerate]" : "", elapsed)};
}

Outcome regression(const fs::path& work) {
    const auto t0 = Clock::now();
    const CohortSpec spec = CohortSpec::from_json(json::parse(kRegressionCohort));
    const Manifest manifest = write_cohort(spec, work / "regression_cohort");
    PipelineConfig config = cohort_config();
    config.pls_ncomp = 5;
    const PipelineResult result = run_pipeline(manifest, config, work / "regression_cache");
    const LabeledDataset ds = regression_dataset(to_feature_table(result.z), manifest);
    const RegressionReport report = pls_loocv(ds, config.pls_ncomp);
    write_scatter_csv(report, work / "scatter.csv");

    const CsvTable rows = read_csv(work / "scatter.csv");
    std::vector<double> truth, predicted;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        truth.push_back(std::stod(rows[i].at(1)));
        predicted.push_back(std::stod(rows[i].at(2)));
    }
    // Independent recomputation from the CSV.
    const double n = static_cast<double>(truth.size());
    double mt = 0, mp = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        mt += truth[i] / n;
        mp += predicted[i] / n;
    }
    double stp = 0, stt = 0, spp = 0, abs_sum = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        stp += (truth[i] - mt) * (predicted[i] - mp);
        stt += (truth[i] - mt) * (truth[i] - mt);
        spp += (predicted[i] - mp) * (predicted[i] - mp);
        abs_sum += std::abs(truth[i] - predicted[i]);
    }
    const double r = stp / std::sqrt(stt * spp);
    const double mae = abs_sum / n;
    const double r_err = std::abs(r - report.pearson_r);
    const double mae_err = std::abs(mae - report.mae);
    const bool pass = ds.size() == 80 && report.pearson_r >= 0.8 && r_err <= 1e-12 && mae_err <= 1e-12;
    return {pass, fmt::format("n = {}, r = {:.4f} (>= 0.8), MAE = {:.3f}, recomputed |dr| = {:.1e}, |dMAE| = {:.1e} "
                              "(<= 1e-12), {:.0f} s",
                              ds.size(), report.pearson_r, report.mae, r_err, mae_err, seconds_since(t0))};
}

std::string without_timing(const fs::path& report) {
    json j = json::parse(read_text(report));
    j.erase("timing");
    return j.dump();
}

Outcome determinism(const CohortRun& first, const fs::path& work) {
    const PipelineConfig config = cohort_config();
    write_pipeline_outputs(first.result, config, work / "run_a");

    // Independent cold run into a fresh cache, then a warm rerun on the first cache.
    const PipelineResult second = run_pipeline(first.manifest, config, work / "cache_b");
    write_pipeline_outputs(second, config, work / "run_b");
    const PipelineResult warm = run_pipeline(first.manifest, config, work / "cache_a");
    write_pipeline_outputs(warm, config, work / "run_c");

    bool same = true;
    for (const char* run : {"run_b", "run_c"}) {
        same = same && read_text(work / "run_a" / "Z.csv") == read_text(work / run / "Z.csv");
        same = same && read_text(work / "run_a" / "shapedna.csv") == read_text(work / run / "shapedna.csv");
        same = same && read_text(work / "run_a" / "dictionary.wbd") == read_text(work / run / "dictionary.wbd");
        same = same && without_timing(work / "run_a" / "pipeline.json") == without_timing(work / run / "pipeline.json");
    }
    const PipelineConfig c = config;
    auto report_of = [&](const PipelineResult& r) {
        const LabeledDataset ds = classification_dataset(to_feature_table(r.z), first.manifest, "AD-NC");
        return serialize_report(make_report("classification", c,
                                            classification_json(cross_validate_svm(ds, c.folds, c.svm_c, c.cv_seed), ds, "AD-NC")));
    };
    const bool reports_same = report_of(first.result) == report_of(second) && report_of(first.result) == report_of(warm);
    const json stats = json::parse(read_text(work / "run_c" / "run_stats.json"));
    const long warm_solves = stats["run"]["eigensolves"].get<long>();
    return {same && reports_same && warm.eigensolves == 0 && warm_solves == 0 && second.eigensolves == first.result.eigensolves,
            fmt::format("outputs byte-identical: {}, classification reports identical: {}, warm-cache eigensolves {} "
                        "(cold runs {} and {})",
                        same, reports_same, warm.eigensolves, first.result.eigensolves, second.eigensolves)};
}

Outcome statistical_sanity(const CohortRun& run) {
    const PipelineConfig config = cohort_config();
    LabeledDataset ds = classification_dataset(to_feature_table(run.result.z), run.manifest, "AD-NC");
    std::mt19937_64 rng(12345);
    std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
    const ClassificationReport r = cross_validate_svm(ds, config.folds, config.svm_c, config.cv_seed);
    const std::vector<double> same(10, 0.85);
    const PairedTestResult degenerate = paired_comparison(same, same);
    const bool pass = std::abs(r.mean_accuracy - 50.0) <= 10.0 && degenerate.degenerate && degenerate.p_value == 1.0;
    return {pass, fmt::format("permuted-label accuracy {:.2f}% (50 +/- 10), identical folds: degenerate {} p = {}",
                              r.mean_accuracy, degenerate.degenerate, degenerate.p_value)};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    // Optional argument: a directory to keep the artifacts in.
    std::optional<testsupport::TempDir> temp;
    fs::path work;
    if (argc > 1) {
        work = argv[1];
        fs::create_directories(work);
    } else {
        temp.emplace("wbrain-acceptance");
        work = temp->path();
    }

    int failures = 0;
    auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " | " << o.detail << std::endl;
    };

    report(1, "sphere spectrum", sphere_spectrum);
    report(2, "dense-oracle equivalence", dense_oracle);
    report(3, "harmonic round trip", harmonic_round_trip);
    report(4, "kernel schedule", kernel_schedule);
    report(5, "invariance suite", invariance_suite);
    report(6, "bag-of-features contracts", bof_contracts);

    std::optional<CohortRun> cohort;
    std::string cohort_error;
    try {
        const auto t0 = Clock::now();
        CohortRun run;
        run.manifest = write_cohort(CohortSpec::from_json(json::parse(kClassificationCohort)), work / "cohort");
        run.result = run_pipeline(run.manifest, cohort_config(), work / "cache_a");
        run.seconds = seconds_since(t0);
        cohort = std::move(run);
    } catch (const std::exception& e) {
        cohort_error = std::string("cohort pipeline failed: ") + e.what();
    }
    auto with_cohort = [&](const std::function<Outcome(const CohortRun&)>& fn) {
        return [&, fn]() -> Outcome {
            if (!cohort) return {false, cohort_error};
            return fn(*cohort);
        };
    };

    report(7, "synthetic classification", with_cohort([&](const CohortRun& r) { return classification(r, work); }));
    report(8, "synthetic regression", [&] { return regression(work); });
    report(9, "determinism", with_cohort([&](const CohortRun& r) { return determinism(r, work); }));
    report(10, "statistical sanity", with_cohort(statistical_sanity));

    std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
