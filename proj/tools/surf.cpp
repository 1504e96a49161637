// surf: command-line front end for the cortical-surface descriptor pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wbrain/bof.hpp"
#include "wbrain/errors.hpp"
#include "wbrain/laplacian.hpp"
#include "wbrain/learn.hpp"
#include "wbrain/mesh.hpp"
#include "wbrain/pipeline.hpp"
#include "wbrain/sgwt.hpp"
#include "wbrain/store.hpp"
#include "wbrain/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wbrain;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Globals {
    std::string config_path;
    std::string cache_dir;
    int jobs = 0;
    std::optional<std::uint64_t> seed;
    std::string log_level = "info";
    int eigenpairs = 0;  // subcommand overrides
    int level = 0;
};

PipelineConfig effective_config(const Globals& g) {
    PipelineConfig config = g.config_path.empty() ? PipelineConfig{} : PipelineConfig::load(g.config_path);
    if (g.jobs > 0) config.jobs = g.jobs;
    if (g.seed) {
        config.dict_seed = *g.seed;
        config.cv_seed = *g.seed;
    }
    if (g.eigenpairs > 0) config.eigenpairs = g.eigenpairs;
    if (g.level > 0) config.level = g.level;
    config.validate();
    return config;
}

void emit(const json& j, const std::string& out) {
    if (out.empty() || out == "-")
        std::cout << serialize_report(j);
    else
        write_report(j, out);
}

EigenSystem solve(const std::string& mesh_path, int k, bool dense = false) {
    const TriangleMesh mesh = load_mesh(mesh_path);
    const LaplacianSystem system = cotangent_system(mesh);
    EigenOptions options;
    if (dense) options.method = EigenMethod::dense;
    return eigendecompose(system, std::min<Eigen::Index>(k, system.size()), options);
}

bool detect_store(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[5] = {};
    in.read(magic, 5);
    return in && std::string(magic, 5) == "SGWS1";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral graph wavelet descriptors for cortical surfaces"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    Globals g;
    app.add_option("--config", g.config_path, "Pipeline configuration (JSON)");
    app.add_option("--cache", g.cache_dir, "Signature cache directory");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { g.seed = s; },
                                           "Overrides dictionary and cross-validation seeds");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

    // info
    auto* info = app.add_subcommand("info", "Mesh statistics and validation report");
    std::string info_mesh;
    info->add_option("mesh", info_mesh)->required();

    // spectrum
    auto* spectrum = app.add_subcommand("spectrum", "Smallest Laplace-Beltrami eigenvalues as JSON");
    std::string spec_mesh, spec_out;
    int spec_k = 0;
    bool spec_dense = false;
    spectrum->add_option("mesh", spec_mesh)->required();
    spectrum->add_option("-k,--k", spec_k, "Number of eigenpairs (default from config)");
    spectrum->add_flag("--dense", spec_dense, "Force the dense solver");
    spectrum->add_option("-o,--output", spec_out, "JSON output (default stdout)");

    // shapedna
    auto* shapedna = app.add_subcommand("shapedna", "Area-normalized ShapeDNA vector");
    std::string sd_mesh, sd_out;
    int sd_d = 0;
    shapedna->add_option("mesh", sd_mesh)->required();
    shapedna->add_option("-d,--d", sd_d, "Number of non-trivial eigenvalues (default from config)");
    shapedna->add_option("-o,--output", sd_out, "CSV output, one row (default stdout)");

    // sgws
    auto* sgws = app.add_subcommand("sgws", "Per-vertex spectral graph wavelet signatures");
    std::string sg_mesh, sg_out;
    bool sg_csv = false;
    int spectral_k = 0, spectral_level = 0;
    sgws->add_option("mesh", sg_mesh)->required();
    sgws->add_option("-k,--k", spectral_k, "Number of eigenpairs (default from config)");
    sgws->add_option("-L,--level", spectral_level, "Number of wavelet scales (default from config)");
    sgws->add_option("-o,--output", sg_out, "Signature file")->required();
    sgws->add_flag("--csv", sg_csv, "Write CSV instead of the binary store");

    // distmap
    auto* distmap = app.add_subcommand("distmap", "Normalized chi-squared distance map from a vertex");
    std::string dm_mesh, dm_out;
    long dm_ref = 0;
    distmap->add_option("mesh", dm_mesh)->required();
    distmap->add_option("--ref", dm_ref, "Reference vertex")->required();
    distmap->add_option("-k,--k", spectral_k, "Number of eigenpairs (default from config)");
    distmap->add_option("-L,--level", spectral_level, "Number of wavelet scales (default from config)");
    distmap->add_option("-o,--output", dm_out, "CSV output (vertex,distance)")->required();

    // dict
    auto* dict = app.add_subcommand("dict", "Train a K-means dictionary on signature stores");
    std::vector<std::string> dict_inputs;
    std::string dict_out;
    int dict_k = 0;
    dict->add_option("stores", dict_inputs, "Signature stores (.sgws)")->required();
    dict->add_option("-k,--vocab", dict_k, "Vocabulary size (default from config)");
    dict->add_option("-o,--output", dict_out, "Dictionary file")->required();

    // encode
    auto* encode = app.add_subcommand("encode", "Soft-assign one surface's signatures and pool a histogram");
    std::string enc_input, enc_dict, enc_out;
    double enc_area = 0.0;
    encode->add_option("input", enc_input, "Mesh or signature store (.sgws)")->required();
    encode->add_option("--dict", enc_dict, "Dictionary file")->required();
    encode->add_option("--area", enc_area, "Surface area, needed to normalize a signature-store input");
    encode->add_option("-o,--output", enc_out, "Histogram CSV (atom,value)")->required();

    // assemble
    auto* assemble = app.add_subcommand("assemble", "Encode a manifest with a fixed dictionary into Z.csv");
    std::string asm_manifest, asm_dict, asm_out;
    bool asm_diffs = false;
    assemble->add_option("--manifest", asm_manifest)->required();
    assemble->add_option("--dict", asm_dict, "Dictionary file")->required();
    assemble->add_flag("--diffs", asm_diffs, "Append gray-minus-white difference blocks");
    assemble->add_option("-o,--output", asm_out, "Feature table CSV")->required();

    // classify
    auto* classify = app.add_subcommand("classify", "Cross-validated linear SVM");
    std::string cl_features, cl_manifest, cl_task = "AD-NC", cl_out;
    bool cl_balance = false;
    classify->add_option("--features", cl_features, "Feature table (Z.csv or shapedna.csv)")->required()
        ;
    classify->add_option("--manifest", cl_manifest)->required();
    classify->add_option("--task", cl_task, "AD-NC, AD-MCI, MCI-NC or sex");
    int cl_folds = 0;
    double cl_c = 0.0;
    classify->add_flag("--balance", cl_balance, "Subsample the larger class");
    classify->add_option("--folds", cl_folds, "Cross-validation folds (default from config)");
    classify->add_option("--C", cl_c, "SVM penalty (default from config)");
    classify->add_option("-o,--output", cl_out, "Report JSON");

    // regress
    auto* regress = app.add_subcommand("regress", "PLS regression of age with leave-one-out validation");
    std::string rg_features, rg_manifest, rg_out, rg_scatter;
    regress->add_option("--features", rg_features)->required();
    regress->add_option("--manifest", rg_manifest)->required();
    int rg_ncomp = 0;
    regress->add_option("--ncomp", rg_ncomp, "PLS components (default from config)");
    regress->add_option("-o,--output", rg_out, "Report JSON");
    regress->add_option("--scatter", rg_scatter, "CSV of true and predicted ages");

    // compare
    auto* compare = app.add_subcommand("compare", "Paired t-test on per-fold accuracies of two reports");
    std::string cmp_a, cmp_b, cmp_out;
    compare->add_option("report_a", cmp_a)->required();
    compare->add_option("report_b", cmp_b)->required();
    compare->add_option("-o,--output", cmp_out, "Report JSON");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic surface");
    SynthSpec sy;
    std::string sy_family = "icosphere", sy_out;
    synth->add_option("--family", sy_family)->check(CLI::IsMember({"icosphere", "bump_sphere"}));
    synth->add_option("--sub", sy.subdivision, "Subdivision level");
    synth->add_option("--eps", sy.amplitude, "Bump amplitude");
    synth->add_option("--bumps", sy.n_bumps, "Number of bumps");
    synth->add_option("--width", sy.bump_width, "Bump angular width (radians)");
    synth->add_option("--seed", sy.seed, "Bump placement seed");
    synth->add_option("-o,--output", sy_out, "Mesh file (.off, .ply, or FreeSurfer)")->required();

    // synth-cohort
    auto* cohort = app.add_subcommand("synth-cohort", "Generate a synthetic cohort with a manifest");
    std::string co_config, co_out;
    cohort->add_option("--config", co_config, "Cohort description (JSON)")->required();
    cohort->add_option("-o,--output", co_out, "Output directory")->required();

    // run
    auto* run = app.add_subcommand("run", "Full pipeline over a manifest");
    std::string run_manifest, run_out, run_task;
    bool run_regress = false;
    run->add_option("--manifest", run_manifest)->required();
    run->add_option("-o,--output", run_out, "Output directory")->required();
    run->add_option("--classify", run_task, "Also run a classification task on Z and ShapeDNA");
    run->add_flag("--regress", run_regress, "Also run the age regression on Z");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    g.eigenpairs = spectral_k;
    g.level = spectral_level;

    auto logger = spdlog::stderr_color_mt("surf");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (*info) {
            const TriangleMesh mesh = read_mesh(info_mesh);
            const ValidationReport report = inspect_mesh(mesh);
            json j;
            j["vertices"] = mesh.num_vertices();
            j["triangles"] = mesh.num_triangles();
            j["surface_area"] = surface_area(mesh);
            j["valid"] = report.is_valid;
            j["issues"] = report.issue_counts;
            std::cout << serialize_report(j);
        } else if (*spectrum) {
            const PipelineConfig config = effective_config(g);
            const EigenSystem eig = solve(spec_mesh, spec_k > 0 ? spec_k : config.eigenpairs, spec_dense);
            json j;
            j["vertices"] = eig.num_vertices();
            j["mesh_area"] = eig.mesh_area;
            j["eigenvalues"] = std::vector<double>(eig.eigenvalues.data(), eig.eigenvalues.data() + eig.num_pairs());
            emit(j, spec_out);
        } else if (*shapedna) {
            const PipelineConfig config = effective_config(g);
            const int d = sd_d > 0 ? sd_d : config.shapedna_d;
            const EigenSystem eig = solve(sd_mesh, std::max(d + 1, config.eigenpairs));
            const Eigen::VectorXd dna = shape_dna(eig, d);
            std::string text;
            for (Eigen::Index i = 0; i < dna.size(); ++i) text += (i ? "," : "") + format_double(dna(i));
            text += "\n";
            if (sd_out.empty())
                std::cout << text;
            else
                write_text_atomic(sd_out, text);
        } else if (*sgws) {
            const PipelineConfig config = effective_config(g);
            const SurfaceSignature sig = extract_signature(sg_mesh, config.eigenpairs, config.level, g.cache_dir);
            if (sg_csv)
                write_sgws_csv(sig.sgws, sg_out);
            else
                write_sgws_store(sig.sgws, sg_out);
            spdlog::info("{} x {} signatures{}", sig.sgws.dimension(), sig.sgws.num_vertices(),
                         sig.cache_hit ? " (cache hit)" : "");
        } else if (*distmap) {
            const PipelineConfig config = effective_config(g);
            const SurfaceSignature sig = extract_signature(dm_mesh, config.eigenpairs, config.level, g.cache_dir);
            write_distance_map_csv(chi2_distance_map(sig.sgws, dm_ref), dm_out);
        } else if (*dict) {
            const PipelineConfig config = effective_config(g);
            std::vector<SgwsMatrix> stores;
            for (const auto& p : dict_inputs) stores.push_back(read_sgws_store(p));
            const Dictionary d = build_dictionary(stores, dict_k > 0 ? dict_k : config.vocab_size, config.dict_seed);
            write_dictionary(d, dict_out);
            spdlog::info("dictionary: {} atoms, {} iterations, inertia {}", d.size(), d.iterations, d.inertia);
        } else if (*encode) {
            const PipelineConfig config = effective_config(g);
            const Dictionary d = read_dictionary(enc_dict);
            SgwsMatrix signatures;
            double area = enc_area;
            if (detect_store(enc_input)) {
                signatures = read_sgws_store(enc_input);
                if (config.area_normalize && !(area > 0.0))
                    throw DomainError("--area is required to normalize a signature-store input");
            } else {
                const SurfaceSignature sig = extract_signature(enc_input, config.eigenpairs, config.level, g.cache_dir);
                signatures = sig.sgws;
                area = sig.mesh_area;
            }
            const double sigma = config.sigma ? *config.sigma : d.mean_nearest_distance;
            const SurfaceHistogram h = pool_histogram(soft_assign(signatures, d, sigma), area, config.area_normalize);
            std::string text = "atom,value\n";
            for (Eigen::Index r = 0; r < h.values.size(); ++r) text += fmt::format("{},{}\n", r, format_double(h.values(r)));
            write_text_atomic(enc_out, text);
        } else if (*assemble) {
            PipelineConfig config = effective_config(g);
            if (asm_diffs) config.with_differences = true;
            const Dictionary d = read_dictionary(asm_dict);
            const PipelineResult result = run_pipeline(read_manifest(asm_manifest), config, g.cache_dir, &d);
            write_feature_table(to_feature_table(result.z), asm_out);
            for (const auto& f : result.failures)
                spdlog::warn("dropped {}: {} failed at {}: {}", f.subject_id, f.tag, f.stage, f.message);
        } else if (*classify) {
            PipelineConfig config = effective_config(g);
            if (cl_folds > 0) config.folds = cl_folds;
            if (cl_c > 0.0) config.svm_c = cl_c;
            config.validate();
            const Manifest manifest = read_manifest(cl_manifest);
            LabeledDataset data = classification_dataset(read_feature_table(cl_features), manifest, cl_task);
            if (cl_balance) data = balance_classes(data, config.cv_seed);
            const ClassificationReport report =
                cross_validate_svm(data, config.folds, config.svm_c, config.cv_seed, task_classes(cl_task));
            emit(make_report("classification", config, classification_json(report, data, cl_task)), cl_out);
        } else if (*regress) {
            PipelineConfig config = effective_config(g);
            if (rg_ncomp > 0) config.pls_ncomp = rg_ncomp;
            const Manifest manifest = read_manifest(rg_manifest);
            const LabeledDataset data = regression_dataset(read_feature_table(rg_features), manifest);
            const RegressionReport report = pls_loocv(data, config.pls_ncomp);
            if (!rg_scatter.empty()) write_scatter_csv(report, rg_scatter);
            emit(make_report("regression", config, regression_json(report)), rg_out);
        } else if (*compare) {
            const PipelineConfig config = effective_config(g);
            const auto a = classification_from_json(json::parse(read_text(cmp_a)));
            const auto b = classification_from_json(json::parse(read_text(cmp_b)));
            const PairedTestResult test = paired_comparison(a.fold_accuracies, b.fold_accuracies);
            emit(make_report("comparison", config, comparison_json(a, b, test)), cmp_out);
        } else if (*synth) {
            sy.family = parse_family(sy_family);
            write_mesh(synthesize(sy), sy_out);
        } else if (*cohort) {
            const CohortSpec spec = CohortSpec::load(co_config);
            const Manifest manifest = write_cohort(spec, co_out, g.jobs > 0 ? g.jobs : 1);
            spdlog::info("wrote {} subjects to {}", manifest.rows.size(), co_out);
        } else if (*run) {
            const PipelineConfig config = effective_config(g);
            const Manifest manifest = read_manifest(run_manifest);
            const PipelineResult result = run_pipeline(manifest, config, g.cache_dir);
            write_pipeline_outputs(result, config, run_out);
            spdlog::info("cache hits: {}, eigensolves: {}", result.cache_hits, result.eigensolves);
            const fs::path out = run_out;
            if (!run_task.empty()) {
                const FeatureTable z = to_feature_table(result.z);
                const auto classes = task_classes(run_task);
                const LabeledDataset dz = classification_dataset(z, manifest, run_task);
                const LabeledDataset ds = classification_dataset(result.shapedna, manifest, run_task);
                const auto rz = cross_validate_svm(dz, config.folds, config.svm_c, config.cv_seed, classes);
                const auto rs = cross_validate_svm(ds, config.folds, config.svm_c, config.cv_seed, classes);
                write_report(make_report("classification", config, classification_json(rz, dz, run_task)),
                             out / "classify_waveletbrain.json");
                write_report(make_report("classification", config, classification_json(rs, ds, run_task)),
                             out / "classify_shapedna.json");
                const PairedTestResult test = paired_comparison(rz.fold_accuracies, rs.fold_accuracies);
                write_report(make_report("comparison", config, comparison_json(rz, rs, test)), out / "compare.json");
                spdlog::info("{}: WaveletBrain {:.2f}%, ShapeDNA {:.2f}%, p = {:.4g}", run_task, rz.mean_accuracy,
                             rs.mean_accuracy, test.p_value);
            }
            if (run_regress) {
                const LabeledDataset data = regression_dataset(to_feature_table(result.z), manifest);
                const RegressionReport report = pls_loocv(data, config.pls_ncomp);
                write_scatter_csv(report, out / "scatter.csv");
                write_report(make_report("regression", config, regression_json(report)), out / "regress.json");
                spdlog::info("age regression: r = {:.4f}, MAE = {:.4f}", report.pearson_r, report.mae);
            }
        }
    } catch (const Error& e) {
        spdlog::error("{}: {}", to_string(e.kind()), e.what());
        return e.is_numerical() ? kNumerical : kData;
    } catch (const json::exception& e) {
        spdlog::error("format-error: {}", e.what());
        return kData;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("io-error: {}", e.what());
        return kData;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kData;
    }
    return kOk;
}
