// Batch orchestration: manifests, configuration, the cached per-surface
// signature pipeline, cohort-level descriptor assembly, experiment reports and
// synthetic cohorts.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "wbrain/bof.hpp"
#include "wbrain/learn.hpp"
#include "wbrain/sgwt.hpp"
#include "wbrain/store.hpp"

namespace wbrain {

inline constexpr const char* kToolName = "surf";
inline constexpr const char* kToolVersion = "0.1.0";

struct ManifestRow {
    std::string subject_id;
    std::array<std::filesystem::path, 4> surfaces;  // LW, LG, RW, RG; resolved paths
    std::string diagnosis = "NA";                   // AD, MCI, NC or NA
    std::optional<double> age;
    std::string sex = "NA";                         // M, F or NA
};

struct Manifest {
    std::vector<ManifestRow> rows;
};

// CSV header: subject_id,path_LW,path_LG,path_RW,path_RG,diagnosis,age,sex.
// Relative paths resolve against the manifest's directory. Existence of the
// surface files is checked by the pipeline, which reports them per surface.
Manifest read_manifest(const std::filesystem::path& path);
// Paths are written relative to `base` when they lie beneath it.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path,
                    const std::filesystem::path& base = {});

struct PipelineConfig {
    int eigenpairs = 201;
    int level = kDefaultLevel;
    int vocab_size = 64;
    std::optional<double> sigma;  // empty means "auto": mean nearest-atom distance
    std::uint64_t dict_seed = 1;
    bool area_normalize = true;
    bool with_differences = false;
    int shapedna_d = 10;
    double svm_c = 1.0;
    int folds = 10;
    std::uint64_t cv_seed = 1;
    int pls_ncomp = 10;
    int jobs = 1;
    double max_failure_fraction = 0.25;
    // Subjects whose signatures train the dictionary; empty means all.
    std::vector<std::string> dictionary_subjects;

    void validate() const;
    nlohmann::json to_json() const;
    // Missing keys keep their defaults; unknown keys are rejected.
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::filesystem::path& path);
};

// Per-surface products that the cache holds.
struct SurfaceSignature {
    SgwsMatrix sgws;
    Eigen::VectorXd eigenvalues;
    double mesh_area = 0.0;
    bool cache_hit = false;
};

// Cache key: BLAKE2b over the mesh bytes and the numeric parameters.
std::string signature_cache_key(std::string_view mesh_bytes, int eigenpairs, int level);

// load -> validate -> cotangent_system -> eigendecompose -> compute_sgws, or a
// cache read when `cache_dir` holds the entry. An empty cache_dir disables caching.
// `stage`, when given, names the step that was running if an exception escapes.
SurfaceSignature extract_signature(const std::filesystem::path& mesh_path, int eigenpairs, int level,
                                   const std::filesystem::path& cache_dir, std::string* stage = nullptr);

struct SurfaceFailure {
    std::string subject_id;
    std::string tag;
    std::string stage;
    std::string message;
};

struct PipelineResult {
    WaveletBrainMatrix z;
    FeatureTable shapedna;  // per subject: ShapeDNA of LW, LG, RW, RG concatenated
    std::vector<ManifestRow> subjects;  // retained rows, manifest order
    std::vector<SurfaceFailure> failures;
    Dictionary dictionary;
    double sigma = 0.0;
    std::vector<std::string> training_subjects;
    std::string training_set_hash;
    long surfaces = 0;
    long cache_hits = 0;
    long eigensolves = 0;
    std::map<std::string, double> timing;  // seconds per phase
};

// Subjects with any failed surface are dropped. Throws AbortedError when the
// failed-surface fraction exceeds config.max_failure_fraction. A supplied
// dictionary is used as is instead of training one.
PipelineResult run_pipeline(const Manifest& manifest, const PipelineConfig& config,
                            const std::filesystem::path& cache_dir, const Dictionary* dictionary = nullptr);

FeatureTable to_feature_table(const WaveletBrainMatrix& z);

// Report envelope: tool, version, config echo, seeds, the payload under
// "result", and wall-clock numbers under "timing".
nlohmann::json make_report(const std::string& kind, const PipelineConfig& config, nlohmann::json result,
                           const std::map<std::string, double>& timing = {});
std::string serialize_report(const nlohmann::json& report);
void write_report(const nlohmann::json& report, const std::filesystem::path& path);

nlohmann::json pipeline_result_json(const PipelineResult& result);
// Writes Z.csv, shapedna.csv, failures.csv and pipeline.json into out_dir.
void write_pipeline_outputs(const PipelineResult& result, const PipelineConfig& config,
                            const std::filesystem::path& out_dir);

// Class order for a task; the first class is the positive one.
std::vector<std::string> task_classes(const std::string& task);

// Tasks: "AD-NC", "AD-MCI", "MCI-NC" (first class positive) or "sex".
// Rows are matched to the manifest by subject id; unlabeled rows are skipped.
LabeledDataset classification_dataset(const FeatureTable& table, const Manifest& manifest, const std::string& task);
// Targets are ages; rows without an age are skipped.
LabeledDataset regression_dataset(const FeatureTable& table, const Manifest& manifest);

nlohmann::json classification_json(const ClassificationReport& report, const LabeledDataset& dataset,
                                   const std::string& task);
nlohmann::json regression_json(const RegressionReport& report);
// `report` may carry a "result" object or be the bare payload.
ClassificationReport classification_from_json(const nlohmann::json& report);
nlohmann::json comparison_json(const ClassificationReport& a, const ClassificationReport& b,
                               const PairedTestResult& test);
// subject_id,true_age,predicted_age
void write_scatter_csv(const RegressionReport& report, const std::filesystem::path& path);
// vertex,distance
void write_distance_map_csv(const Eigen::VectorXd& distances, const std::filesystem::path& path);

// Synthetic cohort description. Each class draws a per-subject amplitude
// uniformly from [amplitude_min, amplitude_max] and a bump count uniformly
// from [bumps_min, bumps_max]; the four surfaces of a subject share both and
// differ only in their bump centers. Age is intercept + slope * amplitude
// plus Gaussian noise.
struct CohortClass {
    std::string diagnosis;
    int count = 0;
    double amplitude_min = 0.0;
    double amplitude_max = 0.0;
    int bumps_min = 1;
    int bumps_max = 1;
};

struct CohortSpec {
    int subdivision = 3;
    double bump_width = 0.3;
    std::uint64_t seed = 1;
    std::vector<CohortClass> classes;
    double age_intercept = 60.0;
    double age_slope = 100.0;
    double age_noise = 1.0;

    static CohortSpec from_json(const nlohmann::json& j);
    static CohortSpec load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

struct CohortSubject {
    std::string subject_id;
    std::string diagnosis;
    double amplitude = 0.0;
    int n_bumps = 0;
    double age = 0.0;
    std::string sex;
    std::array<std::uint64_t, 4> seeds{};
};

// Deterministic subject draws for a cohort spec.
std::vector<CohortSubject> plan_cohort(const CohortSpec& spec);

// Writes OFF meshes under out_dir/meshes and out_dir/manifest.csv; returns the manifest.
Manifest write_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir, int jobs = 1);

// Runs fn(i) for i in [0, n) on at most `jobs` threads. The first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace wbrain
