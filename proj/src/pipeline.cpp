#include "wbrain/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <exception>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wbrain/errors.hpp"
#include "wbrain/laplacian.hpp"
#include "wbrain/mesh.hpp"
#include "wbrain/synth.hpp"

namespace wbrain {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::array<std::string, 8> kManifestHeader{"subject_id", "path_LW", "path_LG", "path_RW",
                                                 "path_RG",    "diagnosis", "age",   "sex"};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::optional<double> parse_number(const std::string& text) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// splitmix64 finalizer, used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

template <typename T>
T get_checked(const json& j, const char* key, const char* what) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}: bad value for '{}': {}", what, key, e.what()));
    }
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t width = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (width <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    workers.reserve(width);
    for (std::size_t w = 0; w < width; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(n);
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Manifest

Manifest read_manifest(const fs::path& path) {
    const CsvTable rows = read_csv(path);
    if (rows.empty()) throw FormatError(path.string() + ": empty manifest");
    std::map<std::string, std::size_t> column;
    for (std::size_t j = 0; j < rows[0].size(); ++j) column[rows[0][j]] = j;
    for (const auto& name : kManifestHeader)
        if (!column.count(name)) throw FormatError(path.string() + ": manifest lacks column '" + name + "'");

    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    Manifest manifest;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != rows[0].size())
            throw FormatError(fmt::format("{}: row {} has {} fields, expected {}", path.string(), i, r.size(),
                                          rows[0].size()));
        auto field = [&](const std::string& name) -> const std::string& { return r[column.at(name)]; };
        ManifestRow row;
        row.subject_id = field("subject_id");
        if (row.subject_id.empty()) throw FormatError(fmt::format("{}: row {} has no subject id", path.string(), i));
        if (!seen.insert(row.subject_id).second)
            throw FormatError(path.string() + ": duplicate subject id '" + row.subject_id + "'");
        for (std::size_t s = 0; s < 4; ++s) {
            fs::path p = field("path_" + surface_tags()[s]);
            row.surfaces[s] = p.is_absolute() ? p : base / p;
        }
        row.diagnosis = field("diagnosis");
        if (row.diagnosis.empty()) row.diagnosis = "NA";
        if (row.diagnosis != "AD" && row.diagnosis != "MCI" && row.diagnosis != "NC" && row.diagnosis != "NA")
            throw FormatError(path.string() + ": unknown diagnosis '" + row.diagnosis + "' for " + row.subject_id);
        const std::string& age = field("age");
        if (!age.empty() && age != "NA") {
            row.age = parse_number(age);
            if (!row.age) throw FormatError(path.string() + ": bad age '" + age + "' for " + row.subject_id);
        }
        row.sex = field("sex");
        if (row.sex.empty()) row.sex = "NA";
        if (row.sex != "M" && row.sex != "F" && row.sex != "NA")
            throw FormatError(path.string() + ": unknown sex '" + row.sex + "' for " + row.subject_id);
        manifest.rows.push_back(std::move(row));
    }
    return manifest;
}

void write_manifest(const Manifest& manifest, const fs::path& path, const fs::path& base) {
    fmt::memory_buffer buf;
    for (std::size_t j = 0; j < kManifestHeader.size(); ++j)
        fmt::format_to(std::back_inserter(buf), "{}{}", j ? "," : "", kManifestHeader[j]);
    buf.push_back('\n');
    for (const auto& row : manifest.rows) {
        fmt::format_to(std::back_inserter(buf), "{}", csv_field(row.subject_id));
        for (const auto& p : row.surfaces) {
            fs::path shown = p;
            if (!base.empty()) {
                const fs::path rel = p.lexically_relative(base);
                if (!rel.empty() && *rel.begin() != "..") shown = rel;
            }
            fmt::format_to(std::back_inserter(buf), ",{}", csv_field(shown.generic_string()));
        }
        fmt::format_to(std::back_inserter(buf), ",{},{},{}\n", row.diagnosis,
                       row.age ? format_double(*row.age) : std::string("NA"), row.sex);
    }
    write_text_atomic(path, fmt::to_string(buf));
}

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
    auto positive = [](const char* name, double v) {
        if (!(v > 0.0)) throw DomainError(fmt::format("config: '{}' must be positive", name));
    };
    positive("eigenpairs", eigenpairs);
    positive("level", level);
    positive("vocab_size", vocab_size);
    positive("shapedna_d", shapedna_d);
    positive("svm_c", svm_c);
    positive("pls_ncomp", pls_ncomp);
    positive("jobs", jobs);
    if (sigma) positive("sigma", *sigma);
    if (eigenpairs < 2) throw DomainError("config: 'eigenpairs' must be at least 2");
    if (shapedna_d >= eigenpairs) throw DomainError("config: 'shapedna_d' must be below 'eigenpairs'");
    if (folds < 2) throw DomainError("config: 'folds' must be at least 2");
    if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0))
        throw DomainError("config: 'max_failure_fraction' must lie in [0, 1]");
}

json PipelineConfig::to_json() const {
    json j;
    j["eigenpairs"] = eigenpairs;
    j["level"] = level;
    j["vocab_size"] = vocab_size;
    j["sigma"] = sigma ? json(*sigma) : json("auto");
    j["dict_seed"] = dict_seed;
    j["area_normalize"] = area_normalize;
    j["with_differences"] = with_differences;
    j["shapedna_d"] = shapedna_d;
    j["svm_c"] = svm_c;
    j["folds"] = folds;
    j["cv_seed"] = cv_seed;
    j["pls_ncomp"] = pls_ncomp;
    j["jobs"] = jobs;
    j["max_failure_fraction"] = max_failure_fraction;
    j["dictionary_subjects"] = dictionary_subjects;
    return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    PipelineConfig c;
    static const std::set<std::string> known{
        "eigenpairs", "level", "vocab_size", "sigma", "dict_seed", "area_normalize", "with_differences",
        "shapedna_d", "svm_c", "folds", "cv_seed", "pls_ncomp", "jobs", "max_failure_fraction",
        "dictionary_subjects"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw FormatError("config: unknown key '" + key + "'");

    auto read = [&](const char* key, auto& field) {
        if (j.contains(key)) field = get_checked<std::decay_t<decltype(field)>>(j, key, "config");
    };
    read("eigenpairs", c.eigenpairs);
    read("level", c.level);
    read("vocab_size", c.vocab_size);
    read("dict_seed", c.dict_seed);
    read("area_normalize", c.area_normalize);
    read("with_differences", c.with_differences);
    read("shapedna_d", c.shapedna_d);
    read("svm_c", c.svm_c);
    read("folds", c.folds);
    read("cv_seed", c.cv_seed);
    read("pls_ncomp", c.pls_ncomp);
    read("jobs", c.jobs);
    read("max_failure_fraction", c.max_failure_fraction);
    read("dictionary_subjects", c.dictionary_subjects);
    if (j.contains("sigma")) {
        const json& s = j.at("sigma");
        if (s.is_string() && s.get<std::string>() == "auto")
            c.sigma.reset();
        else if (s.is_number())
            c.sigma = s.get<double>();
        else
            throw FormatError("config: 'sigma' must be a number or \"auto\"");
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

// ---------------------------------------------------------------------------
// Per-surface extraction

std::string signature_cache_key(std::string_view mesh_bytes, int eigenpairs, int level) {
    std::string material = fmt::format("sgws-v1;k={};L={};", eigenpairs, level);
    material.append(mesh_bytes);
    return blake2b_hex(material);
}

SurfaceSignature extract_signature(const fs::path& mesh_path, int eigenpairs, int level, const fs::path& cache_dir,
                                   std::string* stage) {
    std::string local_stage;
    std::string& current = stage ? *stage : local_stage;

    current = "load";
    if (!fs::exists(mesh_path)) throw IoError("surface file '" + mesh_path.string() + "' does not exist");
    const std::string bytes = read_text(mesh_path);

    fs::path store_path, meta_path;
    if (!cache_dir.empty()) {
        current = "cache";
        const std::string key = signature_cache_key(bytes, eigenpairs, level);
        store_path = cache_dir / (key + ".sgws");
        meta_path = cache_dir / (key + ".json");
        if (fs::exists(store_path) && fs::exists(meta_path)) {
            SurfaceSignature out;
            out.sgws = read_sgws_store(store_path);
            out.sgws.source_label = mesh_path.filename().string();
            const json meta = json::parse(read_text(meta_path));
            const auto values = meta.at("eigenvalues").get<std::vector<double>>();
            out.eigenvalues = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
            out.mesh_area = meta.at("mesh_area").get<double>();
            out.cache_hit = true;
            return out;
        }
    }

    current = "load";
    const TriangleMesh raw = read_mesh(mesh_path);
    current = "validate";
    const TriangleMesh mesh = validate_mesh(raw).mesh;
    current = "laplacian";
    const LaplacianSystem system = cotangent_system(mesh);
    current = "eigensolve";
    const Eigen::Index k = std::min<Eigen::Index>(eigenpairs, system.size());
    const EigenSystem eig = eigendecompose(system, k);
    current = "sgws";
    SurfaceSignature out;
    out.sgws = compute_sgws(eig, level, mesh_path.filename().string());
    out.eigenvalues = eig.eigenvalues;
    out.mesh_area = eig.mesh_area;

    if (!cache_dir.empty()) {
        current = "cache";
        write_sgws_store(out.sgws, store_path);
        json meta;
        meta["eigenvalues"] = to_vector(out.eigenvalues);
        meta["mesh_area"] = out.mesh_area;
        meta["eigenpairs"] = eigenpairs;
        meta["level"] = level;
        meta["vertices"] = mesh.num_vertices();
        write_text_atomic(meta_path, meta.dump(2) + "\n");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cohort pipeline

PipelineResult run_pipeline(const Manifest& manifest, const PipelineConfig& config, const fs::path& cache_dir,
                            const Dictionary* dictionary) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const auto& tags = surface_tags();
    const std::size_t n_subjects = manifest.rows.size();
    if (n_subjects == 0) throw DomainError("manifest has no subjects");
    const std::size_t n_surfaces = 4 * n_subjects;

    std::vector<std::optional<SurfaceSignature>> signatures(n_surfaces);
    std::vector<std::optional<SurfaceFailure>> failures(n_surfaces);
    std::atomic<long> hits{0};

    parallel_for(n_surfaces, config.jobs, [&](std::size_t idx) {
        const auto& row = manifest.rows[idx / 4];
        const std::string& tag = tags[idx % 4];
        std::string stage;
        try {
            signatures[idx] = extract_signature(row.surfaces[idx % 4], config.eigenpairs, config.level, cache_dir,
                                                &stage);
            if (signatures[idx]->cache_hit) {
                hits.fetch_add(1);
                spdlog::debug("cache hit: {} {}", row.subject_id, tag);
            } else {
                spdlog::debug("computed: {} {}", row.subject_id, tag);
            }
        } catch (const std::exception& e) {
            failures[idx] = SurfaceFailure{row.subject_id, tag, stage, e.what()};
            spdlog::warn("{} {} failed at {}: {}", row.subject_id, tag, stage, e.what());
        }
    });

    PipelineResult result;
    result.surfaces = static_cast<long>(n_surfaces);
    long failed = 0;
    for (auto& f : failures)
        if (f) {
            result.failures.push_back(*f);
            ++failed;
        }
    result.cache_hits = hits.load();
    result.eigensolves = result.surfaces - failed - result.cache_hits;
    result.timing["signatures"] = seconds_since(t_start);
    spdlog::info("signatures: {} surfaces, {} cache hits, {} eigensolves, {} failures", result.surfaces,
                 result.cache_hits, result.eigensolves, failed);

    const double fraction = static_cast<double>(failed) / static_cast<double>(n_surfaces);
    if (fraction > config.max_failure_fraction)
        throw AbortedError(fmt::format("{} of {} surfaces failed ({:.1f}%), above the allowed {:.1f}%", failed,
                                       n_surfaces, 100.0 * fraction, 100.0 * config.max_failure_fraction));

    std::vector<std::size_t> kept;
    for (std::size_t s = 0; s < n_subjects; ++s) {
        bool ok = true;
        for (std::size_t t = 0; t < 4; ++t) ok = ok && signatures[4 * s + t].has_value();
        if (ok) kept.push_back(s);
    }
    if (kept.empty()) throw AbortedError("no subject has all four surfaces");

    // Dictionary on the training subjects only.
    const auto t_dict = std::chrono::steady_clock::now();
    std::set<std::string> requested(config.dictionary_subjects.begin(), config.dictionary_subjects.end());
    for (const auto& id : requested) {
        const bool listed = std::any_of(manifest.rows.begin(), manifest.rows.end(),
                                        [&](const ManifestRow& r) { return r.subject_id == id; });
        if (!listed) throw MismatchError("dictionary subject '" + id + "' is not in the manifest");
    }
    std::vector<SgwsMatrix> training;
    for (std::size_t s : kept) {
        const auto& id = manifest.rows[s].subject_id;
        if (!requested.empty() && !requested.count(id)) continue;
        result.training_subjects.push_back(id);
        for (std::size_t t = 0; t < 4; ++t) training.push_back(signatures[4 * s + t]->sgws);
    }
    if (training.empty() && !dictionary) throw AbortedError("no training subject survived signature extraction");
    {
        std::vector<std::string> sorted = result.training_subjects;
        std::sort(sorted.begin(), sorted.end());
        std::string joined;
        for (const auto& id : sorted) joined += id + "\n";
        result.training_set_hash = blake2b_hex(joined);
    }
    if (dictionary) {
        if (dictionary->dimension() != config.level + 1)
            throw DimensionError(fmt::format("dictionary dimension {} does not match level {}", dictionary->dimension(),
                                             config.level));
        result.dictionary = *dictionary;
    } else {
        result.dictionary = build_dictionary(training, config.vocab_size, config.dict_seed);
    }
    result.sigma = config.sigma ? *config.sigma : result.dictionary.mean_nearest_distance;
    result.timing["dictionary"] = seconds_since(t_dict);

    // Encode, pool and assemble per subject.
    const auto t_encode = std::chrono::steady_clock::now();
    const Eigen::Index k = result.dictionary.size();
    const Eigen::Index length = (config.with_differences ? 6 : 4) * k;
    const Eigen::Index d = config.shapedna_d;
    result.z.block_layout = block_layout(config.with_differences);
    result.z.columns.resize(length, static_cast<Eigen::Index>(kept.size()));
    result.shapedna.features.resize(static_cast<Eigen::Index>(kept.size()), 4 * d);
    parallel_for(kept.size(), config.jobs, [&](std::size_t c) {
        const std::size_t s = kept[c];
        std::map<std::string, SurfaceHistogram> histograms;
        for (std::size_t t = 0; t < 4; ++t) {
            const SurfaceSignature& sig = *signatures[4 * s + t];
            const Eigen::MatrixXd codes = soft_assign(sig.sgws, result.dictionary, result.sigma);
            histograms[tags[t]] = pool_histogram(codes, sig.mesh_area, config.area_normalize, tags[t]);
            EigenSystem spectrum;
            spectrum.eigenvalues = sig.eigenvalues;
            spectrum.mesh_area = sig.mesh_area;
            result.shapedna.features.block(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t) * d, 1, d) =
                shape_dna(spectrum, d).transpose();
        }
        result.z.columns.col(static_cast<Eigen::Index>(c)) = assemble_waveletbrain(histograms, config.with_differences);
    });
    for (std::size_t s : kept) {
        result.subjects.push_back(manifest.rows[s]);
        result.z.subject_ids.push_back(manifest.rows[s].subject_id);
    }
    result.shapedna.subject_ids = result.z.subject_ids;
    result.timing["encoding"] = seconds_since(t_encode);
    result.timing["total"] = seconds_since(t_start);
    return result;
}

FeatureTable to_feature_table(const WaveletBrainMatrix& z) {
    FeatureTable table;
    table.subject_ids = z.subject_ids;
    table.features = z.columns.transpose();
    return table;
}

// ---------------------------------------------------------------------------
// Reports

json make_report(const std::string& kind, const PipelineConfig& config, json result,
                 const std::map<std::string, double>& timing) {
    json report;
    report["tool"] = kToolName;
    report["version"] = kToolVersion;
    report["kind"] = kind;
    report["config"] = config.to_json();
    report["seeds"] = {{"dict_seed", config.dict_seed}, {"cv_seed", config.cv_seed}};
    report["result"] = std::move(result);
    report["timing"] = timing;
    return report;
}

std::string serialize_report(const json& report) { return report.dump(2) + "\n"; }

void write_report(const json& report, const fs::path& path) { write_text_atomic(path, serialize_report(report)); }

json pipeline_result_json(const PipelineResult& result) {
    json j;
    j["subjects"] = result.z.subject_ids;
    j["num_subjects"] = result.z.num_subjects();
    j["descriptor_length"] = result.z.columns.rows();
    j["block_layout"] = result.z.block_layout;
    j["surfaces"] = result.surfaces;
    j["cache_hits"] = result.cache_hits;
    j["eigensolves"] = result.eigensolves;
    j["sigma"] = result.sigma;
    j["training_subjects"] = result.training_subjects;
    j["training_set_hash"] = result.training_set_hash;
    j["dictionary"] = {{"atoms", result.dictionary.size()},
                       {"dimension", result.dictionary.dimension()},
                       {"seed", result.dictionary.seed},
                       {"iterations", result.dictionary.iterations},
                       {"inertia", result.dictionary.inertia},
                       {"mean_nearest_distance", result.dictionary.mean_nearest_distance}};
    json failures = json::array();
    for (const auto& f : result.failures)
        failures.push_back({{"subject_id", f.subject_id}, {"surface", f.tag}, {"stage", f.stage}, {"message", f.message}});
    j["failures"] = std::move(failures);
    return j;
}

void write_pipeline_outputs(const PipelineResult& result, const PipelineConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_feature_table(to_feature_table(result.z), out_dir / "Z.csv");
    write_feature_table(result.shapedna, out_dir / "shapedna.csv");
    write_dictionary(result.dictionary, out_dir / "dictionary.wbd");

    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "subject_id,surface,stage,message\n");
    for (const auto& f : result.failures)
        fmt::format_to(std::back_inserter(buf), "{},{},{},{}\n", csv_field(f.subject_id), f.tag, f.stage,
                       csv_field(f.message));
    write_text_atomic(out_dir / "failures.csv", fmt::to_string(buf));

    // The cache counters describe this particular invocation, not its output.
    json payload = pipeline_result_json(result);
    json counters = {{"cache_hits", payload["cache_hits"]}, {"eigensolves", payload["eigensolves"]}};
    payload.erase("cache_hits");
    payload.erase("eigensolves");
    json timing = result.timing;
    write_report(make_report("pipeline", config, std::move(payload), result.timing), out_dir / "pipeline.json");
    write_report(json{{"run", counters}, {"timing", timing}}, out_dir / "run_stats.json");
}

std::vector<std::string> task_classes(const std::string& task) {
    if (task == "sex") return {"M", "F"};
    const auto dash = task.find('-');
    if (dash == std::string::npos) throw DomainError("unknown task '" + task + "'");
    std::vector<std::string> classes{task.substr(0, dash), task.substr(dash + 1)};
    for (const auto& c : classes)
        if (c != "AD" && c != "MCI" && c != "NC") throw DomainError("unknown task '" + task + "'");
    if (classes[0] == classes[1]) throw DomainError("task '" + task + "' names the same class twice");
    return classes;
}

namespace {

std::map<std::string, const ManifestRow*> index_manifest(const Manifest& manifest) {
    std::map<std::string, const ManifestRow*> by_id;
    for (const auto& row : manifest.rows) by_id[row.subject_id] = &row;
    return by_id;
}

}  // namespace

LabeledDataset classification_dataset(const FeatureTable& table, const Manifest& manifest, const std::string& task) {
    const auto classes = task_classes(task);
    const auto by_id = index_manifest(manifest);
    std::vector<Eigen::Index> rows;
    LabeledDataset out;
    for (std::size_t i = 0; i < table.subject_ids.size(); ++i) {
        const auto it = by_id.find(table.subject_ids[i]);
        if (it == by_id.end()) throw MismatchError("subject '" + table.subject_ids[i] + "' is not in the manifest");
        const std::string& label = task == "sex" ? it->second->sex : it->second->diagnosis;
        if (std::find(classes.begin(), classes.end(), label) == classes.end()) continue;
        rows.push_back(static_cast<Eigen::Index>(i));
        out.labels.push_back(label);
        out.subject_ids.push_back(table.subject_ids[i]);
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), table.features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.features.row(static_cast<Eigen::Index>(r)) = table.features.row(rows[r]);
    return out;
}

LabeledDataset regression_dataset(const FeatureTable& table, const Manifest& manifest) {
    const auto by_id = index_manifest(manifest);
    std::vector<Eigen::Index> rows;
    std::vector<double> ages;
    LabeledDataset out;
    for (std::size_t i = 0; i < table.subject_ids.size(); ++i) {
        const auto it = by_id.find(table.subject_ids[i]);
        if (it == by_id.end()) throw MismatchError("subject '" + table.subject_ids[i] + "' is not in the manifest");
        if (!it->second->age) continue;
        rows.push_back(static_cast<Eigen::Index>(i));
        ages.push_back(*it->second->age);
        out.subject_ids.push_back(table.subject_ids[i]);
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), table.features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.features.row(static_cast<Eigen::Index>(r)) = table.features.row(rows[r]);
    out.targets = Eigen::Map<const Eigen::VectorXd>(ages.data(), static_cast<Eigen::Index>(ages.size()));
    return out;
}

json classification_json(const ClassificationReport& report, const LabeledDataset& dataset, const std::string& task) {
    json j;
    j["task"] = task;
    j["classes"] = report.classes;
    j["folds"] = report.folds;
    j["c"] = report.c;
    j["seed"] = report.seed;
    j["n"] = dataset.size();
    j["fold_accuracies"] = report.fold_accuracies;
    j["mean_accuracy"] = report.mean_accuracy;
    j["std_accuracy"] = report.std_accuracy;
    j["confusion"] = {{report.confusion[0][0], report.confusion[0][1]},
                      {report.confusion[1][0], report.confusion[1][1]}};
    json rows = json::array();
    for (Eigen::Index i = 0; i < dataset.size(); ++i) {
        const auto r = static_cast<std::size_t>(i);
        rows.push_back({{"subject_id", dataset.subject_ids.empty() ? std::to_string(i) : dataset.subject_ids[r]},
                        {"fold", report.fold_assignment[r]},
                        {"true", dataset.labels[r]},
                        {"predicted", report.classes[static_cast<std::size_t>(report.predictions[r])]}});
    }
    j["predictions"] = std::move(rows);
    return j;
}

ClassificationReport classification_from_json(const json& report) {
    const json& j = report.contains("result") ? report.at("result") : report;
    ClassificationReport out;
    try {
        out.classes = j.at("classes").get<std::vector<std::string>>();
        out.fold_accuracies = j.at("fold_accuracies").get<std::vector<double>>();
        out.mean_accuracy = j.at("mean_accuracy").get<double>();
        out.std_accuracy = j.value("std_accuracy", 0.0);
        out.folds = j.at("folds").get<int>();
        out.c = j.value("c", 0.0);
        out.seed = j.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw FormatError(std::string("classification report: ") + e.what());
    }
    return out;
}

json regression_json(const RegressionReport& report) {
    json j;
    j["n"] = report.truth.size();
    j["subject_ids"] = report.subject_ids;
    j["truth"] = to_vector(report.truth);
    j["predictions"] = to_vector(report.predictions);
    j["pearson_r"] = report.pearson_r;
    j["mae"] = report.mae;
    j["ncomp_requested"] = report.ncomp_requested;
    j["ncomp_used"] = report.ncomp_used;
    return j;
}

json comparison_json(const ClassificationReport& a, const ClassificationReport& b, const PairedTestResult& test) {
    json j;
    j["fold_accuracies_a"] = a.fold_accuracies;
    j["fold_accuracies_b"] = b.fold_accuracies;
    j["mean_accuracy_a"] = a.mean_accuracy;
    j["mean_accuracy_b"] = b.mean_accuracy;
    j["mean_difference"] = test.mean_difference;
    j["t_statistic"] = test.t_statistic;
    j["dof"] = test.dof;
    j["p_value"] = test.p_value;
    j["degenerate"] = test.degenerate;
    j["test"] = "two-sided paired t-test over common cross-validation folds";
    return j;
}

void write_scatter_csv(const RegressionReport& report, const fs::path& path) {
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "subject_id,true_age,predicted_age\n");
    for (Eigen::Index i = 0; i < report.truth.size(); ++i) {
        const auto r = static_cast<std::size_t>(i);
        fmt::format_to(std::back_inserter(buf), "{},{},{}\n",
                       csv_field(r < report.subject_ids.size() ? report.subject_ids[r] : std::to_string(i)),
                       format_double(report.truth(i)), format_double(report.predictions(i)));
    }
    write_text_atomic(path, fmt::to_string(buf));
}

void write_distance_map_csv(const Eigen::VectorXd& distances, const fs::path& path) {
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "vertex,distance\n");
    for (Eigen::Index i = 0; i < distances.size(); ++i)
        fmt::format_to(std::back_inserter(buf), "{},{}\n", i, format_double(distances(i)));
    write_text_atomic(path, fmt::to_string(buf));
}

// ---------------------------------------------------------------------------
// Synthetic cohorts

CohortSpec CohortSpec::from_json(const json& j) {
    if (!j.is_object()) throw FormatError("cohort: expected a JSON object");
    CohortSpec spec;
    auto read = [&](const json& obj, const char* key, auto& field) {
        if (obj.contains(key)) field = get_checked<std::decay_t<decltype(field)>>(obj, key, "cohort");
    };
    read(j, "subdivision", spec.subdivision);
    read(j, "bump_width", spec.bump_width);
    read(j, "seed", spec.seed);
    if (j.contains("age")) {
        const json& age = j.at("age");
        read(age, "intercept", spec.age_intercept);
        read(age, "slope", spec.age_slope);
        read(age, "noise_sd", spec.age_noise);
    }
    if (!j.contains("classes") || !j.at("classes").is_array() || j.at("classes").empty())
        throw FormatError("cohort: 'classes' must be a non-empty array");
    for (const auto& cj : j.at("classes")) {
        CohortClass c;
        c.diagnosis = get_checked<std::string>(cj, "diagnosis", "cohort");
        c.count = get_checked<int>(cj, "count", "cohort");
        if (cj.contains("amplitude")) {
            c.amplitude_min = c.amplitude_max = get_checked<double>(cj, "amplitude", "cohort");
        } else {
            const auto range = get_checked<std::array<double, 2>>(cj, "amplitude_range", "cohort");
            c.amplitude_min = range[0];
            c.amplitude_max = range[1];
        }
        if (cj.contains("bumps")) {
            c.bumps_min = c.bumps_max = get_checked<int>(cj, "bumps", "cohort");
        } else {
            const auto range = get_checked<std::array<int, 2>>(cj, "bumps_range", "cohort");
            c.bumps_min = range[0];
            c.bumps_max = range[1];
        }
        if (c.diagnosis != "AD" && c.diagnosis != "MCI" && c.diagnosis != "NC" && c.diagnosis != "NA")
            throw FormatError("cohort: unknown diagnosis '" + c.diagnosis + "'");
        if (c.count < 1) throw DomainError("cohort: class count must be positive");
        if (!(c.amplitude_min >= 0.0 && c.amplitude_max >= c.amplitude_min && c.amplitude_max < 1.0))
            throw DomainError("cohort: amplitude range must satisfy 0 <= min <= max < 1");
        if (c.bumps_min < 1 || c.bumps_max < c.bumps_min) throw DomainError("cohort: bad bump-count range");
        spec.classes.push_back(c);
    }
    if (spec.subdivision < 0 || spec.subdivision > kMaxSubdivision)
        throw DomainError(fmt::format("cohort: subdivision must lie in [0, {}]", kMaxSubdivision));
    if (!(spec.bump_width > 0.0)) throw DomainError("cohort: bump_width must be positive");
    if (!(spec.age_noise >= 0.0)) throw DomainError("cohort: age noise must be nonnegative");
    return spec;
}

CohortSpec CohortSpec::load(const fs::path& path) {
    try {
        return from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

json CohortSpec::to_json() const {
    json classes_json = json::array();
    for (const auto& c : classes)
        classes_json.push_back({{"diagnosis", c.diagnosis},
                                {"count", c.count},
                                {"amplitude_range", {c.amplitude_min, c.amplitude_max}},
                                {"bumps_range", {c.bumps_min, c.bumps_max}}});
    return {{"subdivision", subdivision},
            {"bump_width", bump_width},
            {"seed", seed},
            {"classes", classes_json},
            {"age", {{"intercept", age_intercept}, {"slope", age_slope}, {"noise_sd", age_noise}}}};
}

std::vector<CohortSubject> plan_cohort(const CohortSpec& spec) {
    std::vector<CohortSubject> subjects;
    int total = 0;
    for (const auto& c : spec.classes) total += c.count;
    const int width = std::max(3, static_cast<int>(std::to_string(total).size()));
    std::uint64_t index = 0;
    for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
        const auto& c = spec.classes[ci];
        for (int i = 0; i < c.count; ++i, ++index) {
            // Each subject owns a generator seeded from (cohort seed, subject index),
            // so adding a class does not reshuffle the others.
            std::mt19937_64 rng(mix_seed(spec.seed ^ mix_seed(index)));
            CohortSubject s;
            s.subject_id = fmt::format("sub{:0{}}", index + 1, width);
            s.diagnosis = c.diagnosis;
            s.amplitude = c.amplitude_min == c.amplitude_max
                              ? c.amplitude_min
                              : std::uniform_real_distribution<double>(c.amplitude_min, c.amplitude_max)(rng);
            s.n_bumps = std::uniform_int_distribution<int>(c.bumps_min, c.bumps_max)(rng);
            s.age = spec.age_intercept + spec.age_slope * s.amplitude +
                    (spec.age_noise > 0.0 ? std::normal_distribution<double>(0.0, spec.age_noise)(rng) : 0.0);
            s.sex = std::bernoulli_distribution(0.5)(rng) ? "M" : "F";
            for (auto& seed : s.seeds) seed = rng();
            subjects.push_back(std::move(s));
        }
    }
    return subjects;
}

Manifest write_cohort(const CohortSpec& spec, const fs::path& out_dir, int jobs) {
    const auto subjects = plan_cohort(spec);
    const fs::path mesh_dir = out_dir / "meshes";
    fs::create_directories(mesh_dir);
    Manifest manifest;
    for (const auto& s : subjects) {
        ManifestRow row;
        row.subject_id = s.subject_id;
        for (std::size_t t = 0; t < 4; ++t) row.surfaces[t] = mesh_dir / (s.subject_id + "_" + surface_tags()[t] + ".off");
        row.diagnosis = s.diagnosis;
        row.age = s.age;
        row.sex = s.sex;
        manifest.rows.push_back(std::move(row));
    }
    parallel_for(4 * subjects.size(), jobs, [&](std::size_t idx) {
        const auto& s = subjects[idx / 4];
        SynthSpec synth;
        synth.family = SynthFamily::bump_sphere;
        synth.subdivision = spec.subdivision;
        synth.amplitude = s.amplitude;
        synth.n_bumps = s.n_bumps;
        synth.bump_width = spec.bump_width;
        synth.seed = s.seeds[idx % 4];
        write_off(bump_sphere(synth), manifest.rows[idx / 4].surfaces[idx % 4]);
    });
    write_manifest(manifest, out_dir / "manifest.csv", out_dir);
    write_text_atomic(out_dir / "cohort.json", spec.to_json().dump(2) + "\n");
    return manifest;
}

}  // namespace wbrain
