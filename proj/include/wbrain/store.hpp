// On-disk artifacts: signature stores, dictionaries, feature tables, CSV, and
// content hashing.
//
// Signature store (little-endian):
//   bytes 0..4   magic "SGWS1"
//   int32        p (rows)
//   int32        m (columns, one per vertex)
//   float64[p*m] row-major payload
//
// Dictionary file (little-endian):
//   bytes 0..6   magic "WBDICT1"
//   int32 p, int32 k, uint64 seed, int32 iterations,
//   float64 inertia, float64 mean nearest-atom distance,
//   float64[p*k] row-major atoms
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "wbrain/bof.hpp"
#include "wbrain/sgwt.hpp"

namespace wbrain {

void write_sgws_store(const SgwsMatrix& sgws, const std::filesystem::path& path);
SgwsMatrix read_sgws_store(const std::filesystem::path& path);
void write_sgws_csv(const SgwsMatrix& sgws, const std::filesystem::path& path);

void write_dictionary(const Dictionary& dictionary, const std::filesystem::path& path);
Dictionary read_dictionary(const std::filesystem::path& path);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

// RFC-4180 field quoting, applied only when needed.
std::string csv_field(std::string_view text);

using CsvTable = std::vector<std::vector<std::string>>;
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

struct FeatureTable {
    std::vector<std::string> subject_ids;
    Eigen::MatrixXd features;  // n x d
};

// Header `subject_id,feat_0,...,feat_{d-1}`, one row per subject.
void write_feature_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_table(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
// Writes through a temporary file and renames into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

// Hex-encoded BLAKE2b-512 digest.
std::string blake2b_hex(std::string_view bytes);
std::string hash_file(const std::filesystem::path& path);

}  // namespace wbrain
