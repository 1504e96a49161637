#include "wbrain/store.hpp"

#include <atomic>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <unistd.h>

#include "wbrain/errors.hpp"

namespace wbrain {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSgwsMagic = "SGWS1";
constexpr std::string_view kDictMagic = "WBDICT1";

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U raw = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((raw >> (8 * i)) & 0xFF));
}

class LittleEndianReader {
public:
    LittleEndianReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    void expect_magic(std::string_view magic) {
        if (bytes_.substr(0, magic.size()) != magic)
            throw FormatError(source_ + ": missing magic '" + std::string(magic) + "'");
        pos_ = magic.size();
    }

    template <typename T>
    T read() {
        using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
        if (pos_ + sizeof(T) > bytes_.size()) throw FormatError(source_ + ": truncated file");
        U raw = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            raw |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return std::bit_cast<T>(raw);
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string_view bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_atomic(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // Unique per call so concurrent writers of the same entry never share a temporary.
    static std::atomic<unsigned long> counter{0};
    fs::path tmp = path;
    tmp += fmt::format(".tmp.{}.{}", static_cast<long>(::getpid()), counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_sgws_store(const SgwsMatrix& sgws, const fs::path& path) {
    std::string out(kSgwsMagic);
    put_le(out, static_cast<std::int32_t>(sgws.dimension()));
    put_le(out, static_cast<std::int32_t>(sgws.num_vertices()));
    for (Eigen::Index r = 0; r < sgws.dimension(); ++r)
        for (Eigen::Index c = 0; c < sgws.num_vertices(); ++c) put_le(out, sgws.values(r, c));
    write_text_atomic(path, out);
}

SgwsMatrix read_sgws_store(const fs::path& path) {
    const std::string bytes = read_text(path);
    LittleEndianReader reader(bytes, path.string());
    reader.expect_magic(kSgwsMagic);
    const auto p = reader.read<std::int32_t>();
    const auto m = reader.read<std::int32_t>();
    if (p < 2 || m < 0) throw FormatError(path.string() + ": invalid signature dimensions");
    if (reader.remaining() != static_cast<std::size_t>(p) * static_cast<std::size_t>(m) * 8)
        throw FormatError(path.string() + ": payload size does not match header");
    SgwsMatrix out;
    out.values.resize(p, m);
    for (std::int32_t r = 0; r < p; ++r)
        for (std::int32_t c = 0; c < m; ++c) out.values(r, c) = reader.read<double>();
    out.level = p - 1;
    out.source_label = path.filename().string();
    return out;
}

void write_sgws_csv(const SgwsMatrix& sgws, const fs::path& path) {
    fmt::memory_buffer buf;
    for (Eigen::Index r = 0; r < sgws.dimension(); ++r) {
        for (Eigen::Index c = 0; c < sgws.num_vertices(); ++c)
            fmt::format_to(std::back_inserter(buf), "{}{}", c ? "," : "", format_double(sgws.values(r, c)));
        buf.push_back('\n');
    }
    write_text_atomic(path, fmt::to_string(buf));
}

void write_dictionary(const Dictionary& dictionary, const fs::path& path) {
    std::string out(kDictMagic);
    put_le(out, static_cast<std::int32_t>(dictionary.dimension()));
    put_le(out, static_cast<std::int32_t>(dictionary.size()));
    put_le(out, dictionary.seed);
    put_le(out, static_cast<std::int32_t>(dictionary.iterations));
    put_le(out, dictionary.inertia);
    put_le(out, dictionary.mean_nearest_distance);
    for (Eigen::Index r = 0; r < dictionary.dimension(); ++r)
        for (Eigen::Index c = 0; c < dictionary.size(); ++c) put_le(out, dictionary.atoms(r, c));
    write_text_atomic(path, out);
}

Dictionary read_dictionary(const fs::path& path) {
    const std::string bytes = read_text(path);
    LittleEndianReader reader(bytes, path.string());
    reader.expect_magic(kDictMagic);
    const auto p = reader.read<std::int32_t>();
    const auto k = reader.read<std::int32_t>();
    if (p < 1 || k < 1) throw FormatError(path.string() + ": invalid dictionary dimensions");
    Dictionary out;
    out.seed = reader.read<std::uint64_t>();
    out.iterations = reader.read<std::int32_t>();
    out.inertia = reader.read<double>();
    out.mean_nearest_distance = reader.read<double>();
    if (reader.remaining() != static_cast<std::size_t>(p) * static_cast<std::size_t>(k) * 8)
        throw FormatError(path.string() + ": payload size does not match header");
    out.atoms.resize(p, k);
    for (std::int32_t r = 0; r < p; ++r)
        for (std::int32_t c = 0; c < k; ++c) out.atoms(r, c) = reader.read<double>();
    return out;
}

std::string format_double(double value) {
    return fmt::format("{}", value);
}

std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

CsvTable parse_csv(std::string_view text) {
    CsvTable rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            field_started = false;
            if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
            row.clear();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw FormatError("unterminated quoted CSV field");
    if (field_started || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

CsvTable read_csv(const fs::path& path) {
    try {
        return parse_csv(read_text(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_feature_table(const FeatureTable& table, const fs::path& path) {
    if (static_cast<Eigen::Index>(table.subject_ids.size()) != table.features.rows())
        throw DimensionError("feature table has mismatched subject ids");
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "subject_id");
    for (Eigen::Index j = 0; j < table.features.cols(); ++j) fmt::format_to(std::back_inserter(buf), ",feat_{}", j);
    buf.push_back('\n');
    for (Eigen::Index i = 0; i < table.features.rows(); ++i) {
        fmt::format_to(std::back_inserter(buf), "{}", csv_field(table.subject_ids[static_cast<std::size_t>(i)]));
        for (Eigen::Index j = 0; j < table.features.cols(); ++j)
            fmt::format_to(std::back_inserter(buf), ",{}", format_double(table.features(i, j)));
        buf.push_back('\n');
    }
    write_text_atomic(path, fmt::to_string(buf));
}

FeatureTable read_feature_table(const fs::path& path) {
    const CsvTable rows = read_csv(path);
    if (rows.empty() || rows[0].empty() || rows[0][0] != "subject_id")
        throw FormatError(path.string() + ": feature table must start with a 'subject_id' header");
    const std::size_t d = rows[0].size() - 1;
    FeatureTable table;
    table.features.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(d));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != d + 1)
            throw FormatError(path.string() + ": row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                              " fields, expected " + std::to_string(d + 1));
        table.subject_ids.push_back(rows[i][0]);
        for (std::size_t j = 0; j < d; ++j) {
            const std::string& field = rows[i][j + 1];
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc() || ptr != field.data() + field.size())
                throw FormatError(path.string() + ": malformed number '" + field + "'");
            table.features(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return table;
}

std::string blake2b_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_blake2b512(), nullptr) != 1)
        throw IoError("BLAKE2b digest failed");
    std::string hex;
    hex.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string hash_file(const fs::path& path) {
    return blake2b_hex(read_text(path));
}

}  // namespace wbrain
