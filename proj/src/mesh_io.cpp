#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <fmt/os.h>

#include "wbrain/errors.hpp"
#include "wbrain/mesh.hpp"

namespace wbrain {

namespace fs = std::filesystem;

namespace {

constexpr std::array<unsigned char, 3> kFreeSurferMagic{0xFF, 0xFF, 0xFE};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return bytes;
}

// Line reader over an in-memory ASCII file; strips '#' comments and skips blank lines.
class LineReader {
public:
    LineReader(std::string_view text, std::string source)
        : text_(text), source_(std::move(source)) {}

    bool next(std::string_view& line) {
        while (pos_ < text_.size()) {
            auto end = text_.find('\n', pos_);
            if (end == std::string_view::npos) end = text_.size();
            std::string_view raw = text_.substr(pos_, end - pos_);
            pos_ = end + 1;
            ++line_no_;
            if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
            while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.back())))
                raw.remove_suffix(1);
            while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.front())))
                raw.remove_prefix(1);
            if (!raw.empty()) {
                line = raw;
                return true;
            }
        }
        return false;
    }

    std::string_view require(const char* what) {
        std::string_view line;
        if (!next(line)) fail(std::string("unexpected end of file, expected ") + what);
        return line;
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw FormatError(source_ + ":" + std::to_string(line_no_) + ": " + message);
    }

private:
    std::string_view text_;
    std::string source_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view token, T& value) {
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    return ec == std::errc() && ptr == token.data() + token.size();
}

template <typename T>
T number_or_fail(const LineReader& reader, std::string_view token, const char* what) {
    T value{};
    if (!parse_number(token, value)) reader.fail(std::string("malformed ") + what + " '" + std::string(token) + "'");
    return value;
}

void check_indices(const TriangleMesh& mesh, const std::string& source) {
    const int m = static_cast<int>(mesh.num_vertices());
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t)
        for (int c = 0; c < 3; ++c) {
            const int v = mesh.triangles(t, c);
            if (v < 0 || v >= m)
                throw FormatError(source + ": triangle " + std::to_string(t) + " references vertex " +
                                  std::to_string(v) + " outside [0, " + std::to_string(m) + ")");
        }
    if (!mesh.vertices.allFinite()) throw FormatError(source + ": non-finite vertex coordinate");
}

TriangleMesh parse_off(std::string_view text, const std::string& source) {
    LineReader reader(text, source);
    auto header = split_ws(reader.require("OFF header"));
    if (header.empty() || header[0] != "OFF") reader.fail("missing 'OFF' header");
    header.erase(header.begin());
    if (header.empty()) header = split_ws(reader.require("counts line"));
    if (header.size() < 2) reader.fail("counts line must hold vertex and face counts");

    const long m = number_or_fail<long>(reader, header[0], "vertex count");
    const long g = number_or_fail<long>(reader, header[1], "face count");
    if (m < 0 || g < 0) reader.fail("negative element count");

    TriangleMesh mesh;
    mesh.vertices.resize(m, 3);
    mesh.triangles.resize(g, 3);
    for (long v = 0; v < m; ++v) {
        const auto tok = split_ws(reader.require("vertex line"));
        if (tok.size() < 3) reader.fail("vertex line needs 3 coordinates");
        for (int c = 0; c < 3; ++c) mesh.vertices(v, c) = number_or_fail<double>(reader, tok[static_cast<std::size_t>(c)], "coordinate");
    }
    for (long f = 0; f < g; ++f) {
        const auto tok = split_ws(reader.require("face line"));
        if (tok.empty() || number_or_fail<long>(reader, tok[0], "face size") != 3)
            reader.fail("only triangular faces are supported");
        if (tok.size() < 4) reader.fail("face line needs 3 indices");
        for (int c = 0; c < 3; ++c)
            mesh.triangles(f, c) = number_or_fail<int>(reader, tok[static_cast<std::size_t>(c) + 1], "vertex index");
    }
    check_indices(mesh, source);
    return mesh;
}

TriangleMesh parse_ply(std::string_view text, const std::string& source) {
    LineReader reader(text, source);
    if (reader.require("ply magic") != "ply") reader.fail("missing 'ply' magic");

    struct Element {
        std::string name;
        long count = 0;
        std::vector<std::string> scalar_props;
        bool has_list = false;
    };
    std::vector<Element> elements;
    bool ascii = false;
    for (;;) {
        const auto tok = split_ws(reader.require("header line"));
        if (tok[0] == "end_header") break;
        if (tok[0] == "format") {
            if (tok.size() < 2) reader.fail("malformed format line");
            if (tok[1] != "ascii") throw FormatError(source + ": only ASCII PLY is supported");
            ascii = true;
        } else if (tok[0] == "element") {
            if (tok.size() < 3) reader.fail("malformed element line");
            elements.push_back({std::string(tok[1]), number_or_fail<long>(reader, tok[2], "element count"), {}, false});
        } else if (tok[0] == "property") {
            if (elements.empty()) reader.fail("property before element");
            if (tok.size() >= 2 && tok[1] == "list") {
                if (tok.size() < 5) reader.fail("malformed list property");
                elements.back().has_list = true;
            } else {
                if (tok.size() < 3) reader.fail("malformed property");
                elements.back().scalar_props.emplace_back(tok[2]);
            }
        } else if (tok[0] != "comment" && tok[0] != "obj_info") {
            reader.fail("unknown header keyword '" + std::string(tok[0]) + "'");
        }
    }
    if (!ascii) reader.fail("missing format line");

    TriangleMesh mesh;
    bool have_vertices = false;
    bool have_faces = false;
    for (const auto& element : elements) {
        if (element.name == "vertex") {
            auto col = [&](const char* name) {
                auto it = std::find(element.scalar_props.begin(), element.scalar_props.end(), name);
                if (it == element.scalar_props.end()) reader.fail(std::string("vertex element lacks '") + name + "'");
                return static_cast<std::size_t>(it - element.scalar_props.begin());
            };
            const std::array<std::size_t, 3> xyz{col("x"), col("y"), col("z")};
            mesh.vertices.resize(element.count, 3);
            for (long v = 0; v < element.count; ++v) {
                const auto tok = split_ws(reader.require("vertex line"));
                if (tok.size() < element.scalar_props.size()) reader.fail("short vertex line");
                for (int c = 0; c < 3; ++c)
                    mesh.vertices(v, c) = number_or_fail<double>(reader, tok[xyz[static_cast<std::size_t>(c)]], "coordinate");
            }
            have_vertices = true;
        } else if (element.name == "face") {
            if (!element.has_list) reader.fail("face element lacks an index list");
            mesh.triangles.resize(element.count, 3);
            for (long f = 0; f < element.count; ++f) {
                const auto tok = split_ws(reader.require("face line"));
                if (tok.empty() || number_or_fail<long>(reader, tok[0], "face size") != 3)
                    reader.fail("only triangular faces are supported");
                if (tok.size() < 4) reader.fail("face line needs 3 indices");
                for (int c = 0; c < 3; ++c)
                    mesh.triangles(f, c) = number_or_fail<int>(reader, tok[static_cast<std::size_t>(c) + 1], "vertex index");
            }
            have_faces = true;
        } else {
            for (long i = 0; i < element.count; ++i) reader.require("element line");
        }
    }
    if (!have_vertices || !have_faces) throw FormatError(source + ": PLY must define vertex and face elements");
    check_indices(mesh, source);
    return mesh;
}

class BigEndianReader {
public:
    BigEndianReader(std::string_view bytes, std::string source)
        : bytes_(bytes), source_(std::move(source)) {}

    template <typename T>
    T read() {
        static_assert(sizeof(T) == 4);
        if (pos_ + 4 > bytes_.size()) throw FormatError(source_ + ": truncated FreeSurfer surface");
        std::uint32_t raw = 0;
        for (int i = 0; i < 4; ++i)
            raw = (raw << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return std::bit_cast<T>(raw);
    }

    std::size_t pos() const { return pos_; }
    void seek(std::size_t pos) { pos_ = pos; }

private:
    std::string_view bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

TriangleMesh parse_freesurfer(std::string_view bytes, const std::string& source) {
    if (bytes.size() < 3 || !std::equal(kFreeSurferMagic.begin(), kFreeSurferMagic.end(),
                                        reinterpret_cast<const unsigned char*>(bytes.data())))
        throw FormatError(source + ": missing FreeSurfer triangle magic FF FF FE");
    const auto end_of_creator = bytes.find("\n\n", 3);
    if (end_of_creator == std::string_view::npos)
        throw FormatError(source + ": unterminated creator string");

    BigEndianReader reader(bytes, source);
    reader.seek(end_of_creator + 2);
    const std::int32_t m = reader.read<std::int32_t>();
    const std::int32_t g = reader.read<std::int32_t>();
    if (m < 0 || g < 0) throw FormatError(source + ": negative element count");
    const std::size_t needed = static_cast<std::size_t>(m) * 12 + static_cast<std::size_t>(g) * 12;
    if (bytes.size() - reader.pos() < needed) throw FormatError(source + ": truncated FreeSurfer surface");

    TriangleMesh mesh;
    mesh.vertices.resize(m, 3);
    mesh.triangles.resize(g, 3);
    for (std::int32_t v = 0; v < m; ++v)
        for (int c = 0; c < 3; ++c) mesh.vertices(v, c) = static_cast<double>(reader.read<float>());
    for (std::int32_t f = 0; f < g; ++f)
        for (int c = 0; c < 3; ++c) mesh.triangles(f, c) = reader.read<std::int32_t>();
    check_indices(mesh, source);
    return mesh;
}

void put_be32(std::string& out, std::uint32_t value) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((value >> shift) & 0xFF));
}

void write_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string lowercase_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

MeshFormat parse_format(const std::string& name) {
    if (name == "off") return MeshFormat::off;
    if (name == "ply" || name == "ply-ascii") return MeshFormat::ply_ascii;
    if (name == "freesurfer" || name == "freesurfer-binary") return MeshFormat::freesurfer_binary;
    if (name == "auto") return MeshFormat::auto_detect;
    throw DomainError("unknown mesh format '" + name + "'");
}

MeshFormat detect_format(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    char head[4] = {};
    in.read(head, 4);
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got >= 3 && std::memcmp(head, kFreeSurferMagic.data(), 3) == 0) return MeshFormat::freesurfer_binary;
    if (got >= 3 && std::memcmp(head, "OFF", 3) == 0) return MeshFormat::off;
    if (got >= 3 && std::memcmp(head, "ply", 3) == 0) return MeshFormat::ply_ascii;

    const auto ext = lowercase_extension(path);
    if (ext == ".off") return MeshFormat::off;
    if (ext == ".ply") return MeshFormat::ply_ascii;
    // FreeSurfer surfaces carry names like lh.white / rh.pial.
    if (ext == ".white" || ext == ".pial" || ext == ".inflated" || ext == ".orig" || ext == ".smoothwm")
        return MeshFormat::freesurfer_binary;
    throw FormatError("cannot determine mesh format of '" + path.string() + "'");
}

TriangleMesh read_mesh(const fs::path& path, MeshFormat format) {
    if (format == MeshFormat::auto_detect) format = detect_format(path);
    const std::string bytes = read_file(path);
    const std::string source = path.string();
    TriangleMesh mesh;
    switch (format) {
        case MeshFormat::off: mesh = parse_off(bytes, source); break;
        case MeshFormat::ply_ascii: mesh = parse_ply(bytes, source); break;
        case MeshFormat::freesurfer_binary: mesh = parse_freesurfer(bytes, source); break;
        case MeshFormat::auto_detect: break;
    }
    mesh.label = path.filename().string();
    return mesh;
}

TriangleMesh load_mesh(const fs::path& path, MeshFormat format, ValidationOptions options) {
    return validate_mesh(read_mesh(path, format), options).mesh;
}

void write_off(const TriangleMesh& mesh, const fs::path& path) {
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "OFF\n{} {} 0\n", mesh.num_vertices(), mesh.num_triangles());
    for (Eigen::Index v = 0; v < mesh.num_vertices(); ++v)
        fmt::format_to(std::back_inserter(buf), "{} {} {}\n", mesh.vertices(v, 0), mesh.vertices(v, 1), mesh.vertices(v, 2));
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t)
        fmt::format_to(std::back_inserter(buf), "3 {} {} {}\n", mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2));
    write_bytes(path, fmt::to_string(buf));
}

void write_ply_ascii(const TriangleMesh& mesh, const fs::path& path) {
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf),
                   "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\n"
                   "property double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
                   mesh.num_vertices(), mesh.num_triangles());
    for (Eigen::Index v = 0; v < mesh.num_vertices(); ++v)
        fmt::format_to(std::back_inserter(buf), "{} {} {}\n", mesh.vertices(v, 0), mesh.vertices(v, 1), mesh.vertices(v, 2));
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t)
        fmt::format_to(std::back_inserter(buf), "3 {} {} {}\n", mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2));
    write_bytes(path, fmt::to_string(buf));
}

void write_freesurfer(const TriangleMesh& mesh, const fs::path& path, const std::string& creator) {
    if (creator.find("\n\n") != std::string::npos) throw DomainError("creator string may not contain a blank line");
    std::string out(kFreeSurferMagic.begin(), kFreeSurferMagic.end());
    out += creator;
    out += "\n\n";
    put_be32(out, static_cast<std::uint32_t>(mesh.num_vertices()));
    put_be32(out, static_cast<std::uint32_t>(mesh.num_triangles()));
    for (Eigen::Index v = 0; v < mesh.num_vertices(); ++v)
        for (int c = 0; c < 3; ++c) put_be32(out, std::bit_cast<std::uint32_t>(static_cast<float>(mesh.vertices(v, c))));
    for (Eigen::Index t = 0; t < mesh.num_triangles(); ++t)
        for (int c = 0; c < 3; ++c) put_be32(out, static_cast<std::uint32_t>(mesh.triangles(t, c)));
    write_bytes(path, out);
}

void write_mesh(const TriangleMesh& mesh, const fs::path& path, MeshFormat format) {
    if (format == MeshFormat::auto_detect) {
        const auto ext = lowercase_extension(path);
        format = ext == ".ply" ? MeshFormat::ply_ascii
                 : ext == ".off" ? MeshFormat::off
                                 : MeshFormat::freesurfer_binary;
    }
    switch (format) {
        case MeshFormat::off: write_off(mesh, path); break;
        case MeshFormat::ply_ascii: write_ply_ascii(mesh, path); break;
        default: write_freesurfer(mesh, path); break;
    }
}

}  // namespace wbrain
