#include "ssanet/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ssanet {

namespace {

static_assert(sizeof(float) == 4);

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    return v;
}

[[noreturn]] void fail(const std::string& what, std::size_t offset) {
    throw FormatError("vtf: " + what + " at byte offset " + std::to_string(offset));
}

} // namespace

std::vector<std::uint8_t> vtf_encode(const Tensor& t) {
    std::vector<std::uint8_t> out{'V', 'T', 'F', '1', kVtfFloat32, static_cast<std::uint8_t>(t.rank())};
    out.reserve(6 + 8 * t.rank() + 4 * t.size());
    for (auto e : t.shape().extents()) put_u64(out, e);
    for (real v : t.data()) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return out;
}

Tensor vtf_decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "VTF1", 4) != 0) fail("bad magic", 0);
    if (bytes.size() < 6) fail("truncated header", bytes.size());
    if (bytes[4] != kVtfFloat32) fail("unsupported dtype code " + std::to_string(bytes[4]), 4);
    const std::size_t rank = bytes[5];
    if (rank > kMaxRank) fail("rank " + std::to_string(rank) + " exceeds 5", 5);
    std::size_t offset = 6;
    if (bytes.size() < offset + 8 * rank) fail("truncated header", bytes.size());
    std::vector<std::size_t> extents;
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < rank; ++i, offset += 8) {
        const std::uint64_t e = get_u64(bytes, offset);
        if (e == 0 || e > (std::uint64_t{1} << 40)) fail("invalid extent " + std::to_string(e), offset);
        count *= e;
        if (count > (std::uint64_t{1} << 40)) fail("tensor too large", offset);
        extents.push_back(static_cast<std::size_t>(e));
    }
    const std::size_t expected = static_cast<std::size_t>(count) * 4;
    const std::size_t available = bytes.size() - offset;
    if (available < expected) {
        fail("truncated payload (expected " + std::to_string(expected) + " bytes, found " +
                 std::to_string(available) + ")",
             bytes.size());
    }
    if (available > expected) fail("trailing bytes after payload", offset + expected);
    std::vector<real> data(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < data.size(); ++i, offset += 4) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
        data[i] = static_cast<real>(std::bit_cast<float>(bits));
    }
    return Tensor(Shape(std::move(extents)), std::move(data));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void vtf_write(const std::filesystem::path& path, const Tensor& t) { write_file_atomic(path, vtf_encode(t)); }

Tensor vtf_read(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return vtf_decode(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::filesystem::path Manifest::resolve(const ManifestRecord& r) const {
    const std::filesystem::path p(r.path);
    return p.is_absolute() ? p : base_dir / p;
}

std::vector<int> Manifest::labels() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("path") || !j.contains("label") || !j.contains("subject_id")) {
            throw FormatError(where + ": record needs path, label and subject_id");
        }
        for (const auto& [key, _] : j.items()) {
            if (key != "path" && key != "label" && key != "subject_id") {
                throw FormatError(where + ": unknown key '" + key + "'");
            }
        }
        ManifestRecord r;
        try {
            r.path = j.at("path").get<std::string>();
            r.label = j.at("label").get<int>();
            r.subject_id = j.at("subject_id").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
        if (r.label != 0 && r.label != 1) throw FormatError(where + ": label must be 0 or 1");
        m.records.push_back(std::move(r));
    }
    return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::string text;
    for (const auto& r : manifest.records) {
        nlohmann::ordered_json j;
        j["path"] = r.path;
        j["label"] = r.label;
        j["subject_id"] = r.subject_id;
        text += j.dump() + "\n";
    }
    write_file_atomic(path, text);
}

} // namespace ssanet
