#include "kt/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace kt::enc {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'A', '1'};
constexpr std::size_t kPreamble = 16;

std::uint64_t align8(std::uint64_t n) {
    return (n + 7) & ~std::uint64_t{7};
}

[[noreturn]] void fail(ArchiveErrorKind kind, const std::filesystem::path& path, const std::string& what) {
    throw ArchiveError(kind, path.string() + ": " + what);
}

template <typename U>
U read_le(const unsigned char* p) {
    U v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

}  // namespace

void save_archive(const ModelParams& params, const ModelConfig& cfg, const std::filesystem::path& path) {
    validate_params(params, cfg);

    nlohmann::ordered_json header;
    header["config"] = cfg.to_json();
    header["tensors"] = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    const auto layout = parameter_layout(cfg);
    for (const auto& [name, shape] : layout) {
        header["tensors"].push_back({{"name", name}, {"dtype", "f32"}, {"shape", shape}, {"offset", offset}});
        offset = align8(offset + num::numel(shape) * sizeof(float));
    }
    const std::string text = header.dump();
    const std::uint64_t header_len = text.size();
    const std::uint64_t data_start = align8(kPreamble + header_len);

    std::vector<char> buf(data_start + offset, 0);
    std::memcpy(buf.data(), kMagic, 4);
    std::memcpy(buf.data() + 4, &kArchiveVersion, 4);
    std::memcpy(buf.data() + 8, &header_len, 8);
    std::memcpy(buf.data() + kPreamble, text.data(), text.size());
    offset = 0;
    for (const auto& [name, shape] : layout) {
        const auto& t = params.at(name);
        if (t.size()) std::memcpy(buf.data() + data_start + offset, t.ptr(), t.size() * sizeof(float));
        offset = align8(offset + t.size() * sizeof(float));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ArchiveErrorKind::io, path, "cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ArchiveErrorKind::io, path, "write failed");
}

Archive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ArchiveErrorKind::io, path, "cannot open");
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 4) fail(ArchiveErrorKind::truncated, path, "truncated: file shorter than magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) fail(ArchiveErrorKind::bad_magic, path, "bad magic");
    if (buf.size() < kPreamble) fail(ArchiveErrorKind::truncated, path, "truncated: incomplete preamble");
    const auto version = read_le<std::uint32_t>(buf.data() + 4);
    if (version != kArchiveVersion)
        fail(ArchiveErrorKind::version_mismatch, path,
             "version mismatch: file has " + std::to_string(version) + ", reader supports " + std::to_string(kArchiveVersion));
    const auto header_len = read_le<std::uint64_t>(buf.data() + 8);
    if (header_len > buf.size() - kPreamble) fail(ArchiveErrorKind::truncated, path, "truncated: header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.begin() + kPreamble, buf.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
    } catch (const nlohmann::json::exception& e) {
        fail(ArchiveErrorKind::inconsistent, path, std::string("shape/offset inconsistency: unreadable header: ") + e.what());
    }

    Archive ar;
    try {
        ar.config = ModelConfig::from_json(header.at("config"));
    } catch (const nlohmann::json::exception& e) {
        fail(ArchiveErrorKind::inconsistent, path, std::string("shape/offset inconsistency: ") + e.what());
    } catch (const DataError& e) {
        fail(ArchiveErrorKind::inconsistent, path, std::string("shape/offset inconsistency: ") + e.what());
    }

    const std::uint64_t data_start = align8(kPreamble + header_len);
    const std::uint64_t data_len = buf.size() >= data_start ? buf.size() - data_start : 0;
    std::uint64_t end = 0;
    try {
        for (const auto& entry : header.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto dtype = entry.at("dtype").get<std::string>();
            const auto shape = entry.at("shape").get<num::Shape>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            if (dtype != "f32") fail(ArchiveErrorKind::inconsistent, path, "shape/offset inconsistency: '" + name + "' has dtype " + dtype);
            if (offset % 8 != 0) fail(ArchiveErrorKind::inconsistent, path, "shape/offset inconsistency: '" + name + "' offset not 8-byte aligned");
            if (offset < end) fail(ArchiveErrorKind::inconsistent, path, "shape/offset inconsistency: '" + name + "' overlaps the previous tensor");
            const std::uint64_t bytes = num::numel(shape) * sizeof(float);
            if (buf.size() < data_start || offset + bytes > data_len)
                fail(ArchiveErrorKind::truncated, path, "truncated blob for '" + name + "'");
            num::Tensor<float> t(shape);
            if (bytes) std::memcpy(t.ptr(), buf.data() + data_start + offset, bytes);
            if (!ar.params.emplace(name, std::move(t)).second)
                fail(ArchiveErrorKind::inconsistent, path, "shape/offset inconsistency: duplicate tensor '" + name + "'");
            end = offset + bytes;
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ArchiveErrorKind::inconsistent, path, std::string("shape/offset inconsistency: ") + e.what());
    }
    if (align8(end) < data_len) fail(ArchiveErrorKind::inconsistent, path, "shape/offset inconsistency: trailing bytes after last tensor");

    try {
        validate_params(ar.params, ar.config);
    } catch (const DataError& e) {
        fail(ArchiveErrorKind::inconsistent, path, std::string("shape/offset inconsistency: ") + e.what());
    }
    return ar;
}

}  // namespace kt::enc
