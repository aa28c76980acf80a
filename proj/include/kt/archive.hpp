#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "kt/encoder.hpp"
#include "kt/error.hpp"

// NTA1 named-tensor archive.
//
//   bytes 0..3    "NTA1"
//   bytes 4..7    u32 LE format version (1)
//   bytes 8..15   u64 LE header length N
//   bytes 16..    N bytes of UTF-8 JSON:
//                 {"config": {...}, "tensors": [{"name", "dtype": "f32", "shape", "offset"}]}
//   data section  starts at the first 8-byte boundary after the header;
//                 offsets are relative to it, 8-byte aligned, LE float32.
//
// The file ends exactly after the last tensor blob.
namespace kt::enc {

inline constexpr std::uint32_t kArchiveVersion = 1;

enum class ArchiveErrorKind { io, bad_magic, version_mismatch, truncated, inconsistent };

class ArchiveError : public DataError {
public:
    ArchiveError(ArchiveErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
    ArchiveErrorKind kind() const noexcept { return kind_; }

private:
    ArchiveErrorKind kind_;
};

struct Archive {
    ModelParams params;
    ModelConfig config;
};

// Tensors are written in canonical order. Throws DataError if `params` does
// not match `cfg`.
void save_archive(const ModelParams& params, const ModelConfig& cfg, const std::filesystem::path& path);

// Validates the header, the tensor table against the config's canonical
// layout, and the blob extents.
Archive load_archive(const std::filesystem::path& path);

}  // namespace kt::enc
