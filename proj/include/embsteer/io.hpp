#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "embsteer/adaptive.hpp"
#include "embsteer/dataset.hpp"
#include "embsteer/matrix.hpp"

namespace embsteer {

// Binary container shared by the four formats, all little-endian:
//
//   magic   4 bytes   "EBPD" | "BDIR" | "ABCM" | "EBIN"
//   version u16       1
//   n       u32       EBPD: pair count; EBIN: batch count;
//                     BDIR: pair count of the source dataset;
//                     ABCM: tensor count of the payload
//   d       u32       embedding dimension
//   l       u32       token count
//   dtype   u8        0 = f32 payload
//   [ABCM only]  mode u8, r u32
//   meta_len u32      followed by meta_len bytes of UTF-8 JSON
//   payload           f32 row-major tensors
//
// Payload order: EBPD interleaves neutral_i then biased_i per pair; BDIR is
// one D x L matrix; EBIN is n matrices; ABCM holds the branch tensors in
// canonical order (token squeeze W, squeeze b, excite W, excite b, then the
// embedding branch, present branches only). Writers put the fnv1a-64 digest
// of the payload into meta["digest"]; readers verify it.

constexpr std::uint16_t kFormatVersion = 1;

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) noexcept;
std::string digest_hex(std::uint64_t digest);

void write_dataset(const std::filesystem::path& path, const PairDataset& ds);
PairDataset read_dataset(const std::filesystem::path& path);

struct DirectionFile {
    Matrix direction;
    std::uint32_t source_pairs = 0;
    nlohmann::json meta = nlohmann::json::object();
};

void write_direction(const std::filesystem::path& path, const Matrix& direction,
                     std::uint32_t source_pairs, nlohmann::json meta);
DirectionFile read_direction(const std::filesystem::path& path);

struct EmbeddingBatch {
    std::size_t d = 0;
    std::size_t l = 0;
    std::vector<Matrix> embeddings;
    nlohmann::json meta = nlohmann::json::object();

    std::size_t size() const noexcept { return embeddings.size(); }
    void validate() const;
};

void write_batch(const std::filesystem::path& path, const EmbeddingBatch& batch);
EmbeddingBatch read_batch(const std::filesystem::path& path);

struct CheckpointFile {
    AdaptiveModule module;
    nlohmann::json meta = nlohmann::json::object();
};

void write_checkpoint(const std::filesystem::path& path, const AdaptiveModule& module,
                      nlohmann::json meta);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

// Header + meta of any of the four formats, without loading the payload.
struct FileInfo {
    std::string magic;
    std::uint16_t version = 0;
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    std::uint32_t l = 0;
    std::uint8_t dtype = 0;
    std::optional<std::uint8_t> mode;  // ABCM
    std::optional<std::uint32_t> r;    // ABCM
    std::uint64_t payload_bytes = 0;
    nlohmann::json meta;

    nlohmann::json to_json() const;
};

FileInfo inspect_file(const std::filesystem::path& path);

// Digest of the payload a value would serialize to; used to fingerprint
// datasets and directions in reports without rewriting files.
std::uint64_t payload_digest(const PairDataset& ds);
std::uint64_t payload_digest(const Matrix& direction);
std::uint64_t payload_digest(const AdaptiveModule& module);

}  // namespace embsteer
