#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embsteer/dataset.hpp"
#include "embsteer/matrix.hpp"

namespace embsteer {

struct EncoderCapability {
    std::size_t d = 0;
    std::size_t l = 0;
    std::string id;
};

// A text encoder the toolkit can pull embeddings from. Implementations must
// return exactly capability().d x capability().l finite matrices; anything
// else is rejected before it can enter a dataset.
class EncoderProvider {
public:
    virtual ~EncoderProvider() = default;
    virtual EncoderCapability capability() const = 0;
    virtual Matrix encode(const std::string& prompt) = 0;
};

// Offline provider backed by a manifest JSON:
//   { "encoder": "...", "d": D, "l": L,
//     "embeddings": { "<prompt>": "relative/path.ebin", ... } }
// Each entry points at a single-embedding EBIN file resolved relative to the
// manifest's directory.
class FileProvider : public EncoderProvider {
public:
    static FileProvider from_manifest(const std::filesystem::path& manifest_path);

    EncoderCapability capability() const override { return capability_; }
    Matrix encode(const std::string& prompt) override;

private:
    EncoderCapability capability_;
    std::filesystem::path base_dir_;
    std::map<std::string, std::string> entries_;
};

// Remote provider speaking a one-endpoint JSON protocol:
//   POST <endpoint>/encode  body {"text": "<prompt>"}
//   response {"d": D, "l": L, "data": [D*L row-major floats]}
// Dimensions are pinned either up front or from the first response; one
// retry on transport failure. Timeouts come from EMBSTEER_HTTP_TIMEOUT_MS
// (milliseconds, default 5000).
class HttpProvider : public EncoderProvider {
public:
    explicit HttpProvider(std::string endpoint,
                          std::optional<EncoderCapability> expected = std::nullopt);

    EncoderCapability capability() const override;
    Matrix encode(const std::string& prompt) override;

private:
    std::string endpoint_;
    mutable std::mutex capability_mutex_;  // first successful encode pins the dims
    mutable std::optional<EncoderCapability> capability_;
};

// Encodes two aligned prompt lists into a pair dataset; pair i holds the
// embeddings of neutral_prompts[i] and biased_prompts[i]. Any encode failure
// aborts with the failing index in the message.
PairDataset ingest_pairs(EncoderProvider& provider, std::span<const std::string> neutral_prompts,
                         std::span<const std::string> biased_prompts,
                         const std::string& bias_label = "");

// The instruction text handed to a human operator for generating the paired
// prompt lists with an LLM of their choice. Deterministic in its inputs.
std::string emit_llm_instruction(const std::string& bias_description, std::size_t count);

// One prompt per line, UTF-8; blank lines and trailing '\r' are dropped.
std::vector<std::string> read_prompt_lines(const std::filesystem::path& path);

}  // namespace embsteer
