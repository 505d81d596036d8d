#include "embsteer/encoder.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "embsteer/errors.hpp"
#include "embsteer/io.hpp"

namespace embsteer {

namespace {

std::string iso8601_utc_now() {
    std::time_t now = std::time(nullptr);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        char* end = nullptr;
        const long long v = std::strtoll(epoch, &end, 10);
        if (end && *end == '\0') now = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

long http_timeout_ms() {
    if (const char* value = std::getenv("EMBSTEER_HTTP_TIMEOUT_MS")) {
        char* end = nullptr;
        const long ms = std::strtol(value, &end, 10);
        if (end && *end == '\0' && ms > 0) return ms;
    }
    return 5000;
}

void check_embedding(const Matrix& m, const EncoderCapability& cap, const std::string& prompt) {
    if (m.rows() != cap.d || m.cols() != cap.l) {
        std::ostringstream msg;
        msg << "provider returned " << shape_string(m) << " for prompt '" << prompt
            << "', declared " << cap.d << "x" << cap.l;
        throw DimensionError(msg.str());
    }
    if (!m.all_finite()) {
        throw ProviderError(ProviderFailure::bad_response,
                            "provider returned non-finite values for prompt '" + prompt + "'");
    }
}

}  // namespace

FileProvider FileProvider::from_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in)
        throw ProviderError(ProviderFailure::unavailable,
                            "cannot open manifest " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(ProviderFailure::unavailable,
                            "manifest is not valid JSON: " + std::string(e.what()));
    }

    FileProvider provider;
    try {
        provider.capability_.d = manifest.at("d").get<std::size_t>();
        provider.capability_.l = manifest.at("l").get<std::size_t>();
        provider.capability_.id = manifest.value("encoder", "file");
        for (const auto& [prompt, path] : manifest.at("embeddings").items())
            provider.entries_[prompt] = path.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(ProviderFailure::unavailable,
                            "manifest missing fields: " + std::string(e.what()));
    }
    provider.base_dir_ = manifest_path.parent_path();
    return provider;
}

Matrix FileProvider::encode(const std::string& prompt) {
    if (prompt.empty()) throw UsageError("prompt must be non-empty");
    const auto entry = entries_.find(prompt);
    if (entry == entries_.end())
        throw ProviderError(ProviderFailure::not_found,
                            "prompt '" + prompt + "' not present in manifest");
    const EmbeddingBatch batch = read_batch(base_dir_ / entry->second);
    if (batch.size() != 1) {
        std::ostringstream msg;
        msg << "embedding file for prompt '" << prompt << "' holds " << batch.size()
            << " embeddings, expected 1";
        throw ProviderError(ProviderFailure::bad_response, msg.str());
    }
    Matrix m = batch.embeddings.front();
    check_embedding(m, capability_, prompt);
    return m;
}

HttpProvider::HttpProvider(std::string endpoint, std::optional<EncoderCapability> expected)
    : endpoint_(std::move(endpoint)), capability_(std::move(expected)) {
    if (capability_ && capability_->id.empty()) capability_->id = endpoint_;
}

EncoderCapability HttpProvider::capability() const {
    const std::lock_guard<std::mutex> lock(capability_mutex_);
    if (capability_) return *capability_;
    return EncoderCapability{0, 0, endpoint_};  // unknown until the first encode
}

Matrix HttpProvider::encode(const std::string& prompt) {
    if (prompt.empty()) throw UsageError("prompt must be non-empty");

    httplib::Client client(endpoint_);
    const long timeout = http_timeout_ms();
    client.set_connection_timeout(timeout / 1000, (timeout % 1000) * 1000);
    client.set_read_timeout(timeout / 1000, (timeout % 1000) * 1000);

    const std::string body = nlohmann::json{{"text", prompt}}.dump();
    httplib::Result result;
    for (int attempt = 0; attempt < 2; ++attempt) {
        result = client.Post("/encode", body, "application/json");
        if (result && result->status < 500) break;  // one retry on transport or 5xx
    }
    if (!result)
        throw ProviderError(ProviderFailure::unavailable,
                            "encoder endpoint " + endpoint_ + " unreachable: " +
                                httplib::to_string(result.error()));
    if (result->status != 200) {
        std::ostringstream msg;
        msg << "encoder endpoint replied HTTP " << result->status << " for prompt '" << prompt
            << "'";
        throw ProviderError(ProviderFailure::bad_response, msg.str());
    }

    nlohmann::json payload;
    try {
        payload = nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(ProviderFailure::bad_response,
                            "encoder response is not valid JSON: " + std::string(e.what()));
    }

    std::size_t d = 0, l = 0;
    std::vector<double> data;
    try {
        d = payload.at("d").get<std::size_t>();
        l = payload.at("l").get<std::size_t>();
        data = payload.at("data").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(ProviderFailure::bad_response,
                            "encoder response missing fields: " + std::string(e.what()));
    }
    if (d == 0 || l == 0 || data.size() != d * l)
        throw ProviderError(ProviderFailure::bad_response,
                            "encoder response data length does not match its dims");

    Matrix m(d, l, std::move(data));
    EncoderCapability expected;
    {
        const std::lock_guard<std::mutex> lock(capability_mutex_);
        if (!capability_) capability_ = EncoderCapability{d, l, endpoint_};
        expected = *capability_;
    }
    check_embedding(m, expected, prompt);
    return m;
}

PairDataset ingest_pairs(EncoderProvider& provider, std::span<const std::string> neutral_prompts,
                         std::span<const std::string> biased_prompts,
                         const std::string& bias_label) {
    if (neutral_prompts.empty() || biased_prompts.empty())
        throw UsageError("prompt lists must be non-empty");
    if (neutral_prompts.size() != biased_prompts.size()) {
        std::ostringstream msg;
        msg << "prompt lists are misaligned: " << neutral_prompts.size() << " neutral vs "
            << biased_prompts.size() << " biased";
        throw UsageError(msg.str());
    }

    PairDataset ds;
    ds.pairs.reserve(neutral_prompts.size());
    for (std::size_t i = 0; i < neutral_prompts.size(); ++i) {
        EmbeddingPair pair;
        try {
            pair.neutral = provider.encode(neutral_prompts[i]);
            pair.biased = provider.encode(biased_prompts[i]);
        } catch (const Error& e) {
            std::ostringstream msg;
            msg << "ingest failed at pair " << i << ": " << e.what();
            throw Error(e.category(), msg.str());
        }
        if (i == 0) {
            ds.d = pair.neutral.rows();
            ds.l = pair.neutral.cols();
        }
        ds.pairs.push_back(std::move(pair));
    }
    ds.validate();

    ds.meta["bias"] = bias_label;
    ds.meta["encoder"] = provider.capability().id;
    ds.meta["created"] = iso8601_utc_now();
    ds.meta["neutral_prompts"] = std::vector<std::string>(neutral_prompts.begin(),
                                                          neutral_prompts.end());
    ds.meta["biased_prompts"] = std::vector<std::string>(biased_prompts.begin(),
                                                         biased_prompts.end());
    return ds;
}

std::string emit_llm_instruction(const std::string& bias_description, std::size_t count) {
    if (bias_description.empty()) throw UsageError("bias description must be non-empty");
    if (count < 1) throw UsageError("count must be >= 1");

    std::ostringstream out;
    out << "You are preparing a paired prompt dataset.\n"
        << "\n"
        << "Step 1. Write " << count << " neutral prompts describing everyday scenes.\n"
        << "Each prompt must be one short sentence with a plain subject-verb-object\n"
        << "structure and must not express any attitude or sentiment.\n"
        << "\n"
        << "Step 2. Rewrite each prompt so that it expresses the following bias:\n"
        << "    " << bias_description << "\n"
        << "The rewrite may only insert fitting adjectives directly in front of nouns\n"
        << "that already appear in the sentence. Do not add, remove, or reorder any\n"
        << "other words, and do not change the sentence structure.\n"
        << "\n"
        << "Output exactly " << count << " numbered lines in the form:\n"
        << "    <index>. <neutral prompt> || <rewritten prompt>\n";
    return out.str();
}

std::vector<std::string> read_prompt_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prompt list " + path.string());
    std::vector<std::string> prompts;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) prompts.push_back(line);
    }
    return prompts;
}

}  // namespace embsteer
