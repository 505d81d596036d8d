#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "embsteer/adaptive.hpp"
#include "embsteer/dataset.hpp"
#include "embsteer/matrix.hpp"

namespace embsteer {

struct AttentionSummary {
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
};

// Embedding-space diagnostics for a (module, direction) pair over a dataset.
// adaptive_residuals are the per-pair training-loss summands; fixed_residuals
// measure the unadapted direction against the same offsets. Cosines compare
// each neutral embedding with its injected version (flattened D*L vectors).
// JSON serialization keeps full double precision; fields are stable and at
// least 9 significant digits survive a round trip.
struct EvalReport {
    std::size_t n = 0;
    AdaptMode mode = AdaptMode::both;
    std::string dataset_digest;
    std::string direction_digest;
    std::string module_digest;
    std::vector<double> adaptive_residuals;  // ||diff_i - adapted_i||^2
    std::vector<double> fixed_residuals;     // ||diff_i - dir||^2
    double adaptive_residual_mean = 0.0;
    double fixed_residual_mean = 0.0;
    std::vector<double> cosines;  // cosine(user_i, injected_i), in [-1, 1]
    double cosine_mean = 0.0;
    std::vector<double> per_token_cosine_mean;  // length L, column-wise cosines
    std::optional<AttentionSummary> attention_token;
    std::optional<AttentionSummary> attention_embedding;
    AttentionSummary attention_all;  // over every attention entry produced

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

EvalReport evaluate(const AdaptiveModule& module, const Matrix& dir, const PairDataset& ds);

// Same module and direction evaluated on an in-domain and an out-of-domain
// dataset; first element is the source report, second the target.
std::pair<EvalReport, EvalReport> transfer_report(const AdaptiveModule& module, const Matrix& dir,
                                                  const PairDataset& source,
                                                  const PairDataset& target);

}  // namespace embsteer
