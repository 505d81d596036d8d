#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "embsteer/adaptive.hpp"
#include "embsteer/dataset.hpp"
#include "embsteer/matrix.hpp"

namespace embsteer {

// Defaults match the published configuration: 50 epochs, Adam at lr 0.001.
struct TrainConfig {
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    AdaptMode mode = AdaptMode::both;
    std::size_t r = 4;
    bool full_batch = true;  // one step per epoch over all pairs

    void validate() const;  // epochs >= 1, lr > 0, betas in (0,1)
    nlohmann::json to_json() const;
};

// First/second moment accumulators, flattened in canonical tensor order.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    explicit AdamState(std::size_t parameter_count) : m(parameter_count), v(parameter_count) {}
};

// Mean over pairs of the squared Frobenius residual between each pair's own
// offset and the gated direction, with attention conditioned on the neutral
// embedding (the training-time stand-in for the user prompt):
//   (1/N) * sum_i || (biased_i - neutral_i) - adapt_direction(module, neutral_i, dir) ||^2
double loss(const AdaptiveModule& module, const PairDataset& ds, const Matrix& dir);

// Full-batch d(loss)/d(theta), pair contributions reduced in ascending order.
ModuleGrads loss_gradients(const AdaptiveModule& module, const PairDataset& ds, const Matrix& dir);

// One Adam update with bias correction. Throws on non-finite gradients.
void adam_step(AdamState& state, AdaptiveModule& module, const ModuleGrads& grads,
               const TrainConfig& config);

struct TrainReport {
    std::vector<double> loss_trace;  // epochs + 1 entries; index 0 is pre-training
    double initial_loss = 0.0;
    double final_loss = 0.0;
    TrainConfig config;
    std::string dataset_digest;
    std::string direction_digest;
    double wall_time_ms = 0.0;

    nlohmann::json to_json() const;

    // Deterministic subset stored in checkpoint meta; excludes wall time so
    // identical runs produce bit-identical checkpoints.
    nlohmann::json checkpoint_meta() const;
};

// Initializes a module from (config.mode, config.r, config.seed) and runs the
// epoch loop. Aborts with DivergenceError once loss exceeds 1e6 x the initial
// loss. Deterministic for fixed (seed, config, data).
std::pair<AdaptiveModule, TrainReport> train(const PairDataset& ds, const Matrix& dir,
                                             const TrainConfig& config);

}  // namespace embsteer
