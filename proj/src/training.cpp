#include "embsteer/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "embsteer/errors.hpp"
#include "embsteer/io.hpp"

namespace embsteer {

void TrainConfig::validate() const {
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw UsageError("Adam betas must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw UsageError("Adam epsilon must be positive");
    if (r < 1) throw UsageError("reduction ratio must be >= 1");
    if (!full_batch) throw UsageError("only full-batch training is implemented");
}

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{{"epochs", epochs},   {"learning_rate", learning_rate},
                          {"beta1", beta1},     {"beta2", beta2},
                          {"epsilon", epsilon}, {"seed", seed},
                          {"mode", to_string(mode)}, {"r", r},
                          {"full_batch", full_batch}};
}

namespace {

void require_training_shapes(const AdaptiveModule& module, const PairDataset& ds,
                             const Matrix& dir) {
    ds.validate();
    if (module.d != ds.d || module.l != ds.l)
        throw DimensionError("module dims do not match dataset");
    if (dir.rows() != ds.d || dir.cols() != ds.l)
        throw DimensionError("direction shape " + shape_string(dir) + " does not match dataset");
}

}  // namespace

double loss(const AdaptiveModule& module, const PairDataset& ds, const Matrix& dir) {
    require_training_shapes(module, ds, dir);
    double total = 0.0;
    for (const auto& pair : ds.pairs) {
        const Matrix adapted = adapt_direction(module, pair.neutral, dir);
        double acc = 0.0;
        for (std::size_t e = 0; e < adapted.size(); ++e) {
            const double r =
                (pair.biased.data()[e] - pair.neutral.data()[e]) - adapted.data()[e];
            acc += r * r;
        }
        total += acc;
    }
    return total / static_cast<double>(ds.size());
}

ModuleGrads loss_gradients(const AdaptiveModule& module, const PairDataset& ds,
                           const Matrix& dir) {
    require_training_shapes(module, ds, dir);
    ModuleGrads total = zeros_like(module);
    const double scale = 2.0 / static_cast<double>(ds.size());
    for (const auto& pair : ds.pairs) {
        const Matrix adapted = adapt_direction(module, pair.neutral, dir);
        // d/d(adapted) of the pair's summand, already averaged over N.
        Matrix upstream(ds.d, ds.l);
        for (std::size_t e = 0; e < upstream.size(); ++e) {
            upstream.data()[e] =
                scale * (adapted.data()[e] -
                         (pair.biased.data()[e] - pair.neutral.data()[e]));
        }
        const ModuleGrads pair_grads = module_backward(module, pair.neutral, dir, upstream);
        // Reduce in ascending pair order.
        auto add_branch = [](AttentionBranch& into, const AttentionBranch& from) {
            auto add_layer = [](AffineLayer& a, const AffineLayer& b) {
                auto aw = a.weight.data();
                auto bw = b.weight.data();
                for (std::size_t i = 0; i < aw.size(); ++i) aw[i] += bw[i];
                for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
            };
            add_layer(into.squeeze, from.squeeze);
            add_layer(into.excite, from.excite);
        };
        if (total.token) add_branch(*total.token, *pair_grads.token);
        if (total.embedding) add_branch(*total.embedding, *pair_grads.embedding);
    }
    return total;
}

void adam_step(AdamState& state, AdaptiveModule& module, const ModuleGrads& grads,
               const TrainConfig& config) {
    if (state.m.size() != module.parameter_count())
        throw DimensionError("optimizer state does not match parameter count");

    // Flatten gradients in canonical order and validate them first.
    std::vector<double> flat_grads;
    flat_grads.reserve(state.m.size());
    for_each_tensor(grads, [&](std::span<const double> tensor) {
        flat_grads.insert(flat_grads.end(), tensor.begin(), tensor.end());
    });
    if (flat_grads.size() != state.m.size())
        throw DimensionError("gradient layout does not match optimizer state");
    for (double g : flat_grads) {
        if (!std::isfinite(g)) {
            std::ostringstream msg;
            msg << "non-finite gradient at step " << state.t + 1;
            throw DivergenceError(msg.str());
        }
    }

    state.t += 1;
    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));

    std::size_t index = 0;
    for_each_tensor(module, [&](std::span<double> tensor) {
        for (double& value : tensor) {
            const double g = flat_grads[index];
            double& m = state.m[index];
            double& v = state.v[index];
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            const double m_hat = m / bias1;
            const double v_hat = v / bias2;
            value -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
            if (!std::isfinite(value))
                throw DivergenceError("parameter became non-finite during update");
            ++index;
        }
    });
}

nlohmann::json TrainReport::to_json() const {
    nlohmann::json j = checkpoint_meta();
    j["wall_time_ms"] = wall_time_ms;
    return j;
}

nlohmann::json TrainReport::checkpoint_meta() const {
    return nlohmann::json{{"loss_trace", loss_trace},
                          {"initial_loss", initial_loss},
                          {"final_loss", final_loss},
                          {"config", config.to_json()},
                          {"dataset_digest", dataset_digest},
                          {"direction_digest", direction_digest}};
}

std::pair<AdaptiveModule, TrainReport> train(const PairDataset& ds, const Matrix& dir,
                                             const TrainConfig& config) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();

    AdaptiveModule module = init_module(ds.d, ds.l, config.mode, config.r, config.seed);
    require_training_shapes(module, ds, dir);

    TrainReport report;
    report.config = config;
    report.dataset_digest = digest_hex(payload_digest(ds));
    report.direction_digest = digest_hex(payload_digest(quantize_f32(dir)));

    AdamState state(module.parameter_count());
    report.loss_trace.reserve(config.epochs + 1);
    report.loss_trace.push_back(loss(module, ds, dir));
    report.initial_loss = report.loss_trace.front();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const ModuleGrads grads = loss_gradients(module, ds, dir);
        adam_step(state, module, grads, config);
        const double epoch_loss = loss(module, ds, dir);
        report.loss_trace.push_back(epoch_loss);
        if (epoch_loss > 1e6 * report.initial_loss) {
            std::ostringstream msg;
            msg << "training diverged at epoch " << epoch << ": loss " << epoch_loss
                << " exceeds 1e6 x initial " << report.initial_loss;
            throw DivergenceError(msg.str());
        }
    }
    report.final_loss = report.loss_trace.back();
    report.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return {std::move(module), std::move(report)};
}

}  // namespace embsteer
