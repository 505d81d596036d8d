#include "embsteer/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "embsteer/errors.hpp"
#include "embsteer/rng.hpp"

namespace embsteer {

AdaptMode parse_mode(const std::string& name) {
    if (name == "token") return AdaptMode::token;
    if (name == "embedding") return AdaptMode::embedding;
    if (name == "both") return AdaptMode::both;
    throw UsageError("unknown mode '" + name + "' (expected token|embedding|both)");
}

const char* to_string(AdaptMode mode) noexcept {
    switch (mode) {
        case AdaptMode::token: return "token";
        case AdaptMode::embedding: return "embedding";
        case AdaptMode::both: return "both";
    }
    return "?";
}

namespace {

bool uses_token(AdaptMode mode) noexcept {
    return mode == AdaptMode::token || mode == AdaptMode::both;
}

bool uses_embedding(AdaptMode mode) noexcept {
    return mode == AdaptMode::embedding || mode == AdaptMode::both;
}

std::size_t branch_parameter_count(const AttentionBranch& branch) noexcept {
    return branch.squeeze.weight.size() + branch.squeeze.bias.size() +
           branch.excite.weight.size() + branch.excite.bias.size();
}

void check_branch(const AttentionBranch& branch, std::size_t len, std::size_t hidden,
                  const char* name) {
    if (branch.squeeze.weight.rows() != hidden || branch.squeeze.weight.cols() != len ||
        branch.squeeze.bias.size() != hidden || branch.excite.weight.rows() != len ||
        branch.excite.weight.cols() != hidden || branch.excite.bias.size() != len) {
        std::ostringstream msg;
        msg << name << " branch shapes inconsistent with len=" << len << " hidden=" << hidden;
        throw DimensionError(msg.str());
    }
}

void require_user_shape(const AdaptiveModule& module, const Matrix& user) {
    if (user.rows() != module.d || user.cols() != module.l) {
        std::ostringstream msg;
        msg << "input embedding is " << shape_string(user) << ", module expects " << module.d
            << "x" << module.l;
        throw DimensionError(msg.str());
    }
}

// Both layers of one branch on a pooled summary vector.
std::vector<double> branch_attention(const AttentionBranch& branch,
                                     std::span<const double> pooled) {
    const auto hidden_pre = affine_forward(branch.squeeze, pooled);
    const auto hidden = relu(hidden_pre);
    const auto gate_pre = affine_forward(branch.excite, hidden);
    return sigmoid(gate_pre);
}

// d<upstream_gate, gate>/d(branch params) for one branch.
void branch_backward(const AttentionBranch& branch, std::span<const double> pooled,
                     std::span<const double> gate_upstream, AttentionBranch& grads) {
    const auto hidden_pre = affine_forward(branch.squeeze, pooled);
    const auto hidden = relu(hidden_pre);
    const auto gate_pre = affine_forward(branch.excite, hidden);

    const auto d_gate_pre = sigmoid_backward(gate_pre, gate_upstream);
    auto excite_grads = affine_backward(branch.excite, hidden, d_gate_pre);
    const auto d_hidden_pre = relu_backward(hidden_pre, excite_grads.input);
    auto squeeze_grads = affine_backward(branch.squeeze, pooled, d_hidden_pre);

    auto accumulate = [](Matrix& into, const Matrix& from) {
        auto dst = into.data();
        auto src = from.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    accumulate(grads.excite.weight, excite_grads.weight);
    accumulate(grads.squeeze.weight, squeeze_grads.weight);
    for (std::size_t i = 0; i < grads.excite.bias.size(); ++i)
        grads.excite.bias[i] += excite_grads.bias[i];
    for (std::size_t i = 0; i < grads.squeeze.bias.size(); ++i)
        grads.squeeze.bias[i] += squeeze_grads.bias[i];
}

AttentionBranch zero_branch(std::size_t len, std::size_t hidden) {
    AttentionBranch branch;
    branch.squeeze.weight = Matrix(hidden, len);
    branch.squeeze.bias.assign(hidden, 0.0);
    branch.excite.weight = Matrix(len, hidden);
    branch.excite.bias.assign(len, 0.0);
    return branch;
}

}  // namespace

std::size_t AdaptiveModule::parameter_count() const noexcept {
    std::size_t count = 0;
    if (token) count += branch_parameter_count(*token);
    if (embedding) count += branch_parameter_count(*embedding);
    return count;
}

void AdaptiveModule::validate() const {
    if (d == 0 || l == 0) throw DimensionError("module dimensions must be positive");
    if (r < 1 || r > std::min(d, l)) {
        std::ostringstream msg;
        msg << "reduction ratio " << r << " out of range [1, " << std::min(d, l) << "]";
        throw UsageError(msg.str());
    }
    if (uses_token(mode) != token.has_value() || uses_embedding(mode) != embedding.has_value())
        throw DimensionError("module branches do not match its mode");
    if (token) check_branch(*token, l, token_hidden(), "token");
    if (embedding) check_branch(*embedding, d, embedding_hidden(), "embedding");
}

AdaptiveModule init_module(std::size_t d, std::size_t l, AdaptMode mode, std::size_t r,
                           std::uint64_t seed) {
    if (d == 0 || l == 0) throw DimensionError("module dimensions must be positive");
    if (r < 1 || r > std::min(d, l)) {
        std::ostringstream msg;
        msg << "reduction ratio " << r << " out of range [1, " << std::min(d, l) << "]";
        throw UsageError(msg.str());
    }

    AdaptiveModule module;
    module.mode = mode;
    module.d = d;
    module.l = l;
    module.r = r;

    SplitMix64 rng(seed);
    auto make_branch = [&](std::size_t len, std::size_t hidden) {
        AttentionBranch branch = zero_branch(len, hidden);
        const double bound = 1.0 / std::sqrt(static_cast<double>(len));
        for (double& w : branch.squeeze.weight.data()) w = rng.uniform(-bound, bound);
        return branch;
    };
    // Draw order: token squeeze weights first, then embedding squeeze weights.
    if (uses_token(mode)) module.token = make_branch(l, module.token_hidden());
    if (uses_embedding(mode)) module.embedding = make_branch(d, module.embedding_hidden());
    return module;
}

ModuleGrads zeros_like(const AdaptiveModule& module) {
    ModuleGrads grads;
    grads.mode = module.mode;
    grads.d = module.d;
    grads.l = module.l;
    grads.r = module.r;
    if (module.token) grads.token = zero_branch(module.l, module.token_hidden());
    if (module.embedding) grads.embedding = zero_branch(module.d, module.embedding_hidden());
    return grads;
}

AttentionMaps attention(const AdaptiveModule& module, const Matrix& user) {
    require_user_shape(module, user);
    AttentionMaps maps;
    if (module.token) maps.token = branch_attention(*module.token, pool_over_embedding(user));
    if (module.embedding)
        maps.embedding = branch_attention(*module.embedding, pool_over_tokens(user));
    return maps;
}

Matrix adapt_direction(const AdaptiveModule& module, const Matrix& user, const Matrix& dir) {
    require_user_shape(module, user);
    require_same_shape(user, dir, "adapt_direction");
    const AttentionMaps maps = attention(module, user);

    Matrix out(dir.rows(), dir.cols());
    for (std::size_t d = 0; d < dir.rows(); ++d) {
        const double emb_gate = maps.embedding ? (*maps.embedding)[d] : 1.0;
        for (std::size_t l = 0; l < dir.cols(); ++l) {
            const double tok_gate = maps.token ? (*maps.token)[l] : 1.0;
            out(d, l) = emb_gate * tok_gate * dir(d, l);
        }
    }
    return out;
}

ModuleGrads module_backward(const AdaptiveModule& module, const Matrix& user, const Matrix& dir,
                            const Matrix& upstream) {
    require_user_shape(module, user);
    require_same_shape(user, dir, "module_backward");
    require_same_shape(dir, upstream, "module_backward upstream");

    const AttentionMaps maps = attention(module, user);
    ModuleGrads grads = zeros_like(module);

    // d<upstream, out>/d(gate) marginalizes the other axis.
    if (module.token) {
        std::vector<double> gate_upstream(module.l, 0.0);
        for (std::size_t l = 0; l < module.l; ++l) {
            double acc = 0.0;
            for (std::size_t d = 0; d < module.d; ++d) {
                const double emb_gate = maps.embedding ? (*maps.embedding)[d] : 1.0;
                acc += upstream(d, l) * emb_gate * dir(d, l);
            }
            gate_upstream[l] = acc;
        }
        branch_backward(*module.token, pool_over_embedding(user), gate_upstream, *grads.token);
    }
    if (module.embedding) {
        std::vector<double> gate_upstream(module.d, 0.0);
        for (std::size_t d = 0; d < module.d; ++d) {
            double acc = 0.0;
            for (std::size_t l = 0; l < module.l; ++l) {
                const double tok_gate = maps.token ? (*maps.token)[l] : 1.0;
                acc += upstream(d, l) * tok_gate * dir(d, l);
            }
            gate_upstream[d] = acc;
        }
        branch_backward(*module.embedding, pool_over_tokens(user), gate_upstream,
                        *grads.embedding);
    }
    return grads;
}

}  // namespace embsteer
