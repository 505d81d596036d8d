#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "embsteer/matrix.hpp"
#include "embsteer/nn.hpp"

namespace embsteer {

// Which axes the module gates. Values are the on-disk encoding (ABCM header).
enum class AdaptMode : std::uint8_t {
    token = 0,      // gate token positions only
    embedding = 1,  // gate embedding features only
    both = 2,       // rank-1 outer product of the two gates
};

AdaptMode parse_mode(const std::string& name);
const char* to_string(AdaptMode mode) noexcept;

// One squeeze-excite branch: len -> ceil(len / r) -> len, ReLU between,
// sigmoid on the way out.
struct AttentionBranch {
    AffineLayer squeeze;  // hidden x len
    AffineLayer excite;   // len x hidden
};

// The input-conditioned gating module. The token branch pools the embedding
// axis and gates the L token slots; the embedding branch pools the token
// axis and gates the D features. Branches are independent and only the ones
// the mode uses are present.
struct AdaptiveModule {
    AdaptMode mode = AdaptMode::both;
    std::size_t d = 0;
    std::size_t l = 0;
    std::size_t r = 4;
    std::optional<AttentionBranch> token;
    std::optional<AttentionBranch> embedding;

    std::size_t token_hidden() const noexcept { return (l + r - 1) / r; }
    std::size_t embedding_hidden() const noexcept { return (d + r - 1) / r; }
    std::size_t parameter_count() const noexcept;

    void validate() const;  // branch shapes consistent with (d, l, r, mode)
};

// Gradient container; same tensor layout as the module itself.
using ModuleGrads = AdaptiveModule;

// Hidden (squeeze) weights are drawn uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
// from one splitmix64 stream seeded with `seed`; draw order is the squeeze
// weight of the token branch row-major, then of the embedding branch (present
// branches only). Excite weights and all biases start at zero, which pins
// every attention value to sigmoid(0) = 0.5 on a fresh module.
AdaptiveModule init_module(std::size_t d, std::size_t l, AdaptMode mode, std::size_t r,
                           std::uint64_t seed);

ModuleGrads zeros_like(const AdaptiveModule& module);

struct AttentionMaps {
    std::optional<std::vector<double>> token;      // length L, entries in (0,1)
    std::optional<std::vector<double>> embedding;  // length D, entries in (0,1)
};

AttentionMaps attention(const AdaptiveModule& module, const Matrix& user);

// Gates the direction by the attention computed from `user`:
//   both:      out(d,l) = a_emb[d] * a_tok[l] * dir(d,l)
//   token:     out(d,l) = a_tok[l] * dir(d,l)
//   embedding: out(d,l) = a_emb[d] * dir(d,l)
Matrix adapt_direction(const AdaptiveModule& module, const Matrix& user, const Matrix& dir);

// d/d(theta) of <upstream, adapt_direction(module, user, dir)>. `user` and
// `dir` are constants; no gradient flows to them.
ModuleGrads module_backward(const AdaptiveModule& module, const Matrix& user, const Matrix& dir,
                            const Matrix& upstream);

// Visits all parameter tensors in the canonical checkpoint order: token
// squeeze W, squeeze b, excite W, excite b, then the embedding branch.
template <typename ModuleT, typename Fn>
void for_each_branch(ModuleT& module, Fn&& fn) {
    if (module.token) fn(*module.token);
    if (module.embedding) fn(*module.embedding);
}

template <typename ModuleT, typename Fn>
void for_each_tensor(ModuleT& module, Fn&& fn) {
    for_each_branch(module, [&](auto& branch) {
        fn(branch.squeeze.weight.data());
        fn(std::span(branch.squeeze.bias));
        fn(branch.excite.weight.data());
        fn(std::span(branch.excite.bias));
    });
}

}  // namespace embsteer
