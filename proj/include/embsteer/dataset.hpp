#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include <json.hpp>

#include "embsteer/matrix.hpp"

namespace embsteer {

struct EmbeddingPair {
    Matrix neutral;
    Matrix biased;
};

// N aligned (neutral, biased) embedding pairs of identical shape D x L.
// `meta` carries the bias label, the prompt texts, the encoder id and a
// creation timestamp; io.hpp adds the payload digest when writing.
struct PairDataset {
    std::size_t d = 0;
    std::size_t l = 0;
    std::vector<EmbeddingPair> pairs;
    nlohmann::json meta = nlohmann::json::object();

    std::size_t size() const noexcept { return pairs.size(); }

    // Enforces N >= 1, uniform D x L shapes and finite entries.
    void validate() const;
};

// Keeps k pairs chosen by a seeded Fisher-Yates shuffle; pairs appear in
// shuffled order (k == N yields a permutation). meta records the parent
// payload digest and the (k, seed) used.
PairDataset subsample(const PairDataset& ds, std::size_t k, std::uint64_t seed);

}  // namespace embsteer
