#include "embsteer/dataset.hpp"

#include <numeric>
#include <sstream>

#include "embsteer/errors.hpp"
#include "embsteer/io.hpp"
#include "embsteer/rng.hpp"

namespace embsteer {

void PairDataset::validate() const {
    if (pairs.empty()) throw DimensionError("pair dataset is empty");
    if (d == 0 || l == 0) throw DimensionError("pair dataset dimensions must be positive");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pair = pairs[i];
        if (pair.neutral.rows() != d || pair.neutral.cols() != l ||
            pair.biased.rows() != d || pair.biased.cols() != l) {
            std::ostringstream msg;
            msg << "pair " << i << " shape differs from dataset " << d << "x" << l;
            throw DimensionError(msg.str());
        }
        if (!pair.neutral.all_finite() || !pair.biased.all_finite()) {
            std::ostringstream msg;
            msg << "pair " << i << " contains non-finite values";
            throw DimensionError(msg.str());
        }
    }
}

PairDataset subsample(const PairDataset& ds, std::size_t k, std::uint64_t seed) {
    ds.validate();
    if (k < 1 || k > ds.size()) {
        std::ostringstream msg;
        msg << "subsample size " << k << " out of range [1, " << ds.size() << "]";
        throw UsageError(msg.str());
    }

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = ds.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(order[i], order[j]);
    }

    PairDataset out;
    out.d = ds.d;
    out.l = ds.l;
    out.pairs.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.pairs.push_back(ds.pairs[order[i]]);

    out.meta = ds.meta;
    out.meta["subsample"] = {{"k", k},
                             {"seed", seed},
                             {"parent_digest", digest_hex(payload_digest(ds))}};
    // Keep prompt metadata aligned with the surviving pairs.
    for (const char* key : {"neutral_prompts", "biased_prompts"}) {
        if (ds.meta.contains(key) && ds.meta[key].is_array() &&
            ds.meta[key].size() == ds.size()) {
            nlohmann::json kept = nlohmann::json::array();
            for (std::size_t i = 0; i < k; ++i) kept.push_back(ds.meta[key][order[i]]);
            out.meta[key] = std::move(kept);
        }
    }
    return out;
}

}  // namespace embsteer
