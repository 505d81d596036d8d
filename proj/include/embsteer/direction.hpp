#pragma once

#include <vector>

#include <json.hpp>

#include "embsteer/dataset.hpp"
#include "embsteer/matrix.hpp"

namespace embsteer {

// Mean difference over the pairs: out(d,l) = (1/N) * sum_i (biased_i - neutral_i).
// Summed in ascending pair order with one double accumulator per element, so
// the result is bit-reproducible. The direction is frozen once computed;
// training treats it as a constant.
Matrix compute_direction(const PairDataset& ds);

// How well the single mean direction explains the individual pair offsets.
struct DirectionStats {
    std::vector<double> residual_norms;  // ||(biased_i - neutral_i) - dir||_F per pair
    double mean_residual = 0.0;
    double max_residual = 0.0;
    double direction_norm = 0.0;             // ||dir||_F
    std::vector<double> token_column_norms;  // length L, norm of each column of dir

    nlohmann::json to_json() const;
};

DirectionStats direction_stats(const PairDataset& ds, const Matrix& dir);

}  // namespace embsteer
