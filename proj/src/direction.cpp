#include "embsteer/direction.hpp"

#include <algorithm>
#include <cmath>

#include "embsteer/errors.hpp"

namespace embsteer {

Matrix compute_direction(const PairDataset& ds) {
    ds.validate();
    Matrix out(ds.d, ds.l);
    auto out_data = out.data();
    // Ascending pair order, one accumulator per element: bit-reproducible.
    for (std::size_t e = 0; e < out_data.size(); ++e) {
        double acc = 0.0;
        for (const auto& pair : ds.pairs) acc += pair.biased.data()[e] - pair.neutral.data()[e];
        out_data[e] = acc / static_cast<double>(ds.size());
    }
    return out;
}

DirectionStats direction_stats(const PairDataset& ds, const Matrix& dir) {
    ds.validate();
    if (dir.rows() != ds.d || dir.cols() != ds.l)
        throw DimensionError("direction shape " + shape_string(dir) + " does not match dataset");

    DirectionStats stats;
    stats.residual_norms.reserve(ds.size());
    for (const auto& pair : ds.pairs) {
        double acc = 0.0;
        for (std::size_t e = 0; e < dir.size(); ++e) {
            const double r = (pair.biased.data()[e] - pair.neutral.data()[e]) - dir.data()[e];
            acc += r * r;
        }
        stats.residual_norms.push_back(std::sqrt(acc));
    }
    stats.mean_residual = 0.0;
    for (double r : stats.residual_norms) stats.mean_residual += r;
    stats.mean_residual /= static_cast<double>(stats.residual_norms.size());
    stats.max_residual = *std::max_element(stats.residual_norms.begin(),
                                           stats.residual_norms.end());
    stats.direction_norm = dir.frobenius_norm();

    stats.token_column_norms.resize(dir.cols());
    for (std::size_t l = 0; l < dir.cols(); ++l) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dir.rows(); ++d) acc += dir(d, l) * dir(d, l);
        stats.token_column_norms[l] = std::sqrt(acc);
    }
    return stats;
}

nlohmann::json DirectionStats::to_json() const {
    return nlohmann::json{{"residual_norms", residual_norms},
                          {"mean_residual", mean_residual},
                          {"max_residual", max_residual},
                          {"direction_norm", direction_norm},
                          {"token_column_norms", token_column_norms}};
}

}  // namespace embsteer
