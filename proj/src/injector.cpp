#include "embsteer/injector.hpp"

#include <sstream>

#include "embsteer/errors.hpp"

namespace embsteer {

Matrix inject(const AdaptiveModule& module, const Matrix& dir, const Matrix& user) {
    require_same_shape(user, dir, "inject");
    const Matrix adapted = adapt_direction(module, user, dir);
    return user + adapted;
}

Matrix inject_fixed(const Matrix& dir, const Matrix& user, double gain) {
    require_same_shape(user, dir, "inject_fixed");
    Matrix out = user;
    auto out_data = out.data();
    auto dir_data = dir.data();
    for (std::size_t i = 0; i < out_data.size(); ++i) out_data[i] += gain * dir_data[i];
    return out;
}

std::vector<Matrix> inject_batch(const AdaptiveModule& module, const Matrix& dir,
                                 std::span<const Matrix> batch) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!batch[i].same_shape(dir)) {
            std::ostringstream msg;
            msg << "batch embedding " << i << " is " << shape_string(batch[i])
                << ", direction is " << shape_string(dir);
            throw DimensionError(msg.str());
        }
    }
    std::vector<Matrix> out;
    out.reserve(batch.size());
    for (const Matrix& user : batch) out.push_back(inject(module, dir, user));
    return out;
}

}  // namespace embsteer
