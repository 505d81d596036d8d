#include "embsteer/nn.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "embsteer/errors.hpp"

namespace embsteer {

namespace {

void require_length(std::size_t got, std::size_t want, const char* context) {
    if (got != want) {
        std::ostringstream msg;
        msg << context << ": vector length " << got << ", expected " << want;
        throw DimensionError(msg.str());
    }
}

}  // namespace

std::vector<double> pool_over_embedding(const Matrix& m) {
    require_nonempty(m, "pool_over_embedding");
    std::vector<double> out(m.cols());
    const double inv = 1.0 / static_cast<double>(m.rows());
    for (std::size_t l = 0; l < m.cols(); ++l) {
        double acc = 0.0;
        for (std::size_t d = 0; d < m.rows(); ++d) acc += m(d, l);
        out[l] = acc * inv;
    }
    return out;
}

std::vector<double> pool_over_tokens(const Matrix& m) {
    require_nonempty(m, "pool_over_tokens");
    std::vector<double> out(m.rows());
    const double inv = 1.0 / static_cast<double>(m.cols());
    for (std::size_t d = 0; d < m.rows(); ++d) {
        double acc = 0.0;
        for (std::size_t l = 0; l < m.cols(); ++l) acc += m(d, l);
        out[d] = acc * inv;
    }
    return out;
}

Matrix pool_over_embedding_backward(std::span<const double> upstream, std::size_t rows) {
    if (rows == 0 || upstream.empty())
        throw DimensionError("pool_over_embedding_backward: empty shape");
    Matrix grad(rows, upstream.size());
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t d = 0; d < rows; ++d)
        for (std::size_t l = 0; l < upstream.size(); ++l) grad(d, l) = upstream[l] * inv;
    return grad;
}

Matrix pool_over_tokens_backward(std::span<const double> upstream, std::size_t cols) {
    if (cols == 0 || upstream.empty())
        throw DimensionError("pool_over_tokens_backward: empty shape");
    Matrix grad(upstream.size(), cols);
    const double inv = 1.0 / static_cast<double>(cols);
    for (std::size_t d = 0; d < upstream.size(); ++d)
        for (std::size_t l = 0; l < cols; ++l) grad(d, l) = upstream[d] * inv;
    return grad;
}

std::vector<double> affine_forward(const AffineLayer& layer, std::span<const double> x) {
    require_length(x.size(), layer.in_dim(), "affine_forward input");
    require_length(layer.bias.size(), layer.out_dim(), "affine_forward bias");
    std::vector<double> out(layer.out_dim());
    for (std::size_t i = 0; i < layer.out_dim(); ++i) {
        double acc = layer.bias[i];
        for (std::size_t j = 0; j < layer.in_dim(); ++j) acc += layer.weight(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

AffineGrads affine_backward(const AffineLayer& layer, std::span<const double> x,
                            std::span<const double> upstream) {
    require_length(x.size(), layer.in_dim(), "affine_backward input");
    require_length(upstream.size(), layer.out_dim(), "affine_backward upstream");
    AffineGrads grads;
    grads.weight = Matrix(layer.out_dim(), layer.in_dim());
    grads.bias.assign(upstream.begin(), upstream.end());
    grads.input.assign(layer.in_dim(), 0.0);
    for (std::size_t i = 0; i < layer.out_dim(); ++i) {
        for (std::size_t j = 0; j < layer.in_dim(); ++j) {
            grads.weight(i, j) = upstream[i] * x[j];
            grads.input[j] += layer.weight(i, j) * upstream[i];
        }
    }
    return grads;
}

std::vector<double> relu(std::span<const double> x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

std::vector<double> relu_backward(std::span<const double> x, std::span<const double> upstream) {
    require_length(upstream.size(), x.size(), "relu_backward");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    return out;
}

double sigmoid_scalar(double x) noexcept {
    double s;
    if (x >= 0.0) {
        const double e = std::exp(-x);
        s = 1.0 / (1.0 + e);
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    // Clamp into the open interval so saturated inputs stay strictly inside.
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    if (s < lo) s = lo;
    if (s > hi) s = hi;
    return s;
}

std::vector<double> sigmoid(std::span<const double> x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_scalar(x[i]);
    return out;
}

std::vector<double> sigmoid_backward(std::span<const double> x, std::span<const double> upstream) {
    require_length(upstream.size(), x.size(), "sigmoid_backward");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = sigmoid_scalar(x[i]);
        out[i] = upstream[i] * s * (1.0 - s);
    }
    return out;
}

}  // namespace embsteer
