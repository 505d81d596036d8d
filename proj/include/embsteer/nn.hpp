#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "embsteer/matrix.hpp"

namespace embsteer {

// One dense layer: out = weight * x + bias, weight is out x in.
struct AffineLayer {
    Matrix weight;
    std::vector<double> bias;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }
};

// Column means: out[l] = (1/D) * sum_d m(d, l). Collapses the embedding axis
// and keeps one value per token slot. Accumulates in double.
std::vector<double> pool_over_embedding(const Matrix& m);

// Row means: out[d] = (1/L) * sum_l m(d, l). Collapses the token axis.
std::vector<double> pool_over_tokens(const Matrix& m);

// Gradients of the pools w.r.t. the pooled matrix.
Matrix pool_over_embedding_backward(std::span<const double> upstream, std::size_t rows);
Matrix pool_over_tokens_backward(std::span<const double> upstream, std::size_t cols);

std::vector<double> affine_forward(const AffineLayer& layer, std::span<const double> x);

struct AffineGrads {
    Matrix weight;                // d loss / d weight
    std::vector<double> bias;     // d loss / d bias
    std::vector<double> input;    // d loss / d x
};

AffineGrads affine_backward(const AffineLayer& layer, std::span<const double> x,
                            std::span<const double> upstream);

std::vector<double> relu(std::span<const double> x);
std::vector<double> relu_backward(std::span<const double> x, std::span<const double> upstream);

// Numerically stable; output clamped to the open interval (0, 1) so the
// strict-range invariant holds even for saturating inputs.
std::vector<double> sigmoid(std::span<const double> x);
double sigmoid_scalar(double x) noexcept;
std::vector<double> sigmoid_backward(std::span<const double> x, std::span<const double> upstream);

}  // namespace embsteer
