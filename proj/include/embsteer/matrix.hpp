#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace embsteer {

// Dense row-major real matrix. Rows index the embedding dimension D, columns
// index token positions L, so one column holds the feature at a given token
// slot. Values live in double precision in memory; file payloads narrow to
// IEEE f32 (see io.hpp), and quantize_f32 reproduces that rounding in memory.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);  // zero-filled
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const noexcept;

    double frobenius_norm() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double scale, const Matrix& m);

// Rounds every entry through f32, i.e. the value it would have after a
// write/read cycle through any of the binary formats.
Matrix quantize_f32(const Matrix& m);

std::string shape_string(const Matrix& m);

// Throws DimensionError naming `context` when shapes differ.
void require_same_shape(const Matrix& a, const Matrix& b, const char* context);
void require_nonempty(const Matrix& m, const char* context);

}  // namespace embsteer
