#include "embsteer/matrix.hpp"

#include <cmath>
#include <sstream>

#include "embsteer/errors.hpp"

namespace embsteer {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) throw DimensionError("matrix dimensions must be positive");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw DimensionError("matrix dimensions must be positive");
    if (data_.size() != rows * cols) {
        std::ostringstream msg;
        msg << "matrix data length " << data_.size() << " does not match " << rows << "x" << cols;
        throw DimensionError(msg.str());
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw DimensionError("matrix needs at least one row");
    std::size_t cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) throw DimensionError("ragged rows in matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
}

bool Matrix::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Matrix::frobenius_norm() const noexcept {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return std::sqrt(acc);
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "matrix addition");
    Matrix out = a;
    auto out_data = out.data();
    auto b_data = b.data();
    for (std::size_t i = 0; i < out_data.size(); ++i) out_data[i] += b_data[i];
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "matrix subtraction");
    Matrix out = a;
    auto out_data = out.data();
    auto b_data = b.data();
    for (std::size_t i = 0; i < out_data.size(); ++i) out_data[i] -= b_data[i];
    return out;
}

Matrix operator*(double scale, const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v *= scale;
    return out;
}

Matrix quantize_f32(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

std::string shape_string(const Matrix& m) {
    std::ostringstream msg;
    msg << m.rows() << "x" << m.cols();
    return msg.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* context) {
    if (!a.same_shape(b)) {
        std::ostringstream msg;
        msg << context << ": shape mismatch " << shape_string(a) << " vs " << shape_string(b);
        throw DimensionError(msg.str());
    }
}

void require_nonempty(const Matrix& m, const char* context) {
    if (m.empty()) {
        std::ostringstream msg;
        msg << context << ": empty matrix";
        throw DimensionError(msg.str());
    }
}

}  // namespace embsteer
