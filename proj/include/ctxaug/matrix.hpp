#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ctxaug {

// Dense row-major matrix of doubles. Computation runs in double precision;
// the on-disk format (see save_matrix) stores 32-bit floats.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool operator==(const Matrix& a, const Matrix& b);

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Binary matrix format: magic "CTXM", u32 rows, u32 cols, then rows*cols
// little-endian f32 values, row-major.
void save_matrix(std::ostream& os, const Matrix& m);
Matrix load_matrix(std::istream& is);
void save_matrix_file(const std::string& path, const Matrix& m);
Matrix load_matrix_file(const std::string& path);

// Quantize every entry through f32, as a round-trip through the file format would.
Matrix to_f32_precision(const Matrix& m);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace ctxaug
