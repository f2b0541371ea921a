#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spatten {

// Dense row-major matrix of binary64 values. The functional reference path
// runs entirely on Matrix; fixed-point paths carry integer codes instead.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const double> flat() const { return data_; }
    std::span<double> flat() { return data_; }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline void check_arg(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
    return (a + b - 1) / b;
}

// Smallest s with 2^s >= n; the zero-eliminator pads its input to 2^s slots.
inline int ceil_log2(std::size_t n) {
    int s = 0;
    std::size_t cap = 1;
    while (cap < n) {
        cap <<= 1;
        ++s;
    }
    return s;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

inline Matrix random_normal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& x : m.flat()) x = dist(rng);
    return m;
}

}  // namespace spatten
