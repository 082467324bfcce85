// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnndt::ad {

/// Dense row-major matrix. Vectors are 1 x n, scalars 1 x 1.
template <class T>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("negative matrix dimension");
    }
    Matrix(int r, int c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != static_cast<std::size_t>(r) * c) throw std::invalid_argument("matrix data size != rows*cols");
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    std::span<T> span() { return data; }
    std::span<const T> span() const { return data; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
    bool operator==(const Matrix&) const = default;
};

template <class To, class From>
Matrix<To> cast(const Matrix<From>& m) {
    Matrix<To> out(m.rows, m.cols);
    for (std::size_t k = 0; k < m.size(); ++k) out.data[k] = static_cast<To>(m.data[k]);
    return out;
}

}  // namespace gnndt::ad
