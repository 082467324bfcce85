// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "gnndt/ad/kernels.hpp"
#include "gnndt/ad/tape.hpp"

namespace gnndt::ad {

/// Compressed sparse rows, used for graph propagation.
template <class T>
struct Csr {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_ptr{0};
    std::vector<int> col;
    std::vector<T> val;
    bool symmetric = false;  // lets backward reuse the matrix instead of its transpose

    std::size_t nnz() const { return col.size(); }
    Csr transpose() const;
    Matrix<T> to_dense() const;
};

template <class T> Tensor<T> matmul(Tensor<T> a, Tensor<T> b);
/// Same shape, or b a 1 x n row broadcast over a's rows.
template <class T> Tensor<T> add(Tensor<T> a, Tensor<T> b);
template <class T> Tensor<T> sub(Tensor<T> a, Tensor<T> b);
template <class T> Tensor<T> mul(Tensor<T> a, Tensor<T> b);
template <class T> Tensor<T> scale(Tensor<T> a, T s);
template <class T> Tensor<T> square(Tensor<T> a);
template <class T> Tensor<T> relu(Tensor<T> a);
template <class T> Tensor<T> tanh(Tensor<T> a);
/// tanh approximation.
template <class T> Tensor<T> gelu(Tensor<T> a);
/// Max-subtracted softmax along each row.
template <class T> Tensor<T> row_softmax(Tensor<T> a);
/// Per-row normalization with 1 x n gain and bias.
template <class T> Tensor<T> layer_norm(Tensor<T> x, Tensor<T> gain, Tensor<T> bias, T eps = T(1e-5));
/// 1 x n mean over rows.
template <class T> Tensor<T> mean_rows(Tensor<T> a);
/// Row means of consecutive segments [offsets[g], offsets[g+1]); empty segments give zero rows.
template <class T> Tensor<T> segment_mean(Tensor<T> a, const std::vector<int>& offsets);
template <class T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <class T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <class T> Tensor<T> slice_rows(Tensor<T> a, int begin, int end);
template <class T> Tensor<T> slice_cols(Tensor<T> a, int begin, int end);
/// out row r = a row idx[r]; idx -1 yields a zero row.
template <class T> Tensor<T> gather_rows(Tensor<T> a, const std::vector<int>& idx);
template <class T> Tensor<T> embedding_lookup(Tensor<T> table, const std::vector<int>& idx) { return gather_rows(table, idx); }
/// out[k] = a(rows[k], cols[k]) as a column.
template <class T> Tensor<T> gather_elements(Tensor<T> a, const std::vector<int>& rows, const std::vector<int>& cols);
/// 1 x 1 sum of the elementwise product.
template <class T> Tensor<T> dot(Tensor<T> a, Tensor<T> b);
/// m x 1 rowwise dot products.
template <class T> Tensor<T> row_dot(Tensor<T> a, Tensor<T> b);
template <class T> Tensor<T> sum(Tensor<T> a);
/// S X for a constant sparse S.
template <class T> Tensor<T> spmm(std::shared_ptr<const Csr<T>> s, Tensor<T> x);
/// Multi-head causal self-attention over packed [Q | K | V] rows ordered (batch, position). Keys with
/// valid == 0 are never attended; queries with no visible valid key output zeros.
template <class T>
Tensor<T> causal_attention(Tensor<T> qkv, int batch, int seq, int heads, std::vector<std::uint8_t> valid);

}  // namespace gnndt::ad
