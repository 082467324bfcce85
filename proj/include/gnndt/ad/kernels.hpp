// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

// Compute kernels behind the autodiff ops. `serial` is the reference implementation; `omp` splits the
// same per-element work across threads so each output element is written by exactly one thread with
// the same operation order, which keeps the two bit-identical.

namespace gnndt::ad::kernels {

/// Rows of the packed QKV matrix are (batch, position) pairs; columns are [Q | K | V], each
/// `model_dim` wide and split into `heads` contiguous slices.
struct AttentionShape {
    int batch = 1;
    int seq = 1;
    int heads = 1;
    int model_dim = 1;
    int head_dim() const { return model_dim / heads; }
};

#define GNNDT_KERNEL_DECLS                                                                                   \
    /* C (M x N) = op(A) op(B) (+ C when accumulate). op(A) is M x K. */                                     \
    template <class T>                                                                                       \
    void gemm(int M, int N, int K, const T* A, bool trans_a, const T* B, bool trans_b, T* C, bool accumulate); \
    /* Y (rows x F) = S X (+ Y when accumulate) for CSR S. */                                                \
    template <class T>                                                                                       \
    void spmm(int rows, int F, const int* row_ptr, const int* col, const T* val, const T* X, T* Y,          \
              bool accumulate);                                                                              \
    template <class T>                                                                                       \
    void layer_norm_forward(int rows, int n, const T* x, const T* gain, const T* bias, T eps, T* y, T* xhat, \
                            T* rstd);                                                                        \
    /* dx is accumulated into; dgain/dbias too (may be null). */                                             \
    template <class T>                                                                                       \
    void layer_norm_backward(int rows, int n, const T* dy, const T* xhat, const T* rstd, const T* gain, T* dx, \
                             T* dgain, T* dbias);                                                            \
    /* probs: batch*heads*seq*seq. Queries without a valid visible key produce zeros. */                     \
    template <class T>                                                                                       \
    void attention_forward(const AttentionShape& s, const T* qkv, const std::uint8_t* valid, T* out, T* probs); \
    /* dqkv is accumulated into. */                                                                          \
    template <class T>                                                                                       \
    void attention_backward(const AttentionShape& s, const T* qkv, const T* probs, const T* dout, T* dqkv);

namespace serial {
GNNDT_KERNEL_DECLS
}
namespace omp {
GNNDT_KERNEL_DECLS
}

#undef GNNDT_KERNEL_DECLS

enum class Backend { serial, omp };

/// Process-wide kernel selection used by the autodiff ops (default omp).
void set_backend(Backend backend);
Backend backend();

/// Number of threads the omp kernels will use.
int max_threads();
void set_threads(int n);

}  // namespace gnndt::ad::kernels
