// SPDX-License-Identifier: Apache-2.0
#include "gnndt/ad/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <vector>

#include <omp.h>

namespace gnndt::ad::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::omp};

constexpr long kParallelWork = 1L << 14;

template <class T>
std::vector<T> transpose_copy(int rows, int cols, const T* src) {
    std::vector<T> out(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    return out;
}

// Row i of C = A B, A row-major M x K.
template <class T>
inline void gemm_row_nn(int i, int N, int K, const T* __restrict A, const T* __restrict B, T* __restrict C, bool acc) {
    T* c = C + static_cast<std::size_t>(i) * N;
    if (!acc) std::memset(c, 0, sizeof(T) * N);
    const T* a = A + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
        const T av = a[k];
        const T* b = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
}

// Row i of C = A^T B, A stored K x M.
template <class T>
inline void gemm_row_tn(int i, int M, int N, int K, const T* __restrict A, const T* __restrict B, T* __restrict C,
                        bool acc) {
    T* c = C + static_cast<std::size_t>(i) * N;
    if (!acc) std::memset(c, 0, sizeof(T) * N);
    for (int k = 0; k < K; ++k) {
        const T av = A[static_cast<std::size_t>(k) * M + i];
        const T* b = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
}

template <class T>
inline void spmm_row(int r, int F, const int* row_ptr, const int* col, const T* val, const T* X, T* Y, bool acc) {
    T* y = Y + static_cast<std::size_t>(r) * F;
    if (!acc) std::memset(y, 0, sizeof(T) * F);
    for (int e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
        const T v = val[e];
        const T* x = X + static_cast<std::size_t>(col[e]) * F;
        for (int f = 0; f < F; ++f) y[f] += v * x[f];
    }
}

template <class T>
inline void ln_forward_row(int r, int n, const T* x, const T* gain, const T* bias, T eps, T* y, T* xhat, T* rstd) {
    const T* xr = x + static_cast<std::size_t>(r) * n;
    T mean = 0;
    for (int c = 0; c < n; ++c) mean += xr[c];
    mean /= static_cast<T>(n);
    T var = 0;
    for (int c = 0; c < n; ++c) {
        const T d = xr[c] - mean;
        var += d * d;
    }
    var /= static_cast<T>(n);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    T* hr = xhat + static_cast<std::size_t>(r) * n;
    T* yr = y + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) {
        hr[c] = (xr[c] - mean) * rs;
        yr[c] = hr[c] * gain[c] + bias[c];
    }
}

template <class T>
inline void ln_backward_row(int r, int n, const T* dy, const T* xhat, const T* rstd, const T* gain, T* dx) {
    const T* dyr = dy + static_cast<std::size_t>(r) * n;
    const T* hr = xhat + static_cast<std::size_t>(r) * n;
    T m1 = 0, m2 = 0;
    for (int c = 0; c < n; ++c) {
        const T g = dyr[c] * gain[c];
        m1 += g;
        m2 += g * hr[c];
    }
    m1 /= static_cast<T>(n);
    m2 /= static_cast<T>(n);
    T* dxr = dx + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) dxr[c] += rstd[r] * (dyr[c] * gain[c] - m1 - hr[c] * m2);
}

template <class T>
inline void ln_param_col(int c, int rows, int n, const T* dy, const T* xhat, T* dgain, T* dbias) {
    T sg = 0, sb = 0;
    for (int r = 0; r < rows; ++r) {
        const std::size_t k = static_cast<std::size_t>(r) * n + c;
        sg += dy[k] * xhat[k];
        sb += dy[k];
    }
    if (dgain) dgain[c] += sg;
    if (dbias) dbias[c] += sb;
}

template <class T>
void attention_forward_head(const AttentionShape& s, int b, int h, const T* qkv, const std::uint8_t* valid, T* out,
                            T* probs) {
    const int S = s.seq, D = s.model_dim, dh = s.head_dim();
    const std::size_t stride = static_cast<std::size_t>(3) * D;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (int i = 0; i < S; ++i) {
        T* p = probs + ((static_cast<std::size_t>(b) * s.heads + h) * S + i) * S;
        std::fill(p, p + S, T(0));
        T* o = out + (static_cast<std::size_t>(b) * S + i) * D + static_cast<std::size_t>(h) * dh;
        std::fill(o, o + dh, T(0));
        const T* q = qkv + (static_cast<std::size_t>(b) * S + i) * stride + static_cast<std::size_t>(h) * dh;
        T mx = -std::numeric_limits<T>::infinity();
        bool any = false;
        for (int j = 0; j <= i; ++j) {
            if (!valid[static_cast<std::size_t>(b) * S + j]) continue;
            const T* k = qkv + (static_cast<std::size_t>(b) * S + j) * stride + D + static_cast<std::size_t>(h) * dh;
            T dot = 0;
            for (int d = 0; d < dh; ++d) dot += q[d] * k[d];
            p[j] = dot * scale;
            if (!any || p[j] > mx) mx = p[j];
            any = true;
        }
        if (!any) continue;
        T sum = 0;
        for (int j = 0; j <= i; ++j) {
            if (!valid[static_cast<std::size_t>(b) * S + j]) continue;
            p[j] = std::exp(p[j] - mx);
            sum += p[j];
        }
        const T inv = T(1) / sum;
        for (int j = 0; j <= i; ++j) {
            if (!valid[static_cast<std::size_t>(b) * S + j]) continue;
            p[j] *= inv;
            const T* v = qkv + (static_cast<std::size_t>(b) * S + j) * stride + 2 * static_cast<std::size_t>(D) +
                         static_cast<std::size_t>(h) * dh;
            for (int d = 0; d < dh; ++d) o[d] += p[j] * v[d];
        }
    }
}

template <class T>
void attention_backward_head(const AttentionShape& s, int b, int h, const T* qkv, const T* probs, const T* dout,
                             T* dqkv) {
    const int S = s.seq, D = s.model_dim, dh = s.head_dim();
    const std::size_t stride = static_cast<std::size_t>(3) * D;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<T> dp(S);
    auto at = [&](int pos, int part) {
        return (static_cast<std::size_t>(b) * S + pos) * stride + static_cast<std::size_t>(part) * D +
               static_cast<std::size_t>(h) * dh;
    };
    for (int i = 0; i < S; ++i) {
        const T* p = probs + ((static_cast<std::size_t>(b) * s.heads + h) * S + i) * S;
        const T* go = dout + (static_cast<std::size_t>(b) * S + i) * D + static_cast<std::size_t>(h) * dh;
        T c = 0;
        for (int j = 0; j <= i; ++j) {
            if (p[j] == T(0)) {
                dp[j] = 0;
                continue;
            }
            const T* v = qkv + at(j, 2);
            T* dv = dqkv + at(j, 2);
            T dot = 0;
            for (int d = 0; d < dh; ++d) {
                dot += go[d] * v[d];
                dv[d] += p[j] * go[d];
            }
            dp[j] = dot;
            c += p[j] * dot;
        }
        const T* q = qkv + at(i, 0);
        T* dq = dqkv + at(i, 0);
        for (int j = 0; j <= i; ++j) {
            if (p[j] == T(0)) continue;
            const T ds = p[j] * (dp[j] - c) * scale;
            const T* k = qkv + at(j, 1);
            T* dk = dqkv + at(j, 1);
            for (int d = 0; d < dh; ++d) {
                dq[d] += ds * k[d];
                dk[d] += ds * q[d];
            }
        }
    }
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }
int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

namespace serial {

template <class T>
void gemm(int M, int N, int K, const T* A, bool trans_a, const T* B, bool trans_b, T* C, bool accumulate) {
    std::vector<T> bt;
    if (trans_b) {
        bt = transpose_copy(N, K, B);
        B = bt.data();
    }
    for (int i = 0; i < M; ++i) {
        if (trans_a)
            gemm_row_tn(i, M, N, K, A, B, C, accumulate);
        else
            gemm_row_nn(i, N, K, A, B, C, accumulate);
    }
}

template <class T>
void spmm(int rows, int F, const int* row_ptr, const int* col, const T* val, const T* X, T* Y, bool accumulate) {
    for (int r = 0; r < rows; ++r) spmm_row(r, F, row_ptr, col, val, X, Y, accumulate);
}

template <class T>
void layer_norm_forward(int rows, int n, const T* x, const T* gain, const T* bias, T eps, T* y, T* xhat, T* rstd) {
    for (int r = 0; r < rows; ++r) ln_forward_row(r, n, x, gain, bias, eps, y, xhat, rstd);
}

template <class T>
void layer_norm_backward(int rows, int n, const T* dy, const T* xhat, const T* rstd, const T* gain, T* dx, T* dgain,
                         T* dbias) {
    for (int r = 0; r < rows; ++r) ln_backward_row(r, n, dy, xhat, rstd, gain, dx);
    if (dgain || dbias)
        for (int c = 0; c < n; ++c) ln_param_col(c, rows, n, dy, xhat, dgain, dbias);
}

template <class T>
void attention_forward(const AttentionShape& s, const T* qkv, const std::uint8_t* valid, T* out, T* probs) {
    for (int b = 0; b < s.batch; ++b)
        for (int h = 0; h < s.heads; ++h) attention_forward_head(s, b, h, qkv, valid, out, probs);
}

template <class T>
void attention_backward(const AttentionShape& s, const T* qkv, const T* probs, const T* dout, T* dqkv) {
    for (int b = 0; b < s.batch; ++b)
        for (int h = 0; h < s.heads; ++h) attention_backward_head(s, b, h, qkv, probs, dout, dqkv);
}

}  // namespace serial

namespace omp {

template <class T>
void gemm(int M, int N, int K, const T* A, bool trans_a, const T* B, bool trans_b, T* C, bool accumulate) {
    std::vector<T> bt;
    if (trans_b) {
        bt = transpose_copy(N, K, B);
        B = bt.data();
    }
    const bool par = static_cast<long>(M) * N * K > kParallelWork;
    if (trans_a) {
#pragma omp parallel for schedule(static) if (par)
        for (int i = 0; i < M; ++i) gemm_row_tn(i, M, N, K, A, B, C, accumulate);
    } else {
#pragma omp parallel for schedule(static) if (par)
        for (int i = 0; i < M; ++i) gemm_row_nn(i, N, K, A, B, C, accumulate);
    }
}

template <class T>
void spmm(int rows, int F, const int* row_ptr, const int* col, const T* val, const T* X, T* Y, bool accumulate) {
    const bool par = static_cast<long>(row_ptr[rows]) * F > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int r = 0; r < rows; ++r) spmm_row(r, F, row_ptr, col, val, X, Y, accumulate);
}

template <class T>
void layer_norm_forward(int rows, int n, const T* x, const T* gain, const T* bias, T eps, T* y, T* xhat, T* rstd) {
    const bool par = static_cast<long>(rows) * n > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int r = 0; r < rows; ++r) ln_forward_row(r, n, x, gain, bias, eps, y, xhat, rstd);
}

template <class T>
void layer_norm_backward(int rows, int n, const T* dy, const T* xhat, const T* rstd, const T* gain, T* dx, T* dgain,
                         T* dbias) {
    const bool par = static_cast<long>(rows) * n > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int r = 0; r < rows; ++r) ln_backward_row(r, n, dy, xhat, rstd, gain, dx);
    if (dgain || dbias) {
#pragma omp parallel for schedule(static) if (par)
        for (int c = 0; c < n; ++c) ln_param_col(c, rows, n, dy, xhat, dgain, dbias);
    }
}

template <class T>
void attention_forward(const AttentionShape& s, const T* qkv, const std::uint8_t* valid, T* out, T* probs) {
    const int units = s.batch * s.heads;
    const bool par = static_cast<long>(units) * s.seq * s.seq * s.head_dim() > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int u = 0; u < units; ++u) attention_forward_head(s, u / s.heads, u % s.heads, qkv, valid, out, probs);
}

template <class T>
void attention_backward(const AttentionShape& s, const T* qkv, const T* probs, const T* dout, T* dqkv) {
    const int units = s.batch * s.heads;
    const bool par = static_cast<long>(units) * s.seq * s.seq * s.head_dim() > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int u = 0; u < units; ++u) attention_backward_head(s, u / s.heads, u % s.heads, qkv, probs, dout, dqkv);
}

}  // namespace omp

#define GNNDT_INSTANTIATE(NS, T)                                                                             \
    template void NS::gemm<T>(int, int, int, const T*, bool, const T*, bool, T*, bool);                      \
    template void NS::spmm<T>(int, int, const int*, const int*, const T*, const T*, T*, bool);               \
    template void NS::layer_norm_forward<T>(int, int, const T*, const T*, const T*, T, T*, T*, T*);          \
    template void NS::layer_norm_backward<T>(int, int, const T*, const T*, const T*, const T*, T*, T*, T*);  \
    template void NS::attention_forward<T>(const AttentionShape&, const T*, const std::uint8_t*, T*, T*);    \
    template void NS::attention_backward<T>(const AttentionShape&, const T*, const T*, const T*, T*);

GNNDT_INSTANTIATE(serial, float)
GNNDT_INSTANTIATE(serial, double)
GNNDT_INSTANTIATE(omp, float)
GNNDT_INSTANTIATE(omp, double)

#undef GNNDT_INSTANTIATE

}  // namespace gnndt::ad::kernels
