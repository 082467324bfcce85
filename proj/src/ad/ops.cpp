// SPDX-License-Identifier: Apache-2.0
#include "gnndt/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gnndt::ad {

namespace {

using kernels::Backend;

template <class T>
void gemm(int M, int N, int K, const T* A, bool ta, const T* B, bool tb, T* C, bool acc) {
    if (kernels::backend() == Backend::serial)
        kernels::serial::gemm(M, N, K, A, ta, B, tb, C, acc);
    else
        kernels::omp::gemm(M, N, K, A, ta, B, tb, C, acc);
}

template <class T>
void spmm_k(const Csr<T>& s, int F, const T* X, T* Y, bool acc) {
    if (kernels::backend() == Backend::serial)
        kernels::serial::spmm(s.rows, F, s.row_ptr.data(), s.col.data(), s.val.data(), X, Y, acc);
    else
        kernels::omp::spmm(s.rows, F, s.row_ptr.data(), s.col.data(), s.val.data(), X, Y, acc);
}

template <class T>
Tape<T>* same_tape(std::initializer_list<Tensor<T>> ts) {
    Tape<T>* tape = nullptr;
    for (const auto& t : ts) {
        if (!t.valid()) throw std::logic_error("empty tensor handle");
        if (tape && t.tape != tape) throw std::logic_error("tensors from different tapes");
        tape = t.tape;
    }
    return tape;
}

template <class T>
[[noreturn]] void shape_fail(const char* op, const Matrix<T>& a, const Matrix<T>& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

// y = f(x) elementwise with dy/dx = df(x, y).
template <class T, class F, class DF>
Tensor<T> unary(Tensor<T> a, F f, DF df) {
    Tape<T>& tape = *same_tape({a});
    const Matrix<T>& x = a.value();
    Matrix<T> y(x.rows, x.cols);
    for (std::size_t k = 0; k < x.size(); ++k) y.data[k] = f(x.data[k]);
    const int ia = a.id;
    return tape.record(std::move(y), {ia}, [ia, df](Tape<T>& tp, int self) {
        const Matrix<T>& x = tp.value(ia);
        const Matrix<T>& y = tp.value(self);
        const Matrix<T>& g = tp.grad(self);
        Matrix<T>& gx = tp.grad(ia);
        for (std::size_t k = 0; k < x.size(); ++k) gx.data[k] += g.data[k] * df(x.data[k], y.data[k]);
    });
}

template <class T>
void add_into(Matrix<T>& dst, const Matrix<T>& src) {
    for (std::size_t k = 0; k < src.size(); ++k) dst.data[k] += src.data[k];
}

}  // namespace

template <class T>
Csr<T> Csr<T>::transpose() const {
    Csr<T> t;
    t.rows = cols;
    t.cols = rows;
    t.symmetric = symmetric;
    t.row_ptr.assign(cols + 1, 0);
    for (int c : col) ++t.row_ptr[c + 1];
    for (int r = 0; r < cols; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
    t.col.resize(nnz());
    t.val.resize(nnz());
    std::vector<int> fill(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (int r = 0; r < rows; ++r)
        for (int e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
            const int pos = fill[col[e]]++;
            t.col[pos] = r;
            t.val[pos] = val[e];
        }
    return t;
}

template <class T>
Matrix<T> Csr<T>::to_dense() const {
    Matrix<T> d(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int e = row_ptr[r]; e < row_ptr[r + 1]; ++e) d(r, col[e]) += val[e];
    return d;
}

template <class T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tape = *same_tape({a, b});
    const Matrix<T>& A = a.value();
    const Matrix<T>& B = b.value();
    if (A.cols != B.rows) shape_fail("matmul", A, B);
    Matrix<T> C(A.rows, B.cols);
    gemm(A.rows, B.cols, A.cols, A.data.data(), false, B.data.data(), false, C.data.data(), false);
    const int ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib}, [ia, ib](Tape<T>& tp, int self) {
        const Matrix<T>& A = tp.value(ia);
        const Matrix<T>& B = tp.value(ib);
        const Matrix<T>& G = tp.grad(self);
        if (tp.requires_grad(ia))
            gemm(A.rows, A.cols, B.cols, G.data.data(), false, B.data.data(), true, tp.grad(ia).data.data(), true);
        if (tp.requires_grad(ib))
            gemm(A.cols, B.cols, A.rows, A.data.data(), true, G.data.data(), false, tp.grad(ib).data.data(), true);
    });
}

template <class T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tape = *same_tape({a, b});
    const Matrix<T>& A = a.value();
    const Matrix<T>& B = b.value();
    const bool broadcast = !A.same_shape(B);
    if (broadcast && !(B.rows == 1 && B.cols == A.cols)) shape_fail("add", A, B);
    Matrix<T> C = A;
    for (int r = 0; r < A.rows; ++r) {
        T* c = C.row(r);
        const T* bb = broadcast ? B.row(0) : B.row(r);
        for (int k = 0; k < A.cols; ++k) c[k] += bb[k];
    }
    const int ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib}, [ia, ib, broadcast](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        if (tp.requires_grad(ia)) add_into(tp.grad(ia), G);
        if (tp.requires_grad(ib)) {
            Matrix<T>& gb = tp.grad(ib);
            if (!broadcast) {
                add_into(gb, G);
            } else {
                for (int r = 0; r < G.rows; ++r)
                    for (int k = 0; k < G.cols; ++k) gb.data[k] += G(r, k);
            }
        }
    });
}

template <class T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tape = *same_tape({a, b});
    const Matrix<T>& A = a.value();
    const Matrix<T>& B = b.value();
    if (!A.same_shape(B)) shape_fail("sub", A, B);
    Matrix<T> C = A;
    for (std::size_t k = 0; k < C.size(); ++k) C.data[k] -= B.data[k];
    const int ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib}, [ia, ib](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        if (tp.requires_grad(ia)) add_into(tp.grad(ia), G);
        if (tp.requires_grad(ib)) {
            Matrix<T>& gb = tp.grad(ib);
            for (std::size_t k = 0; k < G.size(); ++k) gb.data[k] -= G.data[k];
        }
    });
}

template <class T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tape = *same_tape({a, b});
    const Matrix<T>& A = a.value();
    const Matrix<T>& B = b.value();
    if (!A.same_shape(B)) shape_fail("mul", A, B);
    Matrix<T> C = A;
    for (std::size_t k = 0; k < C.size(); ++k) C.data[k] *= B.data[k];
    const int ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib}, [ia, ib](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        const Matrix<T>& A = tp.value(ia);
        const Matrix<T>& B = tp.value(ib);
        if (tp.requires_grad(ia)) {
            Matrix<T>& ga = tp.grad(ia);
            for (std::size_t k = 0; k < G.size(); ++k) ga.data[k] += G.data[k] * B.data[k];
        }
        if (tp.requires_grad(ib)) {
            Matrix<T>& gb = tp.grad(ib);
            for (std::size_t k = 0; k < G.size(); ++k) gb.data[k] += G.data[k] * A.data[k];
        }
    });
}

template <class T>
Tensor<T> scale(Tensor<T> a, T s) {
    return unary(a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> square(Tensor<T> a) {
    return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> relu(Tensor<T> a) {
    return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> tanh(Tensor<T> a) {
    return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> gelu(Tensor<T> a) {
    constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    constexpr T k = static_cast<T>(0.044715);
    return unary(
        a,
        [](T x) { return T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x))); },
        [](T x, T) {
            const T t = std::tanh(c * (x + k * x * x * x));
            return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * k * x * x);
        });
}

template <class T>
Tensor<T> row_softmax(Tensor<T> a) {
    Tape<T>& tape = *same_tape({a});
    const Matrix<T>& X = a.value();
    Matrix<T> Y(X.rows, X.cols);
    for (int r = 0; r < X.rows; ++r) {
        if (X.cols == 0) continue;
        const T* x = X.row(r);
        T* y = Y.row(r);
        const T mx = *std::max_element(x, x + X.cols);
        T s = 0;
        for (int c = 0; c < X.cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            s += y[c];
        }
        for (int c = 0; c < X.cols; ++c) y[c] /= s;
    }
    const int ia = a.id;
    return tape.record(std::move(Y), {ia}, [ia](Tape<T>& tp, int self) {
        const Matrix<T>& Y = tp.value(self);
        const Matrix<T>& G = tp.grad(self);
        Matrix<T>& gx = tp.grad(ia);
        for (int r = 0; r < Y.rows; ++r) {
            T d = 0;
            for (int c = 0; c < Y.cols; ++c) d += G(r, c) * Y(r, c);
            for (int c = 0; c < Y.cols; ++c) gx(r, c) += Y(r, c) * (G(r, c) - d);
        }
    });
}

template <class T>
Tensor<T> layer_norm(Tensor<T> x, Tensor<T> gain, Tensor<T> bias, T eps) {
    Tape<T>& tape = *same_tape({x, gain, bias});
    const Matrix<T>& X = x.value();
    if (X.cols == 0) throw ShapeError("layer_norm on zero-length rows");
    if (gain.rows() != 1 || gain.cols() != X.cols) shape_fail("layer_norm gain", X, gain.value());
    if (bias.rows() != 1 || bias.cols() != X.cols) shape_fail("layer_norm bias", X, bias.value());
    struct Saved {
        Matrix<T> xhat;
        std::vector<T> rstd;
    };
    auto saved = std::make_shared<Saved>();
    saved->xhat = Matrix<T>(X.rows, X.cols);
    saved->rstd.resize(X.rows);
    Matrix<T> Y(X.rows, X.cols);
    const T* g = gain.value().data.data();
    const T* b = bias.value().data.data();
    if (kernels::backend() == Backend::serial)
        kernels::serial::layer_norm_forward(X.rows, X.cols, X.data.data(), g, b, eps, Y.data.data(),
                                            saved->xhat.data.data(), saved->rstd.data());
    else
        kernels::omp::layer_norm_forward(X.rows, X.cols, X.data.data(), g, b, eps, Y.data.data(),
                                         saved->xhat.data.data(), saved->rstd.data());
    const int ix = x.id, ig = gain.id, ib = bias.id;
    return tape.record(std::move(Y), {ix, ig, ib}, [ix, ig, ib, saved](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        const Matrix<T>& gainv = tp.value(ig);
        const int rows = G.rows, n = G.cols;
        T* dx = nullptr;
        std::vector<T> scratch;
        if (tp.requires_grad(ix)) {
            dx = tp.grad(ix).data.data();
        } else {
            scratch.assign(G.size(), T(0));
            dx = scratch.data();
        }
        T* dg = tp.requires_grad(ig) ? tp.grad(ig).data.data() : nullptr;
        T* db = tp.requires_grad(ib) ? tp.grad(ib).data.data() : nullptr;
        if (kernels::backend() == Backend::serial)
            kernels::serial::layer_norm_backward(rows, n, G.data.data(), saved->xhat.data.data(), saved->rstd.data(),
                                                 gainv.data.data(), dx, dg, db);
        else
            kernels::omp::layer_norm_backward(rows, n, G.data.data(), saved->xhat.data.data(), saved->rstd.data(),
                                              gainv.data.data(), dx, dg, db);
    });
}

template <class T>
Tensor<T> mean_rows(Tensor<T> a) {
    return segment_mean(a, std::vector<int>{0, a.rows()});
}

template <class T>
Tensor<T> segment_mean(Tensor<T> a, const std::vector<int>& offsets) {
    Tape<T>& tape = *same_tape({a});
    const Matrix<T>& X = a.value();
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != X.rows)
        throw ShapeError("segment_mean: offsets must run from 0 to rows");
    for (std::size_t g = 1; g < offsets.size(); ++g)
        if (offsets[g] < offsets[g - 1]) throw ShapeError("segment_mean: offsets must be non-decreasing");
    const int G = static_cast<int>(offsets.size()) - 1;
    Matrix<T> Y(G, X.cols);
    for (int g = 0; g < G; ++g) {
        const int n = offsets[g + 1] - offsets[g];
        if (n == 0) continue;
        T* y = Y.row(g);
        for (int r = offsets[g]; r < offsets[g + 1]; ++r) {
            const T* x = X.row(r);
            for (int c = 0; c < X.cols; ++c) y[c] += x[c];
        }
        const T inv = T(1) / static_cast<T>(n);
        for (int c = 0; c < X.cols; ++c) y[c] *= inv;
    }
    const int ia = a.id;
    return tape.record(std::move(Y), {ia}, [ia, offsets](Tape<T>& tp, int self) {
        const Matrix<T>& Gr = tp.grad(self);
        Matrix<T>& gx = tp.grad(ia);
        for (int g = 0; g + 1 < static_cast<int>(offsets.size()); ++g) {
            const int n = offsets[g + 1] - offsets[g];
            if (n == 0) continue;
            const T inv = T(1) / static_cast<T>(n);
            for (int r = offsets[g]; r < offsets[g + 1]; ++r)
                for (int c = 0; c < Gr.cols; ++c) gx(r, c) += Gr(g, c) * inv;
        }
    });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    Tape<T>& tape = *parts.front().tape;
    const int cols = parts.front().cols();
    int rows = 0;
    std::vector<int> ids, starts;
    for (const auto& p : parts) {
        if (p.tape != &tape) throw std::logic_error("tensors from different tapes");
        if (p.cols() != cols) shape_fail("concat_rows", parts.front().value(), p.value());
        starts.push_back(rows);
        rows += p.rows();
        ids.push_back(p.id);
    }
    Matrix<T> Y(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        std::copy(v.data.begin(), v.data.end(), Y.data.begin() + static_cast<std::ptrdiff_t>(starts[k]) * cols);
    }
    return tape.record(std::move(Y), ids, [ids, starts](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!tp.requires_grad(ids[k])) continue;
            Matrix<T>& g = tp.grad(ids[k]);
            const T* src = G.row(starts[k]);
            for (std::size_t e = 0; e < g.size(); ++e) g.data[e] += src[e];
        }
    });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    Tape<T>& tape = *parts.front().tape;
    const int rows = parts.front().rows();
    int cols = 0;
    std::vector<int> ids, starts, widths;
    for (const auto& p : parts) {
        if (p.tape != &tape) throw std::logic_error("tensors from different tapes");
        if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
        starts.push_back(cols);
        widths.push_back(p.cols());
        cols += p.cols();
        ids.push_back(p.id);
    }
    Matrix<T> Y(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        for (int r = 0; r < rows; ++r) std::copy(v.row(r), v.row(r) + widths[k], Y.row(r) + starts[k]);
    }
    return tape.record(std::move(Y), ids, [ids, starts, widths](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!tp.requires_grad(ids[k])) continue;
            Matrix<T>& g = tp.grad(ids[k]);
            for (int r = 0; r < G.rows; ++r)
                for (int c = 0; c < widths[k]; ++c) g(r, c) += G(r, starts[k] + c);
        }
    });
}

template <class T>
Tensor<T> slice_rows(Tensor<T> a, int begin, int end) {
    Tape<T>& tape = *same_tape({a});
    const Matrix<T>& X = a.value();
    if (begin < 0 || end < begin || end > X.rows) throw ShapeError("slice_rows out of range on " + X.shape_str());
    Matrix<T> Y(end - begin, X.cols);
    std::copy(X.row(begin), X.row(begin) + Y.size(), Y.data.begin());
    const int ia = a.id;
    return tape.record(std::move(Y), {ia}, [ia, begin](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        T* dst = tp.grad(ia).row(begin);
        for (std::size_t k = 0; k < G.size(); ++k) dst[k] += G.data[k];
    });
}

template <class T>
Tensor<T> slice_cols(Tensor<T> a, int begin, int end) {
    Tape<T>& tape = *same_tape({a});
    const Matrix<T>& X = a.value();
    if (begin < 0 || end < begin || end > X.cols) throw ShapeError("slice_cols out of range on " + X.shape_str());
    Matrix<T> Y(X.rows, end - begin);
    for (int r = 0; r < X.rows; ++r) std::copy(X.row(r) + begin, X.row(r) + end, Y.row(r));
    const int ia = a.id;
    return tape.record(std::move(Y), {ia}, [ia, begin](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        Matrix<T>& g = tp.grad(ia);
        for (int r = 0; r < G.rows; ++r)
            for (int c = 0; c < G.cols; ++c) g(r, begin + c) += G(r, c);
    });
}

template <class T>
Tensor<T> gather_rows(Tensor<T> a, const std::vector<int>& idx) {
    Tape<T>& tape = *same_tape({a});
    const Matrix<T>& X = a.value();
    Matrix<T> Y(static_cast<int>(idx.size()), X.cols);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] == -1) continue;
        if (idx[r] < 0 || idx[r] >= X.rows)
            throw ShapeError("gather_rows index " + std::to_string(idx[r]) + " out of range on " + X.shape_str());
        std::copy(X.row(idx[r]), X.row(idx[r]) + X.cols, Y.row(static_cast<int>(r)));
    }
    const int ia = a.id;
    return tape.record(std::move(Y), {ia}, [ia, idx](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        Matrix<T>& g = tp.grad(ia);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] < 0) continue;
            for (int c = 0; c < G.cols; ++c) g(idx[r], c) += G(static_cast<int>(r), c);
        }
    });
}

template <class T>
Tensor<T> gather_elements(Tensor<T> a, const std::vector<int>& rows, const std::vector<int>& cols) {
    Tape<T>& tape = *same_tape({a});
    if (rows.size() != cols.size()) throw ShapeError("gather_elements needs as many rows as cols");
    const Matrix<T>& X = a.value();
    Matrix<T> Y(static_cast<int>(rows.size()), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= X.rows || cols[k] < 0 || cols[k] >= X.cols)
            throw ShapeError("gather_elements index out of range on " + X.shape_str());
        Y.data[k] = X(rows[k], cols[k]);
    }
    const int ia = a.id;
    return tape.record(std::move(Y), {ia}, [ia, rows, cols](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        Matrix<T>& g = tp.grad(ia);
        for (std::size_t k = 0; k < rows.size(); ++k) g(rows[k], cols[k]) += G.data[k];
    });
}

template <class T>
Tensor<T> dot(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tape = *same_tape({a, b});
    const Matrix<T>& A = a.value();
    const Matrix<T>& B = b.value();
    if (!A.same_shape(B)) shape_fail("dot", A, B);
    T s = 0;
    for (std::size_t k = 0; k < A.size(); ++k) s += A.data[k] * B.data[k];
    const int ia = a.id, ib = b.id;
    return tape.record(Matrix<T>(1, 1, s), {ia, ib}, [ia, ib](Tape<T>& tp, int self) {
        const T g = tp.grad(self).data[0];
        const Matrix<T>& A = tp.value(ia);
        const Matrix<T>& B = tp.value(ib);
        if (tp.requires_grad(ia)) {
            Matrix<T>& ga = tp.grad(ia);
            for (std::size_t k = 0; k < A.size(); ++k) ga.data[k] += g * B.data[k];
        }
        if (tp.requires_grad(ib)) {
            Matrix<T>& gb = tp.grad(ib);
            for (std::size_t k = 0; k < B.size(); ++k) gb.data[k] += g * A.data[k];
        }
    });
}

template <class T>
Tensor<T> row_dot(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tape = *same_tape({a, b});
    const Matrix<T>& A = a.value();
    const Matrix<T>& B = b.value();
    if (!A.same_shape(B)) shape_fail("row_dot", A, B);
    Matrix<T> Y(A.rows, 1);
    for (int r = 0; r < A.rows; ++r) {
        T s = 0;
        for (int c = 0; c < A.cols; ++c) s += A(r, c) * B(r, c);
        Y.data[r] = s;
    }
    const int ia = a.id, ib = b.id;
    return tape.record(std::move(Y), {ia, ib}, [ia, ib](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        const Matrix<T>& A = tp.value(ia);
        const Matrix<T>& B = tp.value(ib);
        if (tp.requires_grad(ia)) {
            Matrix<T>& ga = tp.grad(ia);
            for (int r = 0; r < A.rows; ++r)
                for (int c = 0; c < A.cols; ++c) ga(r, c) += G.data[r] * B(r, c);
        }
        if (tp.requires_grad(ib)) {
            Matrix<T>& gb = tp.grad(ib);
            for (int r = 0; r < A.rows; ++r)
                for (int c = 0; c < A.cols; ++c) gb(r, c) += G.data[r] * A(r, c);
        }
    });
}

template <class T>
Tensor<T> sum(Tensor<T> a) {
    Tape<T>& tape = *same_tape({a});
    T s = 0;
    for (T v : a.value().data) s += v;
    const int ia = a.id;
    return tape.record(Matrix<T>(1, 1, s), {ia}, [ia](Tape<T>& tp, int self) {
        const T g = tp.grad(self).data[0];
        for (T& v : tp.grad(ia).data) v += g;
    });
}

template <class T>
Tensor<T> spmm(std::shared_ptr<const Csr<T>> s, Tensor<T> x) {
    Tape<T>& tape = *same_tape({x});
    const Matrix<T>& X = x.value();
    if (!s || s->cols != X.rows) throw ShapeError("spmm: sparse operand does not match " + X.shape_str());
    Matrix<T> Y(s->rows, X.cols);
    spmm_k(*s, X.cols, X.data.data(), Y.data.data(), false);
    const int ix = x.id;
    std::shared_ptr<const Csr<T>> st = s->symmetric ? s : std::make_shared<const Csr<T>>(s->transpose());
    return tape.record(std::move(Y), {ix}, [ix, st](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        spmm_k(*st, G.cols, G.data.data(), tp.grad(ix).data.data(), true);
    });
}

template <class T>
Tensor<T> causal_attention(Tensor<T> qkv, int batch, int seq, int heads, std::vector<std::uint8_t> valid) {
    Tape<T>& tape = *same_tape({qkv});
    const Matrix<T>& X = qkv.value();
    if (batch < 1 || seq < 1 || heads < 1) throw ShapeError("causal_attention: batch, seq and heads must be >= 1");
    if (X.rows != batch * seq || X.cols % 3 != 0 || (X.cols / 3) % heads != 0)
        throw ShapeError("causal_attention: bad packed QKV shape " + X.shape_str());
    if (static_cast<int>(valid.size()) != batch * seq) throw ShapeError("causal_attention: valid mask length");
    kernels::AttentionShape sh{batch, seq, heads, X.cols / 3};
    auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(batch) * heads * seq * seq);
    Matrix<T> Y(X.rows, sh.model_dim);
    if (kernels::backend() == Backend::serial)
        kernels::serial::attention_forward(sh, X.data.data(), valid.data(), Y.data.data(), probs->data());
    else
        kernels::omp::attention_forward(sh, X.data.data(), valid.data(), Y.data.data(), probs->data());
    const int ix = qkv.id;
    return tape.record(std::move(Y), {ix}, [ix, sh, probs](Tape<T>& tp, int self) {
        const Matrix<T>& G = tp.grad(self);
        const Matrix<T>& X = tp.value(ix);
        if (kernels::backend() == Backend::serial)
            kernels::serial::attention_backward(sh, X.data.data(), probs->data(), G.data.data(),
                                                tp.grad(ix).data.data());
        else
            kernels::omp::attention_backward(sh, X.data.data(), probs->data(), G.data.data(),
                                             tp.grad(ix).data.data());
    });
}

#define GNNDT_OPS(T)                                                                                   \
    template struct Csr<T>;                                                                            \
    template Tensor<T> matmul<T>(Tensor<T>, Tensor<T>);                                                \
    template Tensor<T> add<T>(Tensor<T>, Tensor<T>);                                                   \
    template Tensor<T> sub<T>(Tensor<T>, Tensor<T>);                                                   \
    template Tensor<T> mul<T>(Tensor<T>, Tensor<T>);                                                   \
    template Tensor<T> scale<T>(Tensor<T>, T);                                                         \
    template Tensor<T> square<T>(Tensor<T>);                                                           \
    template Tensor<T> relu<T>(Tensor<T>);                                                             \
    template Tensor<T> tanh<T>(Tensor<T>);                                                             \
    template Tensor<T> gelu<T>(Tensor<T>);                                                             \
    template Tensor<T> row_softmax<T>(Tensor<T>);                                                      \
    template Tensor<T> layer_norm<T>(Tensor<T>, Tensor<T>, Tensor<T>, T);                              \
    template Tensor<T> mean_rows<T>(Tensor<T>);                                                        \
    template Tensor<T> segment_mean<T>(Tensor<T>, const std::vector<int>&);                            \
    template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                                  \
    template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                                  \
    template Tensor<T> slice_rows<T>(Tensor<T>, int, int);                                             \
    template Tensor<T> slice_cols<T>(Tensor<T>, int, int);                                             \
    template Tensor<T> gather_rows<T>(Tensor<T>, const std::vector<int>&);                             \
    template Tensor<T> gather_elements<T>(Tensor<T>, const std::vector<int>&, const std::vector<int>&); \
    template Tensor<T> dot<T>(Tensor<T>, Tensor<T>);                                                   \
    template Tensor<T> row_dot<T>(Tensor<T>, Tensor<T>);                                               \
    template Tensor<T> sum<T>(Tensor<T>);                                                              \
    template Tensor<T> spmm<T>(std::shared_ptr<const Csr<T>>, Tensor<T>);                              \
    template Tensor<T> causal_attention<T>(Tensor<T>, int, int, int, std::vector<std::uint8_t>);

GNNDT_OPS(float)
GNNDT_OPS(double)

#undef GNNDT_OPS

}  // namespace gnndt::ad
