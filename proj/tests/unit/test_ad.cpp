// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gnndt/ad/checkpoint.hpp"
#include "gnndt/ad/gradcheck.hpp"
#include "gnndt/ad/kernels.hpp"
#include "gnndt/ad/ops.hpp"
#include "gnndt/ad/optim.hpp"
#include "gnndt/error.hpp"

using namespace gnndt;
using namespace gnndt::ad;

namespace {

Matrix<double> randn(int r, int c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Matrix<double> m(r, c);
    for (auto& x : m.data) x = n(rng);
    return m;
}

template <class T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(u(rng));
    return v;
}

// projects onto a fixed random direction so every output entry matters
Tensor<double> probe(Tensor<double> t, std::uint64_t seed) {
    auto w = t.tape->constant(randn(t.rows(), t.cols(), seed));
    return sum(mul(t, w));
}

void check_op(const char* name, ParameterStore<double>& ps, const LossFn& fn, double tol = 1e-6) {
    const auto r = finite_difference_check(fn, ps);
    INFO(name << ": worst " << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic
              << " numeric " << r.worst_numeric);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < tol);
}

std::shared_ptr<const Csr<double>> ring_csr(int n) {
    auto s = std::make_shared<Csr<double>>();
    s->rows = s->cols = n;
    for (int r = 0; r < n; ++r) {
        s->col.push_back(r);
        s->val.push_back(0.5);
        s->col.push_back((r + 1) % n);
        s->val.push_back(0.25 + 0.1 * r);
        s->row_ptr.push_back(static_cast<int>(s->col.size()));
    }
    return s;
}

}  // namespace

TEST_CASE("forward examples") {
    Tape<double> tape;
    auto a = tape.constant(Matrix<double>(1, 2, {1.0, 2.0}));
    auto b = tape.constant(Matrix<double>(2, 1, {3.0, 4.0}));
    CHECK(matmul(a, b).item() == 11.0);
    auto x = tape.constant(randn(3, 4, 1));
    Matrix<double> eye(4, 4);
    for (int k = 0; k < 4; ++k) eye(k, k) = 1.0;
    CHECK(matmul(x, tape.constant(eye)).value() == x.value());
    auto s = row_softmax(tape.constant(Matrix<double>(1, 2, {0.0, 0.0})));
    CHECK(s.value().data == std::vector<double>{0.5, 0.5});
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("backward examples") {
    ParameterStore<double> ps;
    auto& x = ps.add("x", Matrix<double>(1, 1, 3.0));
    {
        Tape<double> tape;
        auto t = tape.param(x);
        tape.backward(mul(t, t));
        CHECK(x.grad(0, 0) == 6.0);
    }
    auto& m = ps.add("m", randn(2, 3, 2));
    ps.zero_grad();
    {
        Tape<double> tape;
        tape.backward(sum(tape.param(m)));
        for (double g : m.grad.data) CHECK(g == 1.0);
    }
    ps.zero_grad();
    {
        // fan-out: y = x + x*x uses x twice
        Tape<double> tape;
        auto t = tape.param(x);
        tape.backward(add(t, mul(t, t)));
        CHECK(x.grad(0, 0) == 7.0);
    }
    Tape<double> tape;
    CHECK_THROWS_AS(tape.backward(tape.param(m)), ShapeError);
}

TEST_CASE("parameter store") {
    ParameterStore<double> ps;
    ps.add("w", Matrix<double>(2, 3, 1.0));
    ps.add("b", Matrix<double>(1, 3, 0.0), false);
    CHECK(ps.num_tensors() == 2);
    CHECK(ps.num_scalars() == 9);
    CHECK_THROWS(ps.add("w", Matrix<double>(1, 1)));
    CHECK_THROWS(ps.add("", Matrix<double>(1, 1)));
    const auto d = ps.digest();
    ps.at("w").value(0, 0) = 2.0;
    CHECK(ps.digest() != d);
}

TEST_CASE("adamw examples") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    cfg.warmup_steps = 0;
    std::vector<double> p{1.0};
    AdamMoments st;
    adamw_update(p, std::vector<double>{1.0}, st, 1, cfg.lr, cfg);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));

    cfg.weight_decay = 0.1;
    std::vector<double> q{1.0};
    AdamMoments st2;
    adamw_update(q, std::vector<double>{0.0}, st2, 1, cfg.lr, cfg);
    CHECK(q[0] == doctest::Approx(0.99));

    std::vector<double> r{1.0};
    AdamMoments st3;
    adamw_update(r, std::vector<double>{0.0}, st3, 1, cfg.lr, cfg, false);
    CHECK(r[0] == 1.0);

    cfg.warmup_steps = 10;
    CHECK(scheduled_lr(cfg, 5) == doctest::Approx(0.05));
    CHECK(scheduled_lr(cfg, 20) == doctest::Approx(0.1));
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("adamw rejects non-finite gradients") {
    ParameterStore<float> ps;
    auto& a = ps.add("a", Matrix<float>(1, 2, 1.0f));
    auto& b = ps.add("b", Matrix<float>(1, 1, 1.0f));
    AdamW<float> opt(ps, AdamWConfig{});
    a.grad.data = {0.5f, 0.5f};
    b.grad.data = {std::numeric_limits<float>::quiet_NaN()};
    CHECK_THROWS_AS(opt.step(), RuntimeFailure);
    CHECK(a.value.data == std::vector<float>{1.0f, 1.0f});
    CHECK(opt.step_count() == 0);
}

TEST_CASE("finite differences on a quadratic") {
    ParameterStore<double> ps;
    ps.add("x", randn(3, 1, 5));
    const auto r = finite_difference_check(
        [&](Tape<double>& t) { return sum(square(t.param(ps.at("x")))); }, ps);
    CHECK(r.max_rel_error < 1e-9);
    CHECK(r.checked == 3);

    ParameterStore<double> cst;
    cst.add("c", randn(2, 2, 6));
    const auto z = finite_difference_check(
        [&](Tape<double>& t) {
            t.param(cst.at("c"));
            return t.constant(Matrix<double>(1, 1, 4.0));
        },
        cst);
    CHECK(z.max_rel_error == 0.0);
}

TEST_CASE("finite differences for every op") {
    ParameterStore<double> ps;
    auto& a = ps.add("a", randn(4, 3, 11));
    auto& b = ps.add("b", randn(3, 5, 12));
    auto& c = ps.add("c", randn(4, 3, 13));
    auto& row = ps.add("row", randn(1, 3, 14));
    auto& gain = ps.add("gain", randn(1, 3, 15, 0.3));
    auto& bias = ps.add("bias", randn(1, 3, 16));
    for (auto& v : gain.value.data) v += 1.0;
    // keep relu away from its kink
    auto& pos = ps.add("pos", randn(4, 3, 17));
    for (auto& v : pos.value.data) v += (v >= 0 ? 0.1 : -0.1);

    auto P = [](Tape<double>& t, Parameter<double>& p) { return t.param(p); };
    check_op("matmul", ps, [&](Tape<double>& t) { return probe(matmul(P(t, a), P(t, b)), 1); });
    check_op("add", ps, [&](Tape<double>& t) { return probe(add(P(t, a), P(t, c)), 2); });
    check_op("add_row", ps, [&](Tape<double>& t) { return probe(add(P(t, a), P(t, row)), 3); });
    check_op("sub", ps, [&](Tape<double>& t) { return probe(sub(P(t, a), P(t, c)), 4); });
    check_op("mul", ps, [&](Tape<double>& t) { return probe(mul(P(t, a), P(t, c)), 5); });
    check_op("scale", ps, [&](Tape<double>& t) { return probe(scale(P(t, a), 2.5), 6); });
    check_op("square", ps, [&](Tape<double>& t) { return probe(square(P(t, a)), 7); });
    check_op("relu", ps, [&](Tape<double>& t) { return probe(relu(P(t, pos)), 8); });
    check_op("tanh", ps, [&](Tape<double>& t) { return probe(tanh(P(t, a)), 9); });
    check_op("gelu", ps, [&](Tape<double>& t) { return probe(gelu(P(t, a)), 10); });
    check_op("softmax", ps, [&](Tape<double>& t) { return probe(row_softmax(P(t, a)), 11); });
    check_op("layer_norm", ps,
             [&](Tape<double>& t) { return probe(layer_norm(P(t, a), P(t, gain), P(t, bias)), 12); });
    check_op("mean_rows", ps, [&](Tape<double>& t) { return probe(mean_rows(P(t, a)), 13); });
    check_op("segment_mean", ps, [&](Tape<double>& t) {
        return probe(segment_mean(P(t, a), std::vector<int>{0, 1, 1, 4}), 14);
    });
    check_op("concat_rows", ps,
             [&](Tape<double>& t) { return probe(concat_rows<double>({P(t, a), P(t, row), P(t, c)}), 15); });
    check_op("concat_cols", ps,
             [&](Tape<double>& t) { return probe(concat_cols<double>({P(t, a), P(t, c)}), 16); });
    check_op("slice_rows", ps, [&](Tape<double>& t) { return probe(slice_rows(P(t, a), 1, 3), 17); });
    check_op("slice_cols", ps, [&](Tape<double>& t) { return probe(slice_cols(P(t, a), 1, 3), 18); });
    check_op("gather_rows", ps, [&](Tape<double>& t) {
        return probe(gather_rows(P(t, a), std::vector<int>{3, -1, 0, 3}), 19);
    });
    check_op("gather_elements", ps, [&](Tape<double>& t) {
        return probe(gather_elements(P(t, a), std::vector<int>{0, 3, 3, 1}, std::vector<int>{2, 0, 0, 1}), 23);
    });
    check_op("dot", ps, [&](Tape<double>& t) { return dot(P(t, a), P(t, c)); });
    check_op("row_dot", ps, [&](Tape<double>& t) { return probe(row_dot(P(t, a), P(t, c)), 20); });
    const auto ring = ring_csr(4);
    check_op("spmm", ps, [&](Tape<double>& t) { return probe(spmm(ring, P(t, a)), 21); });
}

TEST_CASE("finite differences through causal attention") {
    ParameterStore<double> ps;
    // batch 2, seq 3, model dim 4 over 2 heads
    ps.add("qkv", randn(6, 12, 21, 0.7));
    const std::vector<std::uint8_t> valid{0, 1, 1, 1, 1, 1};
    const auto r = finite_difference_check(
        [&](Tape<double>& t) { return probe(causal_attention(t.param(ps.at("qkv")), 2, 3, 2, valid), 22); }, ps);
    CHECK(r.max_rel_error < 1e-6);

    Tape<double> tape;
    const auto out = causal_attention(tape.constant(ps.at("qkv").value), 2, 3, 2, valid);
    for (int c = 0; c < 4; ++c) CHECK(out.value()(0, c) == 0.0);
}

TEST_CASE("shape and argument errors") {
    Tape<double> tape;
    auto x = tape.constant(Matrix<double>(2, 0));
    CHECK_THROWS_AS(layer_norm(x, tape.constant(Matrix<double>(1, 0)), tape.constant(Matrix<double>(1, 0))),
                    ShapeError);
    auto y = tape.constant(Matrix<double>(2, 3, 1.0));
    CHECK_THROWS_AS(add(y, tape.constant(Matrix<double>(3, 2))), ShapeError);
    CHECK_THROWS_AS(slice_rows(y, 1, 5), ShapeError);
    Tape<double> nograd(false);
    ParameterStore<double> ps;
    auto& p = ps.add("p", Matrix<double>(1, 1, 2.0));
    nograd.backward(sum(mul(nograd.param(p), nograd.param(p))));
    CHECK(p.grad(0, 0) == 0.0);
}

TEST_CASE("serial and omp kernels are bit-identical") {
    kernels::set_threads(4);
    SUBCASE("gemm") {
        for (bool ta : {false, true})
            for (bool tb : {false, true}) {
                const int M = 67, N = 45, K = 129;
                const auto A = random_vec<float>(M * K, 1), B = random_vec<float>(K * N, 2);
                std::vector<float> c1 = random_vec<float>(M * N, 3), c2 = c1;
                kernels::serial::gemm(M, N, K, A.data(), ta, B.data(), tb, c1.data(), true);
                kernels::omp::gemm(M, N, K, A.data(), ta, B.data(), tb, c2.data(), true);
                CHECK(c1 == c2);
            }
    }
    SUBCASE("spmm") {
        const auto ring = ring_csr(300);
        const int F = 64;
        const auto X = random_vec<double>(300 * F, 4);
        std::vector<double> y1(300 * F), y2(300 * F);
        kernels::serial::spmm(300, F, ring->row_ptr.data(), ring->col.data(), ring->val.data(), X.data(), y1.data(),
                              false);
        kernels::omp::spmm(300, F, ring->row_ptr.data(), ring->col.data(), ring->val.data(), X.data(), y2.data(),
                           false);
        CHECK(y1 == y2);
    }
    SUBCASE("layer norm") {
        const int rows = 500, n = 64;
        const auto x = random_vec<float>(rows * n, 5), g = random_vec<float>(n, 6), b = random_vec<float>(n, 7);
        const auto dy = random_vec<float>(rows * n, 8);
        std::vector<float> y1(rows * n), y2(rows * n), h1(rows * n), h2(rows * n), r1(rows), r2(rows);
        kernels::serial::layer_norm_forward(rows, n, x.data(), g.data(), b.data(), 1e-5f, y1.data(), h1.data(), r1.data());
        kernels::omp::layer_norm_forward(rows, n, x.data(), g.data(), b.data(), 1e-5f, y2.data(), h2.data(), r2.data());
        CHECK(y1 == y2);
        std::vector<float> dx1(rows * n), dx2(rows * n), dg1(n), dg2(n), db1(n), db2(n);
        kernels::serial::layer_norm_backward(rows, n, dy.data(), h1.data(), r1.data(), g.data(), dx1.data(), dg1.data(),
                                             db1.data());
        kernels::omp::layer_norm_backward(rows, n, dy.data(), h2.data(), r2.data(), g.data(), dx2.data(), dg2.data(),
                                          db2.data());
        CHECK(dx1 == dx2);
        CHECK(dg1 == dg2);
        CHECK(db1 == db2);
    }
    SUBCASE("attention") {
        kernels::AttentionShape s{8, 30, 4, 64};
        const auto qkv = random_vec<float>(s.batch * s.seq * 3 * s.model_dim, 9);
        const auto dout = random_vec<float>(s.batch * s.seq * s.model_dim, 10);
        std::vector<std::uint8_t> valid(s.batch * s.seq, 1);
        for (int k = 0; k < 5; ++k) valid[k] = 0;
        const std::size_t np = static_cast<std::size_t>(s.batch) * s.heads * s.seq * s.seq;
        std::vector<float> o1(dout.size()), o2(dout.size()), p1(np), p2(np);
        kernels::serial::attention_forward(s, qkv.data(), valid.data(), o1.data(), p1.data());
        kernels::omp::attention_forward(s, qkv.data(), valid.data(), o2.data(), p2.data());
        CHECK(o1 == o2);
        CHECK(p1 == p2);
        std::vector<float> d1(qkv.size()), d2(qkv.size());
        kernels::serial::attention_backward(s, qkv.data(), p1.data(), dout.data(), d1.data());
        kernels::omp::attention_backward(s, qkv.data(), p2.data(), dout.data(), d2.data());
        CHECK(d1 == d2);
    }
}

TEST_CASE("checkpoint round trip and corruption") {
    const auto path = (std::filesystem::temp_directory_path() / "gnndt_test_ckpt.bin").string();
    ParameterStore<float> ps;
    auto& w = ps.add("w", cast<float>(randn(3, 4, 30)));
    ps.add("b", Matrix<float>(1, 4, 0.5f), false);
    AdamW<float> opt(ps, AdamWConfig{});
    for (auto& g : w.grad.data) g = 0.1f;
    opt.step();
    save_checkpoint<float>(path, ps, &opt, nlohmann::json{{"d_model", 4}});

    ParameterStore<float> back;
    back.add("w", Matrix<float>(3, 4));
    back.add("b", Matrix<float>(1, 4), false);
    AdamW<float> opt2(back, AdamWConfig{});
    const auto side = load_checkpoint<float>(path, back, &opt2);
    CHECK(side.at("d_model") == 4);
    CHECK(back.digest() == ps.digest());
    CHECK(opt2.step_count() == 1);
    CHECK(opt2.moments()[0].m == opt.moments()[0].m);

    ParameterStore<double> wide;
    wide.add("w", Matrix<double>(3, 4));
    wide.add("b", Matrix<double>(1, 4));
    load_checkpoint<double>(path, wide, nullptr);
    CHECK(static_cast<float>(wide.at("w").value(2, 3)) == w.value(2, 3));

    ParameterStore<float> wrong;
    wrong.add("w", Matrix<float>(4, 3));
    wrong.add("b", Matrix<float>(1, 4));
    CHECK_THROWS_AS(load_checkpoint<float>(path, wrong, nullptr), ConfigError);

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        f.put('\x7f');
    }
    CHECK_THROWS_AS(load_checkpoint<float>(path, back, nullptr), RuntimeFailure);
    CHECK_THROWS_AS(load_checkpoint<float>(path + ".missing", back, nullptr), RuntimeFailure);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}
