// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts, plus one full training step.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gnndt/ad/kernels.hpp"
#include "gnndt/ad/tape.hpp"
#include "gnndt/model/gnn_dt.hpp"
#include "gnndt/policy/policies.hpp"

using namespace gnndt;
namespace k = gnndt::ad::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> d;
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

template <bool Omp>
void bm_gemm(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0));
    const auto a = noise(std::size_t(n) * n, 1), b = noise(std::size_t(n) * n, 2);
    std::vector<float> c(std::size_t(n) * n);
    for (auto _ : st) {
        if constexpr (Omp)
            k::omp::gemm(n, n, n, a.data(), false, b.data(), true, c.data(), false);
        else
            k::serial::gemm(n, n, n, a.data(), false, b.data(), true, c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    st.SetItemsProcessed(st.iterations() * 2LL * n * n * n);
}

// block-diagonal path graphs, about what a batch of state graphs looks like
template <bool Omp>
void bm_spmm(benchmark::State& st) {
    const int rows = static_cast<int>(st.range(0)), F = 32;
    std::vector<int> ptr{0}, col;
    std::vector<float> val;
    for (int r = 0; r < rows; ++r) {
        for (int c = std::max(0, r - 1); c <= std::min(rows - 1, r + 1); ++c) {
            col.push_back(c);
            val.push_back(1.0f / 3.0f);
        }
        ptr.push_back(static_cast<int>(col.size()));
    }
    const auto x = noise(std::size_t(rows) * F, 3);
    std::vector<float> y(x.size());
    for (auto _ : st) {
        if constexpr (Omp)
            k::omp::spmm(rows, F, ptr.data(), col.data(), val.data(), x.data(), y.data(), false);
        else
            k::serial::spmm(rows, F, ptr.data(), col.data(), val.data(), x.data(), y.data(), false);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Omp>
void bm_attention(benchmark::State& st) {
    k::AttentionShape s;
    s.batch = static_cast<int>(st.range(0));
    s.seq = 30;
    s.heads = 4;
    s.model_dim = 64;
    const auto qkv = noise(std::size_t(s.batch) * s.seq * 3 * s.model_dim, 4);
    std::vector<std::uint8_t> valid(std::size_t(s.batch) * s.seq, 1);
    std::vector<float> out(std::size_t(s.batch) * s.seq * s.model_dim);
    std::vector<float> probs(std::size_t(s.batch) * s.heads * s.seq * s.seq);
    std::vector<float> dqkv(qkv.size());
    for (auto _ : st) {
        if constexpr (Omp) {
            k::omp::attention_forward(s, qkv.data(), valid.data(), out.data(), probs.data());
            k::omp::attention_backward(s, qkv.data(), probs.data(), out.data(), dqkv.data());
        } else {
            k::serial::attention_forward(s, qkv.data(), valid.data(), out.data(), probs.data());
            k::serial::attention_backward(s, qkv.data(), probs.data(), out.data(), dqkv.data());
        }
        benchmark::DoNotOptimize(dqkv.data());
    }
}

template <bool Omp>
void bm_layer_norm(benchmark::State& st) {
    const int rows = static_cast<int>(st.range(0)), n = 64;
    const auto x = noise(std::size_t(rows) * n, 5);
    std::vector<float> gain(n, 1.0f), bias(n, 0.0f), y(x.size()), xhat(x.size()), rstd(rows), dx(x.size()), dgain(n), dbias(n);
    for (auto _ : st) {
        if constexpr (Omp) {
            k::omp::layer_norm_forward(rows, n, x.data(), gain.data(), bias.data(), 1e-5f, y.data(), xhat.data(),
                                       rstd.data());
            k::omp::layer_norm_backward(rows, n, y.data(), xhat.data(), rstd.data(), gain.data(), dx.data(), dgain.data(),
                                        dbias.data());
        } else {
            k::serial::layer_norm_forward(rows, n, x.data(), gain.data(), bias.data(), 1e-5f, y.data(), xhat.data(),
                                          rstd.data());
            k::serial::layer_norm_backward(rows, n, y.data(), xhat.data(), rstd.data(), gain.data(), dx.data(),
                                           dgain.data(), dbias.data());
        }
        benchmark::DoNotOptimize(dx.data());
    }
}

// forward + backward of the desk-scale model on a 32-window batch, per backend
void bm_train_step(benchmark::State& st) {
    k::set_backend(st.range(0) ? k::Backend::omp : k::Backend::serial);
    static const Dataset data = [] {
        Dataset d;
        ScenarioConfig c;
        c.num_chargers = 3;
        c.horizon = 96;
        for (std::uint64_t s = 0; s < 8; ++s) {
            CafapPolicy p;
            d.trajectories.push_back(record_trajectory(p, std::make_shared<const Scenario>(generate_scenario(c, s))));
        }
        return d;
    }();
    model::ModelConfig mc;
    mc.embed_dim = 64;
    model::GnnDt<float> m(mc, 0);
    std::mt19937_64 rng(0);
    const auto batch = model::make_batch(sample_window(data, mc.context_K, 32, rng));
    for (auto _ : st) {
        m.params().zero_grad();
        ad::Tape<float> tape;
        const auto out = m.forward(tape, batch);
        tape.backward(m.loss(tape, batch, out));
    }
    k::set_backend(k::Backend::omp);
}

}  // namespace

BENCHMARK(bm_gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_spmm<false>)->Name("spmm/serial")->Arg(4096)->Arg(65536);
BENCHMARK(bm_spmm<true>)->Name("spmm/omp")->Arg(4096)->Arg(65536);
BENCHMARK(bm_attention<false>)->Name("attention/serial")->Arg(8)->Arg(32);
BENCHMARK(bm_attention<true>)->Name("attention/omp")->Arg(8)->Arg(32);
BENCHMARK(bm_layer_norm<false>)->Name("layer_norm/serial")->Arg(960)->Arg(7680);
BENCHMARK(bm_layer_norm<true>)->Name("layer_norm/omp")->Arg(960)->Arg(7680);
BENCHMARK(bm_train_step)->Name("train_step")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
