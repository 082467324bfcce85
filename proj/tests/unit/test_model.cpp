// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "gnndt/ad/checkpoint.hpp"
#include "gnndt/ad/gradcheck.hpp"
#include "gnndt/ad/optim.hpp"
#include "gnndt/error.hpp"
#include "gnndt/model/gnn_dt.hpp"
#include "support.hpp"

using namespace gnndt;
using namespace gnndt::model;
using gnndt::ad::Matrix;
using gnndt::ad::Tape;
using gnndt::testing::manual_scenario;
using gnndt::testing::session;
using gnndt::testing::small_config;

namespace {

ModelConfig tiny_model(int K = 3) {
    ModelConfig c;
    c.context_K = K;
    c.embed_dim = 16;
    c.gnn_feature_dim = 4;
    c.gnn_hidden_dim = 8;
    c.gcn_layers_state = 2;
    c.gcn_layers_action = 2;
    c.decoder_layers = 1;
    c.attention_heads = 2;
    return c;
}

Dataset small_dataset(int chargers, int episodes, std::uint64_t seed) {
    Dataset d;
    for (int e = 0; e < episodes; ++e) {
        auto sc = std::make_shared<const Scenario>(generate_scenario(small_config(chargers, 96), seed + e));
        if (e % 2 == 0) {
            CafapPolicy p;
            d.trajectories.push_back(record_trajectory(p, sc));
        } else {
            RandomPolicy p(seed + e);
            d.trajectories.push_back(record_trajectory(p, sc));
        }
    }
    d.refresh_meta();
    return d;
}

// window ending at the first step with at least `min_evs` connected EVs at or after `from`
Window busy_window(const Dataset& d, int index, int K, int min_evs, int from = 0) {
    const auto& tr = d.trajectories.at(index);
    for (int t = std::max(from, K - 1); t < tr.length(); ++t) {
        int evs = 0;
        for (int i : tr.steps[t].graph.ev_node_by_charger) evs += i >= 0;
        if (evs >= min_evs) return make_window(d, index, t, K);
    }
    FAIL("no busy step");
    return {};
}

void jitter(ad::ParameterStore<double>& ps, std::uint64_t seed, double std) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, std);
    for (auto* p : ps.all())
        for (auto& v : p->value.data) v += n(rng);
}

std::vector<int> shuffled(int n, std::mt19937_64& rng) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

}  // namespace

TEST_CASE("gcn on a two-node path") {
    Graph g;
    g.nodes = {{NodeKind::CPO, {0, 0, 0, 0, 0}, {}}, {NodeKind::TR, {0, 0}, {}}};
    g.edges = {{0, 1}};
    std::vector<int> offsets;
    const auto adj = block_adjacency<double>({&g}, offsets);
    Tape<double> tape;
    auto x = tape.constant(Matrix<double>(2, 1, {1.0, 3.0}));
    auto w = tape.constant(Matrix<double>(1, 1, 1.0));
    const auto out = gcn_stack<double>(adj, x, {w});
    CHECK(out.value().data == std::vector<double>{2.0, 2.0});
    CHECK(ad::segment_mean(out, offsets).value().data == std::vector<double>{2.0});
}

TEST_CASE("residual decode is a plain dot product") {
    Tape<double> tape;
    auto y = tape.constant(Matrix<double>(1, 2, {1.0, 2.0}));
    auto x = tape.constant(Matrix<double>(1, 2, {3.0, 4.0}));
    CHECK(ad::row_dot(y, x).item() == 11.0);
}

TEST_CASE("masked mse loss") {
    ad::ParameterStore<double> ps;
    auto& p = ps.add("p", Matrix<double>(1, 2, {0.5, 0.3}));
    Tape<double> tape;
    const Matrix<double> target(1, 2, {0.4, 0.0}), mask(1, 2, {1.0, 0.0}), pad(1, 2);
    auto l = masked_mse_loss(tape.param(p), target, mask, pad, 1.0);
    CHECK(l.item() == doctest::Approx(0.01).epsilon(1e-12));
    tape.backward(l);
    CHECK(p.grad(0, 1) == 0.0);
    CHECK(p.grad(0, 0) == doctest::Approx(0.2));

    Tape<double> t2;
    const Matrix<double> ones(1, 2, 1.0);
    auto all = masked_mse_loss(t2.constant(p.value), target, ones, pad, 1.0);
    CHECK(all.item() == doctest::Approx(2.0 * (0.01 + 0.09) / 2.0));
    auto padded = masked_mse_loss(t2.constant(p.value), target, ones, ones, 1.0);
    CHECK(padded.item() == 0.0);
    CHECK_THROWS_AS(masked_mse_loss(t2.constant(p.value), Matrix<double>(2, 1), ones, pad, 1.0), ad::ShapeError);
}

TEST_CASE("model config") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK_FALSE(c.size_locked());
    CHECK(model_config_from_json(to_json(c)).embed_dim == 128);
    auto bad = c;
    bad.embed_dim = 30;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.context_K = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.use_residual_decode = false;
    CHECK_THROWS_AS(bad.validate(), ConfigError);  // size-locked without a charger count
    bad.num_chargers = 3;
    CHECK_NOTHROW(bad.validate());
    bad.state_embedder = EmbedderKind::flat_mlp;
    bad.use_residual_decode = true;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    const auto flat = flat_dt_config(c, 3, 1);
    CHECK(flat.size_locked());
    const auto back = model_config_from_json(to_json(flat));
    CHECK(back.state_embedder == EmbedderKind::flat_mlp);
    CHECK(back.num_chargers == 3);
    CHECK_THROWS_AS(model_config_from_json({{"state_embedder", "gat"}}), ConfigError);
}

TEST_CASE("state embedding is permutation equivariant") {
    GnnDt<double> m(tiny_model(), 1);
    jitter(m.params(), 2, 0.3);
    auto cfg = small_config(6, 96);
    cfg.num_groups = 2;
    const auto sc = generate_scenario(cfg, 4);
    SimState st = initial_state(sc);
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 5; ++rep) {
        for (int t = 0; t < 9; ++t) st = step(sc, st, std::vector<double>(6, 0.3)).next;
        const auto g = build_state_graph(st, sc);
        Tape<double> t0(false);
        const auto base = m.embed_state(t0, {&g});
        for (int k = 0; k < 10; ++k) {
            const auto p = shuffled(g.size(), rng);
            const auto pg = permute_graph(g, p);
            Tape<double> t1(false);
            const auto e = m.embed_state(t1, {&pg});
            for (int c = 0; c < 4; ++c)
                REQUIRE(std::abs(e.pooled.value()(0, c) - base.pooled.value()(0, c)) < 1e-6);
            for (int v = 0; v < g.size(); ++v)
                for (int c = 0; c < 4; ++c)
                    REQUIRE(std::abs(e.per_node.value()(p[v], c) - base.per_node.value()(v, c)) < 1e-6);
        }
    }
}

TEST_CASE("embedding shapes and conventions") {
    GnnDt<double> m(tiny_model(), 3);
    for (int n : {1, 7, 20}) {
        std::vector<ChargingSession> ss;
        for (int i = 0; i < n; i += 2) ss.push_back(session(i, 0, 4, 10.0, 40.0));
        const auto sc = manual_scenario(n, 4, 0.2, 50.0, ss);
        const auto g = build_state_graph(initial_state(sc), sc);
        Tape<double> tape(false);
        const auto e = m.embed_state(tape, {&g});
        CHECK(e.pooled.rows() == 1);
        CHECK(e.pooled.cols() == 4);
        CHECK(e.per_node.rows() == g.size());
    }

    Tape<double> tape(false);
    ActionGraph empty;
    const auto z = m.embed_action(tape, {&empty});
    for (double v : z.pooled.value().data) CHECK(v == 0.0);

    const auto sc = manual_scenario(2, 4, 0.2, 50.0, {session(1, 0, 4, 10.0, 40.0)});
    const auto ag = build_action_graph(initial_state(sc), sc, std::vector<double>{0.0, 0.7});
    REQUIRE(ag.size() == 1);
    const auto one = m.embed_action(tape, {&ag});
    for (int c = 0; c < 4; ++c) CHECK(one.pooled.value()(0, c) == one.per_node.value()(0, c));

    const auto r = m.embed_rtg(tape, {0.0, -500.0});
    CHECK(r.rows() == 2);
    CHECK(r.cols() == 16);
    for (int c = 0; c < 16; ++c) CHECK(r.value()(0, c) == 0.0);
    CHECK_THROWS_AS(m.embed_state(tape, {&empty}), ConfigError);
}

TEST_CASE("action embedding is permutation invariant") {
    GnnDt<double> m(tiny_model(), 5);
    jitter(m.params(), 6, 0.3);
    auto cfg = small_config(8, 96);
    cfg.num_groups = 3;
    const auto sc = generate_scenario(cfg, 2);
    SimState st = initial_state(sc);
    for (int t = 0; t < 40; ++t) st = step(sc, st, std::vector<double>(8, 0.1)).next;
    std::vector<double> a(8);
    for (int i = 0; i < 8; ++i) a[i] = 0.1 * i - 0.3;
    const auto ag = build_action_graph(st, sc, a);
    REQUIRE(ag.size() >= 2);
    Tape<double> tape(false);
    const auto base = m.embed_action(tape, {&ag});
    std::mt19937_64 rng(1);
    for (int k = 0; k < 20; ++k) {
        const auto pg = permute_graph(ag, shuffled(ag.size(), rng));
        const auto e = m.embed_action(tape, {&pg});
        for (int c = 0; c < 4; ++c) REQUIRE(std::abs(e.pooled.value()(0, c) - base.pooled.value()(0, c)) < 1e-6);
    }
}

TEST_CASE("forward decodes one action per connected EV") {
    const auto d = small_dataset(4, 2, 10);
    GnnDt<double> m(tiny_model(3), 7);
    const auto w = busy_window(d, 0, 3, 2);
    const auto mb = make_batch({w});
    Tape<double> tape(false);
    const auto out = m.forward(tape, mb);
    for (int k = 0; k < 3; ++k) {
        const auto& s = mb.at(0, k);
        int evs = 0;
        for (int i : s.state->ev_node_by_charger) evs += i >= 0;
        int got = 0;
        for (const auto& slot : out.slots) got += slot.row == k;
        CHECK(got == evs);
    }
    const auto acts = m.actions_at(mb, out, 2);
    REQUIRE(acts.size() == 1);
    CHECK(acts[0].size() == 4);
    for (double v : acts[0]) CHECK(std::abs(v) <= 1.0);

    auto cfg = tiny_model(3);
    cfg.use_action_mask_loss = false;
    GnnDt<double> all(cfg, 7);
    Tape<double> t2(false);
    CHECK(all.forward(t2, mb).slots.size() == 3 * 4);

    auto wide = make_window(d, 0, 5, 4);
    Tape<double> t3(false);
    CHECK_THROWS_AS(m.forward(t3, make_batch({wide})), ConfigError);
}

TEST_CASE("decoded actions do not depend on node order") {
    const auto d = small_dataset(5, 1, 30);
    GnnDt<double> m(tiny_model(3), 8);
    jitter(m.params(), 9, 0.2);
    const auto w = busy_window(d, 0, 3, 3);
    const auto mb = make_batch({w});
    Tape<double> t0(false);
    const auto base = m.actions_at(mb, m.forward(t0, mb), 2);
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<StateGraph> perm;
        perm.reserve(6);
        auto pmb = mb;
        for (int k = 0; k < 3; ++k) {
            const auto& s = mb.at(0, k);
            perm.push_back(permute_graph(*s.state, shuffled(s.state->size(), rng)));
            pmb.steps[k].state = &perm.back();
            if (s.prev_state) {
                perm.push_back(permute_graph(*s.prev_state, shuffled(s.prev_state->size(), rng)));
                pmb.steps[k].prev_state = &perm.back();
            }
        }
        Tape<double> t1(false);
        const auto got = m.actions_at(pmb, m.forward(t1, pmb), 2);
        for (std::size_t i = 0; i < base[0].size(); ++i) REQUIRE(std::abs(got[0][i] - base[0][i]) < 1e-6);
    }
}

TEST_CASE("causality") {
    const auto d = small_dataset(3, 1, 40);
    GnnDt<double> m(tiny_model(4), 11);
    jitter(m.params(), 12, 0.2);
    const auto w = make_window(d, 0, 60, 4);
    const auto mb = make_batch({w});
    Tape<double> t0(false);
    const auto base = m.forward(t0, mb);
    for (int t = 1; t < 4; ++t) {
        auto pmb = mb;
        pmb.steps[t].rtg += 1234.0;
        std::vector<double> flipped = *mb.steps[t].prev_action;
        for (auto& v : flipped) v = -v + 0.5;
        pmb.steps[t].prev_action = &flipped;
        Tape<double> t1(false);
        const auto out = m.forward(t1, pmb);
        REQUIRE(out.slots.size() == base.slots.size());
        bool later_changed = false;
        for (std::size_t e = 0; e < out.slots.size(); ++e) {
            const double diff = std::abs(out.pred.value().data[e] - base.pred.value().data[e]);
            if (out.slots[e].row < t) REQUIRE(diff < 1e-9);
            else later_changed = later_changed || diff > 1e-9;
        }
        CHECK(later_changed);
    }
}

TEST_CASE("results do not depend on batch composition") {
    const auto d = small_dataset(3, 3, 50);
    GnnDt<double> m(tiny_model(3), 13);
    const auto a = make_window(d, 0, 50, 3);
    const auto b = make_window(d, 1, 1, 3);
    const auto c = make_window(d, 2, 70, 3);
    Tape<double> t0(false), t1(false);
    const auto one = make_batch({a});
    const auto three = make_batch({b, a, c});
    const auto solo = m.actions_at(one, m.forward(t0, one), 2);
    const auto mixed = m.actions_at(three, m.forward(t1, three), 2);
    for (std::size_t i = 0; i < solo[0].size(); ++i) CHECK(std::abs(solo[0][i] - mixed[1][i]) < 1e-12);
}

TEST_CASE("one parameter set serves any site size") {
    GnnDt<double> m(tiny_model(1), 14);
    for (int n = 1; n <= 50; ++n) {
        std::vector<ChargingSession> ss;
        for (int i = 0; i < n; i += 3) ss.push_back(session(i, 0, 4, 10.0, 40.0));
        const auto sc = manual_scenario(n, 4, 0.2, 50.0, ss);
        const auto g = build_state_graph(initial_state(sc), sc);
        ModelBatch mb;
        mb.batch = 1;
        mb.K = 1;
        StepInput s;
        s.state = &g;
        s.pad = false;
        mb.steps = {s};
        Tape<double> tape(false);
        const auto out = m.forward(tape, mb);
        REQUIRE(out.slots.size() == ss.size());
        for (double v : out.pred.value().data) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("flat baseline is size-locked") {
    const auto empty = manual_scenario(3, 4, 0.2, 50.0, {});
    const auto g = build_state_graph(initial_state(empty), empty);
    const auto f = flat_state_features(g);
    CHECK(f.size() == 6 * 3 + 1 + 5);
    for (int i = 0; i < 3; ++i)
        for (int c = 3; c < 6; ++c) CHECK(f[6 * i + c] == 0.0);

    const auto d3 = small_dataset(3, 1, 60);
    const auto d6 = small_dataset(6, 1, 61);
    GnnDt<double> flat(flat_dt_config(tiny_model(3), 3, 1), 15);
    GnnDt<double> gnn(tiny_model(3), 15);
    const auto mb3 = make_batch({make_window(d3, 0, 40, 3)});
    const auto mb6 = make_batch({make_window(d6, 0, 40, 3)});
    Tape<double> tape(false);
    const auto out = flat.forward(tape, mb3);
    CHECK(out.slots.size() == 3 * 3);
    CHECK(flat.actions_at(mb3, out, 2)[0].size() == 3);
    CHECK_THROWS_AS(flat.forward(tape, mb6), ConfigError);
    CHECK_NOTHROW(gnn.forward(tape, mb6));
}

TEST_CASE("end-to-end gradient check") {
    const auto d = small_dataset(2, 1, 70);
    for (auto cfg : {tiny_model(3), flat_dt_config(tiny_model(3), 2, 1)}) {
        GnnDt<double> m(cfg, 16);
        jitter(m.params(), 17, 0.2);
        const auto mb = make_batch({busy_window(d, 0, 3, 2, 5), make_window(d, 0, 1, 3)});
        const auto r = ad::finite_difference_check(
            [&](Tape<double>& tape) {
                const auto out = m.forward(tape, mb);
                return m.loss(tape, mb, out);
            },
            m.params(), 1e-5, 6);
        INFO(r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic << " numeric "
                           << r.worst_numeric);
        CHECK(r.max_rel_error < 1e-3);
    }
}

TEST_CASE("single batch overfit") {
    const auto d = small_dataset(3, 2, 80);
    auto cfg = tiny_model(3);
    cfg.embed_dim = 32;
    cfg.gnn_feature_dim = 8;
    cfg.gnn_hidden_dim = 16;
    GnnDt<float> m(cfg, 18);
    std::mt19937_64 rng(19);
    const auto windows = sample_window(d, 3, 8, rng);
    const auto mb = make_batch(windows);
    ad::AdamWConfig opt_cfg;
    opt_cfg.lr = 1e-3;
    opt_cfg.warmup_steps = 50;
    ad::AdamW<float> opt(m.params(), opt_cfg);
    double loss = 1.0;
    int steps = 0;
    for (; steps < 2000 && loss >= 1e-3; ++steps) {
        m.params().zero_grad();
        Tape<float> tape;
        const auto out = m.forward(tape, mb);
        const auto l = m.loss(tape, mb, out);
        loss = l.item();
        tape.backward(l);
        opt.step();
    }
    MESSAGE("overfit loss " << loss << " after " << steps << " steps");
    CHECK(loss < 1e-3);
}

TEST_CASE("model checkpoint round trip") {
    const auto path = (std::filesystem::temp_directory_path() / "gnndt_test_model.ckpt").string();
    const auto cfg = tiny_model(3);
    GnnDt<float> a(cfg, 20);
    ad::save_checkpoint<float>(path, a.params(), nullptr, to_json(cfg));
    const auto side = ad::read_checkpoint_sidecar(path);
    GnnDt<float> b(model_config_from_json(side), 21);
    CHECK(b.params().digest() != a.params().digest());
    ad::load_checkpoint<float>(path, b.params(), nullptr);
    CHECK(b.params().digest() == a.params().digest());
    auto wider = tiny_model(3);
    wider.embed_dim = 32;
    GnnDt<float> c(wider, 0);
    CHECK_THROWS_AS(ad::load_checkpoint<float>(path, c.params(), nullptr), ConfigError);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}
