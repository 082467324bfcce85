// SPDX-License-Identifier: Apache-2.0
#include "gnndt/model/gnn_dt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "gnndt/error.hpp"

namespace gnndt::model {

using ad::Matrix;
using ad::Tape;
using ad::Tensor;

std::string to_string(EmbedderKind kind) { return kind == EmbedderKind::gnn ? "gnn" : "flat_mlp"; }

EmbedderKind parse_embedder_kind(const std::string& name) {
    if (name == "gnn") return EmbedderKind::gnn;
    if (name == "flat_mlp") return EmbedderKind::flat_mlp;
    throw ConfigError("unknown embedder kind '" + name + "'");
}

bool ModelConfig::size_locked() const {
    return state_embedder == EmbedderKind::flat_mlp || action_embedder == EmbedderKind::flat_mlp ||
           !use_residual_decode;
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string("model: ") + name + " must be >= 1");
    };
    positive(context_K, "context_K");
    positive(embed_dim, "embed_dim");
    positive(gnn_feature_dim, "gnn_feature_dim");
    positive(gnn_hidden_dim, "gnn_hidden_dim");
    positive(attention_heads, "attention_heads");
    positive(max_episode_steps, "max_episode_steps");
    if (decoder_layers < 0) throw ConfigError("model: decoder_layers must be >= 0");
    if (embed_dim % attention_heads != 0) throw ConfigError("model: embed_dim must be divisible by attention_heads");
    if (state_embedder == EmbedderKind::gnn) positive(gcn_layers_state, "gcn_layers_state");
    if (action_embedder == EmbedderKind::gnn) positive(gcn_layers_action, "gcn_layers_action");
    if (!(rtg_scale > 0.0) || !std::isfinite(rtg_scale)) throw ConfigError("model: rtg_scale must be positive");
    if (use_residual_decode && state_embedder != EmbedderKind::gnn)
        throw ConfigError("model: residual decode needs the graph state embedder");
    if (size_locked()) {
        positive(num_chargers, "num_chargers");
        positive(num_groups, "num_groups");
    }
}

ModelConfig flat_dt_config(ModelConfig base, int num_chargers, int num_groups) {
    base.state_embedder = EmbedderKind::flat_mlp;
    base.action_embedder = EmbedderKind::flat_mlp;
    base.use_residual_decode = false;
    base.use_action_mask_loss = false;
    base.num_chargers = num_chargers;
    base.num_groups = num_groups;
    return base;
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"context_K", c.context_K},
            {"embed_dim", c.embed_dim},
            {"gnn_feature_dim", c.gnn_feature_dim},
            {"gnn_hidden_dim", c.gnn_hidden_dim},
            {"gcn_layers_state", c.gcn_layers_state},
            {"gcn_layers_action", c.gcn_layers_action},
            {"decoder_layers", c.decoder_layers},
            {"attention_heads", c.attention_heads},
            {"state_embedder", to_string(c.state_embedder)},
            {"action_embedder", to_string(c.action_embedder)},
            {"use_residual_decode", c.use_residual_decode},
            {"use_action_mask_loss", c.use_action_mask_loss},
            {"rtg_scale", c.rtg_scale},
            {"max_episode_steps", c.max_episode_steps},
            {"num_chargers", c.num_chargers},
            {"num_groups", c.num_groups}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.context_K = j.value("context_K", c.context_K);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.gnn_feature_dim = j.value("gnn_feature_dim", c.gnn_feature_dim);
        c.gnn_hidden_dim = j.value("gnn_hidden_dim", c.gnn_hidden_dim);
        c.gcn_layers_state = j.value("gcn_layers_state", c.gcn_layers_state);
        c.gcn_layers_action = j.value("gcn_layers_action", c.gcn_layers_action);
        c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
        c.attention_heads = j.value("attention_heads", c.attention_heads);
        c.state_embedder = parse_embedder_kind(j.value("state_embedder", to_string(c.state_embedder)));
        c.action_embedder = parse_embedder_kind(j.value("action_embedder", to_string(c.action_embedder)));
        c.use_residual_decode = j.value("use_residual_decode", c.use_residual_decode);
        c.use_action_mask_loss = j.value("use_action_mask_loss", c.use_action_mask_loss);
        c.rtg_scale = j.value("rtg_scale", c.rtg_scale);
        c.max_episode_steps = j.value("max_episode_steps", c.max_episode_steps);
        c.num_chargers = j.value("num_chargers", c.num_chargers);
        c.num_groups = j.value("num_groups", c.num_groups);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelBatch make_batch(const std::vector<Window>& windows) {
    ModelBatch mb;
    mb.batch = static_cast<int>(windows.size());
    mb.K = windows.empty() ? 0 : static_cast<int>(windows.front().positions.size());
    mb.steps.reserve(static_cast<std::size_t>(mb.batch) * mb.K);
    for (const auto& w : windows) {
        if (static_cast<int>(w.positions.size()) != mb.K) throw ConfigError("windows of different lengths in a batch");
        for (const auto& p : w.positions) {
            StepInput s;
            if (!p.pad) {
                s.state = &p.step->graph;
                s.target = &p.step->action;
                if (p.prev) {
                    s.prev_state = &p.prev->graph;
                    s.prev_action = &p.prev->action;
                }
                s.rtg = p.rtg;
                s.timestep = p.timestep;
                s.pad = false;
            }
            mb.steps.push_back(s);
        }
    }
    return mb;
}

namespace {

constexpr double kChargerKw = 22.0;
constexpr double kSiteKw = 100.0;
constexpr double kSteps = 32.0;
constexpr double kOrdinals = 10.0;

const std::array<NodeKind, 4> kStateKinds{NodeKind::CPO, NodeKind::TR, NodeKind::CS, NodeKind::EV};
const std::array<NodeKind, 1> kActionKinds{NodeKind::EV_ACTION};

std::string kind_name(NodeKind k) { return to_string(k); }

}  // namespace

std::vector<double> scaled_features(const GraphNode& node, int num_chargers, int num_groups) {
    const double idiv = std::max(1, num_chargers - 1);
    const double wdiv = std::max(1, num_groups - 1);
    const auto& f = node.features;
    if (static_cast<int>(f.size()) != feature_width(node.kind))
        throw ConfigError("node of kind " + to_string(node.kind) + " has " + std::to_string(f.size()) + " features");
    switch (node.kind) {
        case NodeKind::EV: return {f[0], f[1] / kSteps, f[2] / kOrdinals, f[3] / idiv, f[4] / wdiv};
        case NodeKind::CS: return {f[0] / kChargerKw, f[1] / kChargerKw, f[2] / idiv};
        case NodeKind::TR: return {f[0] / kSiteKw, f[1] / wdiv};
        case NodeKind::CPO: return {f[0], f[1], f[2], f[3], f[4] / kSiteKw};
        case NodeKind::EV_ACTION: return {f[0], f[1] / idiv, f[2] / wdiv};
    }
    return {};
}

std::vector<double> flat_state_features(const StateGraph& g) {
    const int n = g.num_chargers;
    const int groups = g.num_groups;
    std::vector<double> out;
    out.reserve(6 * n + groups + 5);
    for (int i = 0; i < n; ++i) {
        const auto cs = scaled_features(g.nodes.at(g.cs_node_by_charger.at(i)), n, groups);
        out.insert(out.end(), cs.begin(), cs.end());
        const int ev = g.ev_node_by_charger.at(i);
        if (ev >= 0) {
            const auto f = scaled_features(g.nodes[ev], n, groups);
            out.insert(out.end(), {1.0, f[0], f[1]});
        } else {
            out.insert(out.end(), {0.0, 0.0, 0.0});
        }
    }
    for (int w = 0; w < groups; ++w) out.push_back(scaled_features(g.nodes.at(1 + w), n, groups)[0]);
    const auto cpo = scaled_features(g.nodes.at(0), n, groups);
    out.insert(out.end(), cpo.begin(), cpo.end());
    return out;
}

template <class T>
std::shared_ptr<const ad::Csr<T>> block_adjacency(const std::vector<const Graph*>& graphs, std::vector<int>& offsets) {
    auto s = std::make_shared<ad::Csr<T>>();
    s->symmetric = true;
    offsets.assign(1, 0);
    for (const Graph* g : graphs) {
        if (g && g->size() > 0) {
            const CsrMatrix m = normalized_adjacency_csr(*g);
            const int base = offsets.back();
            for (int r = 0; r < m.rows; ++r) {
                for (int e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) {
                    s->col.push_back(base + m.col[e]);
                    s->val.push_back(static_cast<T>(m.val[e]));
                }
                s->row_ptr.push_back(static_cast<int>(s->col.size()));
            }
            offsets.push_back(base + m.rows);
        } else {
            offsets.push_back(offsets.back());
        }
    }
    s->rows = s->cols = offsets.back();
    return s;
}

template <class T>
Tensor<T> gcn_stack(std::shared_ptr<const ad::Csr<T>> adjacency, Tensor<T> x, const std::vector<Tensor<T>>& weights) {
    for (const auto& w : weights) x = ad::relu(ad::spmm(adjacency, ad::matmul(x, w)));
    return x;
}

template <class T>
Tensor<T> masked_mse_loss(Tensor<T> pred, const Matrix<T>& target, const Matrix<T>& mask, const Matrix<T>& pad,
                          double K) {
    const auto& p = pred.value();
    if (!p.same_shape(target) || !p.same_shape(mask) || !p.same_shape(pad))
        throw ad::ShapeError("masked_mse_loss: pred " + p.shape_str() + ", target " + target.shape_str() + ", mask " +
                             mask.shape_str() + ", pad " + pad.shape_str());
    if (!(K > 0.0)) throw ConfigError("masked_mse_loss: K must be positive");
    Matrix<T> w(p.rows, p.cols);
    for (std::size_t k = 0; k < w.size(); ++k)
        w.data[k] = static_cast<T>(static_cast<double>(mask.data[k]) * (1.0 - static_cast<double>(pad.data[k])) / K);
    Tape<T>& tape = *pred.tape;
    return ad::sum(ad::mul(ad::square(ad::sub(pred, tape.constant(target))), tape.constant(std::move(w))));
}

// ---- GnnDt ----

namespace {

template <class T>
Matrix<T> trunc_normal(int r, int c, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, std);
    Matrix<T> m(r, c);
    for (auto& x : m.data) {
        double v = n(rng);
        while (std::abs(v) > 2.0 * std) v = n(rng);
        x = static_cast<T>(v);
    }
    return m;
}

template <class T>
Matrix<T> glorot(int r, int c, std::mt19937_64& rng) {
    const double lim = std::sqrt(6.0 / (r + c));
    std::uniform_real_distribution<double> u(-lim, lim);
    Matrix<T> m(r, c);
    for (auto& x : m.data) x = static_cast<T>(u(rng));
    return m;
}

constexpr double kInitStd = 0.02;

}  // namespace

template <class T>
GnnDt<T>::GnnDt(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const int D = config_.embed_dim;
    const int F0 = config_.gnn_hidden_dim;
    const int FL = config_.gnn_feature_dim;
    auto linear_params = [&](const std::string& scope, int in, int out) {
        params_.add(scope + ".w", trunc_normal<T>(in, out, kInitStd, rng));
        params_.add(scope + ".b", Matrix<T>(1, out), false);
    };
    auto gnn_params = [&](const std::string& scope, auto kinds, int layers) {
        for (NodeKind k : kinds) linear_params(scope + ".in." + kind_name(k), feature_width(k), F0);
        for (int l = 0; l < layers; ++l) {
            const int out = l + 1 == layers ? FL : F0;
            params_.add(scope + ".gcn." + std::to_string(l), glorot<T>(F0, out, rng));
        }
    };
    const int n = config_.num_chargers;
    const int groups = config_.num_groups;
    if (config_.state_embedder == EmbedderKind::gnn) {
        gnn_params(std::string("state"), kStateKinds, config_.gcn_layers_state);
        linear_params("emb.state", FL, D);
    } else {
        linear_params("flat_state.fc1", 6 * n + groups + 5, D);
        linear_params("flat_state.fc2", D, D);
    }
    if (config_.action_embedder == EmbedderKind::gnn) {
        gnn_params(std::string("action"), kActionKinds, config_.gcn_layers_action);
        linear_params("emb.action", FL, D);
    } else {
        linear_params("flat_action.fc1", n, D);
        linear_params("flat_action.fc2", D, D);
    }
    linear_params("rtg.fc1", 1, D);
    linear_params("rtg.fc2", D, D);
    params_.add("time", Matrix<T>(config_.max_episode_steps, D), false);
    params_.add("embed_ln.g", Matrix<T>(1, D, T(1)), false);
    params_.add("embed_ln.b", Matrix<T>(1, D), false);
    for (int l = 0; l < config_.decoder_layers; ++l) {
        const std::string p = "block." + std::to_string(l);
        params_.add(p + ".ln1.g", Matrix<T>(1, D, T(1)), false);
        params_.add(p + ".ln1.b", Matrix<T>(1, D), false);
        linear_params(p + ".qkv", D, 3 * D);
        linear_params(p + ".proj", D, D);
        params_.add(p + ".ln2.g", Matrix<T>(1, D, T(1)), false);
        params_.add(p + ".ln2.b", Matrix<T>(1, D), false);
        linear_params(p + ".fc", D, 4 * D);
        linear_params(p + ".out", 4 * D, D);
    }
    params_.add("ln_f.g", Matrix<T>(1, D, T(1)), false);
    params_.add("ln_f.b", Matrix<T>(1, D), false);
    linear_params("head", D, config_.use_residual_decode ? FL : n);
}

template <class T>
Tensor<T> GnnDt<T>::linear(Tape<T>& tape, Tensor<T> x, const std::string& scope) {
    return ad::add(ad::matmul(x, tape.param(params_.at(scope + ".w"))), tape.param(params_.at(scope + ".b")));
}

template <class T>
Tensor<T> GnnDt<T>::mlp2(Tape<T>& tape, Tensor<T> x, const std::string& scope) {
    return linear(tape, ad::relu(linear(tape, x, scope + ".fc1")), scope + ".fc2");
}

template <class T>
void GnnDt<T>::check_size(const Graph& g) const {
    if (!config_.size_locked()) return;
    if (g.num_chargers != config_.num_chargers)
        throw ConfigError("model is size-locked to " + std::to_string(config_.num_chargers) + " chargers, got " +
                          std::to_string(g.num_chargers));
    if (config_.state_embedder == EmbedderKind::flat_mlp && g.num_groups != config_.num_groups)
        throw ConfigError("model is size-locked to " + std::to_string(config_.num_groups) + " groups, got " +
                          std::to_string(g.num_groups));
}

template <class T>
GraphEmbedding<T> GnnDt<T>::embed_graphs(Tape<T>& tape, const std::vector<const Graph*>& graphs,
                                         const std::string& scope, int layers) {
    GraphEmbedding<T> out;
    const auto adj = block_adjacency<T>(graphs, out.offsets);
    const int total = out.offsets.back();
    const int G = static_cast<int>(graphs.size());
    if (total == 0) {
        out.pooled = tape.constant(Matrix<T>(G, config_.gnn_feature_dim));
        return out;
    }
    std::array<std::vector<int>, kNumNodeKinds> rows;
    std::array<std::vector<double>, kNumNodeKinds> feats;
    for (int k = 0; k < G; ++k) {
        const Graph* g = graphs[k];
        if (!g) continue;
        for (int v = 0; v < g->size(); ++v) {
            const auto& node = g->nodes[v];
            const int kind = static_cast<int>(node.kind);
            rows[kind].push_back(out.offsets[k] + v);
            const auto f = scaled_features(node, g->num_chargers, g->num_groups);
            feats[kind].insert(feats[kind].end(), f.begin(), f.end());
        }
    }
    std::vector<Tensor<T>> parts;
    std::vector<int> order(total, -1);
    int pos = 0;
    for (int kind = 0; kind < kNumNodeKinds; ++kind) {
        if (rows[kind].empty()) continue;
        const std::string p = scope + ".in." + kind_name(static_cast<NodeKind>(kind));
        if (!params_.find(p + ".w"))
            throw ConfigError("the " + scope + " embedder has no input projection for " +
                              kind_name(static_cast<NodeKind>(kind)) + " nodes");
        const int width = feature_width(static_cast<NodeKind>(kind));
        Matrix<T> x(static_cast<int>(rows[kind].size()), width);
        for (std::size_t e = 0; e < x.size(); ++e) x.data[e] = static_cast<T>(feats[kind][e]);
        parts.push_back(linear(tape, tape.constant(std::move(x)), p));
        for (int r : rows[kind]) order[r] = pos++;
    }
    Tensor<T> x = ad::gather_rows(parts.size() == 1 ? parts.front() : ad::concat_rows(parts), order);
    std::vector<Tensor<T>> weights;
    for (int l = 0; l < layers; ++l) weights.push_back(tape.param(params_.at(scope + ".gcn." + std::to_string(l))));
    out.per_node = gcn_stack(adj, x, weights);
    out.pooled = ad::segment_mean(out.per_node, out.offsets);
    return out;
}

template <class T>
GraphEmbedding<T> GnnDt<T>::embed_state(Tape<T>& tape, const std::vector<const Graph*>& graphs) {
    if (config_.state_embedder != EmbedderKind::gnn) throw ConfigError("model has no graph state embedder");
    for (const Graph* g : graphs)
        if (g && g->size() == 0) throw ConfigError("cannot embed an empty state graph");
    return embed_graphs(tape, graphs, "state", config_.gcn_layers_state);
}

template <class T>
GraphEmbedding<T> GnnDt<T>::embed_action(Tape<T>& tape, const std::vector<const Graph*>& graphs) {
    if (config_.action_embedder != EmbedderKind::gnn) throw ConfigError("model has no graph action embedder");
    return embed_graphs(tape, graphs, "action", config_.gcn_layers_action);
}

template <class T>
Tensor<T> GnnDt<T>::embed_rtg(Tape<T>& tape, const std::vector<double>& g) {
    Matrix<T> x(static_cast<int>(g.size()), 1);
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!std::isfinite(g[k])) throw ConfigError("non-finite return-to-go");
        x.data[k] = static_cast<T>(config_.rtg_scale * g[k]);
    }
    return mlp2(tape, tape.constant(std::move(x)), "rtg");
}

template <class T>
ForwardResult<T> GnnDt<T>::forward(Tape<T>& tape, const ModelBatch& mb) {
    const int B = mb.batch;
    const int K = mb.K;
    const int BK = B * K;
    if (B < 1 || K < 1) throw ad::ShapeError("forward needs a non-empty batch");
    if (K > config_.context_K)
        throw ConfigError("window length " + std::to_string(K) + " exceeds context_K " + std::to_string(config_.context_K));
    if (static_cast<int>(mb.steps.size()) != BK) throw ad::ShapeError("batch holds the wrong number of steps");

    std::vector<const Graph*> states(BK, nullptr);
    std::vector<double> rtg(BK, 0.0);
    std::vector<int> timesteps(BK, -1);
    for (int r = 0; r < BK; ++r) {
        const auto& s = mb.steps[r];
        if (s.pad) continue;
        if (!s.state) throw ConfigError("non-padded step without a state graph");
        check_size(*s.state);
        if (s.timestep < 0 || s.timestep >= config_.max_episode_steps)
            throw ConfigError("timestep " + std::to_string(s.timestep) + " outside the embedding table");
        states[r] = s.state;
        rtg[r] = s.rtg;
        timesteps[r] = s.timestep;
    }

    ForwardResult<T> out;
    GraphEmbedding<T> se;
    Tensor<T> S;
    if (config_.state_embedder == EmbedderKind::gnn) {
        se = embed_state(tape, states);
        S = linear(tape, se.pooled, "emb.state");
    } else {
        const int width = 6 * config_.num_chargers + config_.num_groups + 5;
        Matrix<T> f(BK, width);
        for (int r = 0; r < BK; ++r) {
            if (!states[r]) continue;
            const auto v = flat_state_features(*mb.steps[r].state);
            for (int c = 0; c < width; ++c) f(r, c) = static_cast<T>(v[c]);
        }
        S = mlp2(tape, tape.constant(std::move(f)), "flat_state");
    }

    Tensor<T> A;
    if (config_.action_embedder == EmbedderKind::gnn) {
        std::vector<ActionGraph> owned(BK);
        std::vector<const Graph*> ptrs(BK, nullptr);
        for (int r = 0; r < BK; ++r) {
            const auto& s = mb.steps[r];
            if (s.pad || !s.prev_state || !s.prev_action) continue;
            owned[r] = build_action_graph(*s.prev_state, *s.prev_action);
            ptrs[r] = &owned[r];
        }
        A = linear(tape, embed_action(tape, ptrs).pooled, "emb.action");
    } else {
        const int n = config_.num_chargers;
        Matrix<T> f(BK, n);
        for (int r = 0; r < BK; ++r) {
            const auto& s = mb.steps[r];
            if (s.pad || !s.prev_state || !s.prev_action) continue;
            check_size(*s.prev_state);
            for (int i = 0; i < n; ++i)
                if (s.prev_state->ev_node_by_charger[i] >= 0) f(r, i) = static_cast<T>((*s.prev_action)[i]);
        }
        A = mlp2(tape, tape.constant(std::move(f)), "flat_action");
    }

    Tensor<T> R = embed_rtg(tape, rtg);
    Tensor<T> E = ad::gather_rows(tape.param(params_.at("time")), timesteps);
    R = ad::add(R, E);
    A = ad::add(A, E);
    S = ad::add(S, E);

    const int seq = 3 * K;
    std::vector<int> order(static_cast<std::size_t>(B) * seq);
    std::vector<std::uint8_t> valid(order.size());
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k)
            for (int m = 0; m < 3; ++m) {
                const std::size_t row = static_cast<std::size_t>(b) * seq + 3 * k + m;
                order[row] = m * BK + b * K + k;
                valid[row] = mb.steps[b * K + k].pad ? 0 : 1;
            }
    Tensor<T> x = ad::gather_rows(ad::concat_rows<T>({R, A, S}), order);
    auto ln = [&](Tensor<T> v, const std::string& p) {
        return ad::layer_norm(v, tape.param(params_.at(p + ".g")), tape.param(params_.at(p + ".b")));
    };
    x = ln(x, "embed_ln");
    for (int l = 0; l < config_.decoder_layers; ++l) {
        const std::string p = "block." + std::to_string(l);
        Tensor<T> h = linear(tape, ln(x, p + ".ln1"), p + ".qkv");
        h = ad::causal_attention(h, B, seq, config_.attention_heads, valid);
        x = ad::add(x, linear(tape, h, p + ".proj"));
        h = ad::gelu(linear(tape, ln(x, p + ".ln2"), p + ".fc"));
        x = ad::add(x, linear(tape, h, p + ".out"));
    }
    x = ln(x, "ln_f");
    std::vector<int> state_rows(BK);
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) state_rows[b * K + k] = b * seq + 3 * k + 2;
    out.y = linear(tape, ad::gather_rows(x, state_rows), "head");

    std::vector<int> rows, nodes, chargers;
    for (int r = 0; r < BK; ++r) {
        if (!states[r]) continue;
        const StateGraph& g = *mb.steps[r].state;
        for (int i = 0; i < g.num_chargers; ++i) {
            const int ev = g.ev_node_by_charger[i];
            if (config_.use_action_mask_loss && ev < 0) continue;
            out.slots.push_back({r, i, ev >= 0});
            rows.push_back(r);
            chargers.push_back(i);
            if (config_.use_residual_decode) nodes.push_back(se.offsets[r] + (ev >= 0 ? ev : g.cs_node_by_charger[i]));
        }
    }
    if (out.slots.empty()) {
        out.pred = tape.constant(Matrix<T>(0, 1));
    } else if (config_.use_residual_decode) {
        out.pred = ad::row_dot(ad::gather_rows(out.y, rows), ad::gather_rows(se.per_node, nodes));
    } else {
        out.pred = ad::gather_elements(out.y, rows, chargers);
    }
    return out;
}

template <class T>
Tensor<T> GnnDt<T>::loss(Tape<T>& tape, const ModelBatch& mb, const ForwardResult<T>& out) {
    const int M = static_cast<int>(out.slots.size());
    if (M == 0) return tape.constant(Matrix<T>(1, 1));
    Matrix<T> target(M, 1), mask(M, 1, T(1)), pad(M, 1);
    for (int k = 0; k < M; ++k) {
        const auto& s = mb.steps[out.slots[k].row];
        if (!s.target) throw ConfigError("training step without a target action");
        target.data[k] = static_cast<T>(s.target->at(out.slots[k].charger));
    }
    return masked_mse_loss(out.pred, target, mask, pad, static_cast<double>(mb.batch) * mb.K);
}

template <class T>
std::vector<std::vector<double>> GnnDt<T>::actions_at(const ModelBatch& mb, const ForwardResult<T>& out, int k) const {
    std::vector<std::vector<double>> acts(mb.batch);
    for (int b = 0; b < mb.batch; ++b) {
        const auto& s = mb.at(b, k);
        if (s.state) acts[b].assign(s.state->num_chargers, 0.0);
    }
    const auto& p = out.pred.value();
    for (std::size_t e = 0; e < out.slots.size(); ++e) {
        const auto& slot = out.slots[e];
        if (slot.row % mb.K != k || !slot.connected) continue;
        acts[slot.row / mb.K][slot.charger] = std::clamp(static_cast<double>(p.data[e]), -1.0, 1.0);
    }
    return acts;
}

template class GnnDt<float>;
template class GnnDt<double>;

#define GNNDT_MODEL_FNS(T)                                                                                     \
    template std::shared_ptr<const ad::Csr<T>> block_adjacency<T>(const std::vector<const Graph*>&,          \
                                                                  std::vector<int>&);                         \
    template Tensor<T> gcn_stack<T>(std::shared_ptr<const ad::Csr<T>>, Tensor<T>, const std::vector<Tensor<T>>&); \
    template Tensor<T> masked_mse_loss<T>(Tensor<T>, const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, double);

GNNDT_MODEL_FNS(float)
GNNDT_MODEL_FNS(double)

#undef GNNDT_MODEL_FNS

}  // namespace gnndt::model
