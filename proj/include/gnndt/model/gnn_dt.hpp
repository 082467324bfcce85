// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "gnndt/ad/ops.hpp"
#include "gnndt/ad/tape.hpp"
#include "gnndt/data/trajectory.hpp"
#include "gnndt/graph/state_graph.hpp"

namespace gnndt::model {

enum class EmbedderKind { gnn, flat_mlp };

std::string to_string(EmbedderKind kind);
EmbedderKind parse_embedder_kind(const std::string& name);

struct ModelConfig {
    int context_K = 10;
    int embed_dim = 128;
    int gnn_feature_dim = 16;  // F_L
    int gnn_hidden_dim = 32;   // F_0 and inner GCN width
    int gcn_layers_state = 3;
    int gcn_layers_action = 3;
    int decoder_layers = 3;
    int attention_heads = 4;
    EmbedderKind state_embedder = EmbedderKind::gnn;
    EmbedderKind action_embedder = EmbedderKind::gnn;
    bool use_residual_decode = true;
    bool use_action_mask_loss = true;
    double rtg_scale = 1e-3;
    int max_episode_steps = 300;
    // only read by the size-locked variants (flat embedders or plain decode head)
    int num_chargers = 0;
    int num_groups = 1;

    /// True when some part of the network has a width tied to the charger count.
    bool size_locked() const;
    void validate() const;
};

/// Flat-DT baseline: flat state and action MLPs, a plain D -> |I| head, loss on every charger.
ModelConfig flat_dt_config(ModelConfig base, int num_chargers, int num_groups);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// One token step of a model input. Pointers reference storage owned by the caller.
struct StepInput {
    const StateGraph* state = nullptr;        // null on padding
    const StateGraph* prev_state = nullptr;   // null at the episode start
    const std::vector<double>* prev_action = nullptr;
    const std::vector<double>* target = nullptr;  // training only, one value per charger
    double rtg = 0.0;
    int timestep = 0;
    bool pad = true;
};

/// `batch` sequences of `K` steps, row-major (sequence, step), oldest step first.
struct ModelBatch {
    int batch = 0;
    int K = 0;
    std::vector<StepInput> steps;

    const StepInput& at(int b, int k) const { return steps[static_cast<std::size_t>(b) * K + k]; }
};

ModelBatch make_batch(const std::vector<Window>& windows);

/// Raw node features rescaled per kind to O(1): ids by their range, charger powers by 22 kW, site powers
/// by 100 kW, times by 32 steps.
std::vector<double> scaled_features(const GraphNode& node, int num_chargers, int num_groups);

/// State vector of the flat baseline, 6|I| + |W| + 5 long; empty chargers are zero slots.
std::vector<double> flat_state_features(const StateGraph& graph);

template <class T>
struct GraphEmbedding {
    ad::Tensor<T> pooled;             // graphs x F_L, zero rows for empty graphs
    ad::Tensor<T> per_node;           // all nodes x F_L, graphs stacked in order (invalid if no nodes)
    std::vector<int> offsets;         // graphs + 1 node offsets
};

/// One decoded action: step row in the batch, charger, and whether an EV was connected there.
struct ActionSlot {
    int row = 0;
    int charger = 0;
    bool connected = false;
};

template <class T>
struct ForwardResult {
    ad::Tensor<T> pred;  // slots x 1, unclipped
    std::vector<ActionSlot> slots;
    ad::Tensor<T> y;     // (batch K) x F_L step tokens, or (batch K) x |I| with the plain head
};

template <class T>
class GnnDt {
public:
    GnnDt(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ad::ParameterStore<T>& params() { return params_; }
    const ad::ParameterStore<T>& params() const { return params_; }

    /// Per-kind projection, GCN stack and mean pooling over a batch of state graphs (nulls are empty).
    GraphEmbedding<T> embed_state(ad::Tape<T>& tape, const std::vector<const Graph*>& graphs);
    GraphEmbedding<T> embed_action(ad::Tape<T>& tape, const std::vector<const Graph*>& graphs);
    /// rows x embed_dim, two-layer MLP on rtg_scale * g.
    ad::Tensor<T> embed_rtg(ad::Tape<T>& tape, const std::vector<double>& g);

    /// Decodes an action for every connected EV of every non-padded step; with the mask loss off,
    /// for every charger of those steps.
    ForwardResult<T> forward(ad::Tape<T>& tape, const ModelBatch& batch);

    /// Masked MSE of a forward pass against the step targets, divided by batch * K.
    ad::Tensor<T> loss(ad::Tape<T>& tape, const ModelBatch& batch, const ForwardResult<T>& out);

    /// Actions at step `k` of every sequence, clipped to [-1, 1], zero where nothing was decoded.
    std::vector<std::vector<double>> actions_at(const ModelBatch& batch, const ForwardResult<T>& out, int k) const;

private:
    GraphEmbedding<T> embed_graphs(ad::Tape<T>& tape, const std::vector<const Graph*>& graphs, const std::string& scope,
                                   int layers);
    ad::Tensor<T> mlp2(ad::Tape<T>& tape, ad::Tensor<T> x, const std::string& scope);
    ad::Tensor<T> linear(ad::Tape<T>& tape, ad::Tensor<T> x, const std::string& scope);
    void check_size(const Graph& g) const;

    ModelConfig config_;
    ad::ParameterStore<T> params_;
};

extern template class GnnDt<float>;
extern template class GnnDt<double>;

/// Graph convolution stack x <- ReLU(S x W_l) over a normalized adjacency S.
template <class T>
ad::Tensor<T> gcn_stack(std::shared_ptr<const ad::Csr<T>> adjacency, ad::Tensor<T> x,
                        const std::vector<ad::Tensor<T>>& weights);

/// Block-diagonal normalized adjacency of several graphs (null entries contribute no nodes).
template <class T>
std::shared_ptr<const ad::Csr<T>> block_adjacency(const std::vector<const Graph*>& graphs, std::vector<int>& offsets);

/// sum(w * (pred - target)^2) with w = mask * (1 - pad) / K, all shaped like pred.
template <class T>
ad::Tensor<T> masked_mse_loss(ad::Tensor<T> pred, const ad::Matrix<T>& target, const ad::Matrix<T>& mask,
                              const ad::Matrix<T>& pad, double K);

}  // namespace gnndt::model
