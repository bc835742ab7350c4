#pragma once
// Behavior-aware graph encoder.
//
// Per behavior k and layer l the user side computes
//   e_u^(l+1) = LeakyReLU(W^(l) mean_{i in N_u,k}(e_i^(l) * e_k^(l)))
// (items symmetrically), behavior embeddings follow e_k^(l+1) = W_b^(l) e_k^(l),
// all layers 0..L are mean-pooled, and the pooled per-behavior embeddings of
// a node are mixed by a per-behavior softmax attention over the K behaviors.
// Layer-0 user/item tables are shared by all behaviors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mbssl/graph.hpp"
#include "mbssl/rng.hpp"
#include "mbssl/tape.hpp"

namespace mbssl {

struct ModelConfig {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_behaviors = 0;
  std::size_t dim = 64;
  std::size_t attention_dim = 64;
  std::size_t layers = 4;
  double leaky_slope = 0.01;
  double embedding_dropout = 0.3;
  bool cross_behavior_attention = true;
};

namespace param {
inline const std::string user_embedding = "user_embedding";
inline const std::string item_embedding = "item_embedding";
inline const std::string behavior_embedding = "behavior_embedding";
std::string layer_transform(std::size_t layer);
std::string behavior_transform(std::size_t layer);
std::string attention_w1(std::size_t behavior);
std::string attention_w2(std::size_t behavior);
bool is_embedding_table(const std::string& name);
}  // namespace param

// Scaled-uniform initialization in +-sqrt(6 / (fan_in + fan_out)).
ParameterStore initialize_parameters(const ModelConfig& config, std::uint64_t seed);

void validate(const ModelConfig& config, const ParameterStore& params);

struct NodeEmbeddings {
  Var users;  // |U| x d
  Var items;  // |I| x d
};

// One propagation step under one behavior. behavior_layer holds e^(l) for all
// behaviors (K x d); dropout == nullptr disables embedding dropout.
NodeEmbeddings propagate_layer(const ModelConfig& config, const Adjacency& adjacency, std::size_t behavior,
                               std::size_t layer, const NodeEmbeddings& input, Var behavior_layer, Rng* dropout);

// e^(l+1) = W_b^(l) e^(l), applied to every behavior row of a K x d matrix.
Var update_behavior_embedding(Tape& tape, Var behavior_layer, std::size_t layer);

// Softmax attention of behavior k over the K pooled embeddings of every node
// (each pooled[j] is n x d); returns n x K rows on the simplex.
Var attention_coefficients(Tape& tape, const std::vector<Var>& pooled, std::size_t behavior);

// Row-wise convex combination of the pooled embeddings, weighted by an n x K attention matrix.
Var enhance(Var attention, const std::vector<Var>& pooled);

Var pool_layers(const std::vector<Var>& layers);

struct EncodedState {
  std::vector<Var> users;  // per behavior, enhanced, |U| x d
  std::vector<Var> items;  // per behavior, enhanced, |I| x d
  Var behaviors;           // pooled behavior embeddings, K x d
  std::vector<Var> pooled_users;
  std::vector<Var> pooled_items;
  std::vector<Var> user_attention;  // empty when attention is disabled
  std::vector<Var> item_attention;
};

// Target-behavior embeddings of the graph with E_K replaced by a view's kept edges.
struct ViewState {
  Var users;
  Var items;
};

struct Encoding {
  EncodedState state;
  std::vector<ViewState> views;
};

// Runs the full encoder. Auxiliary-behavior propagation is shared between
// the main pass and the views; only the target behavior is re-propagated.
Encoding encode(Tape& tape, const ModelConfig& config, const MultiBehaviorGraph& graph,
                const std::vector<const AugmentedView*>& views, Rng* dropout);

struct EmbeddingSnapshot {
  std::vector<Tensor> users;
  std::vector<Tensor> items;
  Tensor behaviors;
};

EmbeddingSnapshot snapshot(const EncodedState& state);

// Eval-mode encoding (no dropout, no views).
EmbeddingSnapshot encode_for_inference(ParameterStore& params, const ModelConfig& config,
                                       const MultiBehaviorGraph& graph);

// Binary checkpoint: "MBSSLCKP", u32 version, u32 tensor count, then per
// tensor u32 name length, name bytes, u32 rank, u64 extents, f64 payload.
// All integers and floats little-endian.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mbssl
