#include "mbssl/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace mbssl {

namespace param {
std::string layer_transform(std::size_t layer) { return "layer" + std::to_string(layer) + ".transform"; }
std::string behavior_transform(std::size_t layer) {
  return "layer" + std::to_string(layer) + ".behavior_transform";
}
std::string attention_w1(std::size_t behavior) { return "attention" + std::to_string(behavior) + ".w1"; }
std::string attention_w2(std::size_t behavior) { return "attention" + std::to_string(behavior) + ".w2"; }
bool is_embedding_table(const std::string& name) {
  return name == user_embedding || name == item_embedding || name == behavior_embedding;
}
}  // namespace param

namespace {

Tensor scaled_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double ratio, Rng& rng) {
  Tensor mask(Shape{rows, cols});
  const double keep_scale = 1.0 / (1.0 - ratio);
  for (double& v : mask.values()) v = uniform01(rng) >= ratio ? keep_scale : 0.0;
  return mask;
}

// Layers 0..L of one behavior's propagation, pooled.
struct PooledNodes {
  Var users;
  Var items;
};

PooledNodes propagate_behavior(Tape& tape, const ModelConfig& config, const Adjacency& adjacency,
                               std::size_t behavior, const std::vector<Var>& behavior_layers, Rng* dropout) {
  NodeEmbeddings current{tape.parameter(param::user_embedding), tape.parameter(param::item_embedding)};
  std::vector<Var> user_layers{current.users};
  std::vector<Var> item_layers{current.items};
  for (std::size_t l = 0; l < config.layers; ++l) {
    current = propagate_layer(config, adjacency, behavior, l, current, behavior_layers[l], dropout);
    user_layers.push_back(current.users);
    item_layers.push_back(current.items);
  }
  return {pool_layers(user_layers), pool_layers(item_layers)};
}

std::vector<Var> enhance_all(Tape& tape, const ModelConfig& config, const std::vector<Var>& pooled,
                             std::vector<Var>* attention_out) {
  if (!config.cross_behavior_attention) return pooled;
  std::vector<Var> out;
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    Var a = attention_coefficients(tape, pooled, k);
    if (attention_out) attention_out->push_back(a);
    out.push_back(enhance(a, pooled));
  }
  return out;
}

}  // namespace

ParameterStore initialize_parameters(const ModelConfig& config, std::uint64_t seed) {
  if (config.num_behaviors == 0 || config.dim == 0 || config.attention_dim == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  Rng rng = make_rng(seed, "init");
  const std::size_t d = config.dim;
  ParameterStore ps;
  ps.add(param::user_embedding, scaled_uniform(config.num_users, d, rng));
  ps.add(param::item_embedding, scaled_uniform(config.num_items, d, rng));
  ps.add(param::behavior_embedding, scaled_uniform(config.num_behaviors, d, rng));
  for (std::size_t l = 0; l < config.layers; ++l) {
    ps.add(param::layer_transform(l), scaled_uniform(d, d, rng));
    ps.add(param::behavior_transform(l), scaled_uniform(d, d, rng));
  }
  if (config.cross_behavior_attention) {
    for (std::size_t k = 0; k < config.num_behaviors; ++k) {
      ps.add(param::attention_w1(k), scaled_uniform(d, config.attention_dim, rng));
      ps.add(param::attention_w2(k), scaled_uniform(config.attention_dim, 1, rng));
    }
  }
  return ps;
}

void validate(const ModelConfig& config, const ParameterStore& params) {
  auto expect = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    const Tensor& t = params.get(name);
    if (t.shape() != Shape{rows, cols}) {
      throw std::invalid_argument("parameter " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                                  shape_string(Shape{rows, cols}));
    }
    if (!t.all_finite()) throw std::invalid_argument("parameter " + name + " is not finite");
  };
  expect(param::user_embedding, config.num_users, config.dim);
  expect(param::item_embedding, config.num_items, config.dim);
  expect(param::behavior_embedding, config.num_behaviors, config.dim);
  for (std::size_t l = 0; l < config.layers; ++l) {
    expect(param::layer_transform(l), config.dim, config.dim);
    expect(param::behavior_transform(l), config.dim, config.dim);
  }
  if (config.cross_behavior_attention) {
    for (std::size_t k = 0; k < config.num_behaviors; ++k) {
      expect(param::attention_w1(k), config.dim, config.attention_dim);
      expect(param::attention_w2(k), config.attention_dim, 1);
    }
  }
}

NodeEmbeddings propagate_layer(const ModelConfig& config, const Adjacency& adjacency, std::size_t behavior,
                               std::size_t layer, const NodeEmbeddings& input, Var behavior_layer, Rng* dropout) {
  Tape& tape = *input.users.tape();
  Var transform = tape.parameter(param::layer_transform(layer));
  const std::size_t n_users = input.users.value().rows();
  const std::size_t n_items = input.items.value().rows();

  auto side = [&](Var neighbors_source, const std::vector<std::size_t>& offsets,
                  const std::vector<std::size_t>& indices, std::size_t count) {
    Var aggregated = ops::segment_mean(neighbors_source, offsets, indices);
    Var behavior_rows = ops::gather_rows(behavior_layer, std::vector<std::size_t>(count, behavior));
    Var message = ops::hadamard(aggregated, behavior_rows);
    if (dropout != nullptr && config.embedding_dropout > 0.0) {
      message = ops::dropout(message, dropout_mask(count, config.dim, config.embedding_dropout, *dropout));
    }
    return ops::leaky_relu(ops::matmul(message, transform, false, true), config.leaky_slope);
  };

  NodeEmbeddings out;
  out.users = side(input.items, adjacency.user_offsets(), adjacency.user_items(), n_users);
  out.items = side(input.users, adjacency.item_offsets(), adjacency.item_users(), n_items);
  return out;
}

Var update_behavior_embedding(Tape& tape, Var behavior_layer, std::size_t layer) {
  return ops::matmul(behavior_layer, tape.parameter(param::behavior_transform(layer)), false, true);
}

Var attention_coefficients(Tape& tape, const std::vector<Var>& pooled, std::size_t behavior) {
  Var w1 = tape.parameter(param::attention_w1(behavior));
  Var w2 = tape.parameter(param::attention_w2(behavior));
  std::vector<Var> logits;
  logits.reserve(pooled.size());
  for (Var p : pooled) logits.push_back(ops::matmul(ops::tanh(ops::matmul(p, w1)), w2));
  return ops::softmax(ops::col_concat(logits), 1);
}

Var enhance(Var attention, const std::vector<Var>& pooled) {
  std::vector<Var> parts;
  parts.reserve(pooled.size());
  for (std::size_t j = 0; j < pooled.size(); ++j) {
    parts.push_back(ops::scale_rows(pooled[j], ops::select_column(attention, j)));
  }
  return ops::sum(parts);
}

Var pool_layers(const std::vector<Var>& layers) {
  if (layers.empty()) throw std::invalid_argument("pool_layers: needs at least one layer");
  return ops::mean(layers);
}

Encoding encode(Tape& tape, const ModelConfig& config, const MultiBehaviorGraph& graph,
                const std::vector<const AugmentedView*>& views, Rng* dropout) {
  if (graph.num_users() != config.num_users || graph.num_items() != config.num_items ||
      graph.num_behaviors() != config.num_behaviors) {
    throw std::invalid_argument("encode: graph dimensions do not match the model configuration");
  }
  const std::size_t K = config.num_behaviors;

  std::vector<Var> behavior_layers{tape.parameter(param::behavior_embedding)};
  for (std::size_t l = 0; l < config.layers; ++l) {
    behavior_layers.push_back(update_behavior_embedding(tape, behavior_layers.back(), l));
  }

  Encoding out;
  out.state.behaviors = pool_layers(behavior_layers);
  for (std::size_t k = 0; k < K; ++k) {
    auto pooled = propagate_behavior(tape, config, graph.adjacency(k), k, behavior_layers, dropout);
    out.state.pooled_users.push_back(pooled.users);
    out.state.pooled_items.push_back(pooled.items);
  }
  out.state.users = enhance_all(tape, config, out.state.pooled_users, &out.state.user_attention);
  out.state.items = enhance_all(tape, config, out.state.pooled_items, &out.state.item_attention);

  const std::size_t target = K - 1;
  for (const AugmentedView* view : views) {
    auto pooled = propagate_behavior(tape, config, view->adjacency, target, behavior_layers, dropout);
    ViewState vs;
    if (config.cross_behavior_attention) {
      auto users = out.state.pooled_users;
      auto items = out.state.pooled_items;
      users[target] = pooled.users;
      items[target] = pooled.items;
      vs.users = enhance(attention_coefficients(tape, users, target), users);
      vs.items = enhance(attention_coefficients(tape, items, target), items);
    } else {
      vs.users = pooled.users;
      vs.items = pooled.items;
    }
    out.views.push_back(vs);
  }
  return out;
}

EmbeddingSnapshot snapshot(const EncodedState& state) {
  EmbeddingSnapshot snap;
  for (Var v : state.users) snap.users.push_back(v.value());
  for (Var v : state.items) snap.items.push_back(v.value());
  snap.behaviors = state.behaviors.value();
  return snap;
}

EmbeddingSnapshot encode_for_inference(ParameterStore& params, const ModelConfig& config,
                                       const MultiBehaviorGraph& graph) {
  Tape tape(params);
  auto encoding = encode(tape, config, graph, {}, nullptr);
  return snapshot(encoding.state);
}

}  // namespace mbssl
