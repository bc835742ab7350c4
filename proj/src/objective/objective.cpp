#include "mbssl/objective.hpp"

#include <stdexcept>

namespace mbssl {

LossWeights LossWeights::defaults(std::size_t behaviors) {
  LossWeights w;
  w.lambda.assign(behaviors, 1.0 / static_cast<double>(behaviors));
  w.positive.assign(behaviors, 1.0);
  w.negative.assign(behaviors, 0.1);
  return w;
}

void LossWeights::validate(std::size_t behaviors) const {
  if (lambda.size() != behaviors || positive.size() != behaviors || negative.size() != behaviors) {
    throw std::invalid_argument("loss weights need one entry per behavior");
  }
  for (std::size_t k = 0; k < behaviors; ++k) {
    if (lambda[k] < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    if (!(negative[k] > 0.0) || !(negative[k] < positive[k])) {
      throw std::invalid_argument("need 0 < c- < c+ for behavior " + std::to_string(k + 1));
    }
  }
}

Var predict_score(const EncodedState& state, std::size_t user, std::size_t item, std::size_t behavior) {
  Var eu = ops::gather_rows(state.users.at(behavior), {user});
  Var ei = ops::gather_rows(state.items.at(behavior), {item});
  Var ek = ops::gather_rows(state.behaviors, {behavior});
  return ops::reduce_sum(ops::hadamard(ops::hadamard(ek, eu), ei));
}

Var non_sampling_loss(const EncodedState& state, const MultiBehaviorGraph& graph, std::span<const std::size_t> users,
                      std::size_t behavior, double positive_weight, double negative_weight) {
  if (users.empty()) throw std::invalid_argument("non_sampling_loss: empty user batch");
  Var user_table = state.users.at(behavior);
  Var item_table = state.items.at(behavior);
  Var ek = ops::gather_rows(state.behaviors, {behavior});

  Var batch = ops::gather_rows(user_table, {users.begin(), users.end()});
  Var all_items = ops::hadamard(ops::hadamard(ops::matmul(ek, ek, true, false), ops::matmul(batch, batch, true, false)),
                                ops::matmul(item_table, item_table, true, false));
  Var loss = ops::scale(ops::reduce_sum(all_items), negative_weight);

  std::vector<std::size_t> pair_users;
  std::vector<std::size_t> pair_items;
  const Adjacency& adj = graph.adjacency(behavior);
  for (std::size_t u : users) {
    for (std::size_t i : adj.user_neighbors(u)) {
      pair_users.push_back(u);
      pair_items.push_back(i);
    }
  }
  if (pair_users.empty()) return loss;

  const std::size_t n = pair_users.size();
  Var eu = ops::gather_rows(user_table, std::move(pair_users));
  Var ei = ops::gather_rows(item_table, std::move(pair_items));
  Var ek_rows = ops::gather_rows(state.behaviors, std::vector<std::size_t>(n, behavior));
  Var x = ops::row_dot(ops::hadamard(eu, ek_rows), ei);
  Var positives = ops::add(ops::scale(ops::reduce_sum(ops::square(x)), positive_weight - negative_weight),
                           ops::scale(ops::reduce_sum(x), -2.0 * positive_weight));
  return ops::add(positives, loss);
}

Var recommendation_loss(const std::vector<Var>& per_behavior, const std::vector<double>& lambda) {
  if (per_behavior.empty() || per_behavior.size() != lambda.size()) {
    throw std::invalid_argument("recommendation_loss: one weight per behavior loss required");
  }
  std::vector<Var> parts;
  for (std::size_t k = 0; k < per_behavior.size(); ++k) parts.push_back(ops::scale(per_behavior[k], lambda[k]));
  return ops::sum(parts);
}

Var recommendation_loss(const EncodedState& state, const MultiBehaviorGraph& graph,
                        std::span<const std::size_t> users, const LossWeights& weights) {
  const std::size_t K = graph.num_behaviors();
  weights.validate(K);
  std::vector<Var> losses;
  std::vector<double> lambda;
  for (std::size_t k = 0; k < K; ++k) {
    if (weights.lambda[k] == 0.0) continue;
    losses.push_back(non_sampling_loss(state, graph, users, k, weights.positive[k], weights.negative[k]));
    lambda.push_back(weights.lambda[k]);
  }
  if (losses.empty()) throw std::invalid_argument("recommendation_loss: every lambda is zero");
  return recommendation_loss(losses, lambda);
}

ObjectiveBundle assemble_objective(Var target, const std::vector<Var>& inter_pairs, std::optional<Var> intra,
                                   const ContrastConfig& config, WeightMode mode) {
  ObjectiveBundle bundle;
  bundle.target = target;
  Tape* tape = target.tape();
  auto add = [&](std::string name, Var loss, double weight) {
    if (loss.tape() != tape) throw std::invalid_argument("objective: " + name + " lives on a different tape");
    bundle.auxiliaries.push_back({std::move(name), loss});
    bundle.weights.push_back(mode == WeightMode::gradient_manipulation ? 1.0 : weight);
  };
  if (mode == WeightMode::fixed && !config.pair_weights.empty() && config.pair_weights.size() != inter_pairs.size()) {
    throw std::invalid_argument("objective: one fixed weight per inter-behavior pair required");
  }
  for (std::size_t k = 0; k < inter_pairs.size(); ++k) {
    add(inter_loss_name(k), inter_pairs[k], config.pair_weights.empty() ? 1.0 : config.pair_weights[k]);
  }
  if (intra) add(intra_loss_name, *intra, config.intra_weight);

  std::vector<Var> parts{target};
  for (std::size_t a = 0; a < bundle.auxiliaries.size(); ++a) {
    parts.push_back(ops::scale(bundle.auxiliaries[a].loss, bundle.weights[a]));
  }
  bundle.combined = ops::sum(parts);
  return bundle;
}

ObjectiveBundle build_training_objective(Tape& tape, const ModelConfig& model, const ObjectiveSettings& settings,
                                         const MultiBehaviorGraph& graph, const SimilarityIndex* index,
                                         const StepBatch& batch, Rng* dropout) {
  const bool inter = settings.inter_behavior && graph.num_behaviors() > 1;
  std::vector<const AugmentedView*> views;
  if (settings.intra_behavior) {
    if (batch.first_view == nullptr || batch.second_view == nullptr) {
      throw std::invalid_argument("intra-behavior contrast needs two views");
    }
    views = {batch.first_view, batch.second_view};
  }
  if (inter && index == nullptr) throw std::invalid_argument("inter-behavior contrast needs a similarity index");

  Encoding enc = encode(tape, model, graph, views, dropout);
  Var rec = recommendation_loss(enc.state, graph, batch.users, settings.weights);
  std::vector<Var> pairs;
  if (inter) pairs = inter_behavior_loss(enc.state, *index, settings.contrast, batch.users, batch.items).pairs;
  std::optional<Var> intra;
  if (settings.intra_behavior) {
    intra = intra_behavior_loss(enc.views[0], enc.views[1], settings.contrast, batch.users, batch.items);
  }
  return assemble_objective(rec, pairs, intra, settings.contrast, settings.mode);
}

}  // namespace mbssl
