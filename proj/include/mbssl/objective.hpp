#pragma once
// Non-sampling recommendation loss and assembly of the training objective
// as separately differentiable target and auxiliary losses.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbssl/encoder.hpp"
#include "mbssl/graph.hpp"
#include "mbssl/ssl.hpp"

namespace mbssl {

struct LossWeights {
  std::vector<double> lambda;    // per behavior
  std::vector<double> positive;  // c+ per behavior
  std::vector<double> negative;  // c- per behavior, below c+

  // lambda = 1/K, c+ = 1, c- = 0.1.
  static LossWeights defaults(std::size_t behaviors);
  void validate(std::size_t behaviors) const;
};

// x = sum_m e_k[m] * e_u[m] * e_i[m] over the enhanced behavior-k embeddings.
Var predict_score(const EncodedState& state, std::size_t user, std::size_t item, std::size_t behavior);

// Whole-data weighted squared error with uniform negative weight c-, rewritten
// so that the all-item part costs O((|B| + |I|) d^2):
//   sum_{u in B, i in I_u+} [(c+ - c-) x^2 - 2 c+ x]
//   + c- sum_{m,n} e_k[m] e_k[n] (sum_{u in B} e_u[m] e_u[n]) (sum_{i in I} e_i[m] e_i[n])
Var non_sampling_loss(const EncodedState& state, const MultiBehaviorGraph& graph, std::span<const std::size_t> users,
                      std::size_t behavior, double positive_weight, double negative_weight);

Var recommendation_loss(const std::vector<Var>& per_behavior, const std::vector<double>& lambda);

// Sum over behaviors of lambda_k times the behavior-k non-sampling loss; zero-weight behaviors are skipped.
Var recommendation_loss(const EncodedState& state, const MultiBehaviorGraph& graph,
                        std::span<const std::size_t> users, const LossWeights& weights);

struct NamedLoss {
  std::string name;
  Var loss;
};

struct ObjectiveBundle {
  Var target;
  std::vector<NamedLoss> auxiliaries;
  std::vector<double> weights;  // one per auxiliary
  Var combined;                 // target + sum of weighted auxiliaries
};

enum class WeightMode { gradient_manipulation, fixed };

inline std::string inter_loss_name(std::size_t behavior) { return "ssl_inter_" + std::to_string(behavior); }
inline const std::string intra_loss_name = "ssl_intra";

// inter_pairs[k] pairs auxiliary behavior k with the target. Under gradient
// manipulation every weight is 1; in fixed mode mu_k and gamma come from the
// contrast config.
ObjectiveBundle assemble_objective(Var target, const std::vector<Var>& inter_pairs, std::optional<Var> intra,
                                   const ContrastConfig& config, WeightMode mode);

struct ObjectiveSettings {
  LossWeights weights;
  ContrastConfig contrast;
  bool inter_behavior = true;
  bool intra_behavior = true;
  WeightMode mode = WeightMode::gradient_manipulation;
};

struct StepBatch {
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
  // Two edge-dropout views of the target behavior; unused without intra contrast.
  const AugmentedView* first_view = nullptr;
  const AugmentedView* second_view = nullptr;
};

// Encodes the graph on `tape` and assembles rec + SSL losses for one step.
ObjectiveBundle build_training_objective(Tape& tape, const ModelConfig& model, const ObjectiveSettings& settings,
                                         const MultiBehaviorGraph& graph, const SimilarityIndex* index,
                                         const StepBatch& batch, Rng* dropout);

}  // namespace mbssl
