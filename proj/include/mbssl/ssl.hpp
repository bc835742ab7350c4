#pragma once
// Self-supervised objectives: swing similarity for false-negative mining,
// inter-behavior contrast (each auxiliary behavior against the target, with
// false negatives removed from the denominator) and intra-behavior contrast
// between two edge-dropout views of the target subgraph.

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "mbssl/encoder.hpp"
#include "mbssl/graph.hpp"

namespace mbssl {

enum class Side { users, items };

// S(a, b) = sum_{x in C} sum_{y in C} 1 / (alpha + |N(x) cap N(y)|), C = N(a) cap N(b),
// for two users (C over items) or two items (C over users) under one behavior.
double swing_similarity(const MultiBehaviorGraph& graph, std::size_t behavior, Side side, std::size_t a,
                        std::size_t b, double alpha);

class SimilarityIndex {
 public:
  using Row = std::vector<std::pair<std::uint32_t, double>>;  // (other entity, score), sorted by entity

  double alpha() const { return alpha_; }
  // Averaged score over behaviors; zero for pairs without a common neighbor.
  double score(Side side, std::size_t a, std::size_t b) const;
  const Row& scores(Side side, std::size_t entity) const { return rows(side).at(entity); }
  // Top-N most similar entities, highest score first, ties by smaller index.
  const std::vector<std::uint32_t>& false_negatives(Side side, std::size_t entity) const {
    return side == Side::users ? user_fn_.at(entity) : item_fn_.at(entity);
  }
  std::size_t size(Side side) const { return rows(side).size(); }

  // `entity<TAB>neighbor<TAB>score` lines sorted by (entity, neighbor).
  void write(const std::filesystem::path& path, Side side) const;

  bool operator==(const SimilarityIndex&) const = default;

 private:
  friend SimilarityIndex build_similarity_index(const MultiBehaviorGraph&, double, std::size_t, std::size_t);
  const std::vector<Row>& rows(Side side) const { return side == Side::users ? user_rows_ : item_rows_; }

  double alpha_ = 0.5;
  std::vector<Row> user_rows_;
  std::vector<Row> item_rows_;
  std::vector<std::vector<std::uint32_t>> user_fn_;
  std::vector<std::vector<std::uint32_t>> item_fn_;
};

// Pairs are enumerated through common-neighbor joins, never all entity pairs.
SimilarityIndex build_similarity_index(const MultiBehaviorGraph& graph, double alpha, std::size_t top_users,
                                       std::size_t top_items);

struct ContrastConfig {
  double temperature = 0.2;
  std::vector<double> pair_weights;  // mu_k per auxiliary behavior; empty means all 1
  double intra_weight = 1.0;         // gamma
};

// batch x batch admissibility: 0 where column v is a false negative of row u.
Tensor false_negative_mask(const SimilarityIndex& index, Side side, std::span<const std::size_t> batch);

// Per-row InfoNCE terms -log(exp(<a_u, p_u>/tau) / sum_v exp(<a_u, p_v>/tau)) over
// admissible v (rows x 1). An empty mask admits every column.
Var info_nce_terms(Var anchors, Var positives, double temperature, const Tensor& admissible = Tensor());

struct InterBehaviorLoss {
  Var total;
  std::vector<Var> pairs;  // one per auxiliary behavior, user side plus item side
};

InterBehaviorLoss inter_behavior_loss(const EncodedState& state, const SimilarityIndex& index,
                                      const ContrastConfig& config, std::span<const std::size_t> users,
                                      std::span<const std::size_t> items);

Var intra_behavior_loss(const ViewState& first, const ViewState& second, const ContrastConfig& config,
                        std::span<const std::size_t> users, std::span<const std::size_t> items);

}  // namespace mbssl
