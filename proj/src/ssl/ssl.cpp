#include "mbssl/ssl.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace mbssl {
namespace {

std::span<const std::size_t> neighbors(const Adjacency& adj, Side side, std::size_t entity) {
  return side == Side::users ? adj.user_neighbors(entity) : adj.item_neighbors(entity);
}

// Neighbors of the intermediate nodes (items for user-side swing).
std::span<const std::size_t> inner_neighbors(const Adjacency& adj, Side side, std::size_t node) {
  return side == Side::users ? adj.item_neighbors(node) : adj.user_neighbors(node);
}

std::size_t intersection_size(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

// |N(x) cap N(y)| for intermediate nodes, cached densely when small enough.
class CoCounts {
 public:
  CoCounts(const Adjacency& adj, Side side, std::size_t nodes) : adj_(adj), side_(side), nodes_(nodes) {
    if (nodes * nodes <= kDenseLimit) dense_.assign(nodes * nodes, kUnknown);
  }

  std::size_t operator()(std::size_t x, std::size_t y) {
    if (dense_.empty()) return compute(x, y);
    std::uint32_t& slot = dense_[x * nodes_ + y];
    if (slot == kUnknown) {
      slot = static_cast<std::uint32_t>(compute(x, y));
      dense_[y * nodes_ + x] = slot;
    }
    return slot;
  }

 private:
  static constexpr std::size_t kDenseLimit = std::size_t{1} << 22;
  static constexpr std::uint32_t kUnknown = 0xffffffffu;

  std::size_t compute(std::size_t x, std::size_t y) const {
    return intersection_size(inner_neighbors(adj_, side_, x), inner_neighbors(adj_, side_, y));
  }

  const Adjacency& adj_;
  Side side_;
  std::size_t nodes_;
  std::vector<std::uint32_t> dense_;
};

double swing_over(const std::vector<std::size_t>& common, CoCounts& co, double alpha) {
  double s = 0.0;
  for (std::size_t x : common) {
    for (std::size_t y : common) s += 1.0 / (alpha + static_cast<double>(co(x, y)));
  }
  return s;
}

void accumulate_side(const MultiBehaviorGraph& graph, std::size_t behavior, Side side, double alpha,
                     std::vector<std::unordered_map<std::uint32_t, double>>& totals) {
  const Adjacency& adj = graph.adjacency(behavior);
  const std::size_t entities = side == Side::users ? graph.num_users() : graph.num_items();
  const std::size_t nodes = side == Side::users ? graph.num_items() : graph.num_users();
  CoCounts co(adj, side, nodes);

  std::vector<std::vector<std::size_t>> common(entities);
  std::vector<std::size_t> touched;
  for (std::size_t a = 0; a < entities; ++a) {
    touched.clear();
    for (std::size_t x : neighbors(adj, side, a)) {
      for (std::size_t b : inner_neighbors(adj, side, x)) {
        if (b <= a) continue;
        if (common[b].empty()) touched.push_back(b);
        common[b].push_back(x);
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::size_t b : touched) {
      const double s = swing_over(common[b], co, alpha);
      totals[a][static_cast<std::uint32_t>(b)] += s;
      totals[b][static_cast<std::uint32_t>(a)] += s;
      common[b].clear();
    }
  }
}

std::vector<std::uint32_t> top_n(const SimilarityIndex::Row& row, std::size_t n) {
  std::vector<std::pair<std::uint32_t, double>> ranked(row.begin(), row.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  std::vector<std::uint32_t> out;
  for (std::size_t r = 0; r < std::min(n, ranked.size()); ++r) out.push_back(ranked[r].first);
  return out;
}

}  // namespace

double swing_similarity(const MultiBehaviorGraph& graph, std::size_t behavior, Side side, std::size_t a,
                        std::size_t b, double alpha) {
  if (a == b) throw std::invalid_argument("swing_similarity: entities must differ");
  if (!(alpha > 0.0)) throw std::invalid_argument("swing_similarity: alpha must be positive");
  const Adjacency& adj = graph.adjacency(behavior);
  auto na = neighbors(adj, side, a);
  auto nb = neighbors(adj, side, b);
  std::vector<std::size_t> common;
  std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
  double s = 0.0;
  for (std::size_t x : common) {
    for (std::size_t y : common) {
      const double shared = static_cast<double>(
          intersection_size(inner_neighbors(adj, side, x), inner_neighbors(adj, side, y)));
      s += 1.0 / (alpha + shared);
    }
  }
  return s;
}

double SimilarityIndex::score(Side side, std::size_t a, std::size_t b) const {
  const Row& row = rows(side).at(a);
  auto it = std::lower_bound(row.begin(), row.end(), static_cast<std::uint32_t>(b),
                             [](const auto& entry, std::uint32_t key) { return entry.first < key; });
  return it != row.end() && it->first == b ? it->second : 0.0;
}

void SimilarityIndex::write(const std::filesystem::path& path, Side side) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  const auto& all = rows(side);
  for (std::size_t e = 0; e < all.size(); ++e) {
    for (const auto& [other, s] : all[e]) {
      std::snprintf(buf, sizeof(buf), "%.17g", s);
      out << e << '\t' << other << '\t' << buf << '\n';
    }
  }
}

SimilarityIndex build_similarity_index(const MultiBehaviorGraph& graph, double alpha, std::size_t top_users,
                                       std::size_t top_items) {
  if (!(alpha > 0.0)) throw std::invalid_argument("similarity index: alpha must be positive");
  SimilarityIndex index;
  index.alpha_ = alpha;
  const double behaviors = static_cast<double>(graph.num_behaviors());

  auto build = [&](Side side, std::size_t entities, std::size_t top, std::vector<SimilarityIndex::Row>& rows,
                   std::vector<std::vector<std::uint32_t>>& fn) {
    std::vector<std::unordered_map<std::uint32_t, double>> totals(entities);
    for (std::size_t k = 0; k < graph.num_behaviors(); ++k) accumulate_side(graph, k, side, alpha, totals);
    rows.resize(entities);
    fn.resize(entities);
    for (std::size_t e = 0; e < entities; ++e) {
      rows[e].assign(totals[e].begin(), totals[e].end());
      std::sort(rows[e].begin(), rows[e].end());
      for (auto& entry : rows[e]) entry.second /= behaviors;
      fn[e] = top_n(rows[e], top);
    }
  };
  build(Side::users, graph.num_users(), top_users, index.user_rows_, index.user_fn_);
  build(Side::items, graph.num_items(), top_items, index.item_rows_, index.item_fn_);
  return index;
}

Tensor false_negative_mask(const SimilarityIndex& index, Side side, std::span<const std::size_t> batch) {
  const std::size_t n = batch.size();
  Tensor mask(Shape{n, n}, 1.0);
  std::unordered_map<std::size_t, std::size_t> position;
  for (std::size_t p = 0; p < n; ++p) position.emplace(batch[p], p);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::uint32_t v : index.false_negatives(side, batch[r])) {
      auto it = position.find(v);
      if (it != position.end() && it->second != r) mask(r, it->second) = 0.0;
    }
  }
  return mask;
}

Var info_nce_terms(Var anchors, Var positives, double temperature, const Tensor& admissible) {
  if (!(temperature > 0.0)) throw std::invalid_argument("InfoNCE temperature must be positive");
  const double inv = 1.0 / temperature;
  Var logits = ops::scale(ops::matmul(anchors, positives, false, true), inv);
  Var denominators = ops::row_logsumexp(logits, admissible);
  Var numerators = ops::scale(ops::row_dot(anchors, positives), inv);
  return ops::subtract(denominators, numerators);
}

namespace {

std::vector<std::size_t> to_vector(std::span<const std::size_t> s) { return {s.begin(), s.end()}; }

Var side_term(Var anchor_table, Var positive_table, std::span<const std::size_t> batch, double temperature,
              const Tensor& mask) {
  Var anchors = ops::gather_rows(anchor_table, to_vector(batch));
  Var positives = ops::gather_rows(positive_table, to_vector(batch));
  return ops::reduce_sum(info_nce_terms(anchors, positives, temperature, mask));
}

}  // namespace

InterBehaviorLoss inter_behavior_loss(const EncodedState& state, const SimilarityIndex& index,
                                      const ContrastConfig& config, std::span<const std::size_t> users,
                                      std::span<const std::size_t> items) {
  if (users.empty()) throw std::invalid_argument("inter_behavior_loss: empty user batch");
  const std::size_t K = state.users.size();
  if (K < 2) throw std::invalid_argument("inter_behavior_loss: needs at least one auxiliary behavior");
  const std::size_t target = K - 1;
  const Tensor user_mask = false_negative_mask(index, Side::users, users);
  const Tensor item_mask = items.empty() ? Tensor() : false_negative_mask(index, Side::items, items);

  InterBehaviorLoss out;
  for (std::size_t k = 0; k < target; ++k) {
    Var pair = side_term(state.users[target], state.users[k], users, config.temperature, user_mask);
    if (!items.empty()) {
      pair = ops::add(pair, side_term(state.items[target], state.items[k], items, config.temperature, item_mask));
    }
    out.pairs.push_back(pair);
  }
  out.total = ops::sum(out.pairs);
  return out;
}

Var intra_behavior_loss(const ViewState& first, const ViewState& second, const ContrastConfig& config,
                        std::span<const std::size_t> users, std::span<const std::size_t> items) {
  if (users.empty()) throw std::invalid_argument("intra_behavior_loss: empty user batch");
  Var loss = side_term(first.users, second.users, users, config.temperature, Tensor());
  if (!items.empty()) loss = ops::add(loss, side_term(first.items, second.items, items, config.temperature, Tensor()));
  return loss;
}

}  // namespace mbssl
