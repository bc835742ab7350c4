#pragma once
// Multi-behavior interaction data: K bipartite user-item subgraphs, the last
// of which is the target behavior.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mbssl {

struct Edge {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  auto operator<=>(const Edge&) const = default;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CSR neighbor lists of one behavior subgraph in both directions.
class Adjacency {
 public:
  Adjacency() = default;
  // edges must be sorted and unique.
  Adjacency(std::size_t num_users, std::size_t num_items, std::span<const Edge> edges);

  std::span<const std::size_t> user_neighbors(std::size_t u) const {
    return {user_items_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
  }
  std::span<const std::size_t> item_neighbors(std::size_t i) const {
    return {item_users_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
  }
  std::size_t user_degree(std::size_t u) const { return user_offsets_[u + 1] - user_offsets_[u]; }
  std::size_t item_degree(std::size_t i) const { return item_offsets_[i + 1] - item_offsets_[i]; }

  const std::vector<std::size_t>& user_offsets() const { return user_offsets_; }
  const std::vector<std::size_t>& user_items() const { return user_items_; }
  const std::vector<std::size_t>& item_offsets() const { return item_offsets_; }
  const std::vector<std::size_t>& item_users() const { return item_users_; }

 private:
  std::vector<std::size_t> user_offsets_{0};
  std::vector<std::size_t> user_items_;
  std::vector<std::size_t> item_offsets_{0};
  std::vector<std::size_t> item_users_;
};

class MultiBehaviorGraph {
 public:
  MultiBehaviorGraph() = default;
  // Edges are deduplicated and sorted per behavior; out-of-range indices throw.
  MultiBehaviorGraph(std::size_t num_users, std::size_t num_items, std::size_t num_behaviors,
                     std::vector<std::vector<Edge>> edges);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_behaviors() const { return edges_.size(); }
  std::size_t target() const { return edges_.size() - 1; }

  const std::vector<Edge>& edges(std::size_t behavior) const { return edges_.at(behavior); }
  const Adjacency& adjacency(std::size_t behavior) const { return adjacency_.at(behavior); }
  bool has_edge(std::size_t behavior, std::size_t user, std::size_t item) const;
  std::size_t total_edges() const;

  // Copy with one behavior's edge set replaced.
  MultiBehaviorGraph with_edges(std::size_t behavior, std::vector<Edge> edges) const;

  bool operator==(const MultiBehaviorGraph& other) const {
    return num_users_ == other.num_users_ && num_items_ == other.num_items_ && edges_ == other.edges_;
  }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<std::vector<Edge>> edges_;
  std::vector<Adjacency> adjacency_;
};

// Dense token -> index mapping in first-appearance order.
class IdMap {
 public:
  std::uint32_t intern(const std::string& token);
  std::uint32_t at(const std::string& token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Dataset {
  MultiBehaviorGraph graph;
  IdMap users;
  IdMap items;
};

// Reads `user<TAB>item<TAB>behavior` lines with behavior in 1..num_behaviors.
Dataset load_interactions(const std::filesystem::path& path, std::size_t num_behaviors);

// Writes the graph in the same format, using the maps' tokens when given
// and `u<index>` / `i<index>` otherwise.
void write_interactions(const std::filesystem::path& path, const MultiBehaviorGraph& graph,
                        const IdMap* users = nullptr, const IdMap* items = nullptr);

// `token<TAB>index` per line.
void write_id_map(const std::filesystem::path& path, const IdMap& map);
IdMap read_id_map(const std::filesystem::path& path);

struct TestPair {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  bool operator==(const TestPair&) const = default;
};

struct SplitDataset {
  MultiBehaviorGraph train;
  std::vector<TestPair> test;  // ordered by user
};

// Moves one uniformly chosen target edge per user into the test set.
SplitDataset leave_one_out_split(const MultiBehaviorGraph& graph, std::uint64_t seed);

// Target-behavior subgraph with a random subset of edges kept.
struct AugmentedView {
  std::size_t behavior = 0;
  int mask_id = 1;
  std::uint64_t seed = 0;
  std::vector<Edge> kept;
  Adjacency adjacency;
};

// Keeps every target edge independently with probability 1 - ratio.
AugmentedView edge_dropout(const MultiBehaviorGraph& graph, double ratio, std::uint64_t seed, int mask_id = 1);

// Adds floor(ratio * |E_k|) new uniformly random pairs to every auxiliary behavior.
MultiBehaviorGraph inject_noise(const MultiBehaviorGraph& graph, double ratio, std::uint64_t seed);

}  // namespace mbssl
