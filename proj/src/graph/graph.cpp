#include "mbssl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "mbssl/rng.hpp"

namespace mbssl {

Adjacency::Adjacency(std::size_t num_users, std::size_t num_items, std::span<const Edge> edges) {
  user_offsets_.assign(num_users + 1, 0);
  item_offsets_.assign(num_items + 1, 0);
  for (const Edge& e : edges) {
    ++user_offsets_[e.user + 1];
    ++item_offsets_[e.item + 1];
  }
  for (std::size_t u = 0; u < num_users; ++u) user_offsets_[u + 1] += user_offsets_[u];
  for (std::size_t i = 0; i < num_items; ++i) item_offsets_[i + 1] += item_offsets_[i];

  user_items_.resize(edges.size());
  item_users_.resize(edges.size());
  std::vector<std::size_t> ufill(user_offsets_.begin(), user_offsets_.end() - 1);
  std::vector<std::size_t> ifill(item_offsets_.begin(), item_offsets_.end() - 1);
  // Sorted (user, item) order leaves both directions sorted.
  for (const Edge& e : edges) {
    user_items_[ufill[e.user]++] = e.item;
    item_users_[ifill[e.item]++] = e.user;
  }
}

MultiBehaviorGraph::MultiBehaviorGraph(std::size_t num_users, std::size_t num_items, std::size_t num_behaviors,
                                       std::vector<std::vector<Edge>> edges)
    : num_users_(num_users), num_items_(num_items), edges_(std::move(edges)) {
  if (num_behaviors == 0) throw DataError("graph needs at least one behavior");
  if (edges_.size() != num_behaviors) {
    throw DataError("expected " + std::to_string(num_behaviors) + " edge lists, got " +
                    std::to_string(edges_.size()));
  }
  adjacency_.reserve(edges_.size());
  for (auto& list : edges_) {
    for (const Edge& e : list) {
      if (e.user >= num_users_ || e.item >= num_items_) {
        throw DataError("edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) + ") out of range");
      }
    }
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    adjacency_.emplace_back(num_users_, num_items_, list);
  }
}

bool MultiBehaviorGraph::has_edge(std::size_t behavior, std::size_t user, std::size_t item) const {
  auto nbrs = adjacency(behavior).user_neighbors(user);
  return std::binary_search(nbrs.begin(), nbrs.end(), item);
}

std::size_t MultiBehaviorGraph::total_edges() const {
  std::size_t n = 0;
  for (const auto& list : edges_) n += list.size();
  return n;
}

MultiBehaviorGraph MultiBehaviorGraph::with_edges(std::size_t behavior, std::vector<Edge> edges) const {
  auto all = edges_;
  all.at(behavior) = std::move(edges);
  const std::size_t behaviors = all.size();
  return MultiBehaviorGraph(num_users_, num_items_, behaviors, std::move(all));
}

std::uint32_t IdMap::intern(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, static_cast<std::uint32_t>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::uint32_t IdMap::at(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw DataError("unknown token: " + token);
  return it->second;
}

Dataset load_interactions(const std::filesystem::path& path, std::size_t num_behaviors) {
  if (num_behaviors == 0) throw DataError("number of behaviors must be positive");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());

  Dataset ds;
  std::vector<std::vector<Edge>> edges(num_behaviors);
  std::string line;
  std::size_t line_no = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos || line.find('\t', tab2 + 1) != std::string::npos || tab1 == 0 ||
        tab2 == tab1 + 1) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected user<TAB>item<TAB>behavior");
    }
    const std::string behavior_text = line.substr(tab2 + 1);
    std::size_t behavior = 0;
    std::size_t consumed = 0;
    try {
      behavior = std::stoul(behavior_text, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed == 0 || consumed != behavior_text.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": behavior index '" + behavior_text +
                      "' is not an integer");
    }
    if (behavior < 1 || behavior > num_behaviors) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": behavior index " +
                      std::to_string(behavior) + " outside 1.." + std::to_string(num_behaviors));
    }
    const auto u = ds.users.intern(line.substr(0, tab1));
    const auto i = ds.items.intern(line.substr(tab1 + 1, tab2 - tab1 - 1));
    edges[behavior - 1].push_back({u, i});
    ++records;
  }
  if (records == 0) throw DataError("dataset " + path.string() + " contains no interactions");
  ds.graph = MultiBehaviorGraph(ds.users.size(), ds.items.size(), num_behaviors, std::move(edges));
  return ds;
}

void write_interactions(const std::filesystem::path& path, const MultiBehaviorGraph& graph, const IdMap* users,
                        const IdMap* items) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t k = 0; k < graph.num_behaviors(); ++k) {
    for (const Edge& e : graph.edges(k)) {
      if (users) {
        out << users->token(e.user);
      } else {
        out << 'u' << e.user;
      }
      out << '\t';
      if (items) {
        out << items->token(e.item);
      } else {
        out << 'i' << e.item;
      }
      out << '\t' << (k + 1) << '\n';
    }
  }
}

void write_id_map(const std::filesystem::path& path, const IdMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < map.size(); ++i) out << map.token(i) << '\t' << i << '\n';
}

IdMap read_id_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  IdMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing tab");
    const auto index = map.intern(line.substr(0, tab));
    if (std::to_string(index) != line.substr(tab + 1)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": indices must be dense and ordered");
    }
  }
  return map;
}

SplitDataset leave_one_out_split(const MultiBehaviorGraph& graph, std::uint64_t seed) {
  const std::size_t target = graph.target();
  if (graph.edges(target).empty()) throw DataError("target behavior has no interactions");
  Rng rng = make_rng(seed, "leave-one-out");
  const Adjacency& adj = graph.adjacency(target);

  SplitDataset split;
  std::vector<Edge> kept;
  kept.reserve(graph.edges(target).size());
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    auto items = adj.user_neighbors(u);
    if (items.empty()) continue;
    const std::size_t pick = uniform_below(rng, items.size());
    for (std::size_t p = 0; p < items.size(); ++p) {
      const Edge e{static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(items[p])};
      if (p == pick) {
        split.test.push_back({e.user, e.item});
      } else {
        kept.push_back(e);
      }
    }
  }
  split.train = graph.with_edges(target, std::move(kept));
  return split;
}

AugmentedView edge_dropout(const MultiBehaviorGraph& graph, double ratio, std::uint64_t seed, int mask_id) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("edge dropout ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  AugmentedView view;
  view.behavior = graph.target();
  view.mask_id = mask_id;
  view.seed = seed;
  Rng rng = make_rng(seed, "edge-dropout", static_cast<std::uint64_t>(mask_id));
  const auto& edges = graph.edges(view.behavior);
  view.kept.reserve(edges.size());
  for (const Edge& e : edges) {
    if (uniform01(rng) >= ratio) view.kept.push_back(e);
  }
  view.adjacency = Adjacency(graph.num_users(), graph.num_items(), view.kept);
  return view;
}

MultiBehaviorGraph inject_noise(const MultiBehaviorGraph& graph, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("noise ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  const std::uint64_t items = graph.num_items();
  const std::uint64_t cells = static_cast<std::uint64_t>(graph.num_users()) * items;
  MultiBehaviorGraph out = graph;
  for (std::size_t k = 0; k + 1 < graph.num_behaviors(); ++k) {
    const auto& original = graph.edges(k);
    const auto count = static_cast<std::uint64_t>(std::floor(ratio * static_cast<double>(original.size())));
    if (count == 0) continue;
    if (count > cells - original.size()) {
      throw DataError("behavior " + std::to_string(k + 1) + " is too dense to host " + std::to_string(count) +
                      " noisy interactions");
    }
    std::unordered_set<std::uint64_t> taken;
    taken.reserve(original.size() + count);
    for (const Edge& e : original) taken.insert(static_cast<std::uint64_t>(e.user) * items + e.item);

    Rng rng = make_rng(seed, "noise", k);
    std::vector<Edge> edges = original;
    if (2 * (original.size() + count) <= cells) {
      while (edges.size() < original.size() + count) {
        const std::uint64_t cell = uniform_below(rng, cells);
        if (taken.insert(cell).second) {
          edges.push_back({static_cast<std::uint32_t>(cell / items), static_cast<std::uint32_t>(cell % items)});
        }
      }
    } else {
      std::vector<std::uint64_t> free;
      for (std::uint64_t cell = 0; cell < cells; ++cell) {
        if (!taken.contains(cell)) free.push_back(cell);
      }
      for (std::uint64_t n = 0; n < count; ++n) {
        std::swap(free[n], free[n + uniform_below(rng, free.size() - n)]);
        edges.push_back({static_cast<std::uint32_t>(free[n] / items), static_cast<std::uint32_t>(free[n] % items)});
      }
    }
    out = out.with_edges(k, std::move(edges));
  }
  return out;
}

}  // namespace mbssl
