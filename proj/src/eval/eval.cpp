#include "mbssl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mbssl/kernels.hpp"

namespace mbssl {
namespace {

std::string format(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<double> item_scores(const EmbeddingSnapshot& snap, std::size_t user) {
  const std::size_t target = snap.users.size() - 1;
  const Tensor& users = snap.users[target];
  const Tensor& items = snap.items[target];
  const std::size_t d = users.cols();
  std::vector<double> query(d);
  for (std::size_t m = 0; m < d; ++m) query[m] = users(user, m) * snap.behaviors(target, m);
  std::vector<double> scores(items.rows());
  kernels::gemm({false, true, 1, items.rows(), d, query.data(), d, items.values().data(), d, scores.data(),
                 items.rows(), false});
  return scores;
}

std::size_t rank_heldout(const EmbeddingSnapshot& snap, const SplitDataset& split, const TestPair& pair) {
  const auto& train = split.train;
  if (pair.item >= train.num_items()) throw std::invalid_argument("held-out item out of range");
  const auto positives = train.adjacency(train.target()).user_neighbors(pair.user);
  if (std::binary_search(positives.begin(), positives.end(), pair.item)) {
    throw std::invalid_argument("held-out item is a training positive");
  }
  const std::vector<double> scores = item_scores(snap, pair.user);
  const double held = scores[pair.item];
  std::size_t rank = 1;
  auto next_positive = positives.begin();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    while (next_positive != positives.end() && *next_positive < i) ++next_positive;
    if (next_positive != positives.end() && *next_positive == i) continue;
    if (i == pair.item) continue;
    if (scores[i] > held || (scores[i] == held && i < pair.item)) ++rank;
  }
  return rank;
}

CutoffMetrics metrics(const std::vector<std::size_t>& ranks, std::size_t cutoff) {
  if (cutoff == 0) throw std::invalid_argument("metric cutoff must be positive");
  CutoffMetrics m;
  if (ranks.empty()) return m;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("ranks are 1-based");
    if (r <= cutoff) {
      m.recall += 1.0;
      m.ndcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
  }
  m.recall /= static_cast<double>(ranks.size());
  m.ndcg /= static_cast<double>(ranks.size());
  return m;
}

const CutoffMetrics& EvalReport::at(std::size_t cutoff) const {
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    if (cutoffs[c] == cutoff) return values[c];
  }
  throw std::out_of_range("report has no cutoff " + std::to_string(cutoff));
}

std::vector<std::size_t> EvalReport::rank_values() const {
  std::vector<std::size_t> out;
  out.reserve(ranks.size());
  for (const auto& [u, r] : ranks) out.push_back(r);
  return out;
}

EvalReport evaluate(const EmbeddingSnapshot& snap, const SplitDataset& split, const std::vector<std::size_t>& cutoffs) {
  EvalReport report;
  report.cutoffs = cutoffs;
  for (const TestPair& pair : split.test) report.ranks.push_back({pair.user, rank_heldout(snap, split, pair)});
  const auto ranks = report.rank_values();
  for (std::size_t c : cutoffs) report.values.push_back(metrics(ranks, c));
  return report;
}

std::vector<SparsityBucket> sparsity_buckets(const SplitDataset& split, const EvalReport& report,
                                             const std::vector<std::size_t>& boundaries, std::size_t cutoff) {
  for (std::size_t b = 1; b < boundaries.size(); ++b) {
    if (boundaries[b] <= boundaries[b - 1]) throw std::invalid_argument("bucket boundaries must strictly increase");
  }
  std::vector<SparsityBucket> buckets(boundaries.size() + 1);
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    buckets[b].lo = b == 0 ? 0 : boundaries[b - 1];
    if (b < boundaries.size()) buckets[b].hi = boundaries[b];
  }
  const auto& adj = split.train.adjacency(split.train.target());
  for (const auto& [user, rank] : report.ranks) {
    const std::size_t degree = adj.user_degree(user);
    const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), degree);
    SparsityBucket& bucket = buckets[static_cast<std::size_t>(it - boundaries.begin())];
    ++bucket.count;
    if (rank <= cutoff) bucket.mean_ndcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  for (auto& b : buckets) {
    if (b.count > 0) b.mean_ndcg /= static_cast<double>(b.count);
  }
  return buckets;
}

std::vector<std::size_t> quintile_boundaries(const SplitDataset& split) {
  const auto& adj = split.train.adjacency(split.train.target());
  std::vector<std::size_t> degrees;
  for (const TestPair& p : split.test) degrees.push_back(adj.user_degree(p.user));
  if (degrees.empty()) return {};
  std::sort(degrees.begin(), degrees.end());
  std::vector<std::size_t> out;
  for (std::size_t q = 1; q < 5; ++q) {
    const std::size_t b = degrees[q * degrees.size() / 5];
    if (b > 0 && (out.empty() || b > out.back())) out.push_back(b);
  }
  return out;
}

std::vector<NoiseRow> noise_robustness_run(const MultiBehaviorGraph& graph, const std::vector<double>& ratios,
                                           const TrainAndScore& train, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("noise study needs at least one seed");
  std::vector<NoiseRow> rows;
  if (ratios.empty()) return rows;
  std::vector<double> clean;
  for (std::uint64_t seed : seeds) clean.push_back(train(graph, seed));
  for (double ratio : ratios) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("noise ratio must lie in [0, 1]");
    NoiseRow row;
    row.ratio = ratio;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const double noisy = ratio == 0.0 ? clean[s] : train(inject_noise(graph, ratio, seeds[s]), seeds[s]);
      const double decline = clean[s] > 0.0 ? (clean[s] - noisy) / clean[s] * 100.0 : 0.0;
      row.per_seed.push_back(decline);
      row.decline_pct += decline;
    }
    row.decline_pct /= static_cast<double>(seeds.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto out = open_csv(path);
  out << "cutoff,recall,ndcg\n";
  for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
    out << report.cutoffs[c] << ',' << format(report.values[c].recall) << ',' << format(report.values[c].ndcg) << '\n';
  }
}

void write_buckets_csv(const std::filesystem::path& path, const std::vector<SparsityBucket>& buckets) {
  auto out = open_csv(path);
  out << "bucket_lo,bucket_hi,count,mean_ndcg\n";
  for (const auto& b : buckets) {
    out << b.lo << ',';
    if (b.hi == std::numeric_limits<std::size_t>::max()) {
      out << "inf";
    } else {
      out << b.hi;
    }
    out << ',' << b.count << ',' << format(b.mean_ndcg) << '\n';
  }
}

void write_noise_csv(const std::filesystem::path& path, const std::vector<NoiseRow>& rows) {
  auto out = open_csv(path);
  out << "noise_ratio,decline_pct\n";
  for (const auto& r : rows) out << format(r.ratio) << ',' << format(r.decline_pct) << '\n';
}

}  // namespace mbssl
