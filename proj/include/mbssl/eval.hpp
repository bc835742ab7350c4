#pragma once
// Leave-one-out all-item ranking evaluation, sparsity buckets and the
// auxiliary-noise robustness protocol.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "mbssl/encoder.hpp"
#include "mbssl/graph.hpp"

namespace mbssl {

// Target-behavior scores of every item for one user.
std::vector<double> item_scores(const EmbeddingSnapshot& snap, std::size_t user);

// 1-based position of the held-out item among all items that are not the
// user's training target positives, sorted by score descending with ties
// going to the smaller item index.
std::size_t rank_heldout(const EmbeddingSnapshot& snap, const SplitDataset& split, const TestPair& pair);

struct CutoffMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
};

// Means over users of hit@k and 1/log2(rank + 1) for ranks within k.
CutoffMetrics metrics(const std::vector<std::size_t>& ranks, std::size_t cutoff);

struct EvalReport {
  std::vector<std::size_t> cutoffs;
  std::vector<CutoffMetrics> values;               // parallel to cutoffs
  std::vector<std::pair<std::uint32_t, std::size_t>> ranks;  // (user, rank), ordered by user

  const CutoffMetrics& at(std::size_t cutoff) const;
  std::vector<std::size_t> rank_values() const;
};

EvalReport evaluate(const EmbeddingSnapshot& snap, const SplitDataset& split,
                    const std::vector<std::size_t>& cutoffs = {10, 50});

struct SparsityBucket {
  std::size_t lo = 0;
  std::size_t hi = std::numeric_limits<std::size_t>::max();  // exclusive; max means unbounded
  std::size_t count = 0;
  double mean_ndcg = 0.0;
};

// Strictly increasing boundaries b0 < b1 < ... give buckets [0, b0), [b0, b1), ..., [b_last, inf)
// over each test user's number of training target interactions.
std::vector<SparsityBucket> sparsity_buckets(const SplitDataset& split, const EvalReport& report,
                                             const std::vector<std::size_t>& boundaries, std::size_t cutoff = 50);

// Interior quintile boundaries of the test users' training target degrees, deduplicated.
std::vector<std::size_t> quintile_boundaries(const SplitDataset& split);

// Trains on `graph` with `seed` and returns the evaluation metric.
using TrainAndScore = std::function<double(const MultiBehaviorGraph& graph, std::uint64_t seed)>;

struct NoiseRow {
  double ratio = 0.0;
  double decline_pct = 0.0;  // mean over seeds of (clean - noisy) / clean * 100
  std::vector<double> per_seed;
};

std::vector<NoiseRow> noise_robustness_run(const MultiBehaviorGraph& graph, const std::vector<double>& ratios,
                                           const TrainAndScore& train, const std::vector<std::uint64_t>& seeds);

void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
void write_buckets_csv(const std::filesystem::path& path, const std::vector<SparsityBucket>& buckets);
void write_noise_csv(const std::filesystem::path& path, const std::vector<NoiseRow>& rows);

}  // namespace mbssl
