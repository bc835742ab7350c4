#pragma once
// Training loop and run outputs.

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mbssl/config.hpp"
#include "mbssl/encoder.hpp"
#include "mbssl/eval.hpp"
#include "mbssl/objective.hpp"
#include "mbssl/optimizer.hpp"
#include "mbssl/ssl.hpp"

namespace mbssl {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PreparedData {
  MultiBehaviorGraph graph;
  std::optional<IdMap> users;  // present for TSV datasets
  std::optional<IdMap> items;
  SplitDataset split;
};

// Loads the dataset (or generates the synthetic one) and holds out one target edge per user.
PreparedData prepare_data(const RunConfig& config);
SplitDataset split_for(const RunConfig& config, const MultiBehaviorGraph& graph);

ModelConfig model_config(const RunConfig& config, const MultiBehaviorGraph& graph);
ObjectiveSettings objective_settings(const RunConfig& config, std::size_t num_behaviors);
OptimizerConfig optimizer_config(const RunConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  EvalReport report;
};

struct TrainResult {
  ModelConfig model;
  ParameterStore params;
  std::vector<EpochMetrics> metrics;
  DiagnosticsLog diagnostics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

TrainResult train(const RunConfig& config, const SplitDataset& split, const EpochCallback& on_epoch = nullptr);

// `epoch,recall@10,ndcg@10,...` in cutoff order, one row per epoch.
std::string metrics_header(const std::vector<std::size_t>& cutoffs);
std::string metrics_row(std::size_t epoch, const EvalReport& report);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::size_t>& cutoffs,
                       const std::vector<EpochMetrics>& metrics);

// checkpoint.bin, config.txt, metrics.csv, diagnostics_steps.csv,
// diagnostics_epochs.csv and, for TSV datasets, users.tsv / items.tsv.
void write_run(const std::filesystem::path& dir, const RunConfig& config, const PreparedData& data,
               const TrainResult& result);

}  // namespace mbssl
