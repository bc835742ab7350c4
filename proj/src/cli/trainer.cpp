#include "mbssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mbssl/synthetic.hpp"

namespace mbssl {
namespace {

std::vector<double> expand(const std::vector<double>& values, std::size_t K, const char* key) {
  if (values.size() == 1) return std::vector<double>(K, values[0]);
  if (values.size() != K) {
    throw std::invalid_argument(std::string(key) + " needs one value or one per behavior (" + std::to_string(K) + ")");
  }
  return values;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Sorted, deduplicated training target items of the batch users.
std::vector<std::size_t> batch_items(const MultiBehaviorGraph& graph, const std::vector<std::size_t>& users) {
  const auto& adj = graph.adjacency(graph.target());
  std::vector<std::size_t> items;
  for (std::size_t u : users) {
    const auto n = adj.user_neighbors(u);
    items.insert(items.end(), n.begin(), n.end());
  }
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

[[noreturn]] void abort_non_finite(const std::string& cause, const ParameterStore& params, std::size_t epoch,
                                   std::size_t step) {
  std::ostringstream msg;
  msg << "non-finite loss at epoch " << epoch << ", step " << step << "\n  " << cause;
  for (const auto& name : params.names()) {
    double sq = 0.0;
    bool finite = true;
    for (double v : params.get(name).values()) {
      sq += v * v;
      finite = finite && std::isfinite(v);
    }
    msg << "\n  |" << name << "| = " << std::sqrt(sq) << (finite ? "" : " (non-finite entries)");
  }
  throw TrainingError(msg.str());
}

}  // namespace

SplitDataset split_for(const RunConfig& config, const MultiBehaviorGraph& graph) {
  return leave_one_out_split(graph, derive_seed(config.seed, "split"));
}

PreparedData prepare_data(const RunConfig& config) {
  config.validate();
  PreparedData data;
  if (config.dataset.empty()) {
    data.graph = generate_synthetic(config.synthetic);
  } else {
    Dataset ds = load_interactions(config.dataset, config.num_behaviors);
    data.graph = std::move(ds.graph);
    data.users = std::move(ds.users);
    data.items = std::move(ds.items);
  }
  data.split = split_for(config, data.graph);
  return data;
}

ModelConfig model_config(const RunConfig& config, const MultiBehaviorGraph& graph) {
  ModelConfig m;
  m.num_users = graph.num_users();
  m.num_items = graph.num_items();
  m.num_behaviors = graph.num_behaviors();
  m.dim = config.dim;
  m.attention_dim = config.attention_dim;
  m.layers = config.layers;
  m.leaky_slope = config.leaky_slope;
  m.embedding_dropout = config.embedding_dropout;
  m.cross_behavior_attention = !config.disable_cdm;
  return m;
}

ObjectiveSettings objective_settings(const RunConfig& config, std::size_t K) {
  ObjectiveSettings s;
  s.weights = LossWeights::defaults(K);
  s.weights.positive = expand(config.positive_weight, K, "positive_weight");
  s.weights.negative = expand(config.negative_weight, K, "negative_weight");
  if (!config.lambda.empty()) s.weights.lambda = expand(config.lambda, K, "lambda");
  s.weights.validate(K);
  s.contrast.temperature = config.temperature;
  s.contrast.pair_weights = config.ssl_weights;
  s.contrast.intra_weight = config.intra_weight;
  s.inter_behavior = !config.disable_ssl_inter;
  s.intra_behavior = !config.disable_ssl_intra;
  const bool fixed = config.disable_hmg || parse_strategy(config.strategy) == Strategy::fixed_weights;
  s.mode = fixed ? WeightMode::fixed : WeightMode::gradient_manipulation;
  return s;
}

OptimizerConfig optimizer_config(const RunConfig& config) {
  OptimizerConfig o;
  o.strategy = config.disable_hmg ? Strategy::fixed_weights : parse_strategy(config.strategy);
  o.relax = config.relax;
  o.learning_rate = config.learning_rate;
  o.beta1 = config.beta1;
  o.beta2 = config.beta2;
  o.epsilon = config.epsilon;
  o.granularity = parse_granularity(config.granularity);
  if (config.shared_parameters == "embeddings") o.shared = param::is_embedding_table;
  o.validate();
  return o;
}

TrainResult train(const RunConfig& config, const SplitDataset& split, const EpochCallback& on_epoch) {
  config.validate();
  const MultiBehaviorGraph& graph = split.train;
  const std::size_t K = graph.num_behaviors();

  TrainResult result;
  result.model = model_config(config, graph);
  result.params = initialize_parameters(result.model, derive_seed(config.seed, "init"));
  const ObjectiveSettings settings = objective_settings(config, K);
  Optimizer optimizer(optimizer_config(config));
  const bool single_backward = optimizer.config().strategy == Strategy::fixed_weights;

  // Built once from the training split only.
  SimilarityIndex index;
  if (settings.inter_behavior && K > 1) {
    index = build_similarity_index(graph, config.swing_alpha, config.fn_users, config.fn_items);
  }

  std::vector<std::size_t> order(graph.num_users());
  std::iota(order.begin(), order.end(), 0);
  Rng batch_rng = make_rng(config.seed, "batches");
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(batch_rng, i)]);

    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      StepBatch batch;
      batch.users.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(batch.users.begin(), batch.users.end());
      batch.items = batch_items(graph, batch.users);

      // Fresh views every step.
      std::optional<AugmentedView> first, second;
      if (settings.intra_behavior) {
        const std::uint64_t view_seed = derive_seed(config.seed, "views", step);
        first = edge_dropout(graph, config.edge_dropout, view_seed, 1);
        second = edge_dropout(graph, config.edge_dropout, view_seed, 2);
        batch.first_view = &*first;
        batch.second_view = &*second;
      }
      Rng dropout = make_rng(config.seed, "dropout", step);

      Tape tape(result.params);
      TaskGradients grads;
      try {
        const ObjectiveBundle bundle = build_training_objective(tape, result.model, settings, graph,
                                                                K > 1 ? &index : nullptr, batch, &dropout);
        if (single_backward || bundle.auxiliaries.empty()) {
          grads.target = tape.gradients(bundle.combined);
        } else {
          grads.target = tape.gradients(bundle.target);
          for (const auto& aux : bundle.auxiliaries) {
            grads.names.push_back(aux.name);
            grads.auxiliaries.push_back(tape.gradients(aux.loss));
          }
          grads.weights = bundle.weights;
        }
      } catch (const NonFiniteError& e) {
        abort_non_finite(e.what(), result.params, epoch, step);
      }
      result.diagnostics.record(epoch, step, optimizer.step(result.params, grads));
    }

    EpochMetrics row;
    row.epoch = epoch;
    row.report = evaluate(encode_for_inference(result.params, result.model, graph), split, config.cutoffs);
    result.metrics.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

std::string metrics_header(const std::vector<std::size_t>& cutoffs) {
  std::string out = "epoch";
  for (std::size_t c : cutoffs) out += ",recall@" + std::to_string(c) + ",ndcg@" + std::to_string(c);
  return out;
}

std::string metrics_row(std::size_t epoch, const EvalReport& report) {
  std::string out = std::to_string(epoch);
  for (const auto& v : report.values) out += "," + fixed6(v.recall) + "," + fixed6(v.ndcg);
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::size_t>& cutoffs,
                       const std::vector<EpochMetrics>& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << metrics_header(cutoffs) << '\n';
  for (const auto& m : metrics) out << metrics_row(m.epoch, m.report) << '\n';
}

void write_run(const std::filesystem::path& dir, const RunConfig& config, const PreparedData& data,
               const TrainResult& result) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", result.params);
  save_config(dir / "config.txt", config);
  write_metrics_csv(dir / "metrics.csv", config.cutoffs, result.metrics);
  result.diagnostics.write_steps(dir / "diagnostics_steps.csv");
  result.diagnostics.write_epochs(dir / "diagnostics_epochs.csv");
  if (data.users) write_id_map(dir / "users.tsv", *data.users);
  if (data.items) write_id_map(dir / "items.tsv", *data.items);
}

}  // namespace mbssl
