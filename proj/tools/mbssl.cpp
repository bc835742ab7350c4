// mbssl command-line driver.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "mbssl/synthetic.hpp"
#include "mbssl/trainer.hpp"

using namespace mbssl;

namespace {

struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
    cmd->add_option("--out", out_dir, "output directory (overrides out_dir)");
  }

  RunConfig load() const {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& o : overrides) apply_override(config, o);
    if (!out_dir.empty()) config.out_dir = out_dir;
    config.validate();
    return config;
  }
};

void print_metrics(const EpochMetrics& m) {
  std::printf("%s\n", metrics_row(m.epoch, m.report).c_str());
  std::fflush(stdout);
}

int run_train(const ConfigOptions& opts) {
  const RunConfig config = opts.load();
  const PreparedData data = prepare_data(config);
  std::printf("%s\n", metrics_header(config.cutoffs).c_str());
  const TrainResult result = train(config, data.split, [&](const EpochMetrics& m) { print_metrics(m); });
  write_run(config.out_dir, config, data, result);
  std::fprintf(stderr, "wrote %s\n", config.out_dir.c_str());
  return 0;
}

int run_evaluate(const std::string& checkpoint_dir) {
  const std::filesystem::path dir(checkpoint_dir);
  const RunConfig config = load_config(dir / "config.txt");
  const PreparedData data = prepare_data(config);
  ParameterStore params = load_checkpoint(dir / "checkpoint.bin");
  const ModelConfig model = model_config(config, data.split.train);
  validate(model, params);
  const EvalReport report = evaluate(encode_for_inference(params, model, data.split.train), data.split, config.cutoffs);
  const std::string header = metrics_header(config.cutoffs);
  const std::string row = metrics_row(config.epochs, report);
  std::ofstream out(dir / "eval_metrics.csv");
  if (!out) throw std::runtime_error("cannot write " + (dir / "eval_metrics.csv").string());
  out << header << '\n' << row << '\n';
  std::printf("%s\n%s\n", header.c_str(), row.c_str());
  return 0;
}

int run_gen_synthetic(const std::string& spec_path, const std::vector<std::string>& overrides,
                      const std::string& out) {
  std::string text;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw std::runtime_error("cannot open " + spec_path);
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  for (const auto& o : overrides) text += "\n" + o;
  const SyntheticSpec spec = parse_synthetic_spec(text, spec_path.empty() ? "<spec>" : spec_path);
  const MultiBehaviorGraph graph = generate_synthetic(spec);
  write_interactions(out, graph);
  std::fprintf(stderr, "wrote %s:", out.c_str());
  for (std::size_t k = 0; k < graph.num_behaviors(); ++k) std::fprintf(stderr, " |E_%zu| = %zu", k + 1, graph.edges(k).size());
  std::fprintf(stderr, "\n");
  return 0;
}

int run_build_swing_index(const ConfigOptions& opts) {
  const RunConfig config = opts.load();
  const PreparedData data = prepare_data(config);
  const SimilarityIndex index =
      build_similarity_index(data.split.train, config.swing_alpha, config.fn_users, config.fn_items);
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  index.write(dir / "swing_users.tsv", Side::users);
  index.write(dir / "swing_items.tsv", Side::items);
  std::fprintf(stderr, "wrote %s/swing_{users,items}.tsv (%zu user rows, %zu item rows)\n", config.out_dir.c_str(),
               index.size(Side::users), index.size(Side::items));
  return 0;
}

int run_noise_study(const ConfigOptions& opts, const std::vector<double>& ratios, std::vector<std::uint64_t> seeds,
                    std::size_t cutoff) {
  const RunConfig config = opts.load();
  const PreparedData data = prepare_data(config);
  if (seeds.empty()) seeds = {config.seed};
  const TrainAndScore score = [&](const MultiBehaviorGraph& graph, std::uint64_t seed) {
    RunConfig run = config;
    run.seed = seed;
    const double recall = train(run, split_for(run, graph)).metrics.back().report.at(cutoff).recall;
    std::fprintf(stderr, "  seed %llu, |E| = %zu: recall@%zu = %.6f\n", static_cast<unsigned long long>(seed),
                 graph.total_edges(), cutoff, recall);
    return recall;
  };
  if (config.epochs == 0) throw std::invalid_argument("noise-study needs epochs > 0");
  if (std::find(config.cutoffs.begin(), config.cutoffs.end(), cutoff) == config.cutoffs.end()) {
    throw std::invalid_argument("cutoff " + std::to_string(cutoff) + " is not among the configured cutoffs");
  }
  const auto rows = noise_robustness_run(data.graph, ratios, score, seeds);
  std::filesystem::create_directories(config.out_dir);
  write_noise_csv(std::filesystem::path(config.out_dir) / "noise.csv", rows);
  std::printf("noise_ratio,decline_pct\n");
  for (const auto& r : rows) std::printf("%.6f,%.6f\n", r.ratio, r.decline_pct);
  return 0;
}

int run_sparsity_study(const ConfigOptions& opts, const std::string& checkpoint_dir,
                       std::vector<std::size_t> boundaries, std::size_t cutoff) {
  RunConfig config = opts.load();
  if (!checkpoint_dir.empty()) {
    config = load_config(std::filesystem::path(checkpoint_dir) / "config.txt");
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
  }
  const PreparedData data = prepare_data(config);
  ParameterStore params;
  ModelConfig model;
  if (checkpoint_dir.empty()) {
    TrainResult result = train(config, data.split);
    params = std::move(result.params);
    model = result.model;
  } else {
    params = load_checkpoint(std::filesystem::path(checkpoint_dir) / "checkpoint.bin");
    model = model_config(config, data.split.train);
    validate(model, params);
  }
  std::vector<std::size_t> cutoffs = config.cutoffs;
  if (std::find(cutoffs.begin(), cutoffs.end(), cutoff) == cutoffs.end()) cutoffs.push_back(cutoff);
  const EvalReport report = evaluate(encode_for_inference(params, model, data.split.train), data.split, cutoffs);
  if (boundaries.empty()) boundaries = quintile_boundaries(data.split);
  const auto buckets = sparsity_buckets(data.split, report, boundaries, cutoff);
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  write_report_csv(dir / "report.csv", report);
  write_buckets_csv(dir / "buckets.csv", buckets);
  std::printf("bucket_lo,bucket_hi,count,mean_ndcg\n");
  for (const auto& b : buckets) {
    if (b.hi == std::numeric_limits<std::size_t>::max()) {
      std::printf("%zu,inf,%zu,%.6f\n", b.lo, b.count, b.mean_ndcg);
    } else {
      std::printf("%zu,%zu,%zu,%.6f\n", b.lo, b.hi, b.count, b.mean_ndcg);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-behavior self-supervised recommendation"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  ConfigOptions train_opts, swing_opts, noise_opts, sparsity_opts;

  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, metrics and diagnostics");
  train_opts.attach(train_cmd);

  std::string checkpoint_dir;
  auto* eval_cmd = app.add_subcommand("evaluate", "re-evaluate a training output directory");
  eval_cmd->add_option("--checkpoint", checkpoint_dir, "directory written by train")->required();

  std::string spec_path, synthetic_out;
  std::vector<std::string> spec_overrides;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic dataset as TSV");
  gen_cmd->add_option("--spec", spec_path, "synthetic spec file (users, items, behaviors, ...)");
  gen_cmd->add_option("--set", spec_overrides, "override a spec key (key=value), repeatable");
  gen_cmd->add_option("--out", synthetic_out, "output TSV")->required();

  auto* swing_cmd = app.add_subcommand("build-swing-index", "write the swing similarity index of the training split");
  swing_opts.attach(swing_cmd);

  std::vector<double> ratios{0.1, 0.2, 0.3};
  std::vector<std::uint64_t> seeds;
  std::size_t noise_cutoff = 10;
  auto* noise_cmd = app.add_subcommand("noise-study", "retrain under auxiliary-edge noise and report the decline");
  noise_opts.attach(noise_cmd);
  noise_cmd->add_option("--ratios", ratios, "noise ratios")->delimiter(',')->capture_default_str();
  noise_cmd->add_option("--seeds", seeds, "training seeds (default: the config seed)")->delimiter(',');
  noise_cmd->add_option("--cutoff", noise_cutoff, "Recall cutoff")->capture_default_str();

  std::string sparsity_checkpoint;
  std::vector<std::size_t> boundaries;
  std::size_t sparsity_cutoff = 50;
  auto* sparsity_cmd = app.add_subcommand("sparsity-study", "NDCG by training target degree bucket");
  sparsity_opts.attach(sparsity_cmd);
  sparsity_cmd->add_option("--checkpoint", sparsity_checkpoint, "reuse a train output directory instead of training");
  sparsity_cmd->add_option("--boundaries", boundaries, "bucket boundaries (default: quintiles)")->delimiter(',');
  sparsity_cmd->add_option("--cutoff", sparsity_cutoff, "NDCG cutoff")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(train_opts);
    if (*eval_cmd) return run_evaluate(checkpoint_dir);
    if (*gen_cmd) return run_gen_synthetic(spec_path, spec_overrides, synthetic_out);
    if (*swing_cmd) return run_build_swing_index(swing_opts);
    if (*noise_cmd) return run_noise_study(noise_opts, ratios, seeds, noise_cutoff);
    if (*sparsity_cmd) return run_sparsity_study(sparsity_opts, sparsity_checkpoint, boundaries, sparsity_cutoff);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
