#pragma once
// Run configuration: `key = value` text, one per line, `#` starts a comment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mbssl {

struct SyntheticSpec {
  std::size_t users = 300;
  std::size_t items = 500;
  std::size_t behaviors = 3;
  std::size_t latent_dim = 8;
  double density = 0.05;             // first-behavior edges / (|U| |I|)
  double sharpness = 2.0;            // how strongly latent affinity drives the first behavior
  std::vector<double> cascade{0.5};  // keep probability from behavior k to k+1; one value repeats
  double noise = 0.0;                // extra random auxiliary edges, fraction of each behavior
  std::uint64_t seed = 1;

  void validate() const;
  double cascade_at(std::size_t step) const { return cascade.size() == 1 ? cascade[0] : cascade.at(step); }
};

struct RunConfig {
  // data
  std::string dataset;  // empty: generate from the synthetic spec
  std::size_t num_behaviors = 0;
  SyntheticSpec synthetic;

  // model
  std::size_t dim = 64;
  std::size_t attention_dim = 64;
  std::size_t layers = 4;
  double leaky_slope = 0.01;
  double embedding_dropout = 0.3;

  // self-supervision
  double temperature = 0.2;
  double swing_alpha = 0.5;
  std::size_t fn_users = 5;
  std::size_t fn_items = 5;
  double edge_dropout = 0.5;
  std::vector<double> ssl_weights;  // mu per auxiliary behavior (fixed-weight mode); empty: all 1
  double intra_weight = 1.0;

  // recommendation loss
  std::vector<double> positive_weight{1.0};  // c+ per behavior; one value repeats
  std::vector<double> negative_weight{0.1};  // c- per behavior; one value repeats
  std::vector<double> lambda;                // empty: 1/K each

  // optimizer
  std::string strategy = "hmg";
  double relax = 0.5;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::string granularity = "per-parameter-tensor";
  std::string shared_parameters = "all";  // all | embeddings

  // training
  std::size_t batch_size = 256;
  std::size_t epochs = 30;
  std::uint64_t seed = 42;
  std::vector<std::size_t> cutoffs{10, 50};

  // ablations
  bool disable_cdm = false;
  bool disable_ssl_inter = false;
  bool disable_ssl_intra = false;
  bool disable_hmg = false;

  std::string out_dir = "out";

  // Throws std::invalid_argument naming the valid keys on an unknown key.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  void validate() const;

  // Every key in canonical order; parsing the text gives back an equal config.
  std::string to_text() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

// `key=value` override as given on the command line.
void apply_override(RunConfig& config, const std::string& assignment);

// Synthetic-only keys (`users`, `items`, `behaviors`, ...) for gen-synthetic spec files.
SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& origin = "<spec>");
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

}  // namespace mbssl
