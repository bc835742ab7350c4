#pragma once
// Gradient manipulation between a target loss and auxiliary losses, and the
// adaptive-moment parameter update.
//
// Per unit (one parameter tensor, or everything flattened), an auxiliary
// gradient larger than the target gradient is projected onto the target's
// normal plane when the two conflict, then rescaled toward the target norm:
//   g <- r * (|g_tar| / |g|) * g + (1 - r) * g
// Smaller auxiliaries pass through untouched.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mbssl/tensor.hpp"

namespace mbssl {

enum class Strategy { hmg, strategy_a, strategy_b, strategy_c, fixed_weights };
enum class Granularity { per_tensor, global };

Strategy parse_strategy(const std::string& text);
std::string to_string(Strategy s);
Granularity parse_granularity(const std::string& text);
std::string to_string(Granularity g);

struct OptimizerConfig {
  Strategy strategy = Strategy::hmg;
  double relax = 0.5;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Granularity granularity = Granularity::per_tensor;
  // Restricts manipulation to the listed parameters; others are summed plainly.
  std::function<bool(const std::string&)> shared = nullptr;

  void validate() const;
};

struct ProjectionResult {
  NamedGradients gradients;
  bool applied = false;
  std::size_t skipped_units = 0;  // units with a zero target gradient
};

ProjectionResult project_if_conflicting(const NamedGradients& aux, const NamedGradients& target,
                                        Granularity granularity);

NamedGradients balance_magnitude(const NamedGradients& aux, const NamedGradients& target, double relax,
                                 Granularity granularity);

struct TaskGradients {
  NamedGradients target;
  std::vector<std::string> names;
  std::vector<NamedGradients> auxiliaries;
  std::vector<double> weights;  // used by fixed-weight mode only
};

struct AuxiliaryRecord {
  std::string name;
  bool conflict = false;  // cosine with the target over all parameters < 0
  double pre_norm = 0.0;
  double post_norm = 0.0;
  bool projected = false;
  double scale = 1.0;  // post_norm / pre_norm
};

struct StepDiagnostics {
  std::vector<AuxiliaryRecord> auxiliaries;
  double target_norm = 0.0;
  std::size_t skipped_units = 0;
};

// Combined update direction G = g_tar + sum of manipulated auxiliaries.
NamedGradients combine_gradients(const TaskGradients& grads, const OptimizerConfig& config,
                                 StepDiagnostics* diagnostics = nullptr);

class AdamState {
 public:
  void update(ParameterStore& params, const NamedGradients& direction, const OptimizerConfig& config);
  std::uint64_t steps() const { return steps_; }
  const Tensor* first_moment(const std::string& name) const;
  const Tensor* second_moment(const std::string& name) const;

 private:
  std::uint64_t steps_ = 0;
  NamedGradients m_;
  NamedGradients v_;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(std::move(config)) { config_.validate(); }
  StepDiagnostics step(ParameterStore& params, const TaskGradients& grads);
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  AdamState adam_;
};

// Append-only per-step records plus per-epoch conflict proportion.
class DiagnosticsLog {
 public:
  void record(std::size_t epoch, std::size_t step, const StepDiagnostics& diagnostics);
  // Fraction of (step, auxiliary) records flagged as conflicting in that epoch; 0 if none.
  double conflict_proportion(std::size_t epoch) const;
  void write_steps(const std::filesystem::path& path) const;
  void write_epochs(const std::filesystem::path& path) const;

  struct Row {
    std::size_t epoch;
    std::size_t step;
    AuxiliaryRecord record;
  };
  const std::vector<Row>& rows() const { return rows_; }

 private:
  std::vector<Row> rows_;
};

}  // namespace mbssl
