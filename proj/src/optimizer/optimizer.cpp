#include "mbssl/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "mbssl/kernels.hpp"

namespace mbssl {
namespace {

using Unit = std::vector<std::string>;

std::vector<Unit> units_of(const NamedGradients& a, const NamedGradients& b, Granularity granularity,
                           const std::function<bool(const std::string&)>& keep = nullptr) {
  std::set<std::string> names;
  for (const auto& [n, t] : a) {
    if (!keep || keep(n)) names.insert(n);
  }
  for (const auto& [n, t] : b) {
    if (!keep || keep(n)) names.insert(n);
  }
  std::vector<Unit> out;
  if (names.empty()) return out;
  if (granularity == Granularity::global) {
    out.emplace_back(names.begin(), names.end());
  } else {
    for (const auto& n : names) out.push_back({n});
  }
  return out;
}

double unit_dot(const NamedGradients& a, const NamedGradients& b, const Unit& unit) {
  double s = 0.0;
  for (const auto& n : unit) {
    auto ia = a.find(n);
    auto ib = b.find(n);
    if (ia != a.end() && ib != b.end()) s += kernels::dot(ia->second.values(), ib->second.values());
  }
  return s;
}

double unit_norm(const NamedGradients& g, const Unit& unit) { return std::sqrt(unit_dot(g, g, unit)); }

// out[unit] += scale * b[unit]
void unit_axpy(NamedGradients& out, const NamedGradients& b, const Unit& unit, double scale) {
  for (const auto& n : unit) {
    auto ib = b.find(n);
    if (ib == b.end()) continue;
    auto [it, inserted] = out.try_emplace(n, Tensor(ib->second.shape()));
    double* dst = it->second.values().data();
    const double* src = ib->second.values().data();
    for (std::size_t i = 0; i < ib->second.size(); ++i) dst[i] += scale * src[i];
  }
}

void unit_scale(NamedGradients& g, const Unit& unit, double scale) {
  for (const auto& n : unit) {
    auto it = g.find(n);
    if (it == g.end()) continue;
    for (double& v : it->second.values()) v *= scale;
  }
}

// Returns whether a projection happened on this unit.
bool project_unit(NamedGradients& aux, const NamedGradients& target, const Unit& unit, bool& skipped) {
  const double tt = unit_dot(target, target, unit);
  if (tt == 0.0) {
    skipped = true;
    return false;
  }
  const double at = unit_dot(aux, target, unit);
  if (!(at < 0.0)) return false;
  unit_axpy(aux, target, unit, -at / tt);
  return true;
}

void balance_unit(NamedGradients& aux, double target_norm, const Unit& unit, double relax) {
  const double n = unit_norm(aux, unit);
  if (n == 0.0) return;
  unit_scale(aux, unit, relax * target_norm / n + (1.0 - relax));
}

}  // namespace

Strategy parse_strategy(const std::string& text) {
  if (text == "hmg") return Strategy::hmg;
  if (text == "strategy-a") return Strategy::strategy_a;
  if (text == "strategy-b") return Strategy::strategy_b;
  if (text == "strategy-c") return Strategy::strategy_c;
  if (text == "fixed-weights") return Strategy::fixed_weights;
  throw std::invalid_argument("unknown strategy '" + text +
                              "' (expected hmg, strategy-a, strategy-b, strategy-c, fixed-weights)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::hmg: return "hmg";
    case Strategy::strategy_a: return "strategy-a";
    case Strategy::strategy_b: return "strategy-b";
    case Strategy::strategy_c: return "strategy-c";
    case Strategy::fixed_weights: return "fixed-weights";
  }
  return "?";
}

Granularity parse_granularity(const std::string& text) {
  if (text == "per-parameter-tensor") return Granularity::per_tensor;
  if (text == "global-flatten") return Granularity::global;
  throw std::invalid_argument("unknown norm granularity '" + text +
                              "' (expected per-parameter-tensor, global-flatten)");
}

std::string to_string(Granularity g) {
  return g == Granularity::per_tensor ? "per-parameter-tensor" : "global-flatten";
}

void OptimizerConfig::validate() const {
  if (!(relax >= 0.0 && relax <= 1.0)) throw std::invalid_argument("relax factor must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("moment decay rates must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

ProjectionResult project_if_conflicting(const NamedGradients& aux, const NamedGradients& target,
                                        Granularity granularity) {
  ProjectionResult r{aux, false, 0};
  for (const Unit& unit : units_of(aux, target, granularity)) {
    bool skipped = false;
    r.applied |= project_unit(r.gradients, target, unit, skipped);
    r.skipped_units += skipped;
  }
  return r;
}

NamedGradients balance_magnitude(const NamedGradients& aux, const NamedGradients& target, double relax,
                                 Granularity granularity) {
  NamedGradients out = aux;
  for (const Unit& unit : units_of(aux, target, granularity)) balance_unit(out, unit_norm(target, unit), unit, relax);
  return out;
}

NamedGradients combine_gradients(const TaskGradients& grads, const OptimizerConfig& config,
                                 StepDiagnostics* diagnostics) {
  if (grads.names.size() != grads.auxiliaries.size()) {
    throw std::invalid_argument("combine_gradients: one name per auxiliary required");
  }
  StepDiagnostics local;
  StepDiagnostics& diag = diagnostics ? *diagnostics : local;
  diag = StepDiagnostics{};
  diag.target_norm = norm(grads.target);

  NamedGradients combined = grads.target;
  for (std::size_t a = 0; a < grads.auxiliaries.size(); ++a) {
    const NamedGradients& aux = grads.auxiliaries[a];
    AuxiliaryRecord rec;
    rec.name = grads.names[a];
    rec.pre_norm = norm(aux);
    rec.conflict = dot(aux, grads.target) < 0.0;

    if (config.strategy == Strategy::fixed_weights) {
      const double w = a < grads.weights.size() ? grads.weights[a] : 1.0;
      accumulate(combined, aux, w);
      rec.post_norm = std::abs(w) * rec.pre_norm;
    } else {
      NamedGradients manipulated = aux;
      for (const Unit& unit : units_of(aux, grads.target, config.granularity, config.shared)) {
        const double tar_norm = unit_norm(grads.target, unit);
        bool skipped = false;
        switch (config.strategy) {
          case Strategy::hmg:
            if (unit_norm(aux, unit) > tar_norm) {
              rec.projected |= project_unit(manipulated, grads.target, unit, skipped);
              balance_unit(manipulated, tar_norm, unit, config.relax);
            }
            break;
          case Strategy::strategy_a:
            rec.projected |= project_unit(manipulated, grads.target, unit, skipped);
            break;
          case Strategy::strategy_b:
            balance_unit(manipulated, tar_norm, unit, config.relax);
            break;
          case Strategy::strategy_c:
            rec.projected |= project_unit(manipulated, grads.target, unit, skipped);
            balance_unit(manipulated, tar_norm, unit, config.relax);
            break;
          case Strategy::fixed_weights:
            break;
        }
        diag.skipped_units += skipped;
      }
      rec.post_norm = norm(manipulated);
      accumulate(combined, manipulated);
    }
    rec.scale = rec.pre_norm > 0.0 ? rec.post_norm / rec.pre_norm : 1.0;
    diag.auxiliaries.push_back(rec);
  }
  return combined;
}

void AdamState::update(ParameterStore& params, const NamedGradients& direction, const OptimizerConfig& config) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    auto [mit, m_new] = m_.try_emplace(name, Tensor(p.shape()));
    auto [vit, v_new] = v_.try_emplace(name, Tensor(p.shape()));
    double* m = mit->second.values().data();
    double* v = vit->second.values().data();
    double* w = p.values().data();
    auto git = direction.find(name);
    const double* g = git == direction.end() ? nullptr : git->second.values().data();
    if (g != nullptr && git->second.shape() != p.shape()) {
      throw std::invalid_argument("gradient for " + name + " has the wrong shape");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g ? g[i] : 0.0;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      const double mhat = m[i] / correction1;
      const double vhat = v[i] / correction2;
      w[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

const Tensor* AdamState::first_moment(const std::string& name) const {
  auto it = m_.find(name);
  return it == m_.end() ? nullptr : &it->second;
}

const Tensor* AdamState::second_moment(const std::string& name) const {
  auto it = v_.find(name);
  return it == v_.end() ? nullptr : &it->second;
}

StepDiagnostics Optimizer::step(ParameterStore& params, const TaskGradients& grads) {
  StepDiagnostics diag;
  const NamedGradients direction = combine_gradients(grads, config_, &diag);
  adam_.update(params, direction, config_);
  return diag;
}

void DiagnosticsLog::record(std::size_t epoch, std::size_t step, const StepDiagnostics& diagnostics) {
  for (const auto& rec : diagnostics.auxiliaries) rows_.push_back({epoch, step, rec});
}

double DiagnosticsLog::conflict_proportion(std::size_t epoch) const {
  std::size_t total = 0;
  std::size_t conflicts = 0;
  for (const auto& row : rows_) {
    if (row.epoch != epoch) continue;
    ++total;
    conflicts += row.record.conflict;
  }
  return total == 0 ? 0.0 : static_cast<double>(conflicts) / static_cast<double>(total);
}

void DiagnosticsLog::write_steps(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,step,aux_name,conflict,pre_norm,post_norm,projected\n";
  char buf[128];
  for (const auto& row : rows_) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g", row.record.pre_norm, row.record.post_norm);
    out << row.epoch << ',' << row.step << ',' << row.record.name << ',' << int(row.record.conflict) << ',' << buf
        << ',' << int(row.record.projected) << '\n';
  }
}

void DiagnosticsLog::write_epochs(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,conflict_proportion\n";
  std::set<std::size_t> epochs;
  for (const auto& row : rows_) epochs.insert(row.epoch);
  char buf[64];
  for (std::size_t e : epochs) {
    std::snprintf(buf, sizeof(buf), "%.6f", conflict_proportion(e));
    out << e << ',' << buf << '\n';
  }
}

}  // namespace mbssl
