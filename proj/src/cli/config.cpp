#include "mbssl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mbssl {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(trim(part));
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split_list(v)) out.push_back(parse_double(key, p));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using FieldTable = std::vector<std::pair<std::string, Field>>;

const FieldTable& fields() {
  static const FieldTable table = [] {
    FieldTable t;
    auto num = [&](const std::string& key, double RunConfig::*m) {
      t.push_back({key, {[m, key](RunConfig& c, const std::string& v) { c.*m = parse_double(key, v); },
                         [m](const RunConfig& c) { return fmt(c.*m); }}});
    };
    auto count = [&](const std::string& key, std::size_t RunConfig::*m) {
      t.push_back({key, {[m, key](RunConfig& c, const std::string& v) { c.*m = parse_uint(key, v); },
                         [m](const RunConfig& c) { return std::to_string(c.*m); }}});
    };
    auto flag = [&](const std::string& key, bool RunConfig::*m) {
      t.push_back({key, {[m, key](RunConfig& c, const std::string& v) { c.*m = parse_bool(key, v); },
                         [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }}});
    };
    auto text = [&](const std::string& key, std::string RunConfig::*m) {
      t.push_back({key, {[m](RunConfig& c, const std::string& v) { c.*m = v; },
                         [m](const RunConfig& c) { return c.*m; }}});
    };
    auto list = [&](const std::string& key, std::vector<double> RunConfig::*m) {
      t.push_back({key, {[m, key](RunConfig& c, const std::string& v) { c.*m = parse_doubles(key, v); },
                         [m](const RunConfig& c) { return join(c.*m); }}});
    };
    auto syn_count = [&](const std::string& key, std::size_t SyntheticSpec::*m) {
      t.push_back({key, {[m, key](RunConfig& c, const std::string& v) { c.synthetic.*m = parse_uint(key, v); },
                         [m](const RunConfig& c) { return std::to_string(c.synthetic.*m); }}});
    };
    auto syn_num = [&](const std::string& key, double SyntheticSpec::*m) {
      t.push_back({key, {[m, key](RunConfig& c, const std::string& v) { c.synthetic.*m = parse_double(key, v); },
                         [m](const RunConfig& c) { return fmt(c.synthetic.*m); }}});
    };

    text("dataset", &RunConfig::dataset);
    count("num_behaviors", &RunConfig::num_behaviors);
    syn_count("synthetic_users", &SyntheticSpec::users);
    syn_count("synthetic_items", &SyntheticSpec::items);
    syn_count("synthetic_behaviors", &SyntheticSpec::behaviors);
    syn_count("synthetic_latent_dim", &SyntheticSpec::latent_dim);
    syn_num("synthetic_density", &SyntheticSpec::density);
    syn_num("synthetic_sharpness", &SyntheticSpec::sharpness);
    t.push_back({"synthetic_cascade",
                 {[](RunConfig& c, const std::string& v) { c.synthetic.cascade = parse_doubles("synthetic_cascade", v); },
                  [](const RunConfig& c) { return join(c.synthetic.cascade); }}});
    syn_num("synthetic_noise", &SyntheticSpec::noise);
    t.push_back({"synthetic_seed",
                 {[](RunConfig& c, const std::string& v) { c.synthetic.seed = parse_uint("synthetic_seed", v); },
                  [](const RunConfig& c) { return std::to_string(c.synthetic.seed); }}});

    count("dim", &RunConfig::dim);
    count("attention_dim", &RunConfig::attention_dim);
    count("layers", &RunConfig::layers);
    num("leaky_slope", &RunConfig::leaky_slope);
    num("embedding_dropout", &RunConfig::embedding_dropout);

    num("temperature", &RunConfig::temperature);
    num("swing_alpha", &RunConfig::swing_alpha);
    count("fn_users", &RunConfig::fn_users);
    count("fn_items", &RunConfig::fn_items);
    num("edge_dropout", &RunConfig::edge_dropout);
    list("ssl_weights", &RunConfig::ssl_weights);
    num("intra_weight", &RunConfig::intra_weight);

    list("positive_weight", &RunConfig::positive_weight);
    list("negative_weight", &RunConfig::negative_weight);
    list("lambda", &RunConfig::lambda);

    text("strategy", &RunConfig::strategy);
    num("relax", &RunConfig::relax);
    num("learning_rate", &RunConfig::learning_rate);
    num("beta1", &RunConfig::beta1);
    num("beta2", &RunConfig::beta2);
    num("epsilon", &RunConfig::epsilon);
    text("granularity", &RunConfig::granularity);
    text("shared_parameters", &RunConfig::shared_parameters);

    count("batch_size", &RunConfig::batch_size);
    count("epochs", &RunConfig::epochs);
    t.push_back({"seed", {[](RunConfig& c, const std::string& v) { c.seed = parse_uint("seed", v); },
                          [](const RunConfig& c) { return std::to_string(c.seed); }}});
    t.push_back({"cutoffs",
                 {[](RunConfig& c, const std::string& v) {
                    c.cutoffs.clear();
                    for (const auto& p : split_list(v)) c.cutoffs.push_back(parse_uint("cutoffs", p));
                  },
                  [](const RunConfig& c) { return join(c.cutoffs); }}});

    flag("disable_cdm", &RunConfig::disable_cdm);
    flag("disable_ssl_inter", &RunConfig::disable_ssl_inter);
    flag("disable_ssl_intra", &RunConfig::disable_ssl_intra);
    flag("disable_hmg", &RunConfig::disable_hmg);

    text("out_dir", &RunConfig::out_dir);
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return &field;
  }
  return nullptr;
}

std::string valid_keys() {
  std::string out;
  for (const auto& key : RunConfig::keys()) out += (out.empty() ? "" : ", ") + key;
  return out;
}

// Calls assign(key, value) per non-empty line; errors are prefixed with origin:line.
void for_each_assignment(const std::string& text, const std::string& origin,
                         const std::function<void(const std::string&, const std::string&)>& assign) {
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
    try {
      assign(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void SyntheticSpec::validate() const {
  if (users == 0 || items == 0 || behaviors == 0) throw std::invalid_argument("synthetic counts must be positive");
  if (latent_dim == 0) throw std::invalid_argument("synthetic latent dimension must be positive");
  if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("synthetic density must lie in (0, 1]");
  if (cascade.empty() || (cascade.size() != 1 && cascade.size() != behaviors - 1)) {
    throw std::invalid_argument("synthetic cascade needs one value or one per behavior transition");
  }
  for (double c : cascade) {
    if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("cascade probabilities must lie in (0, 1]");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument("synthetic noise must lie in [0, 1]");
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, field] : fields()) out.push_back(name);
    return out;
  }();
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw std::invalid_argument("unknown key '" + key + "'; valid keys: " + valid_keys());
  f->set(*this, value);
}

std::string RunConfig::get(const std::string& key) const {
  const Field* f = find_field(key);
  if (f == nullptr) throw std::invalid_argument("unknown key '" + key + "'; valid keys: " + valid_keys());
  return f->get(*this);
}

void RunConfig::validate() const {
  if (!dataset.empty() && num_behaviors == 0) {
    throw std::invalid_argument("missing required key num_behaviors (needed with dataset)");
  }
  if (dataset.empty()) synthetic.validate();
  if (dim == 0 || attention_dim == 0) throw std::invalid_argument("dim and attention_dim must be positive");
  if (!(embedding_dropout >= 0.0 && embedding_dropout < 1.0)) {
    throw std::invalid_argument("embedding_dropout must lie in [0, 1)");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(swing_alpha > 0.0)) throw std::invalid_argument("swing_alpha must be positive");
  if (!(edge_dropout >= 0.0 && edge_dropout < 1.0)) throw std::invalid_argument("edge_dropout must lie in [0, 1)");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (cutoffs.empty()) throw std::invalid_argument("cutoffs must not be empty");
  for (std::size_t c : cutoffs) {
    if (c == 0) throw std::invalid_argument("cutoffs must be positive");
  }
  if (shared_parameters != "all" && shared_parameters != "embeddings") {
    throw std::invalid_argument("shared_parameters must be all or embeddings");
  }
  if (positive_weight.empty() || negative_weight.empty()) {
    throw std::invalid_argument("positive_weight and negative_weight need at least one value");
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(*this) + "\n";
  return out;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig config;
  for_each_assignment(text, origin, [&](const std::string& k, const std::string& v) { config.set(k, v); });
  return config;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config_text(read_file(path), path.string()); }

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << config.to_text();
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  config.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& origin) {
  RunConfig holder;
  static const std::map<std::string, std::string> aliases{
      {"users", "synthetic_users"},     {"items", "synthetic_items"},   {"behaviors", "synthetic_behaviors"},
      {"latent_dim", "synthetic_latent_dim"}, {"density", "synthetic_density"},
      {"sharpness", "synthetic_sharpness"},   {"cascade", "synthetic_cascade"},
      {"noise", "synthetic_noise"},     {"seed", "synthetic_seed"}};
  for_each_assignment(text, origin, [&](const std::string& k, const std::string& v) {
    auto it = aliases.find(k);
    if (it == aliases.end()) {
      std::string valid;
      for (const auto& [name, target] : aliases) valid += (valid.empty() ? "" : ", ") + name;
      throw std::invalid_argument("unknown key '" + k + "'; valid keys: " + valid);
    }
    holder.set(it->second, v);
  });
  holder.synthetic.validate();
  return holder.synthetic;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return parse_synthetic_spec(read_file(path), path.string());
}

}  // namespace mbssl
