#include "mcgcl/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "mcgcl/errors.hpp"

namespace mcgcl {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::without_validation: return "without_validation";
    case Variant::without_subtask: return "without_subtask";
    case Variant::without_main_task: return "without_main_task";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  for (auto v : {Variant::full, Variant::without_validation, Variant::without_subtask, Variant::without_main_task}) {
    if (text == variant_name(v)) return v;
  }
  throw ConfigError("unknown variant '" + std::string(text) + "'");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_double(std::string_view key, std::string_view value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not a number");
  }
  return v;
}

std::uint64_t to_unsigned(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not a non-negative integer");
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not true or false");
}

std::vector<std::uint64_t> to_seeds(std::string_view key, std::string_view value) {
  std::vector<std::uint64_t> seeds;
  while (!value.empty()) {
    auto comma = value.find(',');
    seeds.push_back(to_unsigned(key, trim(value.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return seeds;
}

struct Field {
  std::string_view key;
  std::string_view description;
  std::function<void(TrainConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number_field(std::string_view key, std::string_view description, T TrainConfig::*member) {
  Field f{key, description, {}, {}};
  if constexpr (std::is_same_v<T, double>) {
    f.set = [member](TrainConfig& c, std::string_view k, std::string_view v) { c.*member = to_double(k, v); };
    f.get = [member](const TrainConfig& c) { return format_double(c.*member); };
  } else {
    f.set = [member](TrainConfig& c, std::string_view k, std::string_view v) {
      c.*member = static_cast<T>(to_unsigned(k, v));
    };
    f.get = [member](const TrainConfig& c) { return std::to_string(c.*member); };
  }
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back(number_field("dim", "embedding dimension", &TrainConfig::dim));
    t.push_back(number_field("lr", "Adam learning rate", &TrainConfig::learning_rate));
    t.push_back(number_field("weight_decay", "L2 term added to every gradient", &TrainConfig::weight_decay));
    t.push_back(number_field("beta1", "Adam first-moment decay", &TrainConfig::beta1));
    t.push_back(number_field("beta2", "Adam second-moment decay", &TrainConfig::beta2));
    t.push_back(number_field("adam_epsilon", "Adam denominator offset", &TrainConfig::adam_epsilon));
    t.push_back(number_field("p_remove", "edge-removal probability of the first view", &TrainConfig::p_remove));
    t.push_back(number_field("p_add", "edge-addition fraction of the second view", &TrainConfig::p_add));
    t.push_back(number_field("epsilon", "fraction of training edges mined as hard samples", &TrainConfig::epsilon));
    t.push_back(number_field("alpha", "weight of the main-task contrastive losses", &TrainConfig::alpha));
    t.push_back(number_field("beta", "weight of the main-task prediction loss", &TrainConfig::beta));
    t.push_back(number_field("mu", "weight of the subtask contrastive losses", &TrainConfig::mu));
    t.push_back(number_field("gamma", "weight of the subtask loss", &TrainConfig::gamma));
    t.push_back(number_field("eta", "readout regularizer weight", &TrainConfig::eta));
    t.push_back(number_field("layers", "GCN layers (1-4)", &TrainConfig::layers));
    t.push_back(number_field("k_top", "out-edges kept per node in homogeneous graphs", &TrainConfig::k_top));
    t.push_back(number_field("epochs_main", "main-task epochs", &TrainConfig::epochs_main));
    t.push_back(number_field("epochs_subtask", "subtask epochs", &TrainConfig::epochs_subtask));
    t.push_back(number_field("epochs_validation", "validation-stage epochs", &TrainConfig::epochs_validation));
    t.push_back({"seeds", "comma-separated run seeds",
                 [](TrainConfig& c, std::string_view k, std::string_view v) { c.seeds = to_seeds(k, v); },
                 [](const TrainConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
                   return s;
                 }});
    t.push_back({"label_mode", "multi (low/mid/high) or binary (low/high)",
                 [](TrainConfig& c, std::string_view, std::string_view v) { c.label_mode = parse_mode(v); },
                 [](const TrainConfig& c) { return std::string(mode_name(c.label_mode)); }});
    t.push_back({"activation", "GCN layer activation: softmax or relu",
                 [](TrainConfig& c, std::string_view, std::string_view v) { c.activation = parse_activation(v); },
                 [](const TrainConfig& c) { return std::string(activation_name(c.activation)); }});
    t.push_back({"aggregation", "label combination: attention, mlp or average",
                 [](TrainConfig& c, std::string_view, std::string_view v) { c.aggregation = parse_aggregation(v); },
                 [](const TrainConfig& c) { return std::string(aggregation_name(c.aggregation)); }});
    t.push_back(number_field("temperature", "contrastive temperature", &TrainConfig::temperature));
    t.push_back({"cross_loss_sign", "paper (attract across labels) or repulsive",
                 [](TrainConfig& c, std::string_view, std::string_view v) { c.cross_loss_sign = parse_sign(v); },
                 [](const TrainConfig& c) { return std::string(sign_name(c.cross_loss_sign)); }});
    t.push_back({"per_label_h0", "separate initial embeddings per label encoder",
                 [](TrainConfig& c, std::string_view k, std::string_view v) { c.per_label_h0 = to_bool(k, v); },
                 [](const TrainConfig& c) { return std::string(c.per_label_h0 ? "true" : "false"); }});
    t.push_back({"variant", "full, without_validation, without_subtask or without_main_task",
                 [](TrainConfig& c, std::string_view, std::string_view v) { c.variant = parse_variant(v); },
                 [](const TrainConfig& c) { return std::string(variant_name(c.variant)); }});
    return t;
  }();
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void TrainConfig::validate() const {
  require(dim >= 1, "dim must be at least 1");
  require(learning_rate > 0.0, "lr must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
  require(adam_epsilon > 0.0, "adam_epsilon must be positive");
  require(p_remove >= 0.0 && p_remove <= 0.5, "p_remove must be in [0, 0.5]");
  require(p_add >= 0.0 && p_add <= 0.5, "p_add must be in [0, 0.5]");
  require(epsilon > 0.0 && epsilon <= 1.0, "epsilon must be in (0, 1]");
  require(alpha >= 0.0 && beta >= 0.0 && mu >= 0.0 && gamma >= 0.0, "loss weights must be non-negative");
  require(eta >= 0.0, "eta must be non-negative");
  require(layers >= 1 && layers <= 4, "layers must be in 1..4");
  require(k_top >= 1, "k_top must be at least 1");
  require(!seeds.empty(), "seeds must list at least one seed");
  require(temperature > 0.0, "temperature must be positive");
}

void set_config_value(TrainConfig& config, std::string_view key, std::string_view value) {
  if (key == "p_augment") {
    config.p_remove = config.p_add = to_double(key, value);
    return;
  }
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string serialize_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

std::string defaults_table() {
  const TrainConfig defaults;
  std::string out;
  for (const auto& f : fields()) {
    std::string key(f.key);
    std::string value = f.get(defaults);
    key.resize(std::max<std::size_t>(key.size(), 18), ' ');
    value.resize(std::max<std::size_t>(value.size(), 12), ' ');
    out += "  " + key + value + std::string(f.description) + "\n";
  }
  return out;
}

}  // namespace mcgcl
