#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mcgcl/aggregation.hpp"
#include "mcgcl/contrastive.hpp"
#include "mcgcl/encoder.hpp"
#include "mcgcl/graph.hpp"

namespace mcgcl {

enum class Variant : std::uint8_t { full, without_validation, without_subtask, without_main_task };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view text);

struct TrainConfig {
  std::size_t dim = 32;
  double learning_rate = 0.005;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double p_remove = 0.01;
  double p_add = 0.01;
  double epsilon = 0.3;
  double alpha = 0.6;
  double beta = 0.8;
  double mu = 0.6;
  double gamma = 0.7;
  double eta = 0.01;
  std::size_t layers = 2;
  std::size_t k_top = 10;
  std::size_t epochs_main = 100;
  std::size_t epochs_subtask = 50;
  std::size_t epochs_validation = 50;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  LabelMode label_mode = LabelMode::multi;
  Activation activation = Activation::softmax;
  AggregationMode aggregation = AggregationMode::attention;
  double temperature = 1.0;
  CrossLossSign cross_loss_sign = CrossLossSign::paper;
  bool per_label_h0 = false;
  Variant variant = Variant::full;

  bool operator==(const TrainConfig&) const = default;

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

// Sets one field from its textual value. Unknown keys and bad values throw ConfigError.
void set_config_value(TrainConfig& config, std::string_view key, std::string_view value);

// Flat key=value lines; '#' starts a comment.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

// One key=value line per field, in a fixed order.
std::string serialize_config(const TrainConfig& config);

// Every accepted key, in serialization order.
std::vector<std::string> config_keys();

// Key, default and description for every field, for --help.
std::string defaults_table();

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace mcgcl
