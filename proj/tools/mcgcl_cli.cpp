// mcgcl: train, evaluate and generate data for the two-task contrastive link predictor.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 data error
// (including checkpoint/data shape mismatch), 3 numeric divergence,
// 4 output could not be written.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mcgcl/checkpoint.hpp"
#include "mcgcl/config.hpp"
#include "mcgcl/errors.hpp"
#include "mcgcl/framework.hpp"
#include "mcgcl/graph.hpp"
#include "mcgcl/manifest.hpp"

namespace fs = std::filesystem;
using namespace mcgcl;

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kData = 2, kDivergence = 3, kOutput = 4 };

fs::path resolve_data(const fs::path& given) {
  if (fs::exists(given) || given.is_absolute()) return given;
  if (const char* dir = std::getenv("MCGCL_DATA_DIR"); dir != nullptr && *dir != '\0') {
    fs::path candidate = fs::path(dir) / given;
    if (fs::exists(candidate)) return candidate;
  }
  return given;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool parallel = false;
  std::map<std::string, std::string> overrides;
};

int cmd_train(const TrainArgs& args) {
  TrainConfig config;
  if (!args.config.empty()) {
    if (!fs::exists(args.config)) throw ConfigError("config file not found: " + args.config);
    config = load_config(args.config);
  }
  for (const auto& [key, value] : args.overrides) set_config_value(config, key, value);
  config.validate();

  const BipartiteGraph graph = ingest_edge_list(resolve_data(args.data), config.label_mode);

  std::vector<FrameworkResult> runs(config.seeds.size());
  if (args.parallel && config.seeds.size() > 1) {
    std::vector<std::exception_ptr> errors(config.seeds.size());
    {
      std::vector<std::jthread> workers;
      for (std::size_t k = 0; k < config.seeds.size(); ++k) {
        workers.emplace_back([&, k] {
          try {
            runs[k] = run_framework(graph, config, config.seeds[k]);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t k = 0; k < config.seeds.size(); ++k) runs[k] = run_framework(graph, config, config.seeds[k]);
  }

  const fs::path out(args.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw OutputError("cannot create output directory " + out.string() + ": " + ec.message());
  write_text(out / "manifest.txt", render_manifest(config, runs, utc_timestamp()));
  write_text(out / "losses.csv", render_loss_csv(runs));
  for (const auto& r : runs) {
    const std::string s = std::to_string(r.seed);
    save_model(out / ("checkpoint-seed" + s + ".ckpt"), {r.seed, config.label_mode, r.z_user, r.z_item, r.head});
    std::ofstream hard(out / ("hard-seed" + s + ".tsv"));
    if (!hard) throw OutputError("cannot write hard-sample list in " + out.string());
    r.hard.write_tsv(hard);
    std::cout << "seed " << s << ": AUC " << percent(r.test.auc) << "  Macro-F1 " << percent(r.test.macro_f1)
              << "  Micro-F1 " << percent(r.test.micro_f1) << '\n';
  }
  std::cout << "wrote " << (out / "manifest.txt").string() << '\n';
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data) {
  const ModelCheckpoint model = load_model(checkpoint);
  const BipartiteGraph graph = ingest_edge_list(resolve_data(data), model.mode);
  if (graph.user_count() != model.z_user.rows() || graph.item_count() != model.z_item.rows()) {
    throw DataError("checkpoint holds " + std::to_string(model.z_user.rows()) + " users and " +
                    std::to_string(model.z_item.rows()) + " items, data has " + std::to_string(graph.user_count()) +
                    " and " + std::to_string(graph.item_count()));
  }
  const SplitGraphs parts = split(graph, model.seed);
  Tensor probs = predict_edges(Tensor::constant(model.z_user), Tensor::constant(model.z_item), parts.test.edges(),
                               model.head);
  const Metrics m = evaluate(probs.value(), class_indices(parts.test.edges(), graph.mode()));
  std::cout << "AUC       " << percent(m.auc) << '\n'
            << "Macro-F1  " << percent(m.macro_f1) << '\n'
            << "Micro-F1  " << percent(m.micro_f1) << '\n'
            << "Accuracy  " << percent(m.accuracy) << '\n';
  return kOk;
}

int cmd_synth(const SynthParams& params, const std::string& out) {
  const BipartiteGraph graph = synth_generate(params);
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw OutputError("cannot write " + out);
  write_tsv(graph, file);
  if (!file) throw OutputError("write failed for " + out);
  std::cout << "users=" << graph.user_count() << " items=" << graph.item_count() << " edges=" << graph.edge_count()
            << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-task graph contrastive learning for labeled link prediction"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train over every configured seed and write a manifest and checkpoints");
  train->add_option("--config", train_args.config, "key=value config file");
  train->add_option("--data", train_args.data, "TSV edge list (relative paths also tried under $MCGCL_DATA_DIR)")
      ->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_flag("--parallel-seeds", train_args.parallel, "run seeds concurrently");
  std::map<std::string, std::string> raw_overrides;
  for (const auto& key : config_keys()) {
    train->add_option("--" + key, raw_overrides[key], "override config key " + key);
  }
  train->add_option("--p_augment", raw_overrides["p_augment"], "set p_remove and p_add together");
  train->footer("Config keys and defaults:\n" + defaults_table());

  std::string checkpoint, eval_data;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on the test split of a dataset");
  eval->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
  eval->add_option("--data", eval_data, "TSV edge list used for training")->required();

  SynthParams synth_params;
  std::string synth_out;
  std::string synth_mode = "multi";
  auto* synth = app.add_subcommand("synth", "write a planted-cluster dataset");
  synth->add_option("--users", synth_params.users, "user count")->capture_default_str();
  synth->add_option("--items", synth_params.items, "item count")->capture_default_str();
  synth->add_option("--clusters", synth_params.clusters, "cluster count")->capture_default_str();
  synth->add_option("--noise", synth_params.noise, "label redraw probability")->capture_default_str();
  synth->add_option("--degree", synth_params.degree, "edges per user")->capture_default_str();
  synth->add_option("--seed", synth_params.seed, "generator seed")->capture_default_str();
  synth->add_option("--mode", synth_mode, "multi or binary")->capture_default_str();
  synth->add_option("--out", synth_out, "output TSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*train) {
      for (const auto& [key, value] : raw_overrides) {
        const std::string flag = "--" + key;
        if (train->count(flag) > 0) train_args.overrides[key] = value;
      }
      return cmd_train(train_args);
    }
    if (*eval) return cmd_eval(checkpoint, eval_data);
    synth_params.mode = parse_mode(synth_mode);
    return cmd_synth(synth_params, synth_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const OutputError& e) {
    std::cerr << "output error: " << e.what() << '\n';
    return kOutput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
}
