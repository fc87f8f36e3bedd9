#include "mcgcl/manifest.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "mcgcl/errors.hpp"

namespace mcgcl {

namespace {

class Writer {
 public:
  void put(const std::string& key, const std::string& value) { out_ << key << '=' << value << '\n'; }
  void put(const std::string& key, double value) { put(key, format_double(value)); }
  void put_count(const std::string& key, std::uint64_t value) { put(key, std::to_string(value)); }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

void put_metrics(Writer& w, const std::string& prefix, const Metrics& m) {
  w.put(prefix + ".auc", m.auc ? format_double(*m.auc) : std::string("absent"));
  w.put(prefix + ".macro_f1", m.macro_f1);
  w.put(prefix + ".micro_f1", m.micro_f1);
  w.put(prefix + ".accuracy", m.accuracy);
}

void put_aggregate(Writer& w, const std::string& key, const std::vector<double>& values) {
  if (values.empty()) return;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
  w.put(key + ".mean", mean);
  w.put(key + ".std", sd);
}

}  // namespace

std::string render_manifest(const TrainConfig& config, std::span<const FrameworkResult> runs,
                            std::string_view timestamp) {
  Writer w;
  w.put("timestamp", std::string(timestamp));
  std::istringstream cfg(serialize_config(config));
  for (std::string line; std::getline(cfg, line);) {
    const auto eq = line.find('=');
    w.put("config." + line.substr(0, eq), line.substr(eq + 1));
  }
  for (const auto& r : runs) {
    const std::string s = "seed." + std::to_string(r.seed);
    w.put(s + ".variant", std::string(variant_name(r.variant)));
    w.put_count(s + ".edges.train", r.train_edges);
    w.put_count(s + ".edges.validation", r.validation_edges);
    w.put_count(s + ".edges.test", r.test_edges);
    w.put_count(s + ".edges.hard", r.hard_edges);
    w.put_count(s + ".masked.users", r.masked_users);
    w.put_count(s + ".masked.items", r.masked_items);
    w.put_count(s + ".similarity.main_per_epoch", r.main_similarity_per_epoch);
    w.put_count(s + ".similarity.subtask_per_epoch", r.subtask_similarity_per_epoch);
    for (std::size_t e = 0; e < r.main_epochs.size(); ++e)
      w.put(s + ".loss.main." + std::to_string(e + 1), r.main_epochs[e].objective);
    for (std::size_t e = 0; e < r.subtask_epochs.size(); ++e)
      w.put(s + ".loss.subtask." + std::to_string(e + 1), r.subtask_epochs[e].objective);
    for (std::size_t e = 0; e < r.validation_epochs.size(); ++e)
      w.put(s + ".loss.validation." + std::to_string(e + 1), r.validation_epochs[e]);
    const auto& c = r.components;
    w.put(s + ".components.main_same", c.main_same);
    w.put(s + ".components.main_cross", c.main_cross);
    w.put(s + ".components.main", c.main);
    w.put(s + ".components.sub_same", c.sub_same);
    w.put(s + ".components.sub_cross", c.sub_cross);
    w.put(s + ".components.sub", c.sub);
    w.put(s + ".components.validation", c.validation);
    w.put(s + ".total_loss", r.total);
    w.put(s + ".fusion.user.subtask", r.user_fusion[0]);
    w.put(s + ".fusion.user.main", r.user_fusion[1]);
    w.put(s + ".fusion.item.subtask", r.item_fusion[0]);
    w.put(s + ".fusion.item.main", r.item_fusion[1]);
    if (r.after_main) put_metrics(w, s + ".after_main", *r.after_main);
    if (r.after_subtask) put_metrics(w, s + ".after_subtask", *r.after_subtask);
    put_metrics(w, s + ".test", r.test);
  }
  std::vector<double> auc, macro, micro, acc;
  for (const auto& r : runs) {
    if (r.test.auc) auc.push_back(*r.test.auc);
    macro.push_back(r.test.macro_f1);
    micro.push_back(r.test.micro_f1);
    acc.push_back(r.test.accuracy);
  }
  put_aggregate(w, "aggregate.test.auc", auc);
  put_aggregate(w, "aggregate.test.macro_f1", macro);
  put_aggregate(w, "aggregate.test.micro_f1", micro);
  put_aggregate(w, "aggregate.test.accuracy", acc);
  return w.str();
}

std::string render_loss_csv(std::span<const FrameworkResult> runs) {
  std::ostringstream out;
  out << "seed,stage,epoch,objective,same,cross,task\n";
  for (const auto& r : runs) {
    for (std::size_t e = 0; e < r.main_epochs.size(); ++e) {
      const auto& l = r.main_epochs[e];
      out << r.seed << ",main," << e + 1 << ',' << format_double(l.objective) << ',' << format_double(l.contrastive_same)
          << ',' << format_double(l.contrastive_cross) << ',' << format_double(l.main) << '\n';
    }
    for (std::size_t e = 0; e < r.subtask_epochs.size(); ++e) {
      const auto& l = r.subtask_epochs[e];
      out << r.seed << ",subtask," << e + 1 << ',' << format_double(l.objective) << ','
          << format_double(l.contrastive_same) << ',' << format_double(l.contrastive_cross) << ','
          << format_double(l.subtask) << '\n';
    }
    for (std::size_t e = 0; e < r.validation_epochs.size(); ++e) {
      const std::string v = format_double(r.validation_epochs[e]);
      out << r.seed << ",validation," << e + 1 << ',' << v << ",0,0," << v << '\n';
    }
  }
  return out.str();
}

std::string strip_timestamp(std::string_view manifest) {
  std::string out;
  std::istringstream in{std::string(manifest)};
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("timestamp=", 0) == 0) continue;
    out += line + '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw OutputError("write failed for " + path.string());
}

}  // namespace mcgcl
