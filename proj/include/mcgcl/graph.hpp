#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

enum class EdgeLabel : std::uint8_t { Low, Mid, High };

// multi: {Low, Mid, High}; binary: {Low, High} with rating-3 edges dropped.
enum class LabelMode : std::uint8_t { multi, binary };

std::string_view label_name(EdgeLabel label);
std::string_view mode_name(LabelMode mode);
LabelMode parse_mode(std::string_view text);

std::size_t label_count(LabelMode mode);
// Labels of a mode in class-index order (Low first).
std::vector<EdgeLabel> labels_of(LabelMode mode);
std::size_t class_index(EdgeLabel label, LabelMode mode);
EdgeLabel label_at(std::size_t index, LabelMode mode);
bool label_allowed(EdgeLabel label, LabelMode mode);

// 1-2 -> Low, 3 -> Mid, 4-5 -> High. Binary mode maps 3 to nothing.
std::optional<EdgeLabel> bucket_rating(int rating, LabelMode mode);
// Representative rating used when writing a graph back out.
int representative_rating(EdgeLabel label);

struct Edge {
  std::uint32_t user;
  std::uint32_t item;
  EdgeLabel label;

  bool operator==(const Edge&) const = default;
};

class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  // Throws DataError on out-of-range indices, duplicate pairs or labels outside the mode.
  BipartiteGraph(std::size_t users, std::size_t items, std::vector<Edge> edges, LabelMode mode,
                 std::vector<std::string> user_ids = {}, std::vector<std::string> item_ids = {});

  std::size_t user_count() const { return users_; }
  std::size_t item_count() const { return items_; }
  std::size_t node_count() const { return users_ + items_; }
  std::size_t edge_count() const { return edges_.size(); }
  LabelMode mode() const { return mode_; }
  std::span<const Edge> edges() const { return edges_; }

  // External ids; generated as "u<k>" / "i<k>" when none were supplied.
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  std::vector<std::size_t> user_degrees() const;
  std::vector<std::size_t> item_degrees() const;

  // Same node space and ids, different edges.
  BipartiteGraph with_edges(std::vector<Edge> edges) const;

 private:
  std::size_t users_ = 0;
  std::size_t items_ = 0;
  std::vector<Edge> edges_;
  LabelMode mode_ = LabelMode::multi;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
};

inline constexpr std::size_t kMinDegree = 3;

// Reads `user <TAB> item <TAB> rating` lines; '#' lines and blank lines are skipped.
// Duplicate pairs keep the last rating; nodes below degree 3 are removed until none remain.
BipartiteGraph ingest_edge_list(const std::filesystem::path& path, LabelMode mode);
BipartiteGraph ingest_edge_list(std::istream& in, LabelMode mode);

void write_tsv(const BipartiteGraph& graph, std::ostream& out);
void write_tsv(const BipartiteGraph& graph, const std::filesystem::path& path);

struct SplitGraphs {
  BipartiteGraph train;
  BipartiteGraph validation;
  BipartiteGraph test;
};

// Per-user counts for a user with e edges.
struct SplitCounts {
  std::size_t train;
  std::size_t validation;
  std::size_t test;
};
SplitCounts split_counts(std::size_t edges);

SplitGraphs split(const BipartiteGraph& graph, std::uint64_t seed);

enum class AugmentKind : std::uint8_t { remove, add };

// p in [0, 0.5], else ConfigError.
BipartiteGraph augment(const BipartiteGraph& graph, AugmentKind kind, double p, Rng& rng);
BipartiteGraph augment(const BipartiteGraph& graph, AugmentKind kind, double p, std::uint64_t seed);

// One subgraph per label of the graph's mode, each on the full node space.
std::map<EdgeLabel, BipartiteGraph> partition_by_label(const BipartiteGraph& graph);

// D^-1/2 (A + I) D^-1/2 over the given undirected edges; duplicates count once.
CsrMatrix normalize_symmetric(std::size_t nodes, std::span<const std::pair<std::size_t, std::size_t>> edges);

// Block adjacency of side users + items, users first.
CsrMatrix normalize_adjacency(const BipartiteGraph& graph);

struct SynthParams {
  std::size_t users = 300;
  std::size_t items = 150;
  std::size_t clusters = 3;
  double noise = 0.05;
  std::size_t degree = 20;
  std::uint64_t seed = 1;
  LabelMode mode = LabelMode::multi;
};

// Planted-cluster graph. Each user links to `degree` distinct items: half within its
// cluster (High), a tenth to the "neutral" items of other clusters (Mid), the
// rest to other clusters (Low). With probability `noise` a label is redrawn
// uniformly. Items end with at least 3 edges.
BipartiteGraph synth_generate(const SynthParams& params);

}  // namespace mcgcl
