#include "mcgcl/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "mcgcl/diagnostics.hpp"
#include "mcgcl/errors.hpp"

namespace mcgcl {

std::string_view label_name(EdgeLabel label) {
  switch (label) {
    case EdgeLabel::Low: return "low";
    case EdgeLabel::Mid: return "mid";
    case EdgeLabel::High: return "high";
  }
  return "?";
}

std::string_view mode_name(LabelMode mode) { return mode == LabelMode::multi ? "multi" : "binary"; }

LabelMode parse_mode(std::string_view text) {
  if (text == "multi") return LabelMode::multi;
  if (text == "binary") return LabelMode::binary;
  throw ConfigError("label mode must be multi or binary, got '" + std::string(text) + "'");
}

std::size_t label_count(LabelMode mode) { return mode == LabelMode::multi ? 3 : 2; }

std::vector<EdgeLabel> labels_of(LabelMode mode) {
  if (mode == LabelMode::multi) return {EdgeLabel::Low, EdgeLabel::Mid, EdgeLabel::High};
  return {EdgeLabel::Low, EdgeLabel::High};
}

bool label_allowed(EdgeLabel label, LabelMode mode) {
  return mode == LabelMode::multi || label != EdgeLabel::Mid;
}

std::size_t class_index(EdgeLabel label, LabelMode mode) {
  if (!label_allowed(label, mode)) throw ContractError("label mid does not exist in binary mode");
  if (mode == LabelMode::binary) return label == EdgeLabel::Low ? 0 : 1;
  return static_cast<std::size_t>(label);
}

EdgeLabel label_at(std::size_t index, LabelMode mode) {
  const auto labels = labels_of(mode);
  if (index >= labels.size()) throw ContractError("class index " + std::to_string(index) + " out of range");
  return labels[index];
}

std::optional<EdgeLabel> bucket_rating(int rating, LabelMode mode) {
  if (rating <= 2) return EdgeLabel::Low;
  if (rating == 3) {
    if (mode == LabelMode::binary) return std::nullopt;
    return EdgeLabel::Mid;
  }
  return EdgeLabel::High;
}

int representative_rating(EdgeLabel label) {
  switch (label) {
    case EdgeLabel::Low: return 1;
    case EdgeLabel::Mid: return 3;
    case EdgeLabel::High: return 5;
  }
  return 0;
}

namespace {

std::uint64_t pair_key(std::uint32_t u, std::uint32_t i) { return (static_cast<std::uint64_t>(u) << 32) | i; }

std::vector<std::string> default_ids(char prefix, std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t k = 0; k < n; ++k) ids.push_back(prefix + std::to_string(k));
  return ids;
}

}  // namespace

BipartiteGraph::BipartiteGraph(std::size_t users, std::size_t items, std::vector<Edge> edges, LabelMode mode,
                               std::vector<std::string> user_ids, std::vector<std::string> item_ids)
    : users_(users), items_(items), edges_(std::move(edges)), mode_(mode),
      user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)) {
  if (user_ids_.empty()) user_ids_ = default_ids('u', users_);
  if (item_ids_.empty()) item_ids_ = default_ids('i', items_);
  if (user_ids_.size() != users_ || item_ids_.size() != items_) throw DataError("graph: id table size mismatch");
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(edges_.size());
  for (const auto& e : edges_) {
    if (e.user >= users_ || e.item >= items_) {
      throw DataError("graph: edge (" + std::to_string(e.user) + "," + std::to_string(e.item) + ") out of range");
    }
    if (!label_allowed(e.label, mode_)) throw DataError("graph: label mid in binary mode");
    if (!seen.insert(pair_key(e.user, e.item)).second) {
      throw DataError("graph: duplicate edge (" + std::to_string(e.user) + "," + std::to_string(e.item) + ")");
    }
  }
}

std::vector<std::size_t> BipartiteGraph::user_degrees() const {
  std::vector<std::size_t> d(users_, 0);
  for (const auto& e : edges_) ++d[e.user];
  return d;
}

std::vector<std::size_t> BipartiteGraph::item_degrees() const {
  std::vector<std::size_t> d(items_, 0);
  for (const auto& e : edges_) ++d[e.item];
  return d;
}

BipartiteGraph BipartiteGraph::with_edges(std::vector<Edge> edges) const {
  return BipartiteGraph(users_, items_, std::move(edges), mode_, user_ids_, item_ids_);
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

struct RawEdge {
  std::string user;
  std::string item;
  EdgeLabel label;
};

int parse_rating(std::string_view field, std::size_t line) {
  double value = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ParseError(line, "rating '" + std::string(field) + "' is not a number");
  if (value != std::floor(value) || value < 1.0 || value > 5.0) {
    throw ParseError(line, "rating '" + std::string(field) + "' outside 1..5");
  }
  return static_cast<int>(value);
}

}  // namespace

BipartiteGraph ingest_edge_list(std::istream& in, LabelMode mode) {
  std::vector<RawEdge> raw;
  std::unordered_map<std::string, std::size_t> index_of;  // "user\titem" -> position in raw
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) throw ParseError(line_no, "empty user or item id");
    const int rating = parse_rating(fields[2], line_no);
    std::string key = std::string(fields[0]) + '\t' + std::string(fields[1]);
    auto label = bucket_rating(rating, mode);
    auto it = index_of.find(key);
    if (it != index_of.end()) {
      // Last occurrence wins, including a later rating-3 line in binary mode.
      if (label) {
        raw[it->second].label = *label;
      } else {
        raw[it->second].user.clear();
        index_of.erase(it);
      }
      continue;
    }
    if (!label) continue;
    index_of.emplace(std::move(key), raw.size());
    raw.push_back({std::string(fields[0]), std::string(fields[1]), *label});
  }
  std::erase_if(raw, [](const RawEdge& e) { return e.user.empty(); });

  // Degree filter to a fixpoint.
  std::vector<bool> alive(raw.size(), true);
  for (bool changed = true; changed;) {
    changed = false;
    std::unordered_map<std::string_view, std::size_t> ud, id;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      if (!alive[k]) continue;
      ++ud[raw[k].user];
      ++id[raw[k].item];
    }
    for (std::size_t k = 0; k < raw.size(); ++k) {
      if (alive[k] && (ud[raw[k].user] < kMinDegree || id[raw[k].item] < kMinDegree)) {
        alive[k] = false;
        changed = true;
      }
    }
  }

  std::unordered_map<std::string, std::uint32_t> users, items;
  std::vector<std::string> user_ids, item_ids;
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (!alive[k]) continue;
    auto [ui, u_new] = users.try_emplace(raw[k].user, static_cast<std::uint32_t>(user_ids.size()));
    if (u_new) user_ids.push_back(raw[k].user);
    auto [ii, i_new] = items.try_emplace(raw[k].item, static_cast<std::uint32_t>(item_ids.size()));
    if (i_new) item_ids.push_back(raw[k].item);
    edges.push_back({ui->second, ii->second, raw[k].label});
  }
  if (edges.empty()) throw DataError("no edges left after the degree-3 filter");
  const std::size_t nu = user_ids.size(), ni = item_ids.size();
  return BipartiteGraph(nu, ni, std::move(edges), mode, std::move(user_ids), std::move(item_ids));
}

BipartiteGraph ingest_edge_list(const std::filesystem::path& path, LabelMode mode) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return ingest_edge_list(in, mode);
}

void write_tsv(const BipartiteGraph& graph, std::ostream& out) {
  for (const auto& e : graph.edges()) {
    out << graph.user_ids()[e.user] << '\t' << graph.item_ids()[e.item] << '\t' << representative_rating(e.label)
        << '\n';
  }
}

void write_tsv(const BipartiteGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_tsv(graph, out);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Split

SplitCounts split_counts(std::size_t e) {
  if (e == 0) return {0, 0, 0};
  const auto train = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(0.8 * static_cast<double>(e))));
  const std::size_t rest = e - std::min(train, e);
  const std::size_t validation = (rest + 1) / 2;
  return {std::min(train, e), validation, rest - validation};
}

SplitGraphs split(const BipartiteGraph& graph, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "split");
  std::vector<std::vector<std::size_t>> by_user(graph.user_count());
  const auto edges = graph.edges();
  for (std::size_t k = 0; k < edges.size(); ++k) by_user[edges[k].user].push_back(k);
  std::vector<std::uint8_t> part(edges.size(), 0);
  for (auto& list : by_user) {
    rng.shuffle(std::span<std::size_t>(list));
    const auto counts = split_counts(list.size());
    for (std::size_t r = 0; r < list.size(); ++r) {
      part[list[r]] = r < counts.train ? 0 : (r < counts.train + counts.validation ? 1 : 2);
    }
  }
  std::vector<Edge> sets[3];
  for (std::size_t k = 0; k < edges.size(); ++k) sets[part[k]].push_back(edges[k]);
  return {graph.with_edges(std::move(sets[0])), graph.with_edges(std::move(sets[1])),
          graph.with_edges(std::move(sets[2]))};
}

// ---------------------------------------------------------------------------
// Augmentation

BipartiteGraph augment(const BipartiteGraph& graph, AugmentKind kind, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 0.5)) throw ConfigError("augmentation probability must be in [0, 0.5], got " + std::to_string(p));
  const auto edges = graph.edges();
  if (kind == AugmentKind::remove) {
    std::vector<Edge> kept;
    kept.reserve(edges.size());
    for (const auto& e : edges)
      if (!rng.bernoulli(p)) kept.push_back(e);
    return graph.with_edges(std::move(kept));
  }

  std::size_t wanted = static_cast<std::size_t>(std::floor(p * static_cast<double>(edges.size())));
  const std::size_t capacity = graph.user_count() * graph.item_count() - edges.size();
  if (wanted > capacity) {
    warn("augment: only " + std::to_string(capacity) + " non-edges available, " + std::to_string(wanted) + " requested");
    wanted = capacity;
  }
  std::vector<Edge> out(edges.begin(), edges.end());
  std::unordered_set<std::uint64_t> taken;
  for (const auto& e : edges) taken.insert(pair_key(e.user, e.item));
  const auto draw_label = [&] { return edges[rng.below(edges.size())].label; };

  if (wanted > 0 && capacity <= 4 * wanted) {
    // Dense graph: sample from the explicit list of non-edges.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> free;
    for (std::uint32_t u = 0; u < graph.user_count(); ++u)
      for (std::uint32_t i = 0; i < graph.item_count(); ++i)
        if (!taken.contains(pair_key(u, i))) free.emplace_back(u, i);
    for (std::size_t k = 0; k < wanted; ++k) {
      std::size_t j = k + rng.below(free.size() - k);
      std::swap(free[k], free[j]);
      out.push_back({free[k].first, free[k].second, draw_label()});
    }
  } else {
    while (wanted > 0) {
      auto u = static_cast<std::uint32_t>(rng.below(graph.user_count()));
      auto i = static_cast<std::uint32_t>(rng.below(graph.item_count()));
      if (!taken.insert(pair_key(u, i)).second) continue;
      out.push_back({u, i, draw_label()});
      --wanted;
    }
  }
  return graph.with_edges(std::move(out));
}

BipartiteGraph augment(const BipartiteGraph& graph, AugmentKind kind, double p, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "augment");
  return augment(graph, kind, p, rng);
}

std::map<EdgeLabel, BipartiteGraph> partition_by_label(const BipartiteGraph& graph) {
  std::map<EdgeLabel, std::vector<Edge>> buckets;
  for (auto label : labels_of(graph.mode())) buckets[label];
  for (const auto& e : graph.edges()) buckets[e.label].push_back(e);
  std::map<EdgeLabel, BipartiteGraph> out;
  for (auto& [label, edges] : buckets) {
    if (edges.empty()) warn("label " + std::string(label_name(label)) + " has no edges; its subgraph is edgeless");
    out.emplace(label, graph.with_edges(std::move(edges)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adjacency

CsrMatrix normalize_symmetric(std::size_t nodes, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (auto [a, b] : edges) {
    if (a >= nodes || b >= nodes) throw DimensionError("normalize_symmetric: node index out of range");
    if (a == b) continue;
    unique.emplace(std::min(a, b), std::max(a, b));
  }
  std::vector<double> degree(nodes, 1.0);
  for (auto [a, b] : unique) {
    degree[a] += 1.0;
    degree[b] += 1.0;
  }
  std::vector<double> inv_sqrt(nodes);
  for (std::size_t k = 0; k < nodes; ++k) inv_sqrt[k] = 1.0 / std::sqrt(degree[k]);
  std::vector<CsrMatrix::Triplet> t;
  t.reserve(nodes + 2 * unique.size());
  for (std::size_t k = 0; k < nodes; ++k) t.push_back({k, k, inv_sqrt[k] * inv_sqrt[k]});
  for (auto [a, b] : unique) {
    const double w = inv_sqrt[a] * inv_sqrt[b];
    t.push_back({a, b, w});
    t.push_back({b, a, w});
  }
  return CsrMatrix::from_triplets(nodes, nodes, std::move(t));
}

CsrMatrix normalize_adjacency(const BipartiteGraph& graph) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(graph.edge_count());
  for (const auto& e : graph.edges()) pairs.emplace_back(e.user, graph.user_count() + e.item);
  return normalize_symmetric(graph.node_count(), pairs);
}

// ---------------------------------------------------------------------------
// Synthetic data

BipartiteGraph synth_generate(const SynthParams& params) {
  const std::size_t c = params.clusters;
  if (c < 2) throw ConfigError("synth: clusters must be at least 2");
  if (params.users < 4 * c || params.items < 4 * c) {
    throw ConfigError("synth: users and items must each be at least 4 * clusters");
  }
  if (params.degree < 1) throw ConfigError("synth: degree must be at least 1");
  if (!(params.noise >= 0.0 && params.noise <= 1.0)) throw ConfigError("synth: noise must be in [0, 1]");

  Rng rng = Rng::derive(params.seed, "synth");
  const auto assign = [&](std::size_t n) {
    std::vector<std::size_t> cluster(n);
    for (std::size_t k = 0; k < n; ++k) cluster[k] = k % c;
    rng.shuffle(std::span<std::size_t>(cluster));
    return cluster;
  };
  const auto user_cluster = assign(params.users);
  const auto item_cluster = assign(params.items);

  std::vector<std::vector<std::uint32_t>> members(c);
  for (std::uint32_t i = 0; i < params.items; ++i) members[item_cluster[i]].push_back(i);
  std::vector<bool> neutral(params.items, false);
  for (auto& m : members) {
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(0.1 * static_cast<double>(m.size()))));
    for (std::size_t k = 0; k < n; ++k) neutral[m[k]] = true;
  }
  std::vector<std::uint32_t> neutral_items, plain_items;
  for (std::uint32_t i = 0; i < params.items; ++i) (neutral[i] ? neutral_items : plain_items).push_back(i);

  const auto labels = labels_of(params.mode);
  const auto label_for = [&](std::size_t u, std::uint32_t i) {
    EdgeLabel l = EdgeLabel::Low;
    if (user_cluster[u] == item_cluster[i]) {
      l = EdgeLabel::High;
    } else if (neutral[i] && params.mode == LabelMode::multi) {
      l = EdgeLabel::Mid;
    }
    if (rng.bernoulli(params.noise)) l = labels[rng.below(labels.size())];
    return l;
  };

  std::vector<Edge> edges;
  std::vector<std::size_t> item_degree(params.items, 0);
  std::unordered_set<std::uint64_t> taken;
  const std::size_t degree = std::min(params.degree, params.items);
  for (std::uint32_t u = 0; u < params.users; ++u) {
    const std::size_t own = user_cluster[u];
    std::size_t placed = 0;
    for (std::size_t attempt = 0; placed < degree; ++attempt) {
      std::uint32_t item = 0;
      if (attempt >= 20 * degree) {
        item = static_cast<std::uint32_t>(rng.below(params.items));
      } else {
        const double r = rng.uniform01();
        if (r < 0.5) {
          item = members[own][rng.below(members[own].size())];
        } else {
          const auto& pool = r < 0.6 ? neutral_items : plain_items;
          item = pool[rng.below(pool.size())];
          if (item_cluster[item] == own) continue;
        }
      }
      if (!taken.insert(pair_key(u, item)).second) continue;
      edges.push_back({u, item, label_for(u, item)});
      ++item_degree[item];
      ++placed;
    }
  }
  for (std::uint32_t i = 0; i < params.items; ++i) {
    while (item_degree[i] < kMinDegree) {
      auto u = static_cast<std::uint32_t>(rng.below(params.users));
      if (!taken.insert(pair_key(u, i)).second) continue;
      edges.push_back({u, i, label_for(u, i)});
      ++item_degree[i];
    }
  }
  return BipartiteGraph(params.users, params.items, std::move(edges), params.mode);
}

}  // namespace mcgcl
