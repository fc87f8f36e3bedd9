#include "invariants.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "mcgcl/graph.hpp"
#include "mcgcl/rng.hpp"

namespace mcgcl::testing {

namespace {

using Key = std::pair<std::string, std::string>;

// Independent 3-core by queue peeling over the deduplicated pairs.
std::set<Key> peel(const std::map<Key, int>& pairs) {
  std::map<std::string, std::set<std::string>> by_user, by_item;
  for (const auto& [k, r] : pairs) {
    by_user[k.first].insert(k.second);
    by_item[k.second].insert(k.first);
  }
  std::deque<std::pair<bool, std::string>> queue;
  for (const auto& [u, s] : by_user)
    if (s.size() < 3) queue.emplace_back(true, u);
  for (const auto& [i, s] : by_item)
    if (s.size() < 3) queue.emplace_back(false, i);
  std::set<std::string> dead_users, dead_items;
  while (!queue.empty()) {
    auto [is_user, id] = queue.front();
    queue.pop_front();
    if (is_user) {
      if (!dead_users.insert(id).second) continue;
      for (const auto& i : by_user[id]) {
        by_item[i].erase(id);
        if (by_item[i].size() < 3 && !dead_items.contains(i)) queue.emplace_back(false, i);
      }
      by_user[id].clear();
    } else {
      if (!dead_items.insert(id).second) continue;
      for (const auto& u : by_item[id]) {
        by_user[u].erase(id);
        if (by_user[u].size() < 3 && !dead_users.contains(u)) queue.emplace_back(true, u);
      }
      by_item[id].clear();
    }
  }
  std::set<Key> out;
  for (const auto& [u, s] : by_user)
    for (const auto& i : s) out.emplace(u, i);
  return out;
}

std::tuple<std::uint32_t, std::uint32_t, int> edge_tuple(const Edge& e) {
  return {e.user, e.item, static_cast<int>(e.label)};
}

std::vector<std::tuple<std::uint32_t, std::uint32_t, int>> sorted_edges(std::span<const Edge> edges) {
  std::vector<std::tuple<std::uint32_t, std::uint32_t, int>> v;
  for (const auto& e : edges) v.push_back(edge_tuple(e));
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::string check_pipeline_invariants(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "invariants");
  const std::size_t users = 3 + rng.below(10), items = 3 + rng.below(10);
  const std::size_t lines = 5 + rng.below(users * items);
  std::ostringstream tsv;
  std::map<Key, int> last;
  tsv << "# random instance\n";
  for (std::size_t k = 0; k < lines; ++k) {
    const std::string u = "user" + std::to_string(rng.below(users));
    const std::string i = "item" + std::to_string(rng.below(items));
    const int rating = 1 + static_cast<int>(rng.below(5));
    tsv << u << '\t' << i << '\t' << rating << '\n';
    last[{u, i}] = rating;
  }
  const std::set<Key> core = peel(last);

  std::istringstream in(tsv.str());
  BipartiteGraph g;
  try {
    g = ingest_edge_list(in, LabelMode::multi);
  } catch (const std::exception& e) {
    if (core.empty()) return {};
    return "ingest failed although the 3-core has " + std::to_string(core.size()) + " edges: " + e.what();
  }
  if (core.empty()) return "ingest produced edges although the 3-core is empty";

  std::set<Key> got;
  for (const auto& e : g.edges()) {
    const Key key{g.user_ids()[e.user], g.item_ids()[e.item]};
    got.insert(key);
    if (bucket_rating(last.at(key), LabelMode::multi) != e.label) return "label does not follow the last duplicate";
  }
  if (got != core) return "degree filter result differs from the peeling oracle";
  for (auto d : g.user_degrees())
    if (d < kMinDegree) return "user below minimum degree";
  for (auto d : g.item_degrees())
    if (d < kMinDegree) return "item below minimum degree";

  const SplitGraphs parts = split(g, seed);
  std::vector<std::tuple<std::uint32_t, std::uint32_t, int>> joined;
  for (const auto* p : {&parts.train, &parts.validation, &parts.test})
    for (const auto& e : p->edges()) joined.push_back(edge_tuple(e));
  std::sort(joined.begin(), joined.end());
  if (std::adjacent_find(joined.begin(), joined.end()) != joined.end()) return "split parts overlap";
  if (joined != sorted_edges(g.edges())) return "split parts do not reunite to the graph";
  std::vector<std::size_t> per_user(g.user_count(), 0);
  for (const auto& e : parts.train.edges()) ++per_user[e.user];
  const auto degrees = g.user_degrees();
  for (std::size_t u = 0; u < g.user_count(); ++u) {
    const auto expect = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.8 * degrees[u])));
    if (per_user[u] != std::min(expect, degrees[u])) return "per-user train count is not round(0.8 e)";
  }

  std::vector<std::tuple<std::uint32_t, std::uint32_t, int>> relabeled;
  for (const auto& [label, sub] : partition_by_label(g)) {
    for (const auto& e : sub.edges()) {
      if (e.label != label) return "partition holds an edge of a foreign label";
      relabeled.push_back(edge_tuple(e));
    }
  }
  std::sort(relabeled.begin(), relabeled.end());
  if (relabeled != sorted_edges(g.edges())) return "label partition union differs from the graph";

  const Matrix a_hat = normalize_adjacency(g).to_dense();
  const std::size_t n = g.node_count();
  Matrix a_plus_i = Matrix::identity(n);
  for (const auto& e : g.edges()) {
    a_plus_i(e.user, g.user_count() + e.item) = 1.0;
    a_plus_i(g.user_count() + e.item, e.user) = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) deg[r] += a_plus_i(r, c);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double back = std::sqrt(deg[r]) * a_hat(r, c) * std::sqrt(deg[c]);
      if (std::abs(back - a_plus_i(r, c)) > 1e-12) return "adjacency reconstruction differs from A + I";
      if (a_hat(r, c) != a_hat(c, r)) return "normalized adjacency is not symmetric";
    }
  }
  return {};
}

}  // namespace mcgcl::testing
