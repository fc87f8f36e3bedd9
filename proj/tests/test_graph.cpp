#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "invariants.hpp"
#include "mcgcl/diagnostics.hpp"
#include "mcgcl/errors.hpp"
#include "mcgcl/graph.hpp"

using namespace mcgcl;

namespace {

BipartiteGraph ingest(const std::string& text, LabelMode mode = LabelMode::multi) {
  std::istringstream in(text);
  return ingest_edge_list(in, mode);
}

// Complete 3x3 block with the given ratings, row-major.
std::string block(const int (&ratings)[9], const std::string& prefix = "") {
  std::ostringstream os;
  for (int u = 0; u < 3; ++u)
    for (int i = 0; i < 3; ++i) os << prefix << 'u' << u << '\t' << prefix << 'i' << i << '\t' << ratings[u * 3 + i] << '\n';
  return os.str();
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("rating buckets") {
    CHECK(bucket_rating(1, LabelMode::multi) == EdgeLabel::Low);
    CHECK(bucket_rating(2, LabelMode::multi) == EdgeLabel::Low);
    CHECK(bucket_rating(3, LabelMode::multi) == EdgeLabel::Mid);
    CHECK(bucket_rating(4, LabelMode::multi) == EdgeLabel::High);
    CHECK(bucket_rating(5, LabelMode::multi) == EdgeLabel::High);
    CHECK_FALSE(bucket_rating(3, LabelMode::binary).has_value());
    CHECK(bucket_rating(4, LabelMode::binary) == EdgeLabel::High);
    CHECK(label_count(LabelMode::multi) == 3);
    CHECK(label_count(LabelMode::binary) == 2);
    CHECK(class_index(EdgeLabel::High, LabelMode::binary) == 1);
    CHECK(label_at(1, LabelMode::multi) == EdgeLabel::Mid);
  }

  TEST_CASE("ingest reads tab-separated lines and skips comments") {
    const BipartiteGraph g = ingest("# header\n\n" + block({5, 1, 3, 4, 2, 3, 5, 5, 1}));
    CHECK(g.user_count() == 3);
    CHECK(g.item_count() == 3);
    CHECK(g.edge_count() == 9);
    CHECK(g.user_ids()[0] == "u0");
    CHECK(g.edges()[0].label == EdgeLabel::High);
    CHECK(g.edges()[1].label == EdgeLabel::Low);
    CHECK(g.edges()[2].label == EdgeLabel::Mid);
  }

  TEST_CASE("duplicate pairs keep the last rating") {
    const BipartiteGraph g = ingest(block({5, 5, 5, 5, 5, 5, 5, 5, 5}) + "u0\ti0\t1\n");
    CHECK(g.edge_count() == 9);
    CHECK(g.edges()[0].label == EdgeLabel::Low);
  }

  TEST_CASE("binary mode drops neutral ratings before filtering") {
    CHECK_THROWS_AS(ingest(block({5, 1, 3, 4, 2, 3, 5, 5, 1}), LabelMode::binary), DataError);
    const BipartiteGraph g = ingest(block({5, 1, 4, 4, 2, 2, 5, 5, 1}), LabelMode::binary);
    CHECK(g.edge_count() == 9);
  }

  TEST_CASE("degree filter iterates to a fixpoint") {
    // x1 has two edges; removing it leaves i3 with two, so i3 goes as well.
    std::string text = block({5, 5, 5, 5, 5, 5, 5, 5, 5});
    text += "u0\ti3\t5\nu1\ti3\t5\nx1\ti3\t5\nx1\ti0\t5\n";
    const BipartiteGraph g = ingest(text);
    CHECK(g.edge_count() == 9);
    CHECK(g.item_count() == 3);
  }

  TEST_CASE("malformed lines raise parse errors with line numbers") {
    try {
      ingest("# c\nu0\ti0\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(ingest("u0\ti0\tfive\n"), ParseError);
    CHECK_THROWS_AS(ingest("u0\ti0\t6\n"), ParseError);
    CHECK_THROWS_AS(ingest("u0\ti0\t2.5\n"), ParseError);
    CHECK_THROWS_AS(ingest("u0\ti0\t1\n"), DataError);
    CHECK_THROWS_AS(ingest_edge_list(std::filesystem::path("/nonexistent/file.tsv"), LabelMode::multi), DataError);
  }

  TEST_CASE("graph constructor validates edges") {
    CHECK_THROWS_AS(BipartiteGraph(2, 2, {{0, 2, EdgeLabel::High}}, LabelMode::multi), DataError);
    CHECK_THROWS_AS(BipartiteGraph(2, 2, {{0, 1, EdgeLabel::High}, {0, 1, EdgeLabel::Low}}, LabelMode::multi),
                    DataError);
    CHECK_THROWS_AS(BipartiteGraph(2, 2, {{0, 1, EdgeLabel::Mid}}, LabelMode::binary), DataError);
  }

  TEST_CASE("tsv round trip") {
    SynthParams p;
    p.users = 40;
    p.items = 20;
    p.degree = 6;
    const BipartiteGraph g = synth_generate(p);
    std::ostringstream out;
    write_tsv(g, out);
    const BipartiteGraph back = ingest(out.str());
    CHECK(back.edge_count() == g.edge_count());
    CHECK(back.user_count() == g.user_count());
    CHECK(back.item_count() == g.item_count());
    for (std::size_t k = 0; k < g.edge_count(); ++k) CHECK(back.edges()[k].label == g.edges()[k].label);
  }

  TEST_CASE("split counts per user") {
    CHECK(split_counts(10).train == 8);
    CHECK(split_counts(10).validation == 1);
    CHECK(split_counts(10).test == 1);
    CHECK(split_counts(3).train == 2);
    CHECK(split_counts(3).validation == 1);
    CHECK(split_counts(3).test == 0);
    CHECK(split_counts(1).train == 1);
    CHECK(split_counts(7).train == 6);
    CHECK(split_counts(7).validation == 1);
    CHECK(split_counts(7).test == 0);
  }

  TEST_CASE("split is deterministic per seed") {
    const BipartiteGraph g = synth_generate({});
    const auto a = split(g, 4), b = split(g, 4), c = split(g, 5);
    CHECK(std::equal(a.test.edges().begin(), a.test.edges().end(), b.test.edges().begin(), b.test.edges().end()));
    CHECK_FALSE(
        std::equal(a.test.edges().begin(), a.test.edges().end(), c.test.edges().begin(), c.test.edges().end()));
  }

  TEST_CASE("augment removal and addition") {
    const BipartiteGraph g = synth_generate({});
    Rng rng(3);
    const BipartiteGraph none = augment(g, AugmentKind::remove, 0.0, rng);
    CHECK(none.edge_count() == g.edge_count());
    const BipartiteGraph added = augment(g, AugmentKind::add, 0.05, rng);
    CHECK(added.edge_count() == g.edge_count() + static_cast<std::size_t>(std::floor(0.05 * g.edge_count())));
    const BipartiteGraph removed = augment(g, AugmentKind::remove, 0.2, rng);
    const double kept = static_cast<double>(removed.edge_count()) / static_cast<double>(g.edge_count());
    // Binomial(6000, 0.8): sd of the kept fraction is about 0.005.
    CHECK(std::abs(kept - 0.8) < 0.03);
    CHECK_THROWS_AS(augment(g, AugmentKind::add, 0.6, rng), ConfigError);
    CHECK(augment(g, AugmentKind::add, 0.01, std::uint64_t{9}).edges().size() ==
          augment(g, AugmentKind::add, 0.01, std::uint64_t{9}).edges().size());
  }

  TEST_CASE("partition warns on an edgeless label") {
    const BipartiteGraph g(2, 2, {{0, 0, EdgeLabel::High}, {1, 1, EdgeLabel::Low}}, LabelMode::multi);
    WarningCapture capture;
    const auto parts = partition_by_label(g);
    CHECK(parts.size() == 3);
    CHECK(parts.at(EdgeLabel::Mid).edge_count() == 0);
    CHECK(capture.count() == 1);
  }

  TEST_CASE("single edge adjacency") {
    const BipartiteGraph g(1, 1, {{0, 0, EdgeLabel::High}}, LabelMode::multi);
    const Matrix a = normalize_adjacency(g).to_dense();
    CHECK(a(0, 1) == doctest::Approx(0.5));
    CHECK(a(1, 0) == doctest::Approx(0.5));
    CHECK(a(0, 0) == doctest::Approx(0.5));
    CHECK(a(1, 1) == doctest::Approx(0.5));
  }

  TEST_CASE("edgeless adjacency is the identity") {
    const BipartiteGraph g(2, 3, {}, LabelMode::multi);
    CHECK(normalize_adjacency(g).to_dense() == Matrix::identity(5));
  }

  TEST_CASE("pipeline invariants on random small graphs") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      const std::string problem = mcgcl::testing::check_pipeline_invariants(seed);
      INFO("seed " << seed);
      CHECK(problem.empty());
    }
  }

  TEST_CASE("synthetic generator is deterministic") {
    const BipartiteGraph a = synth_generate({}), b = synth_generate({});
    CHECK(std::equal(a.edges().begin(), a.edges().end(), b.edges().begin(), b.edges().end()));
    SynthParams other;
    other.seed = 2;
    const BipartiteGraph c = synth_generate(other);
    CHECK_FALSE(std::equal(a.edges().begin(), a.edges().end(), c.edges().begin(), c.edges().end()));
  }

  TEST_CASE("noise-free synthetic labels follow the clusters") {
    SynthParams p;
    p.noise = 0.0;
    const BipartiteGraph g = synth_generate(p);
    for (auto d : g.user_degrees()) CHECK(d >= kMinDegree);
    for (auto d : g.item_degrees()) CHECK(d >= kMinDegree);
    // High edges link users and items of one cluster: the High graph has exactly `clusters` components.
    std::vector<std::size_t> parent(g.node_count());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<bool> touched(g.node_count(), false);
    for (const auto& e : g.edges()) {
      if (e.label != EdgeLabel::High) continue;
      parent[find(e.user)] = find(g.user_count() + e.item);
      touched[e.user] = touched[g.user_count() + e.item] = true;
    }
    std::set<std::size_t> roots;
    for (std::size_t k = 0; k < g.node_count(); ++k)
      if (touched[k]) roots.insert(find(k));
    CHECK(roots.size() == p.clusters);
  }

  TEST_CASE("fully noisy labels are uniform") {
    SynthParams p;
    p.noise = 1.0;
    p.users = 1000;
    p.items = 300;
    p.degree = 10;
    const BipartiteGraph g = synth_generate(p);
    REQUIRE(g.edge_count() >= 10000);
    std::array<double, 3> counts{};
    for (const auto& e : g.edges()) counts[class_index(e.label, LabelMode::multi)] += 1.0;
    const double n = static_cast<double>(g.edge_count());
    const double sd = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
    for (double c : counts) CHECK(std::abs(c - n / 3.0) <= 3.0 * sd);
  }

  TEST_CASE("infeasible generator parameters") {
    SynthParams p;
    p.clusters = 1;
    CHECK_THROWS_AS(synth_generate(p), ConfigError);
    p.clusters = 3;
    p.users = 11;
    CHECK_THROWS_AS(synth_generate(p), ConfigError);
    p.users = 300;
    p.noise = 1.5;
    CHECK_THROWS_AS(synth_generate(p), ConfigError);
  }
}
