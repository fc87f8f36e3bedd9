#include <algorithm>
#include <cmath>
#include <queue>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mcgcl/encoder.hpp"
#include "mcgcl/errors.hpp"

using namespace mcgcl;
using mcgcl::testing::random_graph;
using mcgcl::testing::random_matrix;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

Matrix naive_softmax(const Matrix& a) {
  Matrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) z += std::exp(a(i, j));
    for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = std::exp(a(i, j)) / z;
  }
  return s;
}

void check_close(const Matrix& a, const Matrix& b, double tol = 1e-12) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a.values()[k] - b.values()[k]) <= tol);
}

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("zero layers return the input") {
    Rng rng(1);
    const BipartiteGraph g = random_graph(3, 3, 5, LabelMode::multi, rng);
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 4, 0, Activation::softmax, rng);
    Tensor h0 = Tensor::constant(random_matrix(6, 4, rng));
    CHECK(gcn_forward(enc, Tensor::sparse(normalize_adjacency(g)), h0).value() == h0.value());
  }

  TEST_CASE("edgeless graph with identity weight is a row softmax") {
    Rng rng(2);
    const BipartiteGraph g(2, 2, {}, LabelMode::multi);
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::Low, 3, 1, Activation::softmax, rng);
    enc.weights[0].mutable_value() = Matrix::identity(3);
    const Matrix h = random_matrix(4, 3, rng);
    check_close(gcn_forward(enc, Tensor::sparse(normalize_adjacency(g)), Tensor::constant(h)).value(),
                naive_softmax(h));
  }

  TEST_CASE("two layers on a three-node graph match a step-by-step evaluation") {
    Rng rng(3);
    const BipartiteGraph g(1, 2, {{0, 0, EdgeLabel::High}, {0, 1, EdgeLabel::High}}, LabelMode::multi);
    const double s6 = 1.0 / std::sqrt(6.0);
    const Matrix a{{1.0 / 3.0, s6, s6}, {s6, 0.5, 0.0}, {s6, 0.0, 0.5}};
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 2, 2, Activation::softmax, rng);
    const Matrix h0 = random_matrix(3, 2, rng);
    Matrix h = h0;
    for (const auto& w : enc.weights) h = naive_softmax(naive_matmul(naive_matmul(a, h), w.value()));
    check_close(gcn_forward(enc, Tensor::sparse(normalize_adjacency(g)), Tensor::constant(h0)).value(), h, 1e-14);

    GcnEncoder relu = enc;
    relu.activation = Activation::relu;
    Matrix r = h0;
    for (const auto& w : enc.weights) {
      r = naive_matmul(naive_matmul(a, r), w.value());
      for (double& x : r.values()) x = std::max(0.0, x);
    }
    check_close(gcn_forward(relu, Tensor::sparse(normalize_adjacency(g)), Tensor::constant(h0)).value(), r, 1e-14);
  }

  TEST_CASE("softmax layers give probability rows") {
    Rng rng(4);
    const BipartiteGraph g = random_graph(5, 4, 9, LabelMode::multi, rng);
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 6, 2, Activation::softmax, rng);
    const Matrix out =
        gcn_forward(enc, Tensor::sparse(normalize_adjacency(g)), Tensor::constant(random_matrix(9, 6, rng))).value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double total = 0.0;
      for (double v : out.row(r)) {
        CHECK(v > 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("identical views give identical outputs and swapped views swap") {
    Rng rng(5);
    const BipartiteGraph g = random_graph(4, 4, 8, LabelMode::multi, rng);
    const auto parts = partition_by_label(g);
    const BipartiteGraph& high = parts.at(EdgeLabel::High);
    const BipartiteGraph other = augment(high, AugmentKind::add, 0.5, rng);
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 3, 2, Activation::softmax, rng);
    NodeEmbeddings h0{Tensor::constant(random_matrix(4, 3, rng)), Tensor::constant(random_matrix(4, 3, rng)), {}};
    auto [a, b] = encode_label_pair(enc, high, high, h0);
    CHECK(a.users.value() == b.users.value());
    CHECK(a.items.value() == b.items.value());
    auto [c, d] = encode_label_pair(enc, high, other, h0);
    auto [e, f] = encode_label_pair(enc, other, high, h0);
    CHECK(c.users.value() == f.users.value());
    CHECK(d.items.value() == e.items.value());
  }

  TEST_CASE("label mismatch is a contract error") {
    Rng rng(6);
    const BipartiteGraph g(2, 2, {{0, 0, EdgeLabel::Low}}, LabelMode::multi);
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 3, 1, Activation::softmax, rng);
    const LabelView low = make_view(EdgeLabel::Low, g);
    CHECK_THROWS_AS(encode_label_pair(enc, low, low, Tensor::constant(Matrix(4, 3))), ContractError);
    CHECK_THROWS_AS(make_view(EdgeLabel::High, g), ContractError);
  }

  TEST_CASE("one edge change only moves rows within K hops") {
    Rng rng(7);
    const BipartiteGraph g = random_graph(8, 8, 14, LabelMode::multi, rng);
    std::vector<Edge> edges(g.edges().begin(), g.edges().end());
    const Edge removed = edges.back();
    edges.pop_back();
    const BipartiteGraph h = g.with_edges(edges);
    const std::size_t layers = 2;
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 3, layers, Activation::relu, rng);
    const Tensor h0 = Tensor::constant(random_matrix(16, 3, rng, 0.1, 1.0));
    const Matrix out_g = gcn_forward(enc, Tensor::sparse(normalize_adjacency(g)), h0).value();
    const Matrix out_h = gcn_forward(enc, Tensor::sparse(normalize_adjacency(h)), h0).value();
    std::vector<std::vector<std::size_t>> adj(16);
    for (const auto& e : g.edges()) {
      adj[e.user].push_back(8 + e.item);
      adj[8 + e.item].push_back(e.user);
    }
    std::vector<int> dist(16, -1);
    std::queue<std::size_t> q;
    for (std::size_t s : {std::size_t{removed.user}, std::size_t{8 + removed.item}}) {
      dist[s] = 0;
      q.push(s);
    }
    while (!q.empty()) {
      auto x = q.front();
      q.pop();
      for (auto y : adj[x])
        if (dist[y] < 0) {
          dist[y] = dist[x] + 1;
          q.push(y);
        }
    }
    for (std::size_t r = 0; r < 16; ++r) {
      if (dist[r] >= 0 && dist[r] <= static_cast<int>(layers)) continue;
      for (std::size_t c = 0; c < 3; ++c) CHECK(out_g(r, c) == out_h(r, c));
    }
  }

  TEST_CASE("permuting users commutes with the encoder") {
    Rng rng(8);
    const BipartiteGraph g = random_graph(5, 4, 10, LabelMode::multi, rng);
    const std::vector<std::uint32_t> perm{3, 0, 4, 1, 2};
    std::vector<Edge> moved;
    for (const auto& e : g.edges()) moved.push_back({perm[e.user], e.item, e.label});
    const BipartiteGraph pg(5, 4, moved, LabelMode::multi);
    const Matrix h = random_matrix(9, 3, rng);
    Matrix ph = h;
    for (std::size_t u = 0; u < 5; ++u)
      for (std::size_t c = 0; c < 3; ++c) ph(perm[u], c) = h(u, c);
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 3, 2, Activation::softmax, rng);
    const Matrix a = gcn_forward(enc, Tensor::sparse(normalize_adjacency(g)), Tensor::constant(h)).value();
    const Matrix b = gcn_forward(enc, Tensor::sparse(normalize_adjacency(pg)), Tensor::constant(ph)).value();
    for (std::size_t u = 0; u < 5; ++u)
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(a(u, c) - b(perm[u], c)) <= 1e-14);
    for (std::size_t i = 5; i < 9; ++i)
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(a(i, c) - b(i, c)) <= 1e-14);
  }

  TEST_CASE("shared weights collect gradient from both branches") {
    Rng rng(9);
    const BipartiteGraph g = random_graph(4, 4, 9, LabelMode::multi, rng);
    const BipartiteGraph g2 = augment(g, AugmentKind::remove, 0.3, rng);
    GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 3, 2, Activation::softmax, rng);
    const Tensor h0 = Tensor::constant(random_matrix(8, 3, rng));
    const Tensor a1 = Tensor::sparse(normalize_adjacency(g)), a2 = Tensor::sparse(normalize_adjacency(g2));
    const Tensor r1 = Tensor::constant(random_matrix(8, 3, rng)), r2 = Tensor::constant(random_matrix(8, 3, rng));
    const auto grad_of = [&](bool first, bool second) {
      for (auto& w : enc.weights) w.clear_grad();
      Tape tape;
      Tensor loss = Tensor::scalar(0.0);
      {
        Recording rec(tape);
        if (first) loss = ops::add(loss, ops::sum(ops::multiply(gcn_forward(enc, a1, h0), r1)));
        if (second) loss = ops::add(loss, ops::sum(ops::multiply(gcn_forward(enc, a2, h0), r2)));
      }
      backward(tape, loss);
      return enc.weights[0].grad();
    };
    const Matrix both = grad_of(true, true);
    const Matrix only1 = grad_of(true, false);
    const Matrix only2 = grad_of(false, true);
    for (std::size_t k = 0; k < both.size(); ++k)
      CHECK(std::abs(both.values()[k] - only1.values()[k] - only2.values()[k]) <= 1e-13);
  }

  TEST_CASE("role split and stack are inverse") {
    Rng rng(10);
    const Tensor s = Tensor::constant(random_matrix(7, 2, rng));
    const NodeEmbeddings e = split_roles(s, 3);
    CHECK(e.users.rows() == 3);
    CHECK(e.items.rows() == 4);
    CHECK(stack_roles(e).value() == s.value());
    CHECK(parse_activation("relu") == Activation::relu);
    CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
  }
}
