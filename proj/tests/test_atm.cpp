#include <doctest.h>

#include <cmath>

#include "dart/atm.hpp"
#include "dart/error.hpp"
#include "oracles.hpp"

using namespace dart;

namespace {

ClassGraph make_graph(std::vector<std::vector<Index>> in) {
  ClassGraph g;
  g.num_classes = static_cast<Index>(in.size());
  g.in_neighbors = std::move(in);
  g.validate();
  return g;
}

GatHead random_head(Index dh, Index d, Rng& rng) {
  return {Tensor::variable(randn(dh, d, rng, 0.5)), Tensor::variable(randn(dh, d, rng, 0.5)),
          Tensor::variable(randn(dh, 1, rng, 0.5)), Tensor::variable(randn(dh, d, rng, 0.5))};
}

}  // namespace

TEST_CASE("edge list layout") {
  const ClassGraph g = make_graph({{2, 1}, {}, {0}});
  const GraphEdges e = graph_edges(g);
  CHECK(e.target == std::vector<Index>{0, 0, 0, 1, 2, 2});
  CHECK(e.source == std::vector<Index>{0, 2, 1, 1, 2, 0});
  CHECK_THROWS_AS(make_graph({{0}}), ConfigError);
  CHECK_THROWS_AS(make_graph({{1, 1}, {}}), ConfigError);
  CHECK_THROWS_AS(make_graph({{3}, {}}), ConfigError);
  const ClassGraph iso = ClassGraph::isolated(3);
  CHECK(graph_edges(iso).size() == 3);
}

TEST_CASE("GAT layer matches a dense oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + uniform_index(rng, 0, 4);
    std::vector<std::vector<Index>> in(static_cast<std::size_t>(n));
    for (Index c = 0; c < n; ++c)
      for (Index j = 0; j < n; ++j)
        if (j != c && uniform01(rng) < 0.5) in[static_cast<std::size_t>(c)].push_back(j);
    const ClassGraph g = make_graph(in);
    const GraphEdges edges = graph_edges(g);
    GatLayer layer;
    for (int m = 0; m < 4; ++m) layer.heads.push_back(random_head(2, 8, rng));
    const Matrix h = randn(n, 8, rng);
    const Matrix got = gat_layer(Tensor::constant(h), layer, edges).value();
    CHECK((got - oracle::dense_gat_layer(h, g, layer)).cwiseAbs().maxCoeff() < 1e-12);

    const Matrix alpha = attention_normalize(gatv2_scores(Tensor::constant(h), layer.heads[0], edges), edges).value();
    Vector sums = Vector::Zero(n);
    for (Index k = 0; k < edges.size(); ++k) sums(edges.target[static_cast<std::size_t>(k)]) += alpha(k, 0);
    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero weights give the identity") {
  const ClassGraph g = make_graph({{1}, {0, 2}, {}});
  GatLayer layer;
  for (int m = 0; m < 2; ++m) {
    layer.heads.push_back({Tensor::constant(Matrix::Zero(3, 6)), Tensor::constant(Matrix::Zero(3, 6)),
                           Tensor::constant(Matrix::Zero(3, 1)), Tensor::constant(Matrix::Zero(3, 6))});
  }
  Rng rng(2);
  const Matrix h = randn(3, 6, rng);
  CHECK(gat_stack(Tensor::constant(h), {layer, layer}, graph_edges(g), 0.2, nullptr, "t").value() == h);
}

TEST_CASE("isolated node sees only itself") {
  Rng rng(3);
  const ClassGraph g = make_graph({{1}, {}, {}});
  GatLayer layer;
  layer.heads.push_back(random_head(4, 4, rng));
  const Matrix h = randn(3, 4, rng);
  const Matrix got = gat_layer(Tensor::constant(h), layer, graph_edges(g)).value();
  for (Index c : {1, 2}) {
    Vector expect = layer.heads[0].w_agg.value() * h.row(c).transpose();
    for (Index k = 0; k < 4; ++k) expect(k) = oracle::leaky(expect(k));
    CHECK((got.row(c).transpose() - expect - h.row(c).transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("information travels one hop per layer") {
  // chain 0 <- 1 <- 2 <- 3
  const ClassGraph g = make_graph({{1}, {2}, {3}, {}});
  const GraphEdges edges = graph_edges(g);
  Rng rng(4);
  std::vector<GatLayer> layers(2);
  for (auto& l : layers) l.heads.push_back(random_head(4, 4, rng));
  const Matrix h = randn(4, 4, rng);
  Matrix moved = h;
  moved.row(3).array() += 1.0;
  const Matrix a = gat_stack(Tensor::constant(h), layers, edges, 0.2, nullptr, "t").value();
  const Matrix b = gat_stack(Tensor::constant(moved), layers, edges, 0.2, nullptr, "t").value();
  CHECK(a.row(0) == b.row(0));
  CHECK((a.row(1) - b.row(1)).norm() > 0.0);
  CHECK((a.row(2) - b.row(2)).norm() > 0.0);
}

TEST_CASE("attention ranking depends on the receiving node") {
  // nodes 0 and 1 both listen to 2 and 3
  const ClassGraph g = make_graph({{2, 3}, {2, 3}, {}, {}});
  const GraphEdges edges = graph_edges(g);
  GatHead hd{Tensor::constant(Matrix::Identity(2, 2)), Tensor::constant(Matrix::Identity(2, 2)),
             Tensor::constant(Matrix::Ones(2, 1)), Tensor::constant(Matrix::Identity(2, 2))};
  Matrix h(4, 2);
  h << 0, 3,
       3, 0,
       1, -2,
       -2, 1;
  const Matrix alpha = attention_normalize(gatv2_scores(Tensor::constant(h), hd, edges), edges).value();
  // edges: [0<-0, 0<-2, 0<-3, 1<-1, 1<-2, 1<-3, 2<-2, 3<-3]
  CHECK(alpha(2, 0) > alpha(1, 0));
  CHECK(alpha(4, 0) > alpha(5, 0));
}

TEST_CASE("ATM parameters and gradients") {
  ParameterSet params;
  Rng rng(5);
  const Atm atm(AtmConfig{}, 8, params, rng);
  CHECK(atm.text_layers().size() == 2);
  CHECK(atm.text_layers()[0].heads.size() == 4);
  CHECK(params.contains("atm/fuse/w1"));
  CHECK_THROWS_AS(Atm(AtmConfig{3, 2}, 8, params, rng), ConfigError);

  const ClassGraph g = make_graph({{1, 2}, {2}, {}});
  const GraphEdges edges = graph_edges(g);
  const Matrix t = randn(3, 8, rng), x = randn(3, 8, rng), w = randn(3, 8, rng);
  std::vector<Tensor> ps;
  for (auto& p : params.items()) ps.push_back(p.tensor);
  const double err = oracle::grad_error(ps, [&] {
    const Tensor ht = text_atm(Tensor::constant(t), edges, atm.text_layers());
    return weighted_sum(mm_atm(fuse(Tensor::constant(x), ht, atm.fusion()), edges, atm.mm_layers()), w);
  });
  CHECK(err < 1e-5);
  CHECK_THROWS_AS((void)fuse(Tensor::constant(x), Tensor::constant(randn(2, 8, rng)), atm.fusion()), DimensionError);
}
