#include <gtest/gtest.h>

#include <random>
#include <set>

#include "gic/error.hpp"
#include "gic/network.hpp"
#include "gic/train.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace gic;
using gic::testing::random_graph;

namespace {

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.architecture = "C(4)-P(0.5)-C(3)-P-FC(5)";
  cfg.num_scales = 2;
  cfg.num_components = 2;
  return cfg;
}

PreparedGraph labelled(const AttributeGraph& g, int label, const NetworkConfig& cfg) {
  return prepare_graph(g.with_label(label), cfg.num_scales, cfg.khop);
}

double batch_loss(Network& net, const std::vector<PreparedGraph>& graphs, const std::vector<PoolTrace>& traces) {
  double s = 0.0;
  for (std::size_t i = 0; i < graphs.size(); ++i) s += loss_and_gradients(net, graphs[i], &traces[i]).loss;
  return s / static_cast<double>(graphs.size());
}

}  // namespace

TEST(Network, MinimalArchitectureShapes) {
  NetworkConfig cfg;
  cfg.architecture = "C(8)-P-FC(8)";
  std::mt19937_64 rng(1);
  Network net(cfg, 3, 2, rng);
  ASSERT_EQ(net.conv_layers().size(), 1u);
  EXPECT_EQ(net.conv_layers()[0].in_dim(), 3u);
  EXPECT_EQ(net.conv_layers()[0].out_dim(), 8u);
  EXPECT_EQ(net.head().in_dim(), 8u);
  EXPECT_EQ(net.head().hidden(), 8u);
  EXPECT_EQ(net.head().num_classes(), 2u);
  const auto g = prepare_graph(random_graph(7, 0.4, 3, rng), cfg.num_scales, cfg.khop);
  EXPECT_EQ(net.logits(g).shape(), (ad::Shape{1, 2}));
  EXPECT_EQ(net.embedding(g).shape(), (ad::Shape{1, 8}));
}

TEST(Network, FullSizeFirstLayer) {
  std::mt19937_64 rng(2);
  Network net(NetworkConfig::full(), 39, 2, rng);
  ASSERT_EQ(net.conv_layers().size(), 3u);
  EXPECT_EQ(net.conv_layers()[0].filter().shape(), (ad::Shape{3822, 64}));
  EXPECT_EQ(net.conv_layers()[1].in_dim(), 64u);
  EXPECT_EQ(net.conv_layers()[2].out_dim(), 256u);
  EXPECT_EQ(net.head().in_dim(), 256u);
  EXPECT_EQ(net.depth(), 8u);
}

TEST(Network, DeskDepth) {
  std::mt19937_64 rng(3);
  Network net(NetworkConfig{}, 8, 2, rng);
  EXPECT_EQ(net.depth(), 6u);
  EXPECT_EQ(net.conv_layers().size(), 2u);
}

TEST(Network, ParameterNamesAreUnique) {
  std::mt19937_64 rng(4);
  Network net(small_config(), 3, 2, rng);
  std::set<std::string> names;
  std::size_t total = 0;
  for (const auto& p : net.parameters()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    total += p.value->size();
  }
  EXPECT_EQ(total, net.parameter_count());
  EXPECT_TRUE(names.count("conv0.scale1.mu"));
  EXPECT_TRUE(names.count("fc.out_bias"));
}

TEST(Network, PoolClusterCounts) {
  std::mt19937_64 rng(5);
  NetworkConfig cfg = small_config();
  cfg.c_final = 2;
  Network net(cfg, 3, 2, rng);
  StageSpec p;
  p.kind = StageKind::pool;
  p.ratio = 0.25;
  EXPECT_EQ(net.pool_clusters(p, 16), 4u);
  EXPECT_EQ(net.pool_clusters(p, 17), 5u);
  EXPECT_EQ(net.pool_clusters(p, 1), 1u);
  p.ratio = 0.1;
  EXPECT_EQ(net.pool_clusters(p, 30), 3u);
  p.ratio.reset();
  EXPECT_EQ(net.pool_clusters(p, 9), 2u);
  EXPECT_EQ(net.pool_clusters(p, 1), 1u);
}

TEST(Network, SmallGraphIsPaddedToFinalCount) {
  NetworkConfig cfg;
  cfg.architecture = "C(4)-P-FC(3)";
  cfg.c_final = 3;
  std::mt19937_64 rng(6);
  Network net(cfg, 2, 2, rng);
  const auto g = prepare_graph(random_graph(2, 1.0, 2, rng), cfg.num_scales, cfg.khop);
  const ad::Tensor e = net.embedding(g);
  ASSERT_EQ(e.shape(), (ad::Shape{1, 12}));
  for (std::size_t k = 8; k < 12; ++k) EXPECT_EQ(e[k], 0.0);
}

TEST(Network, FeatureDimensionMismatch) {
  std::mt19937_64 rng(7);
  Network net(small_config(), 3, 2, rng);
  const auto g = prepare_graph(random_graph(5, 0.5, 2, rng), 2, KhopPolynomial::power);
  EXPECT_THROW(net.logits(g), ShapeError);
}

TEST(Network, FrozenTraceReproducesForward) {
  std::mt19937_64 rng(8);
  const NetworkConfig cfg = small_config();
  Network net(cfg, 3, 2, rng);
  const auto g = labelled(random_graph(10, 0.3, 3, rng), 1, cfg);
  ad::Tape t1;
  ParamBinder b1(t1, false);
  const auto live = net.forward(g, b1);
  ad::Tape t2;
  ParamBinder b2(t2, false);
  const auto replay = net.forward(g, b2, &live.trace);
  EXPECT_EQ(live.logits.value(), replay.logits.value());
  EXPECT_EQ(live.trace.assignments, replay.trace.assignments);
}

TEST(Network, EndToEndGradientWithFrozenAssignments) {
  std::mt19937_64 rng(9);
  const NetworkConfig cfg = small_config();
  Network net(cfg, 3, 2, rng);
  const std::vector<PreparedGraph> batch{labelled(random_graph(8, 0.4, 3, rng), 0, cfg),
                                         labelled(random_graph(11, 0.3, 3, rng), 1, cfg)};
  std::vector<PoolTrace> traces;
  std::vector<ad::Tensor> grads;
  for (const auto& g : batch) {
    ad::Tape t;
    ParamBinder b(t, false);
    traces.push_back(net.forward(g, b).trace);
    const auto lg = loss_and_gradients(net, g, &traces.back());
    if (grads.empty()) {
      grads = lg.grads;
    } else {
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i].map() += lg.grads[i].map();
    }
  }
  for (auto& t : grads) t.map() *= 0.5;

  const auto params = net.parameters();
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].value->size(); ++k) {
      double& p = (*params[i].value)[k];
      const double p0 = p;
      p = p0 + h;
      const double up = batch_loss(net, batch, traces);
      p = p0 - h;
      const double down = batch_loss(net, batch, traces);
      p = p0;
      const double e = gic::testing::rel_error(grads[i][k], (up - down) / (2 * h));
      EXPECT_LE(e, 1e-4) << params[i].name << "[" << k << "]";
      worst = std::max(worst, e);
    }
  }
  RecordProperty("max_rel_error", std::to_string(worst));
}

TEST(Network, PermutationInvariantLogits) {
  std::mt19937_64 rng(10);
  const NetworkConfig cfg;
  Network net(cfg, 3, 2, rng);
  std::uniform_int_distribution<std::size_t> size(6, 16);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_graph(size(rng), 0.3, 3, rng);
    const auto perm = gic::testing::random_permutation(g.num_vertices(), rng);
    const auto a = net.logits(prepare_graph(g, cfg.num_scales, cfg.khop));
    const auto b = net.logits(prepare_graph(g.permuted(perm), cfg.num_scales, cfg.khop));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a[c], b[c], 1e-8) << "trial " << trial;
  }
}

TEST(Network, SameSeedSameParameters) {
  std::mt19937_64 r1(11), r2(11);
  Network a(small_config(), 3, 2, r1);
  Network b(small_config(), 3, 2, r2);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].value, *pb[i].value);
}

TEST(MixSeed, Distinct) {
  EXPECT_NE(mix_seed(0, 0), mix_seed(0, 1));
  EXPECT_NE(mix_seed(0, 1), mix_seed(1, 0));
  EXPECT_EQ(mix_seed(5, 7), mix_seed(5, 7));
}
