#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gic/conv.hpp"
#include "gic/error.hpp"
#include "gic/head.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace gic;
using gic::testing::check_gradients;
using gic::testing::random_graph;
using gic::testing::random_matrix;

namespace {

ReceptiveField make_field(const Matrix& x, std::vector<double> a) {
  ReceptiveField rf;
  rf.reference = 0;
  for (Eigen::Index j = 0; j < x.rows(); ++j) rf.members.push_back(static_cast<std::size_t>(j));
  rf.weights = std::move(a);
  rf.member_attributes = x;
  return rf;
}

GaussianParams random_params(std::size_t c1, std::size_t d, std::mt19937_64& rng) {
  GaussianParams p;
  p.alpha = ad::Tensor::from_matrix(random_matrix(1, static_cast<Eigen::Index>(c1), rng, -1.0, 1.0));
  p.mu = ad::Tensor::from_matrix(random_matrix(static_cast<Eigen::Index>(c1), static_cast<Eigen::Index>(d), rng));
  p.log_sigma = ad::Tensor::from_matrix(
      random_matrix(static_cast<Eigen::Index>(c1), static_cast<Eigen::Index>(d), rng, -0.3, 0.5));
  return p;
}

GaussianParams unit_params(std::size_t c1, std::size_t d) {
  GaussianParams p;
  p.alpha = ad::Tensor(ad::Shape{1, c1});
  p.mu = ad::Tensor(ad::Shape{c1, d});
  p.log_sigma = ad::Tensor(ad::Shape{c1, d});
  return p;
}

/// Direct density N(x; mu, sigma^2 / a) with no log-domain tricks.
double density(double x, double mu, double sigma, double a) {
  const double var = sigma * sigma / a;
  return std::exp(-(x - mu) * (x - mu) / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Weighted log-likelihood of a field, evaluated directly from the densities.
double field_log_likelihood(const ReceptiveField& rf, const std::vector<double>& pi, const Matrix& mu,
                            const Matrix& sigma) {
  double z = 0.0;
  for (Eigen::Index j = 0; j < rf.member_attributes.rows(); ++j) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < mu.rows(); ++c) {
      double p = pi[static_cast<std::size_t>(c)];
      for (Eigen::Index k = 0; k < mu.cols(); ++k)
        p *= density(rf.member_attributes(j, k), mu(c, k), sigma(c, k), rf.weights[static_cast<std::size_t>(j)]);
      s += p;
    }
    z += std::log(s);
  }
  return z;
}

std::vector<double> mixture_weights(const GaussianParams& p) {
  return ad::softmax(p.alpha.data());
}

Matrix sigma_of(const GaussianParams& p) { return p.log_sigma.to_matrix().array().exp().matrix(); }

}  // namespace

TEST(WeightedLogGaussian, StandardAtMean) {
  const double x[] = {0.3}, mu[] = {0.3}, s[] = {1.0};
  EXPECT_NEAR(weighted_log_gaussian(x, mu, s, 1.0), -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(weighted_log_gaussian(x, mu, s, 1.0), -0.9189, 1e-4);
}

TEST(WeightedLogGaussian, WeightFourAtMean) {
  const double x[] = {0.0}, mu[] = {0.0}, s[] = {1.0};
  EXPECT_NEAR(weighted_log_gaussian(x, mu, s, 4.0), std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(weighted_log_gaussian(x, mu, s, 4.0), -0.2258, 1e-4);
}

TEST(WeightedLogGaussian, MatchesDirectDensity) {
  const double x[] = {1.0}, mu[] = {0.0}, s[] = {2.0};
  EXPECT_NEAR(weighted_log_gaussian(x, mu, s, 3.0), std::log(density(1.0, 0.0, 2.0, 3.0)), 1e-12);
}

TEST(WeightedLogGaussian, SumsOverDimensions) {
  const double x[] = {1.0, -0.5}, mu[] = {0.2, 0.1}, s[] = {0.7, 1.3};
  const double expected = std::log(density(1.0, 0.2, 0.7, 2.5) * density(-0.5, 0.1, 1.3, 2.5));
  EXPECT_NEAR(weighted_log_gaussian(x, mu, s, 2.5), expected, 1e-12);
}

TEST(WeightedLogGaussian, RejectsNonPositiveWeight) {
  const double x[] = {0.0}, mu[] = {0.0}, s[] = {1.0};
  EXPECT_THROW(weighted_log_gaussian(x, mu, s, 0.0), DomainError);
  EXPECT_THROW(weighted_log_gaussian(x, mu, s, -1.0), DomainError);
}

TEST(Responsibilities, IdenticalComponentsSplitEvenly) {
  std::mt19937_64 rng(1);
  GaussianParams p = unit_params(2, 2);
  const auto rf = make_field(random_matrix(4, 2, rng), {0.1, 0.2, 0.3, 0.4});
  const Matrix q = responsibilities(rf, p);
  EXPECT_LT((q.array() - 0.5).abs().maxCoeff(), 1e-15);
}

TEST(Responsibilities, SingleComponentIsOne) {
  std::mt19937_64 rng(2);
  const auto rf = make_field(random_matrix(3, 2, rng), {0.5, 0.25, 0.25});
  const Matrix q = responsibilities(rf, random_params(1, 2, rng));
  EXPECT_EQ(q, Matrix::Ones(3, 1));
}

TEST(Responsibilities, MatchesNaiveRatio) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_params(3, 2, rng);
    const auto rf = make_field(random_matrix(5, 2, rng, -1.0, 1.0), {0.1, 0.3, 0.2, 0.25, 0.15});
    const Matrix q = responsibilities(rf, p);
    const auto pi = mixture_weights(p);
    const Matrix sigma = sigma_of(p);
    const Matrix mu = p.mu.to_matrix();
    for (Eigen::Index j = 0; j < 5; ++j) {
      Vector num(3);
      for (Eigen::Index c = 0; c < 3; ++c) {
        num(c) = pi[static_cast<std::size_t>(c)];
        for (Eigen::Index k = 0; k < 2; ++k)
          num(c) *= density(rf.member_attributes(j, k), mu(c, k), sigma(c, k), rf.weights[static_cast<std::size_t>(j)]);
      }
      num /= num.sum();
      for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(q(j, c), num(c), 1e-12);
      EXPECT_NEAR(q.row(j).sum(), 1.0, 1e-10);
      EXPECT_GE(q.row(j).minCoeff(), 0.0);
    }
  }
}

TEST(Responsibilities, StableForFarMembers) {
  GaussianParams p = unit_params(2, 1);
  p.mu[1] = 1.0;
  Matrix x(1, 1);
  x << 1e4;
  const Matrix q = responsibilities(make_field(x, {1.0}), p);
  EXPECT_TRUE(q.allFinite());
  EXPECT_NEAR(q.row(0).sum(), 1.0, 1e-10);
  EXPECT_NEAR(q(0, 1), 1.0, 1e-12);
}

TEST(EncodeSubgraph, SingleComponentClosedForm) {
  Matrix x(2, 1);
  x << 1.0, 3.0;
  const Vector f = encode_subgraph(make_field(x, {1.0, 1.0}), unit_params(1, 1));
  ASSERT_EQ(f.size(), 2);
  EXPECT_NEAR(f(0), 4.0, 1e-14);
  EXPECT_NEAR(f(1), 8.0, 1e-14);
}

TEST(EncodeSubgraph, MembersAtMean) {
  for (Eigen::Index n : {1, 3, 6}) {
    const Vector f = encode_subgraph(make_field(Matrix::Zero(n, 1), std::vector<double>(static_cast<std::size_t>(n), 1.0)),
                                     unit_params(1, 1));
    EXPECT_EQ(f(0), 0.0);
    EXPECT_NEAR(f(1), -static_cast<double>(n), 1e-14);
  }
}

TEST(EncodeSubgraph, LayoutAndLength) {
  std::mt19937_64 rng(4);
  const auto rf = make_field(random_matrix(4, 3, rng), {0.25, 0.25, 0.25, 0.25});
  EXPECT_EQ(encode_subgraph(rf, random_params(5, 3, rng)).size(), 2 * 3 * 5);
}

TEST(EncodeSubgraph, MatchesFiniteDifferenceOfLogLikelihood) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t c1 = 2, d = 2;
    const auto p = random_params(c1, d, rng);
    const auto rf = make_field(random_matrix(4, 2, rng, -1.5, 1.5), {0.4, 0.1, 0.3, 0.2});
    const Vector f = encode_subgraph(rf, p);
    const auto pi = mixture_weights(p);
    Matrix mu = p.mu.to_matrix();
    Matrix sigma = sigma_of(p);
    const double h = 1e-5;
    for (Eigen::Index c = 0; c < 2; ++c) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        const double m0 = mu(c, k);
        mu(c, k) = m0 + h;
        const double up = field_log_likelihood(rf, pi, mu, sigma);
        mu(c, k) = m0 - h;
        const double down = field_log_likelihood(rf, pi, mu, sigma);
        mu(c, k) = m0;
        const double d_mu = (up - down) / (2 * h);

        const double s0 = sigma(c, k);
        sigma(c, k) = s0 + h;
        const double sup = field_log_likelihood(rf, pi, mu, sigma);
        sigma(c, k) = s0 - h;
        const double sdown = field_log_likelihood(rf, pi, mu, sigma);
        sigma(c, k) = s0;
        const double d_sigma = (sup - sdown) / (2 * h);

        const Eigen::Index base = c * 2 * static_cast<Eigen::Index>(d);
        EXPECT_NEAR(f(base + k), d_mu, 1e-6 * std::max(1.0, std::abs(d_mu)));
        EXPECT_NEAR(f(base + static_cast<Eigen::Index>(d) + k), d_sigma, 1e-6 * std::max(1.0, std::abs(d_sigma)));
      }
    }
  }
}

TEST(EncodeSubgraph, SeesMultisetNotWeightedSum) {
  // Equal sum a_j x_j = 1 from different weighted multisets.
  Matrix xa(2, 1), xb(2, 1);
  xa << 1.0, 1.0;
  xb << 2.0, 0.0;
  const auto p = unit_params(1, 1);
  const Vector fa = encode_subgraph(make_field(xa, {0.5, 0.5}), p);
  const Vector fb = encode_subgraph(make_field(xb, {0.5, 0.5}), p);
  EXPECT_NEAR(fa(0), fb(0), 1e-15);
  EXPECT_GT(std::abs(fa.norm() - fb.norm()), 0.1);
}

TEST(EncodeFields, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  const auto g = random_graph(6, 0.5, 2, rng);
  const auto scales = prepare_scales(g, 2);
  for (const auto& pairs : scales) {
    std::mt19937_64 prng(7);
    const auto p = random_params(3, 2, prng);
    const auto r = check_gradients(
        [&pairs](ad::Tape& t, std::span<const ad::Var> v) {
          const ad::Var f = encode_fields(v[0], pairs, GaussianVars{v[1], v[2], v[3]});
          return ad::sum(ad::mul(f, t.constant(ad::Tensor(f.shape(), 0.37))));
        },
        {ad::Tensor::from_matrix(g.attributes()), p.alpha, p.mu, p.log_sigma});
    EXPECT_LE(r.max_rel_error, 1e-5);
  }
}

TEST(ConvLayer, FullSizeArithmetic) {
  std::mt19937_64 rng(8);
  const EiGmmConvLayer layer(7, 7, 39, 64, rng);
  EXPECT_EQ(layer.per_scale_feature_dim(), 546u);
  EXPECT_EQ(layer.concat_feature_dim(), 3822u);
  EXPECT_EQ(layer.filter_parameter_count(), 244608u);
  EXPECT_EQ(layer.filter().shape(), (ad::Shape{3822, 64}));
}

TEST(ConvLayer, Initialization) {
  std::mt19937_64 rng(9);
  const EiGmmConvLayer layer(3, 50, 16, 8, rng);
  double var = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto& s = layer.scale(k);
    EXPECT_EQ(s.alpha, ad::Tensor(ad::Shape{1, 50}));
    EXPECT_EQ(s.log_sigma, ad::Tensor(ad::Shape{50, 16}));
    for (double v : s.mu.data()) var += v * v;
    n += s.mu.size();
  }
  // Variance 1/sqrt(d).
  EXPECT_NEAR(var / static_cast<double>(n), 0.25, 0.03);
  EXPECT_EQ(layer.bias(), ad::Tensor(ad::Shape{1, 8}));
}

TEST(ConvLayer, ZeroFilterGivesZeros) {
  std::mt19937_64 rng(10);
  EiGmmConvLayer layer(2, 2, 3, 5, rng);
  for (double& v : layer.filter().data()) v = 0.0;
  const auto g = random_graph(7, 0.4, 3, rng);
  EXPECT_EQ(conv_forward(g, layer), Matrix::Zero(7, 5));
}

TEST(ConvLayer, DimensionMismatch) {
  std::mt19937_64 rng(11);
  const EiGmmConvLayer layer(1, 2, 3, 5, rng);
  EXPECT_THROW(conv_forward(random_graph(4, 0.5, 2, rng), layer), ShapeError);
}

TEST(ConvLayer, StructurePassesThroughAndOutputIsNonNegative) {
  std::mt19937_64 rng(12);
  const EiGmmConvLayer layer(2, 3, 2, 6, rng);
  const auto g = random_graph(8, 0.4, 2, rng);
  const Matrix y = conv_forward(g, layer);
  EXPECT_EQ(y.rows(), 8);
  EXPECT_EQ(y.cols(), 6);
  EXPECT_GE(y.minCoeff(), 0.0);
}

TEST(ConvLayer, PermutationEquivariant) {
  std::mt19937_64 rng(13);
  const EiGmmConvLayer layer(3, 2, 2, 4, rng);
  for (int trial = 0; trial < 3; ++trial) {
    const auto g = random_graph(9, 0.35, 2, rng);
    const auto perm = gic::testing::random_permutation(9, rng);
    const Matrix yg = conv_forward(g, layer);
    const Matrix yh = conv_forward(g.permuted(perm), layer);
    for (Eigen::Index i = 0; i < 9; ++i)
      EXPECT_LT((yh.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])) - yg.row(i)).cwiseAbs().maxCoeff(),
                1e-10);
  }
}

TEST(ConvLayer, BlockFiltersEqualConcatenatedFilter) {
  std::mt19937_64 rng(14);
  const std::size_t k_scales = 2, c1 = 3, d = 2, out = 4;
  const EiGmmConvLayer layer(k_scales, c1, d, out, rng);
  const auto g = random_graph(6, 0.5, d, rng);
  const Matrix w = layer.filter().to_matrix();
  const Matrix b = layer.bias().to_matrix();
  const Eigen::Index block = static_cast<Eigen::Index>(2 * d);

  Matrix encoded(6, static_cast<Eigen::Index>(layer.concat_feature_dim()));
  for (std::size_t k = 1; k <= k_scales; ++k) {
    const auto fields = receptive_fields(g, static_cast<int>(k));
    for (std::size_t v = 0; v < 6; ++v)
      encoded.block(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>((k - 1) * layer.per_scale_feature_dim()), 1,
                    static_cast<Eigen::Index>(layer.per_scale_feature_dim())) =
          encode_subgraph(fields[v], layer, k).transpose();
  }
  // Sum of per-(scale, component) filters f_c applied to their own blocks.
  Matrix summed = Matrix::Zero(6, static_cast<Eigen::Index>(out));
  for (Eigen::Index s = 0; s < encoded.cols(); s += block)
    summed += encoded.middleCols(s, block) * w.middleRows(s, block);
  const Matrix joint = encoded * w;
  EXPECT_LT((summed - joint).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix expected = (joint.rowwise() + b.row(0)).cwiseMax(0.0);
  EXPECT_LT((conv_forward(g, layer) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Head, ZeroWeightsUniform) {
  std::mt19937_64 rng(15);
  FcSoftmaxHead head(5, 4, 3, rng);
  for (ad::Tensor* t : {&head.hidden_weight(), &head.hidden_bias(), &head.out_weight(), &head.out_bias()})
    for (double& v : t->data()) v = 0.0;
  ad::Tape tape;
  ParamBinder bind(tape);
  const auto z = head.logits(tape.constant(ad::Tensor(ad::Shape{1, 5}, 1.0)), bind);
  for (double p : ad::softmax(z.value().data())) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(Head, ConfidentLogits) {
  const double z[] = {10.0, -10.0};
  EXPECT_NEAR(ad::softmax(z)[0], 1.0, 1e-8);
}

TEST(Head, ShapeMismatch) {
  std::mt19937_64 rng(16);
  FcSoftmaxHead head(5, 4, 2, rng);
  ad::Tape tape;
  ParamBinder bind(tape);
  EXPECT_THROW(head.logits(tape.constant(ad::Tensor(ad::Shape{1, 4})), bind), ShapeError);
}

TEST(Head, LossGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  FcSoftmaxHead head(5, 4, 3, rng);
  const ad::Tensor x = gic::testing::random_tensor(1, 5, rng);
  auto loss = [&head, &x]() {
    ad::Tape tape;
    ParamBinder bind(tape, false);
    return head.loss(tape.constant(x), 1, bind).value().item();
  };
  ad::Tape tape;
  ParamBinder bind(tape);
  tape.backward(head.loss(tape.constant(x), 1, bind));
  std::vector<NamedParameter> params;
  head.collect_parameters("fc", params);
  ASSERT_EQ(params.size(), 4u);
  const double h = 1e-6;
  for (const auto& p : params) {
    const ad::Tensor g = bind.grad(*p.value);
    for (std::size_t k = 0; k < p.value->size(); ++k) {
      const double x0 = (*p.value)[k];
      (*p.value)[k] = x0 + h;
      const double up = loss();
      (*p.value)[k] = x0 - h;
      const double down = loss();
      (*p.value)[k] = x0;
      EXPECT_LE(gic::testing::rel_error(g[k], (up - down) / (2 * h)), 1e-5) << p.name << "[" << k << "]";
    }
  }
}
