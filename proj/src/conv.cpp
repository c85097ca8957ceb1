#include "gic/conv.hpp"

#include <cmath>
#include <numbers>

#include "gic/error.hpp"

namespace gic {

using ad::Axis;
using ad::Tensor;
using ad::Var;

double weighted_log_gaussian(std::span<const double> x, std::span<const double> mu,
                             std::span<const double> sigma, double a) {
  if (!(a > 0.0)) throw DomainError("edge weight must be positive, got " + std::to_string(a));
  if (x.size() != mu.size() || x.size() != sigma.size()) throw ShapeError("weighted_log_gaussian: dimension mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double out = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw DomainError("standard deviation must be positive");
    const double z = x[i] - mu[i];
    out += 0.5 * std::log(a) - half_log_2pi - std::log(sigma[i]) - a * z * z / (2.0 * sigma[i] * sigma[i]);
  }
  return out;
}

FieldPairs make_field_pairs(std::span<const ReceptiveField> fields) {
  FieldPairs out;
  out.num_fields = fields.size();
  std::size_t total = 0;
  for (const auto& rf : fields) total += rf.members.size();
  out.weight = Tensor(ad::Shape{total, 1});
  out.log_weight = Tensor(ad::Shape{total, 1});
  out.reference.reserve(total);
  out.member.reserve(total);
  std::size_t p = 0;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const auto& rf = fields[f];
    for (std::size_t j = 0; j < rf.members.size(); ++j, ++p) {
      const double a = rf.weights[j];
      if (!(a > 0.0)) throw DomainError("receptive field weight must be positive");
      out.reference.push_back(f);
      out.member.push_back(rf.members[j]);
      out.weight[p] = a;
      out.log_weight[p] = std::log(a);
    }
  }
  return out;
}

FieldPairs make_local_pairs(const ReceptiveField& rf) {
  ReceptiveField local = rf;
  for (std::size_t j = 0; j < local.members.size(); ++j) local.members[j] = j;
  return make_field_pairs(std::span<const ReceptiveField>(&local, 1));
}

namespace {

struct MixtureTerms {
  Var q;        // P x C1 responsibilities
  Var xp;       // P x d member attributes
  Var inv_var;  // C1 x d
  Var sigma;    // C1 x d
};

MixtureTerms mixture_terms(Var x, const FieldPairs& pairs, const GaussianVars& g) {
  ad::Tape& tape = *x.tape();
  const std::size_t d = x.shape().cols;
  const std::size_t c1 = g.mu.shape().rows;
  if (g.mu.shape().cols != d || g.log_sigma.shape() != g.mu.shape() || g.alpha.shape() != ad::Shape{1, c1}) {
    throw ShapeError("mixture parameters " + g.mu.shape().str() + " do not match attribute dim " + std::to_string(d));
  }
  const Var sigma = ad::exp(g.log_sigma);
  const Var inv_var = ad::exp(ad::scale(g.log_sigma, -2.0));

  // S_jc = sum_dims (x_j - mu_c)^2 / sigma_c^2, expanded so it is three matmuls.
  const Var s_quad = ad::matmul(ad::square(x), ad::transpose(inv_var));
  const Var s_cross = ad::matmul(x, ad::transpose(ad::mul(g.mu, inv_var)));
  const Var s_const = ad::transpose(ad::sum(ad::mul(ad::square(g.mu), inv_var), Axis::cols));
  const Var s = ad::add(ad::sub(s_quad, ad::scale(s_cross, 2.0)), s_const);  // m x C1

  const Var s_pairs = ad::gather_rows(s, pairs.member);  // P x C1
  const Var w = tape.constant(pairs.weight);
  const Var log_w = tape.constant(pairs.log_weight);

  // log pi_c N_jc up to the c-invariant -d/2 ln(2 pi).
  const Var log_pi = ad::sub(g.alpha, ad::logsumexp(g.alpha, Axis::cols));
  const Var log_det = ad::transpose(ad::sum(g.log_sigma, Axis::cols));  // 1 x C1
  const Var per_component = ad::sub(log_pi, log_det);
  const Var logits = ad::sub(ad::add(per_component, ad::scale(log_w, 0.5 * static_cast<double>(d))),
                             ad::mul(ad::scale(w, 0.5), s_pairs));
  const Var q = ad::exp(ad::sub(logits, ad::logsumexp(logits, Axis::cols)));
  return {q, ad::gather_rows(x, pairs.member), inv_var, sigma};
}

}  // namespace

Var responsibilities(Var x, const FieldPairs& pairs, const GaussianVars& g) {
  return mixture_terms(x, pairs, g).q;
}

Var encode_fields(Var x, const FieldPairs& pairs, const GaussianVars& g) {
  ad::Tape& tape = *x.tape();
  const MixtureTerms t = mixture_terms(x, pairs, g);
  const std::size_t c1 = g.mu.shape().rows;
  const std::size_t d = x.shape().cols;
  const Var w = tape.constant(pairs.weight);
  const Var r = ad::mul(w, t.q);  // a_j Q_jc
  std::vector<Var> parts;
  parts.reserve(2 * c1);
  for (std::size_t c = 0; c < c1; ++c) {
    const Var r_c = ad::slice(r, 0, pairs.size(), c, c + 1);
    const Var q_c = ad::slice(t.q, 0, pairs.size(), c, c + 1);
    const Var mu_c = ad::slice(g.mu, c, c + 1, 0, d);
    const Var inv_var_c = ad::slice(t.inv_var, c, c + 1, 0, d);
    const Var sigma_c = ad::slice(t.sigma, c, c + 1, 0, d);
    const Var diff = ad::sub(t.xp, mu_c);

    // dzeta/dmu_c = sum_j a_j Q_jc (x_j - mu_c) / sigma_c^2
    const Var d_mu = ad::mul(ad::segment_sum(ad::mul(r_c, diff), pairs.reference, pairs.num_fields), inv_var_c);
    // dzeta/dsigma_c = sum_j Q_jc (a_j (x_j - mu_c)^2 - sigma_c^2) / sigma_c^3
    const Var weighted_sq = ad::segment_sum(ad::mul(r_c, ad::square(diff)), pairs.reference, pairs.num_fields);
    const Var q_mass = ad::segment_sum(q_c, pairs.reference, pairs.num_fields);
    const Var d_sigma = ad::div(ad::sub(ad::mul(weighted_sq, inv_var_c), q_mass), sigma_c);
    parts.push_back(d_mu);
    parts.push_back(d_sigma);
  }
  return ad::concat(parts, Axis::cols);
}

EiGmmConvLayer::EiGmmConvLayer(std::size_t num_scales, std::size_t num_components, std::size_t in_dim,
                               std::size_t out_dim, std::mt19937_64& rng)
    : num_components_(num_components), in_dim_(in_dim), out_dim_(out_dim) {
  if (num_scales == 0 || num_components == 0) throw ConfigError("conv layer needs K >= 1 and C1 >= 1");
  if (in_dim == 0 || out_dim == 0) throw ConfigError("conv layer needs non-zero input and output widths");
  std::normal_distribution<double> mu_dist(0.0, 1.0 / std::sqrt(std::sqrt(static_cast<double>(in_dim))));
  scales_.resize(num_scales);
  for (auto& s : scales_) {
    s.alpha = Tensor(ad::Shape{1, num_components}, 0.0);
    s.mu = Tensor(ad::Shape{num_components, in_dim});
    for (double& v : s.mu.data()) v = mu_dist(rng);
    s.log_sigma = Tensor(ad::Shape{num_components, in_dim}, 0.0);
  }
  const std::size_t fan_in = concat_feature_dim();
  std::normal_distribution<double> w_dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  filter_ = Tensor(ad::Shape{fan_in, out_dim});
  for (double& v : filter_.data()) v = w_dist(rng);
  bias_ = Tensor(ad::Shape{1, out_dim}, 0.0);
}

GaussianVars EiGmmConvLayer::bind_scale(ParamBinder& bind, std::size_t k) const {
  const auto& s = scale(k);
  return {bind(s.alpha), bind(s.mu), bind(s.log_sigma)};
}

Var EiGmmConvLayer::encode(Var x, std::span<const FieldPairs> scales, ParamBinder& bind) const {
  if (x.shape().cols != in_dim_) {
    throw ShapeError("conv layer expects attribute dim " + std::to_string(in_dim_) + ", got " +
                     std::to_string(x.shape().cols));
  }
  if (scales.size() != num_scales()) {
    throw ShapeError("conv layer has " + std::to_string(num_scales()) + " scales, got " +
                     std::to_string(scales.size()) + " receptive-field sets");
  }
  std::vector<Var> blocks;
  blocks.reserve(scales.size());
  for (std::size_t k = 1; k <= scales.size(); ++k) {
    blocks.push_back(encode_fields(x, scales[k - 1], bind_scale(bind, k)));
  }
  return blocks.size() == 1 ? blocks.front() : ad::concat(blocks, Axis::cols);
}

Var EiGmmConvLayer::forward(Var x, std::span<const FieldPairs> scales, ParamBinder& bind) const {
  const Var features = encode(x, scales, bind);
  return ad::relu(ad::add(ad::matmul(features, bind(filter_)), bind(bias_)));
}

void EiGmmConvLayer::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) {
  for (std::size_t k = 0; k < scales_.size(); ++k) {
    const std::string p = prefix + ".scale" + std::to_string(k + 1);
    out.push_back({p + ".alpha", &scales_[k].alpha});
    out.push_back({p + ".mu", &scales_[k].mu});
    out.push_back({p + ".log_sigma", &scales_[k].log_sigma});
  }
  out.push_back({prefix + ".filter", &filter_});
  out.push_back({prefix + ".bias", &bias_});
}

std::vector<FieldPairs> prepare_scales(const AttributeGraph& g, std::size_t num_scales, KhopPolynomial poly) {
  std::vector<FieldPairs> out;
  out.reserve(num_scales);
  for (std::size_t k = 1; k <= num_scales; ++k) {
    const auto fields = receptive_fields(g, static_cast<int>(k), poly);
    out.push_back(make_field_pairs(fields));
  }
  return out;
}

namespace {

GaussianVars bind_constants(ad::Tape& tape, const GaussianParams& p) {
  return {tape.constant(p.alpha), tape.constant(p.mu), tape.constant(p.log_sigma)};
}

}  // namespace

Matrix responsibilities(const ReceptiveField& rf, const GaussianParams& params) {
  ad::Tape tape;
  const Var x = tape.constant(Tensor::from_matrix(rf.member_attributes));
  return responsibilities(x, make_local_pairs(rf), bind_constants(tape, params)).value().to_matrix();
}

Vector encode_subgraph(const ReceptiveField& rf, const GaussianParams& params) {
  ad::Tape tape;
  const Var x = tape.constant(Tensor::from_matrix(rf.member_attributes));
  const Tensor& row = encode_fields(x, make_local_pairs(rf), bind_constants(tape, params)).value();
  return Eigen::Map<const Vector>(row.data().data(), static_cast<Eigen::Index>(row.size()));
}

Matrix conv_forward(const AttributeGraph& g, const EiGmmConvLayer& layer, KhopPolynomial poly) {
  if (g.feature_dim() != layer.in_dim()) {
    throw ShapeError("conv layer expects attribute dim " + std::to_string(layer.in_dim()) + ", graph has " +
                     std::to_string(g.feature_dim()));
  }
  ad::Tape tape;
  ParamBinder bind(tape, false);
  const auto scales = prepare_scales(g, layer.num_scales(), poly);
  const Var x = tape.constant(Tensor::from_matrix(g.attributes()));
  return layer.forward(x, scales, bind).value().to_matrix();
}

}  // namespace gic
