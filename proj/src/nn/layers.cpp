#include "emomusic/nn/layers.hpp"

#include <cmath>

#include "emomusic/error.hpp"

namespace emomusic::nn {

Parameter::Parameter(std::string name, Tensor init)
    : adam_m(init.shape()), adam_v(init.shape()), name_(std::move(name)), var_(Var::leaf(std::move(init))) {}

std::vector<StateRef> ParameterList::state() const {
  std::vector<StateRef> out;
  for (Parameter* p : params) out.push_back({p->name(), &p->value()});
  out.insert(out.end(), buffers.begin(), buffers.end());
  return out;
}

Tensor uniform_init(Shape shape, std::size_t fan_in, util::Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

Tensor normal_init(Shape shape, double stddev, util::Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(stddev * rng.normal());
  return t;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, util::Rng& rng)
    : weight(name + ".weight", uniform_init({in, out}, in, rng)), bias(name + ".bias", Tensor({1, out})) {}

Var Linear::forward(const Var& x) const { return add_row(matmul(x, weight.var()), bias.var()); }

void Linear::collect(ParameterList& out) {
  out.params.push_back(&weight);
  out.params.push_back(&bias);
}

Embedding::Embedding(const std::string& name, std::size_t count, std::size_t dim, double stddev, util::Rng& rng)
    : table(name + ".table", normal_init({count, dim}, stddev, rng)) {}

Var Embedding::forward(std::span<const std::int32_t> ids) const { return embedding(table.var(), ids); }

void Embedding::collect(ParameterList& out) { out.params.push_back(&table); }

LayerNorm::LayerNorm(const std::string& name, std::size_t dim, Real eps_)
    : gamma(name + ".gamma", Tensor({1, dim}, Real(1))), beta(name + ".beta", Tensor({1, dim})), eps(eps_) {}

Var LayerNorm::forward(const Var& x) const { return layer_norm(x, gamma.var(), beta.var(), eps); }

void LayerNorm::collect(ParameterList& out) {
  out.params.push_back(&gamma);
  out.params.push_back(&beta);
}

BatchNorm1d::BatchNorm1d(const std::string& name, std::size_t features, Real momentum_, Real eps_)
    : gamma(name + ".gamma", Tensor({1, features}, Real(1))),
      beta(name + ".beta", Tensor({1, features})),
      stats{Tensor({1, features}), Tensor({1, features}, Real(1))},
      momentum(momentum_),
      eps(eps_),
      name_(name) {}

Var BatchNorm1d::forward(const Var& x, NormMode mode) {
  return batch_norm(x, gamma.var(), beta.var(), stats, mode, momentum, eps);
}

void BatchNorm1d::collect(ParameterList& out) {
  out.params.push_back(&gamma);
  out.params.push_back(&beta);
  out.buffers.push_back({name_ + ".running_mean", &stats.mean});
  out.buffers.push_back({name_ + ".running_var", &stats.var});
}

void AttentionConfig::validate() const {
  if (head_count == 0 || model_dim == 0 || model_dim % head_count != 0)
    throw Error(ErrorCode::ConfigError, "model_dim " + std::to_string(model_dim) + " is not divisible by " +
                                            std::to_string(head_count) + " heads");
}

Tensor causal_mask(std::size_t length) {
  Tensor m({length, length});
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.at(i, j) = 1;
  return m;
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, AttentionConfig config, util::Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config.model_dim;
  wq = Linear(name + ".q", d, d, rng);
  wk = Linear(name + ".k", d, d, rng);
  wv = Linear(name + ".v", d, d, rng);
  wo = Linear(name + ".o", d, d, rng);
}

Var MultiHeadAttention::forward(const Var& query, const Var& key, const Var& value, const Tensor* mask,
                                std::vector<Tensor>* weights) const {
  const std::size_t d = config_.model_dim;
  if (query.value().cols() != d || key.value().cols() != d || value.value().cols() != d)
    throw Error(ErrorCode::ShapeMismatch, "attention inputs must have " + std::to_string(d) + " columns");
  if (key.value().rows() != value.value().rows())
    throw Error(ErrorCode::ShapeMismatch, "attention key/value lengths differ");
  const Var q = wq.forward(query), k = wk.forward(key), v = wv.forward(value);
  const std::size_t dh = config_.head_dim();
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  std::vector<Var> heads;
  heads.reserve(config_.head_count);
  if (weights) weights->clear();
  for (std::size_t h = 0; h < config_.head_count; ++h) {
    const Var qh = slice_cols(q, h * dh, dh);
    const Var kh = slice_cols(k, h * dh, dh);
    const Var vh = slice_cols(v, h * dh, dh);
    const Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt), mask);
    if (weights) weights->push_back(attn.value());
    heads.push_back(matmul(attn, vh));
  }
  return wo.forward(config_.head_count == 1 ? heads[0] : concat_cols(heads));
}

void MultiHeadAttention::collect(ParameterList& out) {
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
}

FeedForward::FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, util::Rng& rng)
    : in(name + ".in", dim, hidden, rng), out(name + ".out", hidden, dim, rng) {}

Var FeedForward::forward(const Var& x) const { return out.forward(relu(in.forward(x))); }

void FeedForward::collect(ParameterList& list) {
  in.collect(list);
  out.collect(list);
}

TransformerBlock::TransformerBlock(const std::string& name, AttentionConfig config, std::size_t ff_dim,
                                   util::Rng& rng)
    : attention(name + ".attn", config, rng),
      norm1(name + ".ln1", config.model_dim),
      ff(name + ".ff", config.model_dim, ff_dim, rng),
      norm2(name + ".ln2", config.model_dim) {}

Var TransformerBlock::forward(const Var& x, const Tensor* mask) const {
  const Var h = norm1.forward(add(x, attention.forward(x, x, x, mask)));
  return norm2.forward(add(h, ff.forward(h)));
}

void TransformerBlock::collect(ParameterList& out) {
  attention.collect(out);
  norm1.collect(out);
  ff.collect(out);
  norm2.collect(out);
}

}  // namespace emomusic::nn
