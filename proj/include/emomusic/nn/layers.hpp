#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emomusic/nn/autograd.hpp"
#include "emomusic/util/random.hpp"

namespace emomusic::nn {

/// Trainable tensor: value and gradient live in a leaf Var; Adam moments
/// alongside.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  const std::string& name() const noexcept { return name_; }
  const Var& var() const noexcept { return var_; }
  const Tensor& value() const { return var_.value(); }
  Tensor& value() { return var_.mutable_value(); }
  Tensor grad() const { return var_.grad(); }
  void zero_grad() { var_.zero_grad(); }

  Tensor adam_m;
  Tensor adam_v;
  std::int64_t step_count = 0;

 private:
  std::string name_;
  Var var_;
};

/// Named tensor inside a module: a parameter value or a buffer.
struct StateRef {
  std::string name;
  Tensor* tensor;
};

struct ParameterList {
  std::vector<Parameter*> params;
  std::vector<StateRef> buffers;

  std::vector<StateRef> state() const;
};

Tensor uniform_init(Shape shape, std::size_t fan_in, util::Rng& rng);
Tensor normal_init(Shape shape, double stddev, util::Rng& rng);

class Linear {
 public:
  Linear() = default;
  /// Weight in×out uniform in ±1/√in; bias 1×out zero.
  Linear(const std::string& name, std::size_t in, std::size_t out, util::Rng& rng);

  /// x[n×in] → n×out.
  Var forward(const Var& x) const;
  void collect(ParameterList& out);
  std::size_t in_features() const { return weight.value().dim(0); }
  std::size_t out_features() const { return weight.value().dim(1); }

  Parameter weight;
  Parameter bias;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, std::size_t count, std::size_t dim, double stddev, util::Rng& rng);
  Var forward(std::span<const std::int32_t> ids) const;
  void collect(ParameterList& out);

  Parameter table;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim, Real eps = Real(1e-5));
  Var forward(const Var& x) const;
  void collect(ParameterList& out);

  Parameter gamma;
  Parameter beta;
  Real eps = Real(1e-5);
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, std::size_t features, Real momentum = Real(0.1), Real eps = Real(1e-5));
  Var forward(const Var& x, NormMode mode);
  void collect(ParameterList& out);

  Parameter gamma;
  Parameter beta;
  RunningStats stats;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);

 private:
  std::string name_;
};

struct AttentionConfig {
  std::size_t model_dim = 128;
  std::size_t head_count = 4;

  /// Throws ConfigError unless head_count ≥ 1 divides model_dim.
  void validate() const;
  std::size_t head_dim() const { return model_dim / head_count; }
};

/// Query×key visibility matrix (nonzero = may attend).
Tensor causal_mask(std::size_t length);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, AttentionConfig config, util::Rng& rng);

  /// Scaled dot-product attention per head over learned projections, heads
  /// concatenated and projected. `mask` is Tq×Tk. When `weights` is given it
  /// receives each head's attention matrix.
  Var forward(const Var& query, const Var& key, const Var& value, const Tensor* mask = nullptr,
              std::vector<Tensor>* weights = nullptr) const;
  void collect(ParameterList& out);
  const AttentionConfig& config() const { return config_; }

  Linear wq, wk, wv, wo;

 private:
  AttentionConfig config_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, util::Rng& rng);
  Var forward(const Var& x) const;
  void collect(ParameterList& out);

  Linear in, out;
};

/// Post-norm self-attention block: x ← LN(x + MHA(x)); x ← LN(x + FFN(x)),
/// FFN = dense ReLU then dense, applied per position.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, AttentionConfig config, std::size_t ff_dim, util::Rng& rng);
  Var forward(const Var& x, const Tensor* mask) const;
  void collect(ParameterList& out);

  MultiHeadAttention attention;
  LayerNorm norm1;
  FeedForward ff;
  LayerNorm norm2;
};

}  // namespace emomusic::nn
