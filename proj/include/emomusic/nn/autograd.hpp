#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "emomusic/nn/tensor.hpp"

namespace emomusic::nn {

struct Node;

/// Handle to a value in the computation tape. Copies share the node.
class Var {
 public:
  using BackwardFn = std::function<void(Node& self)>;

  Var() = default;

  /// Constant input: never receives a gradient.
  static Var constant(Tensor value);
  /// Trainable leaf; its gradient accumulates across backward() calls until
  /// zero_grad().
  static Var leaf(Tensor value, bool requires_grad = true);
  /// Custom op. `backward` reads self.grad and accumulates into the parents
  /// via Node::parent_grad(i). When no parent requires a gradient (or a
  /// NoGradGuard is active) the result is a constant and `backward` is dropped.
  static Var make(Tensor value, std::vector<Var> parents, BackwardFn backward);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const;
  Tensor& mutable_value();
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

  /// Gradient buffer; zeros of the value's shape when nothing has flowed in.
  Tensor grad() const;
  void zero_grad();

  /// Reverse sweep from a scalar (size-1) value.
  void backward() const;

  Node* node() const noexcept { return node_.get(); }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
  friend struct Node;
};

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows in
  std::vector<Var> parents;
  Var::BackwardFn backward_fn;
  std::uint64_t id = 0;
  bool requires_grad = false;

  /// Zero-initialized gradient buffer of the i-th parent, or nullptr when that
  /// parent does not take gradients.
  Tensor* parent_grad(std::size_t i);
  Tensor& grad_buffer();
};

/// Disables graph construction on this thread while alive (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled() noexcept;

// --- differentiable ops (rank-2 unless stated) ------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
/// a[r×c] + bias[1×c] broadcast over rows.
Var add_row(const Var& a, const Var& bias);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var relu(const Var& a);
Var abs(const Var& a);
Var reshape(const Var& a, Shape shape);

/// Row softmax. `allowed` (same shape, nonzero = keep) masks entries out;
/// rows with nothing allowed become all zeros.
Var softmax_rows(const Var& a, const Tensor* allowed = nullptr);
Var log_softmax_rows(const Var& a);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps);

enum class NormMode { Train, Eval };
struct RunningStats {
  Tensor mean;  // 1×F
  Tensor var;   // 1×F
};
/// Normalizes each column over the batch rows. Train mode uses batch
/// statistics (biased variance) and updates `stats` with `momentum`; eval mode
/// uses `stats`. Throws BatchTooSmall for a train-mode batch of one row.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, RunningStats& stats, NormMode mode,
               Real momentum, Real eps);

/// Rows of `table` selected by ids.
Var embedding(const Var& table, std::span<const std::int32_t> ids);

Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

/// 1×c mean over the rows with valid[r] set (zero row when none are valid).
Var mean_rows(const Var& a, const std::vector<bool>& valid);
/// Row t = mean of valid rows 0..t (zero row when none are valid yet).
Var cumulative_mean_rows(const Var& a, const std::vector<bool>& valid);

Var sum(const Var& a);
Var mean(const Var& a);

/// −Σ_i logp[i, target_i] over rows with target ≥ 0.
Var nll_rows(const Var& logp, std::span<const std::int32_t> targets);
/// −Σ y·ln p over entries with y ≠ 0.
Var cross_entropy(const Var& probs, const Tensor& targets);

/// x[C×H×W] * w[O×C×k×k] + b[1×O], stride 1, zero padding `pad`.
Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t pad);
/// 2×2 max pooling, stride 2, on C×H×W (odd trailing row/col dropped).
Var maxpool2(const Var& x);
/// C×H×W → 1×C spatial mean.
Var global_avg_pool(const Var& x);

}  // namespace emomusic::nn
