#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace emomusic::nn {

#ifdef EMOMUSIC_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array. Matrices are rank 2; vectors are usually carried as
/// 1×n matrices so that every layer sees rank-2 inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<Real> values);
  static Tensor row(std::vector<Real> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  /// Rank-2 accessors; throw ShapeMismatch otherwise.
  std::size_t rows() const;
  std::size_t cols() const;

  Real* data() noexcept { return values_.data(); }
  const Real* data() const noexcept { return values_.data(); }
  std::span<Real> values() noexcept { return values_; }
  std::span<const Real> values() const noexcept { return values_; }
  const std::vector<Real>& vector() const noexcept { return values_; }

  Real& operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }
  Real& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  Real at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  void fill(Real v);
  bool all_finite() const noexcept;
  Tensor reshaped(Shape shape) const;

  /// this += other (same shape).
  void add_(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<Real> values_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
void require_rank2(const Tensor& a, const char* op);

/// C = op(A)·op(B), optionally accumulated into C. Deterministic row-major
/// accumulation order.
void gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b, Tensor& c, bool accumulate);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Max-subtracted softmax along an axis of a rank-1 or rank-2 tensor
/// (axis -1 = last).
Tensor softmax(const Tensor& x, int axis = -1);

/// Row-wise normalization followed by gamma·x̂ + beta; gamma/beta are 1×cols.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps);

/// Largest absolute elementwise difference.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace emomusic::nn
