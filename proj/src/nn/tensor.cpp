#include "emomusic/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "emomusic/error.hpp"

namespace emomusic::nn {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_))
    throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape_) + " does not hold " +
                                              std::to_string(values_.size()) + " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<Real> values) {
  return Tensor({rows, cols}, std::vector<Real>(values));
}

Tensor Tensor::row(std::vector<Real> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return shape_[1];
}

void Tensor::fill(Real v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t(std::move(shape), values_);
  return t;
}

void Tensor::add_(const Tensor& other) {
  require_same_shape(*this, other, "add_");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2)
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

void gemm(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c, bool accumulate) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = ta ? a.dim(1) : a.dim(0);
  const std::size_t k = ta ? a.dim(0) : a.dim(1);
  const std::size_t kb = tb ? b.dim(1) : b.dim(0);
  const std::size_t n = tb ? b.dim(0) : b.dim(1);
  if (k != kb)
    throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions differ: " + shape_string(a.shape()) +
                                              (ta ? "^T" : "") + " x " + shape_string(b.shape()) + (tb ? "^T" : ""));
  if (!accumulate || c.shape() != Shape{m, n}) {
    if (accumulate) throw Error(ErrorCode::ShapeMismatch, "matmul accumulator has wrong shape");
    c = Tensor({m, n});
  }
  const Real* A = a.data();
  const Real* B = b.data();
  Real* C = c.data();
  const std::size_t lda = a.dim(1), ldb = b.dim(1);
  if (!tb) {
    for (std::size_t i = 0; i < m; ++i) {
      Real* crow = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = ta ? A[p * lda + i] : A[i * lda + p];
        if (av == Real(0)) continue;
        const Real* brow = B + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      Real* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const Real* brow = B + j * ldb;
        Real acc = 0;
        if (ta) {
          for (std::size_t p = 0; p < k; ++p) acc += A[p * lda + i] * brow[p];
        } else {
          const Real* arow = A + i * lda;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        }
        crow[j] += acc;
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c;
  gemm(a, false, b, false, c, false);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() != 1 && x.rank() != 2)
    throw Error(ErrorCode::ShapeMismatch, "softmax supports rank 1 or 2, got " + shape_string(x.shape()));
  const int rank = static_cast<int>(x.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw Error(ErrorCode::ShapeMismatch, "softmax axis out of range");
  const std::size_t rows = rank == 1 ? 1 : x.dim(0);
  const std::size_t cols = rank == 1 ? x.dim(0) : x.dim(1);
  // Normalize along `axis`: lines are rows (axis last) or columns (axis 0 of a matrix).
  const bool along_cols = rank == 2 && axis == 0;
  const std::size_t lines = along_cols ? cols : rows;
  const std::size_t len = along_cols ? rows : cols;
  const std::size_t stride = along_cols ? cols : 1;
  Tensor y(x.shape());
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = along_cols ? l : l * cols;
    Real mx = x[base];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * stride]);
    Real sum = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const Real e = std::exp(x[base + i * stride] - mx);
      y[base + i * stride] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < len; ++i) y[base + i * stride] /= sum;
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  require_rank2(x, "layer_norm");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (gamma.size() != c || beta.size() != c)
    throw Error(ErrorCode::ShapeMismatch, "layer_norm: gamma/beta must have " + std::to_string(c) + " entries");
  Tensor y(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    Real mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += x.at(i, j);
    mean /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
    var /= static_cast<Real>(c);
    const Real inv = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) = gamma[j] * (x.at(i, j) - mean) * inv + beta[j];
  }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace emomusic::nn
