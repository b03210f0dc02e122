#include "emomusic/nn/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "emomusic/error.hpp"

namespace emomusic::nn {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> new_node(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void shape_error(const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); }

}  // namespace

// --- Var / Node -------------------------------------------------------------

Var Var::constant(Tensor value) { return Var(new_node(std::move(value), false)); }

Var Var::leaf(Tensor value, bool requires_grad) { return Var(new_node(std::move(value), requires_grad)); }

Var Var::make(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  bool any = false;
  if (g_grad_enabled)
    for (const auto& p : parents) any = any || p.requires_grad();
  auto n = new_node(std::move(value), any);
  if (any) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return Var(std::move(n));
}

const Tensor& Var::value() const { return node_->value; }
Tensor& Var::mutable_value() { return node_->value; }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Var::grad() const {
  if (node_->grad.empty() && !node_->value.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() { node_->grad = Tensor(); }

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Tensor* Node::parent_grad(std::size_t i) {
  Node* p = parents.at(i).node();
  if (!p || !p->requires_grad) return nullptr;
  return &p->grad_buffer();
}

void Var::backward() const {
  if (node_->value.size() != 1) shape_error("backward() needs a scalar, got " + shape_string(node_->value.shape()));
  if (!node_->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& p : n->parents)
      if (p.requires_grad()) stack.push_back(p.node());
  }
  // Creation ids are a topological order: every parent predates its child.
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });
  node_->grad_buffer()[0] += Real(1);
  for (Node* n : order)
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

// --- elementwise ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y.add_(b.value());
  return Var::make(std::move(y), {a, b}, [](Node& s) {
    for (std::size_t i = 0; i < 2; ++i)
      if (Tensor* g = s.parent_grad(i)) g->add_(s.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return Var::make(std::move(y), {a, b}, [](Node& s) {
    if (Tensor* g = s.parent_grad(0)) g->add_(s.grad);
    if (Tensor* g = s.parent_grad(1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= s.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return Var::make(std::move(y), {a, b}, [](Node& s) {
    const Tensor& av = s.parents[0].value();
    const Tensor& bv = s.parents[1].value();
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i] * bv[i];
    if (Tensor* g = s.parent_grad(1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i] * av[i];
  });
}

Var scale(const Var& a, Real k) {
  Tensor y = a.value();
  for (auto& v : y.values()) v *= k;
  return Var::make(std::move(y), {a}, [k](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += k * s.grad[i];
  });
}

Var add_row(const Var& a, const Var& bias) {
  const Tensor& x = a.value();
  require_rank2(x, "add_row");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (bias.value().size() != c) shape_error("add_row: bias of " + std::to_string(bias.value().size()) +
                                            " entries for " + std::to_string(c) + " columns");
  Tensor y = x;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) += bias.value()[j];
  return Var::make(std::move(y), {a, bias}, [r, c](Node& s) {
    if (Tensor* g = s.parent_grad(0)) g->add_(s.grad);
    if (Tensor* g = s.parent_grad(1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += s.grad.at(i, j);
  });
}

Var matmul(const Var& a, const Var& b) {
  Tensor y = nn::matmul(a.value(), b.value());
  return Var::make(std::move(y), {a, b}, [](Node& s) {
    if (Tensor* g = s.parent_grad(0)) gemm(s.grad, false, s.parents[1].value(), true, *g, true);
    if (Tensor* g = s.parent_grad(1)) gemm(s.parents[0].value(), true, s.grad, false, *g, true);
  });
}

Var transpose(const Var& a) {
  return Var::make(nn::transpose(a.value()), {a}, [](Node& s) {
    if (Tensor* g = s.parent_grad(0)) g->add_(nn::transpose(s.grad));
  });
}

Var relu(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.values()) v = v > Real(0) ? v : Real(0);
  return Var::make(std::move(y), {a}, [](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i)
        if (s.parents[0].value()[i] > Real(0)) (*g)[i] += s.grad[i];
  });
}

Var abs(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.values()) v = std::abs(v);
  return Var::make(std::move(y), {a}, [](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) {
        const Real x = s.parents[0].value()[i];
        (*g)[i] += x > 0 ? s.grad[i] : (x < 0 ? -s.grad[i] : Real(0));
      }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return Var::make(std::move(y), {a}, [](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i];
  });
}

// --- softmax family -----------------------------------------------------------

Var softmax_rows(const Var& a, const Tensor* allowed) {
  const Tensor& x = a.value();
  require_rank2(x, "softmax_rows");
  if (allowed) require_same_shape(x, *allowed, "softmax_rows mask");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (!allowed || allowed->at(i, j) != 0) mx = std::max(mx, x.at(i, j));
    if (mx == -std::numeric_limits<Real>::infinity()) continue;
    Real total = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (allowed && allowed->at(i, j) == 0) continue;
      y.at(i, j) = std::exp(x.at(i, j) - mx);
      total += y.at(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) /= total;
  }
  return Var::make(y, {a}, [y, r, c](Node& s) {
    Tensor* g = s.parent_grad(0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      Real dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += y.at(i, j) * s.grad.at(i, j);
      for (std::size_t j = 0; j < c; ++j) g->at(i, j) += y.at(i, j) * (s.grad.at(i, j) - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  require_rank2(x, "log_softmax_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    Real mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    Real total = 0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(x.at(i, j) - mx);
    const Real lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) = x.at(i, j) - lse;
  }
  return Var::make(y, {a}, [y, r, c](Node& s) {
    Tensor* g = s.parent_grad(0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      Real total = 0;
      for (std::size_t j = 0; j < c; ++j) total += s.grad.at(i, j);
      for (std::size_t j = 0; j < c; ++j) g->at(i, j) += s.grad.at(i, j) - std::exp(y.at(i, j)) * total;
    }
  });
}

// --- normalization ------------------------------------------------------------

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const Tensor& xv = x.value();
  require_rank2(xv, "layer_norm");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (gamma.value().size() != c || beta.value().size() != c)
    shape_error("layer_norm: gamma/beta must have " + std::to_string(c) + " entries");
  Tensor xhat(xv.shape());
  std::vector<Real> inv_sigma(r);
  for (std::size_t i = 0; i < r; ++i) {
    Real mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += xv.at(i, j);
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (xv.at(i, j) - mu) * (xv.at(i, j) - mu);
    var /= static_cast<Real>(c);
    inv_sigma[i] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) xhat.at(i, j) = (xv.at(i, j) - mu) * inv_sigma[i];
  }
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) = gamma.value()[j] * xhat.at(i, j) + beta.value()[j];
  return Var::make(std::move(y), {x, gamma, beta}, [xhat, inv_sigma, r, c](Node& s) {
    const Tensor& gv = s.parents[1].value();
    if (Tensor* g = s.parent_grad(1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += s.grad.at(i, j) * xhat.at(i, j);
    if (Tensor* g = s.parent_grad(2))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += s.grad.at(i, j);
    if (Tensor* g = s.parent_grad(0)) {
      for (std::size_t i = 0; i < r; ++i) {
        Real m1 = 0, m2 = 0;
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = s.grad.at(i, j) * gv[j];
          m1 += d;
          m2 += d * xhat.at(i, j);
        }
        m1 /= static_cast<Real>(c);
        m2 /= static_cast<Real>(c);
        for (std::size_t j = 0; j < c; ++j)
          g->at(i, j) += inv_sigma[i] * (s.grad.at(i, j) * gv[j] - m1 - xhat.at(i, j) * m2);
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, RunningStats& stats, NormMode mode,
               Real momentum, Real eps) {
  const Tensor& xv = x.value();
  require_rank2(xv, "batch_norm");
  const std::size_t b = xv.dim(0), f = xv.dim(1);
  if (gamma.value().size() != f || beta.value().size() != f || stats.mean.size() != f || stats.var.size() != f)
    shape_error("batch_norm: parameters must have " + std::to_string(f) + " features");
  if (mode == NormMode::Train && b < 2)
    throw Error(ErrorCode::BatchTooSmall, "batch norm in train mode needs at least 2 rows, got " + std::to_string(b));

  Tensor xhat(xv.shape());
  std::vector<Real> inv_sigma(f);
  for (std::size_t j = 0; j < f; ++j) {
    Real mu, var;
    if (mode == NormMode::Train) {
      mu = 0;
      for (std::size_t i = 0; i < b; ++i) mu += xv.at(i, j);
      mu /= static_cast<Real>(b);
      var = 0;
      for (std::size_t i = 0; i < b; ++i) var += (xv.at(i, j) - mu) * (xv.at(i, j) - mu);
      var /= static_cast<Real>(b);
      const Real unbiased = var * static_cast<Real>(b) / static_cast<Real>(b - 1);
      stats.mean[j] = (1 - momentum) * stats.mean[j] + momentum * mu;
      stats.var[j] = (1 - momentum) * stats.var[j] + momentum * unbiased;
    } else {
      mu = stats.mean[j];
      var = stats.var[j];
    }
    inv_sigma[j] = Real(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < b; ++i) xhat.at(i, j) = (xv.at(i, j) - mu) * inv_sigma[j];
  }
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j) y.at(i, j) = gamma.value()[j] * xhat.at(i, j) + beta.value()[j];
  const bool train = mode == NormMode::Train;
  return Var::make(std::move(y), {x, gamma, beta}, [xhat, inv_sigma, b, f, train](Node& s) {
    const Tensor& gv = s.parents[1].value();
    if (Tensor* g = s.parent_grad(1))
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < f; ++j) (*g)[j] += s.grad.at(i, j) * xhat.at(i, j);
    if (Tensor* g = s.parent_grad(2))
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < f; ++j) (*g)[j] += s.grad.at(i, j);
    Tensor* g = s.parent_grad(0);
    if (!g) return;
    for (std::size_t j = 0; j < f; ++j) {
      if (!train) {
        for (std::size_t i = 0; i < b; ++i) g->at(i, j) += s.grad.at(i, j) * gv[j] * inv_sigma[j];
        continue;
      }
      Real m1 = 0, m2 = 0;
      for (std::size_t i = 0; i < b; ++i) {
        const Real d = s.grad.at(i, j) * gv[j];
        m1 += d;
        m2 += d * xhat.at(i, j);
      }
      m1 /= static_cast<Real>(b);
      m2 /= static_cast<Real>(b);
      for (std::size_t i = 0; i < b; ++i)
        g->at(i, j) += inv_sigma[j] * (s.grad.at(i, j) * gv[j] - m1 - xhat.at(i, j) * m2);
    }
  });
}

// --- indexing -----------------------------------------------------------------

Var embedding(const Var& table, std::span<const std::int32_t> ids) {
  const Tensor& t = table.value();
  require_rank2(t, "embedding");
  const std::size_t v = t.dim(0), d = t.dim(1);
  Tensor y({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
      throw Error(ErrorCode::VocabMismatch, "token id " + std::to_string(ids[i]) + " outside embedding table of " +
                                                std::to_string(v) + " rows");
    std::copy_n(t.data() + static_cast<std::size_t>(ids[i]) * d, d, y.data() + i * d);
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return Var::make(std::move(y), {table}, [idv = std::move(idv), d](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t k = 0; k < d; ++k) g->at(static_cast<std::size_t>(idv[i]), k) += s.grad.at(i, k);
  });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  const Tensor& x = a.value();
  require_rank2(x, "slice_rows");
  if (start + count > x.dim(0)) shape_error("slice_rows out of range");
  const std::size_t c = x.dim(1);
  Tensor y({count, c});
  std::copy_n(x.data() + start * c, count * c, y.data());
  return Var::make(std::move(y), {a}, [start, count, c](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < count * c; ++i) (*g)[start * c + i] += s.grad[i];
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  const Tensor& x = a.value();
  require_rank2(x, "slice_cols");
  if (start + count > x.dim(1)) shape_error("slice_cols out of range");
  const std::size_t r = x.dim(0);
  Tensor y({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) y.at(i, j) = x.at(i, start + j);
  return Var::make(std::move(y), {a}, [start, count, r](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) g->at(i, start + j) += s.grad.at(i, j);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) shape_error("concat_rows of nothing");
  const std::size_t c = parts[0].value().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != c) shape_error("concat_rows: column counts differ");
    r += p.value().rows();
  }
  Tensor y({r, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), y.data() + off);
    off += p.value().size();
  }
  return Var::make(std::move(y), parts, [](Node& s) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < s.parents.size(); ++k) {
      const std::size_t n = s.parents[k].value().size();
      if (Tensor* g = s.parent_grad(k))
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += s.grad[off + i];
      off += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) shape_error("concat_cols of nothing");
  const std::size_t r = parts[0].value().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != r) shape_error("concat_cols: row counts differ");
    c += p.value().cols();
  }
  Tensor y({r, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.value().cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) y.at(i, off + j) = p.value().at(i, j);
    off += pc;
  }
  return Var::make(std::move(y), parts, [r](Node& s) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < s.parents.size(); ++k) {
      const std::size_t pc = s.parents[k].value().cols();
      if (Tensor* g = s.parent_grad(k))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j) g->at(i, j) += s.grad.at(i, off + j);
      off += pc;
    }
  });
}

// --- reductions -----------------------------------------------------------------

Var mean_rows(const Var& a, const std::vector<bool>& valid) {
  const Tensor& x = a.value();
  require_rank2(x, "mean_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (valid.size() != r) shape_error("mean_rows: mask length differs from row count");
  const auto n = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
  Tensor y({1, c});
  if (n > 0) {
    for (std::size_t i = 0; i < r; ++i)
      if (valid[i])
        for (std::size_t j = 0; j < c; ++j) y[j] += x.at(i, j);
    for (auto& v : y.values()) v /= static_cast<Real>(n);
  }
  return Var::make(std::move(y), {a}, [valid, n, r, c](Node& s) {
    Tensor* g = s.parent_grad(0);
    if (!g || n == 0) return;
    for (std::size_t i = 0; i < r; ++i)
      if (valid[i])
        for (std::size_t j = 0; j < c; ++j) g->at(i, j) += s.grad[j] / static_cast<Real>(n);
  });
}

Var cumulative_mean_rows(const Var& a, const std::vector<bool>& valid) {
  const Tensor& x = a.value();
  require_rank2(x, "cumulative_mean_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (valid.size() != r) shape_error("cumulative_mean_rows: mask length differs from row count");
  Tensor y(x.shape());
  std::vector<Real> running(c, 0);
  std::vector<std::size_t> counts(r);
  std::size_t n = 0;
  for (std::size_t i = 0; i < r; ++i) {
    if (valid[i]) {
      ++n;
      for (std::size_t j = 0; j < c; ++j) running[j] += x.at(i, j);
    }
    counts[i] = n;
    if (n)
      for (std::size_t j = 0; j < c; ++j) y.at(i, j) = running[j] / static_cast<Real>(n);
  }
  return Var::make(std::move(y), {a}, [valid, counts, r, c](Node& s) {
    Tensor* g = s.parent_grad(0);
    if (!g) return;
    // Row j feeds every output t ≥ j with weight 1/count_t.
    std::vector<Real> acc(c, 0);
    for (std::size_t t = r; t-- > 0;) {
      if (counts[t])
        for (std::size_t k = 0; k < c; ++k) acc[k] += s.grad.at(t, k) / static_cast<Real>(counts[t]);
      if (valid[t])
        for (std::size_t k = 0; k < c; ++k) g->at(t, k) += acc[k];
    }
  });
}

Var sum(const Var& a) {
  Real total = 0;
  for (Real v : a.value().values()) total += v;
  return Var::make(Tensor({1, 1}, {total}), {a}, [](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (auto& v : g->values()) v += s.grad[0];
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<Real>(a.value().size());
  return scale(sum(a), Real(1) / n);
}

Var nll_rows(const Var& logp, std::span<const std::int32_t> targets) {
  const Tensor& x = logp.value();
  require_rank2(x, "nll_rows");
  if (targets.size() != x.dim(0)) shape_error("nll_rows: " + std::to_string(targets.size()) + " targets for " +
                                              std::to_string(x.dim(0)) + " rows");
  Real total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= x.dim(1)) shape_error("nll_rows: target outside class range");
    total -= x.at(i, static_cast<std::size_t>(targets[i]));
  }
  std::vector<std::int32_t> tv(targets.begin(), targets.end());
  return Var::make(Tensor({1, 1}, {total}), {logp}, [tv = std::move(tv)](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < tv.size(); ++i)
        if (tv[i] >= 0) g->at(i, static_cast<std::size_t>(tv[i])) -= s.grad[0];
  });
}

Var cross_entropy(const Var& probs, const Tensor& targets) {
  require_same_shape(probs.value(), targets, "cross_entropy");
  Real total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i] != 0) total -= targets[i] * std::log(probs.value()[i]);
  return Var::make(Tensor({1, 1}, {total}), {probs}, [targets](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i] != 0) (*g)[i] -= s.grad[0] * targets[i] / s.parents[0].value()[i];
  });
}

// --- convolution ----------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3))
    shape_error("conv2d: input " + shape_string(xv.shape()) + " vs kernel " + shape_string(wv.shape()));
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2), O = wv.dim(0), K = wv.dim(2);
  if (b.value().size() != O) shape_error("conv2d: bias must have one entry per output channel");
  if (H + 2 * pad < K || W + 2 * pad < K) shape_error("conv2d: kernel larger than padded input");
  const std::size_t Ho = H + 2 * pad - K + 1, Wo = W + 2 * pad - K + 1;
  Tensor y({O, Ho, Wo});
  auto xin = [&](std::size_t c, long i, long j) -> Real {
    if (i < 0 || j < 0 || i >= static_cast<long>(H) || j >= static_cast<long>(W)) return 0;
    return xv[(c * H + static_cast<std::size_t>(i)) * W + static_cast<std::size_t>(j)];
  };
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        Real acc = b.value()[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ki = 0; ki < K; ++ki)
            for (std::size_t kj = 0; kj < K; ++kj)
              acc += wv[((o * C + c) * K + ki) * K + kj] *
                     xin(c, static_cast<long>(i + ki) - static_cast<long>(pad),
                         static_cast<long>(j + kj) - static_cast<long>(pad));
        y[(o * Ho + i) * Wo + j] = acc;
      }
  return Var::make(std::move(y), {x, w, b}, [C, H, W, O, K, Ho, Wo, pad](Node& s) {
    const Tensor& xv = s.parents[0].value();
    const Tensor& wv = s.parents[1].value();
    Tensor* gx = s.parent_grad(0);
    Tensor* gw = s.parent_grad(1);
    Tensor* gb = s.parent_grad(2);
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          const Real d = s.grad[(o * Ho + i) * Wo + j];
          if (d == 0) continue;
          if (gb) (*gb)[o] += d;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki) {
              const long ii = static_cast<long>(i + ki) - static_cast<long>(pad);
              if (ii < 0 || ii >= static_cast<long>(H)) continue;
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long jj = static_cast<long>(j + kj) - static_cast<long>(pad);
                if (jj < 0 || jj >= static_cast<long>(W)) continue;
                const std::size_t xi = (c * H + static_cast<std::size_t>(ii)) * W + static_cast<std::size_t>(jj);
                const std::size_t wi = ((o * C + c) * K + ki) * K + kj;
                if (gw) (*gw)[wi] += d * xv[xi];
                if (gx) (*gx)[xi] += d * wv[wi];
              }
            }
        }
  });
}

Var maxpool2(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) shape_error("maxpool2 expects C×H×W, got " + shape_string(xv.shape()));
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2), Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) shape_error("maxpool2: input smaller than 2×2");
  Tensor y({C, Ho, Wo});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        std::size_t best = (c * H + 2 * i) * W + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t k = (c * H + 2 * i + di) * W + 2 * j + dj;
            if (xv[k] > xv[best]) best = k;
          }
        const std::size_t o = (c * Ho + i) * Wo + j;
        y[o] = xv[best];
        argmax[o] = best;
      }
  return Var::make(std::move(y), {x}, [argmax = std::move(argmax)](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t o = 0; o < argmax.size(); ++o) (*g)[argmax[o]] += s.grad[o];
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) shape_error("global_avg_pool expects C×H×W, got " + shape_string(xv.shape()));
  const std::size_t C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
  Tensor y({1, C});
  for (std::size_t c = 0; c < C; ++c) {
    Real acc = 0;
    for (std::size_t k = 0; k < HW; ++k) acc += xv[c * HW + k];
    y[c] = acc / static_cast<Real>(HW);
  }
  return Var::make(std::move(y), {x}, [C, HW](Node& s) {
    if (Tensor* g = s.parent_grad(0))
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < HW; ++k) (*g)[c * HW + k] += s.grad[c] / static_cast<Real>(HW);
  });
}

}  // namespace emomusic::nn
