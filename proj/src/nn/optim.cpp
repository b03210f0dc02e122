#include "emomusic/nn/optim.hpp"

#include <cmath>

namespace emomusic::nn {

void adam_step(Parameter& p, const AdamConfig& c) {
  const Tensor g = p.grad();
  Tensor& w = p.value();
  if (p.adam_m.shape() != w.shape()) p.adam_m = Tensor(w.shape());
  if (p.adam_v.shape() != w.shape()) p.adam_v = Tensor(w.shape());
  ++p.step_count;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(p.step_count));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(p.step_count));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i];
    const double m = c.beta1 * p.adam_m[i] + (1.0 - c.beta1) * gi;
    const double v = c.beta2 * p.adam_v[i] + (1.0 - c.beta2) * gi * gi;
    p.adam_m[i] = static_cast<Real>(m);
    p.adam_v[i] = static_cast<Real>(v);
    const double mhat = m / bc1, vhat = v / bc2;
    w[i] = static_cast<Real>(w[i] - c.lr * mhat / (std::sqrt(vhat) + c.eps));
  }
  p.zero_grad();
}

void Adam::step() {
  for (Parameter* p : params_) adam_step(*p, config_);
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace emomusic::nn
