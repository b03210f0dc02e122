#include "emomusic/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace emomusic::nn {

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.passed; });
}

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradcheckReport::to_string() const {
  std::string out;
  char line[256];
  for (const auto& e : entries) {
    std::snprintf(line, sizeof line, "%-4s %-32s rel=%.3e abs=%.3e n=%zu worst=%zu\n", e.passed ? "ok" : "FAIL",
                  e.name.c_str(), e.max_rel_error, e.max_abs_error, e.elements, e.worst_index);
    out += line;
  }
  std::snprintf(line, sizeof line, "tolerance %.1e: %s\n", tolerance, passed() ? "passed" : "FAILED");
  return out + line;
}

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::size_t> gradcheck_indices(const Tensor& analytic, std::size_t max_elements) {
  const std::size_t n = analytic.size();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (max_elements == 0 || n <= max_elements) return all;
  const std::size_t top = max_elements / 2;
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top), all.end(),
                    [&](std::size_t a, std::size_t b) { return std::abs(analytic[a]) > std::abs(analytic[b]); });
  std::vector<std::size_t> picked(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top));
  std::vector<bool> taken(n, false);
  for (auto i : picked) taken[i] = true;
  const std::size_t rest = max_elements - top;
  for (std::size_t k = 0; k < rest; ++k) {
    std::size_t i = k * n / rest;
    while (taken[i]) i = (i + 1) % n;
    taken[i] = true;
    picked.push_back(i);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

GradcheckReport gradcheck(const std::function<Var()>& loss, const std::vector<GradcheckBlock>& blocks,
                          double tolerance, double h, std::size_t max_elements) {
  GradcheckReport report;
  report.tolerance = tolerance;
  for (auto block : blocks) block.leaf.zero_grad();
  loss().backward();
  std::vector<Tensor> analytic;
  for (const auto& block : blocks) analytic.push_back(block.leaf.grad());

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Var leaf = blocks[b].leaf;
    GradcheckEntry entry;
    entry.name = blocks[b].name;
    const auto indices = gradcheck_indices(analytic[b], max_elements);
    entry.elements = indices.size();
    NoGradGuard no_grad;
    for (std::size_t i : indices) {
      const Real saved = leaf.value()[i];
      leaf.mutable_value()[i] = static_cast<Real>(saved + h);
      const double fp = loss().value()[0];
      leaf.mutable_value()[i] = static_cast<Real>(saved - h);
      const double fm = loss().value()[0];
      leaf.mutable_value()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[b][i];
      const double rel = gradcheck_relative_error(a, numeric);
      if (i == indices.front() || rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
    }
    entry.passed = entry.max_rel_error < tolerance;
    report.entries.push_back(std::move(entry));
  }
  for (auto block : blocks) block.leaf.zero_grad();
  return report;
}

}  // namespace emomusic::nn
