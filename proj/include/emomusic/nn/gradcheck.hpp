#pragma once

#include <functional>
#include <string>
#include <vector>

#include "emomusic/nn/autograd.hpp"

namespace emomusic::nn {

struct GradcheckBlock {
  std::string name;
  Var leaf;  // perturbed in place
};

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t elements = 0;  // checked
  bool passed = true;
};

struct GradcheckReport {
  double tolerance = 1e-4;
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  double max_rel_error() const;
  std::string to_string() const;
};

/// Relative error used per element: |a − n| / max(|a|, |n|, 1e-5). The floor keeps
/// float64 roundoff on near-zero gradients (about 1e-10 at h = 1e-5) from counting.
double gradcheck_relative_error(double analytic, double numeric);

/// Compares the analytic gradient of the scalar `loss` w.r.t. each block with
/// central differences of step h. `loss` must rebuild the graph on every call
/// and be deterministic. With max_elements > 0, larger blocks are checked on a
/// subset: the max_elements/2 entries with the largest analytic gradient plus an
/// even stride over the rest.
GradcheckReport gradcheck(const std::function<Var()>& loss, const std::vector<GradcheckBlock>& blocks,
                          double tolerance = 1e-4, double h = 1e-5, std::size_t max_elements = 0);

/// Indices checked for a block of analytic gradients under the rule above.
std::vector<std::size_t> gradcheck_indices(const Tensor& analytic, std::size_t max_elements);

}  // namespace emomusic::nn
