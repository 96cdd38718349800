#pragma once

#include <functional>
#include <string>
#include <vector>

#include "recdan/tensor.hpp"

namespace recdan {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = false;

  double max_rel_error() const;
};

/// A scalar-valued function of tensors it captures, evaluated on the given tape.
using ScalarFunction = std::function<Tensor(Tape&)>;

/// Compares the tape gradient of `f` with central differences for every entry
/// of every input. Relative error is |a - n| / max(|a|, |n|, 1e-4); the floor
/// keeps entries whose true gradient is ~0 from reporting huge ratios of two
/// round-off terms. Inputs are restored to their original values.
GradCheckReport grad_check(const ScalarFunction& f, std::vector<NamedTensor> inputs,
                           double epsilon = 1e-5, double tolerance = 1e-5);

}  // namespace recdan
