#include "recdan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "recdan/errors.hpp"

namespace recdan {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport grad_check(const ScalarFunction& f, std::vector<NamedTensor> inputs,
                           double epsilon, double tolerance) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
    throw ArgumentError("grad_check: epsilon must lie in (0, 1e-2]");
  }
  for (auto& in : inputs) {
    in.tensor.set_requires_grad(true);
    in.tensor.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& in : inputs) {
    GradCheckEntry entry;
    entry.name = in.name;
    auto values = in.tensor.data();
    const std::vector<double> analytic(in.tensor.grad().begin(), in.tensor.grad().end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      Tape off = Tape::inference();
      values[i] = original + epsilon;
      const double plus = f(off).item();
      values[i] = original - epsilon;
      const double minus = f(off).item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  for (auto& in : inputs) in.tensor.zero_grad();
  report.passed = report.max_rel_error() < tolerance;
  return report;
}

}  // namespace recdan
