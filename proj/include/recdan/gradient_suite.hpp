#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recdan/gradcheck.hpp"

namespace recdan {

struct SuiteCheck {
  std::string name;
  GradCheckReport report;
};

/// Central-difference checks for every primitive op, layer, model block and
/// both adversarial losses on small random problems.
std::vector<SuiteCheck> run_gradient_suite(std::uint64_t seed, double epsilon = 1e-5, double tolerance = 1e-5);

}  // namespace recdan
