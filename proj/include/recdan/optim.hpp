#pragma once

#include <string>
#include <vector>

#include "recdan/gradcheck.hpp"
#include "recdan/models.hpp"

namespace recdan::optim {

enum class Direction { descend, ascend };

struct AdadeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;
  double lr = 1e-4;            // global multiplier on the ADADELTA step
  double weight_decay = 0.0;   // lambda; adds 2 * lambda * theta to the gradient
};

/// ADADELTA bound to one parameter subset and an update direction.
///
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
///   theta   <- theta + lr * dx      (descend)
///   theta   <- theta - lr * dx      (ascend)
///
/// Frozen parameters are skipped.
class Adadelta {
 public:
  Adadelta(std::vector<NamedTensor> params, AdadeltaConfig config,
           Direction direction = Direction::descend);

  void step();
  /// Zeroes both accumulators.
  void reset();

  const AdadeltaConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  Direction direction() const { return direction_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  const std::vector<double>& accumulated_grad(std::size_t i) const { return acc_grad_[i]; }
  const std::vector<double>& accumulated_delta(std::size_t i) const { return acc_delta_[i]; }

 private:
  std::vector<NamedTensor> params_;
  AdadeltaConfig config_;
  Direction direction_;
  std::vector<std::vector<double>> acc_grad_;
  std::vector<std::vector<double>> acc_delta_;
};

/// Throws ConfigError when two optimizers would update the same tensor.
void check_disjoint(const std::vector<const Adadelta*>& optimizers);

/// dst <- src value by value (names and shapes must agree). Resets the
/// optimizer that owns dst, when given.
void copy_parameters(const std::vector<NamedTensor>& src, const std::vector<NamedTensor>& dst,
                     Adadelta* dst_optimizer = nullptr);
void copy_parameters(const models::GeneratorSet& src, models::GeneratorSet& dst,
                     Adadelta* dst_optimizer = nullptr);

void freeze(const std::vector<NamedTensor>& params);
void unfreeze(const std::vector<NamedTensor>& params);
void zero_grads(const std::vector<NamedTensor>& params);

/// Sum of squared entries over a parameter list.
double squared_norm(const std::vector<NamedTensor>& params);

}  // namespace recdan::optim
