#include "recdan/optim.hpp"

#include <algorithm>
#include <cmath>

#include "recdan/errors.hpp"

namespace recdan::optim {

Adadelta::Adadelta(std::vector<NamedTensor> params, AdadeltaConfig config, Direction direction)
    : params_(std::move(params)), config_(config), direction_(direction) {
  if (!(config_.rho > 0.0 && config_.rho < 1.0) || !(config_.eps > 0.0) || !(config_.lr > 0.0)) {
    throw ConfigError("adadelta: need 0 < rho < 1, eps > 0, lr > 0");
  }
  reset();
}

void Adadelta::reset() {
  acc_grad_.clear();
  acc_delta_.clear();
  for (const auto& p : params_) {
    acc_grad_.emplace_back(p.tensor.size(), 0.0);
    acc_delta_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adadelta::step() {
  const double rho = config_.rho, eps = config_.eps;
  const double sign = direction_ == Direction::descend ? 1.0 : -1.0;
  const double lr = config_.lr;
  const double decay = 2.0 * config_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    if (t.frozen()) continue;
    if (!t.has_grad()) {
      throw StateError("adadelta: parameter '" + params_[k].name + "' has no gradient");
    }
    auto theta = t.data();
    auto grad = t.grad();
    auto& eg = acc_grad_[k];
    auto& edx = acc_delta_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + decay * theta[i];
      eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
      const double dx = -std::sqrt(edx[i] + eps) / std::sqrt(eg[i] + eps) * g;
      edx[i] = rho * edx[i] + (1.0 - rho) * dx * dx;
      theta[i] += sign * lr * dx;
    }
  }
}

void check_disjoint(const std::vector<const Adadelta*>& optimizers) {
  for (std::size_t a = 0; a < optimizers.size(); ++a) {
    for (std::size_t b = a + 1; b < optimizers.size(); ++b) {
      for (const auto& p : optimizers[a]->parameters()) {
        for (const auto& q : optimizers[b]->parameters()) {
          if (p.tensor.same_storage(q.tensor)) {
            throw ConfigError("optimizer bindings alias parameter '" + p.name + "'");
          }
        }
      }
    }
  }
}

void copy_parameters(const std::vector<NamedTensor>& src, const std::vector<NamedTensor>& dst,
                     Adadelta* dst_optimizer) {
  if (src.size() != dst.size()) {
    throw ConfigError("copy_parameters: " + std::to_string(src.size()) + " source tensors vs " +
                      std::to_string(dst.size()) + " destination tensors");
  }
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (src[k].name != dst[k].name || src[k].tensor.shape() != dst[k].tensor.shape()) {
      throw ConfigError("copy_parameters: '" + src[k].name + "' " + shape_string(src[k].tensor.shape()) +
                        " does not match '" + dst[k].name + "' " + shape_string(dst[k].tensor.shape()));
    }
  }
  for (std::size_t k = 0; k < src.size(); ++k) {
    Tensor d = dst[k].tensor;
    std::copy(src[k].tensor.data().begin(), src[k].tensor.data().end(), d.data().begin());
  }
  if (dst_optimizer) dst_optimizer->reset();
}

void copy_parameters(const models::GeneratorSet& src, models::GeneratorSet& dst, Adadelta* dst_optimizer) {
  copy_parameters(src.parameters(), dst.parameters(), dst_optimizer);
}

void freeze(const std::vector<NamedTensor>& params) {
  for (auto p : params) p.tensor.set_frozen(true);
}

void unfreeze(const std::vector<NamedTensor>& params) {
  for (auto p : params) p.tensor.set_frozen(false);
}

void zero_grads(const std::vector<NamedTensor>& params) {
  for (auto p : params) p.tensor.zero_grad();
}

double squared_norm(const std::vector<NamedTensor>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double v : p.tensor.data()) s += v * v;
  }
  return s;
}

}  // namespace recdan::optim
