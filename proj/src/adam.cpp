#include "hamflow/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace hamflow {

Adam::Adam(Eigen::Index n_params, AdamConfig config)
    : config_(config), m_(Vec::Zero(n_params)), v_(Vec::Zero(n_params)) {
    if (!(config_.lr > 0.0) || !(config_.eps > 0.0)) throw std::invalid_argument("adam: lr and eps must be positive");
    if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0)
        throw std::invalid_argument("adam: betas must lie in [0, 1)");
}

void Adam::step(Vec& params, const Vec& grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("adam: shape mismatch");
    ++steps_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

}  // namespace hamflow
