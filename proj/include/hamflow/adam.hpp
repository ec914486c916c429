#pragma once

#include "hamflow/types.hpp"

namespace hamflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias-corrected moments. Moment buffers are shaped like the
/// parameter vector given at construction.
class Adam {
public:
    Adam(Eigen::Index n_params, AdamConfig config = {});

    void step(Vec& params, const Vec& grad) { step(params, grad, config_.lr); }
    void step(Vec& params, const Vec& grad, double lr);

    long steps() const noexcept { return steps_; }
    const AdamConfig& config() const noexcept { return config_; }
    const Vec& first_moment() const noexcept { return m_; }
    const Vec& second_moment() const noexcept { return v_; }

private:
    AdamConfig config_;
    Vec m_;
    Vec v_;
    long steps_ = 0;
};

}  // namespace hamflow
