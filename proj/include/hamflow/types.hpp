#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hamflow {

// Batches are stored one sample per row.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Raised when an integrator or training loop produces non-finite or exploding state.
class DivergedError : public std::runtime_error {
public:
    DivergedError(const std::string& what, long step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

/// Monte-Carlo estimate with its standard error.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// tanh via the vectorized exponential: 1 - 2 / (exp(2x) + 1).
inline Mat smooth_tanh(const Mat& x) {
    return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix();
}

/// Mean and standard error of a sample of per-draw values.
Estimate mean_estimate(const Eigen::Ref<const Vec>& values);

}  // namespace hamflow
