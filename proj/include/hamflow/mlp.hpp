#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hamflow/rng.hpp"
#include "hamflow/tape.hpp"

namespace hamflow {

struct MlpSpec {
    int input_dim = 1;  // spatial input dimension, without time features
    int output_dim = 1;
    std::vector<int> hidden = {64, 64};
    bool time_conditioned = false;
    int fourier_features = 6;  // frequencies 2^k, k < fourier_features
};

/// Parameter leaves of an Mlp bound to a tape.
struct MlpVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

/// Fully connected tanh network. Time-conditioned nets see
/// [x | t | sin(2^k t), cos(2^k t) for k < K] as input.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix
/// (out x in, row-major) followed by the bias.
class Mlp {
public:
    Mlp() = default;
    /// Xavier-uniform hidden layers; the output layer starts at zero.
    Mlp(const MlpSpec& spec, Rng& rng);
    /// All parameters zero.
    explicit Mlp(const MlpSpec& spec);

    const MlpSpec& spec() const noexcept { return spec_; }
    int input_dim() const noexcept { return spec_.input_dim; }
    int output_dim() const noexcept { return spec_.output_dim; }
    bool time_conditioned() const noexcept { return spec_.time_conditioned; }
    /// Width of the first layer, time features included.
    int feature_dim() const noexcept;
    std::size_t layer_count() const noexcept { return spec_.hidden.size() + 1; }
    /// (fan_out, fan_in) of layer `l`.
    std::pair<int, int> layer_shape(std::size_t l) const;

    const Vec& params() const noexcept { return params_; }
    Vec& params() noexcept { return params_; }
    void set_params(const Vec& p);
    std::size_t param_count() const noexcept { return static_cast<std::size_t>(params_.size()); }

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weight(std::size_t l) const;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weight(std::size_t l);
    Eigen::Map<const Vec> bias(std::size_t l) const;
    Eigen::Map<Vec> bias(std::size_t l);

    /// Batched forward pass; `times` holds one time per row (ignored when not
    /// time-conditioned, required otherwise).
    Mat forward(const Mat& x, const Vec* times = nullptr) const;
    Mat forward(const Mat& x, double t) const;
    Vec forward(const Vec& x, std::optional<double> t = std::nullopt) const;
    Vec forward(const Vec& x, double t) const { return forward(x, std::optional<double>(t)); }

    MlpVars bind(Tape& tape) const;
    Var forward(Tape& tape, const MlpVars& vars, Var x, std::optional<Var> times = std::nullopt) const;
    /// Flattened parameter gradient after `tape.backward`.
    Vec gather_grad(const MlpVars& vars) const;

private:
    void build_layout();
    void check_input(Eigen::Index cols, bool has_time) const;

    MlpSpec spec_;
    std::vector<std::size_t> offsets_;  // start of each layer's weights
    Vec params_;
};

/// Fourier time features [t | sin(2^k t), cos(2^k t)], one row per entry of `times`.
Mat time_features(const Vec& times, int fourier_features);
Var time_features(Tape& tape, Var times, int fourier_features);

}  // namespace hamflow
