#include "hamflow/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace hamflow {

Mat time_features(const Vec& times, int fourier_features) {
    Mat out(times.size(), 1 + 2 * fourier_features);
    out.col(0) = times;
    for (int k = 0; k < fourier_features; ++k) {
        const double freq = std::ldexp(1.0, k);
        out.col(1 + 2 * k) = (freq * times.array()).sin().matrix();
        out.col(2 + 2 * k) = (freq * times.array()).cos().matrix();
    }
    return out;
}

Var time_features(Tape& tape, Var times, int fourier_features) {
    Var out = times;
    for (int k = 0; k < fourier_features; ++k) {
        Var scaled = tape.scale(times, std::ldexp(1.0, k));
        out = tape.concat_cols(tape.concat_cols(out, tape.sin(scaled)), tape.cos(scaled));
    }
    return out;
}

Mlp::Mlp(const MlpSpec& spec) : spec_(spec) {
    if (spec_.input_dim < 1 || spec_.output_dim < 1) throw std::invalid_argument("mlp: dimensions must be positive");
    if (spec_.fourier_features < 0) throw std::invalid_argument("mlp: negative Fourier feature count");
    for (int h : spec_.hidden)
        if (h < 1) throw std::invalid_argument("mlp: hidden widths must be positive");
    build_layout();
}

Mlp::Mlp(const MlpSpec& spec, Rng& rng) : Mlp(spec) {
    for (std::size_t l = 0; l + 1 < layer_count(); ++l) {
        auto [fan_out, fan_in] = layer_shape(l);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        auto w = weight(l);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
    }
}

int Mlp::feature_dim() const noexcept {
    return spec_.input_dim + (spec_.time_conditioned ? 1 + 2 * spec_.fourier_features : 0);
}

std::pair<int, int> Mlp::layer_shape(std::size_t l) const {
    if (l >= layer_count()) throw std::out_of_range("mlp: layer index out of range");
    const int fan_in = l == 0 ? feature_dim() : spec_.hidden[l - 1];
    const int fan_out = l + 1 == layer_count() ? spec_.output_dim : spec_.hidden[l];
    return {fan_out, fan_in};
}

void Mlp::build_layout() {
    offsets_.clear();
    std::size_t total = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) {
        auto [fan_out, fan_in] = layer_shape(l);
        offsets_.push_back(total);
        total += static_cast<std::size_t>((fan_in + 1) * fan_out);
    }
    params_ = Vec::Zero(static_cast<Eigen::Index>(total));
}

void Mlp::set_params(const Vec& p) {
    if (p.size() != params_.size()) throw std::invalid_argument("mlp: parameter vector has wrong length");
    params_ = p;
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Mlp::weight(
    std::size_t l) const {
    auto [fan_out, fan_in] = layer_shape(l);
    return {params_.data() + offsets_[l], fan_out, fan_in};
}

Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Mlp::weight(std::size_t l) {
    auto [fan_out, fan_in] = layer_shape(l);
    return {params_.data() + offsets_[l], fan_out, fan_in};
}

Eigen::Map<const Vec> Mlp::bias(std::size_t l) const {
    auto [fan_out, fan_in] = layer_shape(l);
    return {params_.data() + offsets_[l] + static_cast<std::size_t>(fan_out * fan_in), fan_out};
}

Eigen::Map<Vec> Mlp::bias(std::size_t l) {
    auto [fan_out, fan_in] = layer_shape(l);
    return {params_.data() + offsets_[l] + static_cast<std::size_t>(fan_out * fan_in), fan_out};
}

void Mlp::check_input(Eigen::Index cols, bool has_time) const {
    if (cols != spec_.input_dim)
        throw std::invalid_argument("mlp: input has " + std::to_string(cols) + " columns, expected " +
                                    std::to_string(spec_.input_dim));
    if (spec_.time_conditioned && !has_time) throw std::invalid_argument("mlp: time-conditioned net needs a time input");
    if (!spec_.time_conditioned && has_time) throw std::invalid_argument("mlp: net is not time-conditioned");
}

Mat Mlp::forward(const Mat& x, const Vec* times) const {
    check_input(x.cols(), times != nullptr);
    Mat h;
    if (times != nullptr) {
        if (times->size() != x.rows()) throw std::invalid_argument("mlp: one time per row required");
        h.resize(x.rows(), feature_dim());
        h << x, time_features(*times, spec_.fourier_features);
    } else {
        h = x;
    }
    for (std::size_t l = 0; l < layer_count(); ++l) {
        Mat next = h * weight(l).transpose();
        next.rowwise() += bias(l).transpose();
        if (l + 1 < layer_count()) next = smooth_tanh(next);
        h = std::move(next);
    }
    return h;
}

Mat Mlp::forward(const Mat& x, double t) const {
    const Vec times = Vec::Constant(x.rows(), t);
    return forward(x, &times);
}

Vec Mlp::forward(const Vec& x, std::optional<double> t) const {
    Mat row = x.transpose();
    if (t) return forward(row, *t).row(0).transpose();
    return forward(row, nullptr).row(0).transpose();
}

MlpVars Mlp::bind(Tape& tape) const {
    MlpVars vars;
    for (std::size_t l = 0; l < layer_count(); ++l) {
        vars.weights.push_back(tape.leaf(Mat(weight(l))));
        vars.biases.push_back(tape.leaf(Mat(bias(l).transpose())));
    }
    return vars;
}

Var Mlp::forward(Tape& tape, const MlpVars& vars, Var x, std::optional<Var> times) const {
    check_input(x.cols(), times.has_value());
    if (vars.weights.size() != layer_count()) throw std::invalid_argument("mlp: vars bound to a different net");
    Var h = x;
    if (times) {
        if (times->rows() != x.rows() || times->cols() != 1) throw std::invalid_argument("mlp: times must be n x 1");
        h = tape.concat_cols(x, time_features(tape, *times, spec_.fourier_features));
    }
    for (std::size_t l = 0; l < layer_count(); ++l) {
        h = tape.add_row(tape.matmul_t(h, vars.weights[l]), vars.biases[l]);
        if (l + 1 < layer_count()) h = tape.tanh(h);
    }
    return h;
}

Vec Mlp::gather_grad(const MlpVars& vars) const {
    Vec g(params_.size());
    for (std::size_t l = 0; l < layer_count(); ++l) {
        auto [fan_out, fan_in] = layer_shape(l);
        const Mat& gw = vars.weights[l].grad();
        const Mat& gb = vars.biases[l].grad();
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            g.data() + offsets_[l], fan_out, fan_in) = gw;
        g.segment(static_cast<Eigen::Index>(offsets_[l]) + fan_out * fan_in, fan_out) = gb.row(0).transpose();
    }
    return g;
}

}  // namespace hamflow
