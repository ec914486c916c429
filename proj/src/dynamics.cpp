#include "hamflow/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace hamflow {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr double kDivergenceBound = 1e6;

void check_finite(const Mat& x, const Mat& v, long step) {
    const bool ok = x.allFinite() && v.allFinite() && (x.rows() == 0 || (x.rowwise().norm().maxCoeff() <= kDivergenceBound &&
                                                                          v.rowwise().norm().maxCoeff() <= kDivergenceBound));
    if (!ok) throw DivergedError("leapfrog diverged", step);
}

class MixtureScoreOp final : public CustomOp {
public:
    explicit MixtureScoreOp(GaussianMixture m) : mixture_(std::move(m)) {}

    Mat forward(const Mat& input) const override { return mixture_.score(input); }

    Mat backward(const Mat& input, const Mat&, const Mat& adjoint) const override {
        Mat out(input.rows(), input.cols());
        for (Eigen::Index i = 0; i < input.rows(); ++i) {
            const Mat h = mixture_.log_density_hessian(Vec(input.row(i).transpose()));
            out.row(i) = (h * adjoint.row(i).transpose()).transpose();
        }
        return out;
    }

private:
    GaussianMixture mixture_;
};

double fold(double offset, double width, double& sign) {
    double m = std::fmod(offset, 2.0 * width);
    if (m < 0.0) m += 2.0 * width;
    if (m <= width) {
        sign = 1.0;
        return m;
    }
    sign = -1.0;
    return 2.0 * width - m;
}

}  // namespace

void validate_force(const ForceField& force) {
    if (const auto* osc = std::get_if<OscillationForce>(&force)) {
        if (!(osc->alpha > 0.0) || !std::isfinite(osc->alpha))
            throw std::invalid_argument("oscillation force: alpha must be positive");
    }
    if (const auto* learned = std::get_if<LearnedForce>(&force)) {
        if (learned->net.input_dim() != learned->net.output_dim())
            throw std::invalid_argument("learned force: net must map R^d to R^d");
        if (learned->net.time_conditioned() != learned->time_dependent)
            throw std::invalid_argument("learned force: time dependence must match the net");
    }
}

Mat evaluate_force(const ForceField& force, const Mat& x, const Vec& times) {
    return std::visit(overloaded{
                          [&](const ZeroForce&) -> Mat { return Mat::Zero(x.rows(), x.cols()); },
                          [&](const OscillationForce& f) -> Mat { return -f.alpha * f.alpha * x; },
                          [&](const ScoreForce& f) -> Mat { return f.mixture.score(x); },
                          [&](const LearnedForce& f) -> Mat {
                              return f.time_dependent ? f.net.forward(x, &times) : f.net.forward(x, nullptr);
                          },
                      },
                      force);
}

Vec evaluate_force(const ForceField& force, const Vec& x, double t) {
    const Mat row = x.transpose();
    return evaluate_force(force, row, Vec::Constant(1, t)).row(0).transpose();
}

bool has_potential(const ForceField& force) { return !std::holds_alternative<LearnedForce>(force); }

double potential(const ForceField& force, const Vec& x) {
    return std::visit(overloaded{
                          [&](const ZeroForce&) { return 0.0; },
                          [&](const OscillationForce& f) { return 0.5 * f.alpha * f.alpha * x.squaredNorm(); },
                          [&](const ScoreForce& f) { return -f.mixture.log_density(x); },
                          [&](const LearnedForce&) -> double {
                              throw std::domain_error("energy: learned force fields have no potential");
                          },
                      },
                      force);
}

double energy(const ForceField& force, const PhaseState& s) {
    if (s.x.size() != s.v.size()) throw std::invalid_argument("energy: x and v differ in dimension");
    return potential(force, s.x) + 0.5 * s.v.squaredNorm();
}

PhaseState flow_zero(const PhaseState& s, double t) { return {s.x + t * s.v, s.v}; }

PhaseState flow_oscillation(const PhaseState& s, double t, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("flow_oscillation: alpha must be positive");
    const double c = std::cos(alpha * t);
    const double sn = std::sin(alpha * t);
    return {c * s.x + (sn / alpha) * s.v, -alpha * sn * s.x + c * s.v};
}

PhaseBatch flow_zero(const PhaseBatch& s, const Vec& times) {
    return {s.x + times.asDiagonal() * s.v, s.v};
}

PhaseBatch flow_oscillation(const PhaseBatch& s, const Vec& times, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("flow_oscillation: alpha must be positive");
    const Vec c = (alpha * times.array()).cos().matrix();
    const Vec sn = (alpha * times.array()).sin().matrix();
    return {c.asDiagonal() * s.x + (sn / alpha).asDiagonal() * s.v,
            (-alpha * sn).asDiagonal() * s.x + c.asDiagonal() * s.v};
}

bool Box::contains(const Vec& x) const {
    return x.size() == lo.size() && (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

PhaseState flow_reflection(const PhaseState& s, double t, const Box& box) {
    if (box.lo.size() != s.x.size() || box.hi.size() != s.x.size())
        throw std::invalid_argument("flow_reflection: box dimension mismatch");
    if (!((box.hi.array() > box.lo.array()).all())) throw std::invalid_argument("flow_reflection: empty box");
    if (!box.contains(s.x)) throw std::invalid_argument("flow_reflection: start point outside the box");
    PhaseState out{s.x, s.v};
    for (Eigen::Index j = 0; j < s.x.size(); ++j) {
        const double width = box.hi(j) - box.lo(j);
        double sign = 1.0;
        out.x(j) = box.lo(j) + fold(s.x(j) - box.lo(j) + t * s.v(j), width, sign);
        out.v(j) = sign * s.v(j);
    }
    return out;
}

PhaseBatch flow_reflection(const PhaseBatch& s, const Vec& times, const Box& box) {
    PhaseBatch out{s.x, s.v};
    for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
        const PhaseState row = flow_reflection({s.x.row(i).transpose(), s.v.row(i).transpose()}, times(i), box);
        out.x.row(i) = row.x.transpose();
        out.v.row(i) = row.v.transpose();
    }
    return out;
}

PhaseBatch leapfrog(const ForceField& force, PhaseBatch s, const Vec& t0, const Vec& t1, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("leapfrog: n_steps must be at least 1");
    if (t0.size() != s.x.rows() || t1.size() != s.x.rows()) throw std::invalid_argument("leapfrog: one time per row");
    const Vec h = (t1 - t0) / static_cast<double>(n_steps);
    const Vec half = 0.5 * h;
    const auto* learned = std::get_if<LearnedForce>(&force);
    const bool time_dependent = learned != nullptr && learned->time_dependent;

    if (!time_dependent) {
        Mat f = evaluate_force(force, s.x, t0);
        for (int k = 0; k < n_steps; ++k) {
            s.v += half.asDiagonal() * f;
            s.x += h.asDiagonal() * s.v;
            f = evaluate_force(force, s.x, t0);
            s.v += half.asDiagonal() * f;
            check_finite(s.x, s.v, k);
        }
        return s;
    }
    for (int k = 0; k < n_steps; ++k) {
        const Vec t_mid = t0 + (k + 0.5) * h;
        s.v += half.asDiagonal() * evaluate_force(force, s.x, t_mid);
        s.x += h.asDiagonal() * s.v;
        s.v += half.asDiagonal() * evaluate_force(force, s.x, t_mid);
        check_finite(s.x, s.v, k);
    }
    return s;
}

PhaseState leapfrog(const ForceField& force, const PhaseState& s, double t0, double t1, int n_steps) {
    PhaseBatch batch{s.x.transpose(), s.v.transpose()};
    batch = leapfrog(force, std::move(batch), Vec::Constant(1, t0), Vec::Constant(1, t1), n_steps);
    return {batch.x.row(0).transpose(), batch.v.row(0).transpose()};
}

TapedForce bind_force(Tape& tape, const ForceField& force) {
    validate_force(force);
    return std::visit(
        overloaded{
            [&](const ZeroForce&) -> TapedForce {
                return {[](Tape& tp, Var x, const Vec&) { return tp.scale(x, 0.0); }, std::nullopt};
            },
            [&](const OscillationForce& f) -> TapedForce {
                const double k = -f.alpha * f.alpha;
                return {[k](Tape& tp, Var x, const Vec&) { return tp.scale(x, k); }, std::nullopt};
            },
            [&](const ScoreForce& f) -> TapedForce {
                auto op = std::make_shared<const MixtureScoreOp>(f.mixture);
                return {[op](Tape& tp, Var x, const Vec&) { return tp.custom(op, x); }, std::nullopt};
            },
            [&](const LearnedForce& f) -> TapedForce {
                MlpVars vars = f.net.bind(tape);
                Mlp net = f.net;
                const bool td = f.time_dependent;
                return {[net, vars, td](Tape& tp, Var x, const Vec& times) {
                            if (td) return net.forward(tp, vars, x, tp.leaf_vector(times));
                            return net.forward(tp, vars, x);
                        },
                        vars, td};
            },
        },
        force);
}

TapedPhase leapfrog(Tape& tape, const TapedForce& force, TapedPhase s, const Vec& t0, const Vec& t1, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("leapfrog: n_steps must be at least 1");
    if (t0.size() != s.x.rows() || t1.size() != s.x.rows()) throw std::invalid_argument("leapfrog: one time per row");
    const Vec h_values = (t1 - t0) / static_cast<double>(n_steps);
    Var h = tape.leaf_vector(h_values);
    Var half = tape.leaf_vector(0.5 * h_values);
    if (!force.time_dependent) {
        Var f = force.apply(tape, s.x, t0);
        for (int k = 0; k < n_steps; ++k) {
            s.v = s.v + tape.mul_col(f, half);
            s.x = s.x + tape.mul_col(s.v, h);
            f = force.apply(tape, s.x, t0);
            s.v = s.v + tape.mul_col(f, half);
            check_finite(s.x.value(), s.v.value(), k);
        }
        return s;
    }
    for (int k = 0; k < n_steps; ++k) {
        const Vec t_mid = t0 + (k + 0.5) * h_values;
        s.v = s.v + tape.mul_col(force.apply(tape, s.x, t_mid), half);
        s.x = s.x + tape.mul_col(s.v, h);
        s.v = s.v + tape.mul_col(force.apply(tape, s.x, t_mid), half);
        check_finite(s.x.value(), s.v.value(), k);
    }
    return s;
}

double jacobian_determinant(const std::function<PhaseState(const PhaseState&)>& map, const PhaseState& s,
                            double h_fd) {
    const auto d = s.x.size();
    if (2 * d > 8) throw std::invalid_argument("jacobian_determinant: phase dimension must be at most 8");
    if (!(h_fd > 0.0)) throw std::invalid_argument("jacobian_determinant: step must be positive");
    Vec z(2 * d);
    z << s.x, s.v;
    const auto apply = [&](const Vec& point) {
        const PhaseState out = map({point.head(d), point.tail(d)});
        Vec r(2 * d);
        r << out.x, out.v;
        return r;
    };
    Mat jac(2 * d, 2 * d);
    for (Eigen::Index j = 0; j < 2 * d; ++j) {
        Vec plus = z;
        Vec minus = z;
        plus(j) += h_fd;
        minus(j) -= h_fd;
        jac.col(j) = (apply(plus) - apply(minus)) / (2.0 * h_fd);
    }
    return std::abs(jac.fullPivLu().determinant());
}

double volume_check(const ForceField& force, const PhaseState& s, double t, int n_steps, double h_fd) {
    return jacobian_determinant([&](const PhaseState& p) { return leapfrog(force, p, 0.0, t, n_steps); }, s, h_fd);
}

}  // namespace hamflow
