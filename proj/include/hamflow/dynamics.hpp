#pragma once

#include <functional>
#include <optional>
#include <variant>

#include "hamflow/mixture.hpp"
#include "hamflow/mlp.hpp"
#include "hamflow/tape.hpp"

namespace hamflow {

struct PhaseState {
    Vec x;
    Vec v;
};

/// One particle per row.
struct PhaseBatch {
    Mat x;
    Mat v;
};

struct ZeroForce {};

/// Harmonic force -alpha^2 x.
struct OscillationForce {
    double alpha = 1.0;
};

/// Exact score of a Gaussian mixture.
struct ScoreForce {
    GaussianMixture mixture;
};

struct LearnedForce {
    Mlp net;
    bool time_dependent = false;
};

using ForceField = std::variant<ZeroForce, OscillationForce, ScoreForce, LearnedForce>;

/// Throws std::invalid_argument if the force violates its invariants.
void validate_force(const ForceField& force);

/// Force at each row of `x`; `times` holds one time per row and is only
/// consulted by time-dependent learned forces.
Mat evaluate_force(const ForceField& force, const Mat& x, const Vec& times);
Vec evaluate_force(const ForceField& force, const Vec& x, double t = 0.0);

/// Potential U with force = -grad U. Not defined for learned forces.
bool has_potential(const ForceField& force);
double potential(const ForceField& force, const Vec& x);
/// H(x, v) = U(x) + |v|^2 / 2; throws std::domain_error for learned forces.
double energy(const ForceField& force, const PhaseState& s);

PhaseState flow_zero(const PhaseState& s, double t);
PhaseState flow_oscillation(const PhaseState& s, double t, double alpha);
PhaseBatch flow_zero(const PhaseBatch& s, const Vec& times);
PhaseBatch flow_oscillation(const PhaseBatch& s, const Vec& times, double alpha);

/// Axis-aligned box [lo, hi].
struct Box {
    Vec lo;
    Vec hi;

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const Vec& x) const;
};

/// Free flight inside `box` with elastic reflections at the walls (closed form).
PhaseState flow_reflection(const PhaseState& s, double t, const Box& box);
PhaseBatch flow_reflection(const PhaseBatch& s, const Vec& times, const Box& box);

/// Kick-drift-kick leapfrog from t0 to t1 per row with step (t1 - t0) / n_steps.
/// Rows with t0 == t1 are left unchanged; negative steps integrate backward.
/// Throws DivergedError if any |x| or |v| exceeds 1e6 or turns non-finite.
PhaseBatch leapfrog(const ForceField& force, PhaseBatch s, const Vec& t0, const Vec& t1, int n_steps);
PhaseState leapfrog(const ForceField& force, const PhaseState& s, double t0, double t1, int n_steps);

/// Force field recorded on a tape: (tape, positions, per-row times) -> forces.
struct TapedForce {
    std::function<Var(Tape&, Var, const Vec&)> apply;
    /// Parameter leaves of a learned force; empty for analytic forces.
    std::optional<MlpVars> params;
    bool time_dependent = false;
};

/// Binds `force` to `tape`. Learned parameters become leaves; the mixture
/// score enters as a custom node whose adjoint uses the exact Hessian.
TapedForce bind_force(Tape& tape, const ForceField& force);

struct TapedPhase {
    Var x;
    Var v;
};

/// Leapfrog with every arithmetic step recorded, so the endpoint can be
/// differentiated w.r.t. the start state and any learned force parameters.
TapedPhase leapfrog(Tape& tape, const TapedForce& force, TapedPhase s, const Vec& t0, const Vec& t1, int n_steps);

/// |det| of the central-difference Jacobian of `map` at `s` (2d <= 8).
double jacobian_determinant(const std::function<PhaseState(const PhaseState&)>& map, const PhaseState& s,
                            double h_fd);
/// |det D phi| of the leapfrog map over [0, t].
double volume_check(const ForceField& force, const PhaseState& s, double t, int n_steps, double h_fd = 1e-5);

}  // namespace hamflow
