#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace pacontrol {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Deterministic function of time, restricted to a few named families.
///
///   constant   : c0
///   linear     : c0 + c1 t
///   sinusoidal : c0 + c1 sin(c2 t + c3)
struct TimeFunction {
    enum class Family { constant, linear, sinusoidal };

    Family family = Family::constant;
    std::vector<double> coeffs{0.0};

    static TimeFunction constant(double c0);
    static TimeFunction linear(double c0, double c1);
    static TimeFunction sinusoidal(double c0, double amplitude, double frequency, double phase);

    double operator()(double t) const;
    /// Throws std::invalid_argument when the coefficient count does not match the family.
    void validate() const;
};

std::string to_string(TimeFunction::Family family);
TimeFunction::Family time_family_from_string(const std::string& name);

/// b(t,P,eta,c) = tf(t) * (mu0 + mu1 P + mu2 Phi(eta,c)), tf(t) = t or 1.
struct PayoffDrift {
    bool time_scaled = true;
    double mu0 = 0.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
};

/// sigma(t,P,eta,c) = tf(t) * (s0 + s1 P), tf(t) = t or 1.
struct PayoffVol {
    bool time_scaled = true;
    double s0 = 0.0;
    double s1 = 0.0;
};

struct ModelParams {
    double A = 1.0;
    double alpha = 0.5;
    double beta = 0.5;
    double k = 0.5;
    double gamma = 2.0;
    double varrho = 8.0;
    double N = 1.0;
    double C = 1.0;
    double H = 5.0;
    double R = 1.0;
    double T = 1.0;
    TimeFunction ell = TimeFunction::constant(0.5);
    TimeFunction theta_drift = TimeFunction::constant(0.0);
    TimeFunction theta_vol = TimeFunction::constant(0.5);
    PayoffDrift payoff_drift{true, 0.0, 0.0, 1.0};
    PayoffVol payoff_vol{true, 0.2, 0.0};

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;
};

/// Reference parameter set used by the examples and the acceptance suite.
ModelParams desk_model();

/// P frozen (no payoff drift or volatility) and no effort cost; -P xi solves the HJB exactly.
ModelParams frozen_payoff_model();

struct State {
    double P = 0.0;
    double xi = 0.0;
    double theta = 0.0;
};

/// Closed state space [R,inf) x [0,inf) x [-H,H].
bool in_closed_state_space(const ModelParams& params, const State& x);

class Control {
public:
    Control() = default;
    /// Clamps into the box [0,N] x [0,C].
    Control(const ModelParams& params, double eta, double c);

    static Control unchecked(double eta, double c);

    double eta() const { return eta_; }
    double c() const { return c_; }

    friend bool operator==(const Control&, const Control&) = default;

private:
    double eta_ = 0.0;
    double c_ = 0.0;
};

struct ControlGrid {
    std::vector<double> eta_levels;
    std::vector<double> c_levels;

    /// Uniform levels including both endpoints.
    static ControlGrid uniform(const ModelParams& params, std::size_t n_eta, std::size_t n_c);

    std::size_t size() const { return eta_levels.size() * c_levels.size(); }
    /// Flat index = eta_index * c_levels.size() + c_index, so ascending index is the
    /// lexicographic (eta, c) tie-break order.
    Control at(std::size_t flat_index) const;
    void validate(const ModelParams& params) const;
};

double cobb_douglas(const ModelParams& params, const Control& u);

/// C^infinity even cutoff: 1 on [-(H-1), H-1], 0 outside (-H, H).
double cutoff_zeta(const ModelParams& params, double theta);
double cutoff_zeta_derivative(const ModelParams& params, double theta);

/// Smooth step built from exp(-1/s): 0 for s <= 0, 1 for s >= 1.
double smooth_step(double s);
double smooth_step_derivative(double s);

/// Coefficient values that do not depend on the state, evaluated once per time.
struct TimeFrame {
    double t = 0.0;
    double ell = 0.0;
    double theta_drift = 0.0;
    double theta_vol = 0.0;
    double drift_scale = 1.0;
    double vol_scale = 1.0;
};

TimeFrame time_frame(const ModelParams& params, double t);

/// Control-dependent scalars that the coefficients need: Phi(eta,c) and eta^gamma.
struct ControlTerms {
    Control u;
    double output = 0.0;
    double effort_power = 0.0;
};

ControlTerms control_terms(const ModelParams& params, const Control& u);

struct Coefficients {
    Vec3 drift;
    Vec3 vol;
    double running_cost = 0.0;
};

/// Drift, volatility and running cost with the Theta cutoff already evaluated.
inline Coefficients coefficients(const ModelParams& params, const TimeFrame& frame, const State& x,
                                 double zeta, const ControlTerms& u) {
    const auto& b = params.payoff_drift;
    const auto& s = params.payoff_vol;
    Coefficients out;
    out.drift = Vec3(frame.drift_scale * (b.mu0 + b.mu1 * x.P + b.mu2 * u.output), 0.0,
                     frame.theta_drift * zeta);
    out.vol = Vec3(frame.vol_scale * (s.s0 + s.s1 * x.P),
                   -x.xi * (x.theta + u.output - frame.ell) / params.varrho, frame.theta_vol * zeta);
    out.running_cost = params.k * u.effort_power * x.xi;
    return out;
}

double payoff_drift(const ModelParams& params, double t, double P, const Control& u);
double payoff_vol(const ModelParams& params, double t, double P, const Control& u);

Vec3 drift_vector(const ModelParams& params, double t, const State& x, const Control& u);
Vec3 vol_vector(const ModelParams& params, double t, const State& x, const Control& u);

/// sigma sigma^T + epsilon^2 I.
Mat3 diffusion_matrix(const ModelParams& params, double t, const State& x, const Control& u,
                      double epsilon);

double running_cost(const ModelParams& params, const State& x, const Control& u);

/// Smooth truncation weight: 1 on the closed box [R,rho] x [1/rho,rho] x [-H,H] and 0
/// once P > rho + 1, xi > rho + 1 or xi < 1/(rho + 1).
double truncation_cutoff(const ModelParams& params, double rho, const State& x);

/// Boundary and terminal data -P xi.
double terminal_boundary_value(const State& x);

struct HamiltonianValue {
    double value = 0.0;
    Control argmax;
    std::size_t argmax_index = 0;
};

/// sup over the grid of  -f.z - tr(a M)/2 - L; ties go to the lowest flat index.
HamiltonianValue hamiltonian(const ModelParams& params, const ControlGrid& grid, double t,
                             const State& x, const Vec3& z, const Mat3& M, double epsilon);

struct ConditionWitness {
    double t = 0.0;
    double P = 0.0;
    double eta = 0.0;
    double c = 0.0;
    double ratio = 0.0;
};

struct ConditionResult {
    std::string name;
    bool pass = true;
    double constant = 0.0;
    std::optional<ConditionWitness> witness;
};

struct ConditionsReport {
    std::vector<ConditionResult> results;  // C1, C2, C3, C4 in order

    bool all_pass() const;
    const ConditionResult& operator[](const std::string& name) const;
};

/// Empirical check of the Lipschitz (C1), growth (C2), smoothness (C3) and
/// linear-in-t (C4) conditions on the payoff coefficients.
/// Throws std::domain_error on a non-finite coefficient value.
ConditionsReport validate_conditions(const ModelParams& params, std::size_t sample_budget,
                                     unsigned long long seed = 7);

/// Growth constant L2 in |b|^2 + |sigma|^2 <= L2^2 (1 + P^2) for the built-in families.
double growth_constant(const ModelParams& params);

/// max over a fine mesh of |ell(t)| on [0,T].
double ell_sup(const ModelParams& params, std::size_t mesh = 4096);

/// Right-hand side of the a-priori cost bound at initial state y.
/// Throws std::overflow_error when the exponential term is not representable.
double lemma41_bound(const ModelParams& params, const State& y, double derived_K);

}  // namespace pacontrol
