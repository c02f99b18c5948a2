#include "pacontrol/model.hpp"

#include "pacontrol/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pacontrol {

namespace {

void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw std::invalid_argument(std::string("model parameter '") + name +
                                    "' must be finite and strictly positive");
    }
}

double time_scale(bool time_scaled, double t) { return time_scaled ? t : 1.0; }

// 0^x = 0 for x > 0, and the factor is 1 when the exponent vanishes.
double power_factor(double base, double exponent) {
    if (exponent == 0.0) return 1.0;
    if (base == 0.0) return 0.0;
    return std::pow(base, exponent);
}

}  // namespace

TimeFunction TimeFunction::constant(double c0) { return {Family::constant, {c0}}; }

TimeFunction TimeFunction::linear(double c0, double c1) { return {Family::linear, {c0, c1}}; }

TimeFunction TimeFunction::sinusoidal(double c0, double amplitude, double frequency, double phase) {
    return {Family::sinusoidal, {c0, amplitude, frequency, phase}};
}

double TimeFunction::operator()(double t) const {
    switch (family) {
        case Family::constant:
            return coeffs[0];
        case Family::linear:
            return coeffs[0] + coeffs[1] * t;
        case Family::sinusoidal:
            return coeffs[0] + coeffs[1] * std::sin(coeffs[2] * t + coeffs[3]);
    }
    return 0.0;
}

void TimeFunction::validate() const {
    std::size_t expected = 1;
    if (family == Family::linear) expected = 2;
    if (family == Family::sinusoidal) expected = 4;
    if (coeffs.size() != expected) {
        throw std::invalid_argument("time function family '" + to_string(family) + "' expects " +
                                    std::to_string(expected) + " coefficients, got " +
                                    std::to_string(coeffs.size()));
    }
    for (double c : coeffs) {
        if (!std::isfinite(c)) throw std::invalid_argument("time function coefficient is not finite");
    }
}

std::string to_string(TimeFunction::Family family) {
    switch (family) {
        case TimeFunction::Family::constant:
            return "constant";
        case TimeFunction::Family::linear:
            return "linear";
        case TimeFunction::Family::sinusoidal:
            return "sinusoidal";
    }
    return "constant";
}

TimeFunction::Family time_family_from_string(const std::string& name) {
    if (name == "constant") return TimeFunction::Family::constant;
    if (name == "linear") return TimeFunction::Family::linear;
    if (name == "sinusoidal") return TimeFunction::Family::sinusoidal;
    throw std::invalid_argument("unknown time function family '" + name + "'");
}

void ModelParams::validate() const {
    require_positive(A, "A");
    require_positive(alpha, "alpha");
    require_positive(beta, "beta");
    if (!(k >= 0.0) || !std::isfinite(k)) {
        throw std::invalid_argument("model parameter 'k' must be finite and nonnegative");
    }
    require_positive(gamma, "gamma");
    require_positive(varrho, "varrho");
    require_positive(N, "N");
    require_positive(C, "C");
    require_positive(H, "H");
    require_positive(R, "R");
    require_positive(T, "T");
    if (H < 2.0) throw std::invalid_argument("model parameter 'H' must be at least 2");
    ell.validate();
    theta_drift.validate();
    theta_vol.validate();
    for (double v : {payoff_drift.mu0, payoff_drift.mu1, payoff_drift.mu2, payoff_vol.s0,
                     payoff_vol.s1}) {
        if (!std::isfinite(v)) throw std::invalid_argument("payoff coefficient is not finite");
    }
}

ModelParams desk_model() { return ModelParams{}; }

ModelParams frozen_payoff_model() {
    ModelParams p;
    p.k = 0.0;
    p.payoff_drift = {true, 0.0, 0.0, 0.0};
    p.payoff_vol = {true, 0.0, 0.0};
    return p;
}

bool in_closed_state_space(const ModelParams& params, const State& x) {
    return x.P >= params.R && x.xi >= 0.0 && x.theta >= -params.H && x.theta <= params.H;
}

Control::Control(const ModelParams& params, double eta, double c)
    : eta_(std::clamp(eta, 0.0, params.N)), c_(std::clamp(c, 0.0, params.C)) {}

Control Control::unchecked(double eta, double c) {
    Control u;
    u.eta_ = eta;
    u.c_ = c;
    return u;
}

ControlGrid ControlGrid::uniform(const ModelParams& params, std::size_t n_eta, std::size_t n_c) {
    if (n_eta < 2 || n_c < 2) throw std::invalid_argument("control grid needs at least two levels per axis");
    ControlGrid grid;
    for (std::size_t i = 0; i < n_eta; ++i) {
        grid.eta_levels.push_back(i + 1 == n_eta ? params.N : params.N * double(i) / double(n_eta - 1));
    }
    for (std::size_t j = 0; j < n_c; ++j) {
        grid.c_levels.push_back(j + 1 == n_c ? params.C : params.C * double(j) / double(n_c - 1));
    }
    return grid;
}

Control ControlGrid::at(std::size_t flat_index) const {
    const std::size_t nc = c_levels.size();
    return Control::unchecked(eta_levels[flat_index / nc], c_levels[flat_index % nc]);
}

void ControlGrid::validate(const ModelParams& params) const {
    auto check = [](const std::vector<double>& levels, double upper, const char* name) {
        if (levels.empty()) throw std::invalid_argument(std::string(name) + " levels are empty");
        if (levels.front() != 0.0 || levels.back() != upper) {
            throw std::invalid_argument(std::string(name) + " levels must start at 0 and end at the box bound");
        }
        for (std::size_t i = 1; i < levels.size(); ++i) {
            if (!(levels[i] > levels[i - 1])) {
                throw std::invalid_argument(std::string(name) + " levels must be strictly increasing");
            }
        }
    };
    check(eta_levels, params.N, "eta");
    check(c_levels, params.C, "c");
}

double cobb_douglas(const ModelParams& params, const Control& u) {
    return params.A * power_factor(u.c(), params.alpha) * power_factor(u.eta(), params.beta);
}

double smooth_step(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / s);
    const double b = std::exp(-1.0 / (1.0 - s));
    return a / (a + b);
}

double smooth_step_derivative(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / s);
    const double b = std::exp(-1.0 / (1.0 - s));
    const double da = a / (s * s);
    const double db = -b / ((1.0 - s) * (1.0 - s));
    return (da * b - a * db) / ((a + b) * (a + b));
}

double cutoff_zeta(const ModelParams& params, double theta) {
    return 1.0 - smooth_step(std::abs(theta) - (params.H - 1.0));
}

double cutoff_zeta_derivative(const ModelParams& params, double theta) {
    const double sign = theta < 0.0 ? -1.0 : 1.0;
    return -sign * smooth_step_derivative(std::abs(theta) - (params.H - 1.0));
}

TimeFrame time_frame(const ModelParams& params, double t) {
    TimeFrame f;
    f.t = t;
    f.ell = params.ell(t);
    f.theta_drift = params.theta_drift(t);
    f.theta_vol = params.theta_vol(t);
    f.drift_scale = time_scale(params.payoff_drift.time_scaled, t);
    f.vol_scale = time_scale(params.payoff_vol.time_scaled, t);
    return f;
}

ControlTerms control_terms(const ModelParams& params, const Control& u) {
    return {u, cobb_douglas(params, u), power_factor(u.eta(), params.gamma)};
}

double payoff_drift(const ModelParams& params, double t, double P, const Control& u) {
    const auto& b = params.payoff_drift;
    return time_scale(b.time_scaled, t) * (b.mu0 + b.mu1 * P + b.mu2 * cobb_douglas(params, u));
}

double payoff_vol(const ModelParams& params, double t, double P, const Control&) {
    const auto& s = params.payoff_vol;
    return time_scale(s.time_scaled, t) * (s.s0 + s.s1 * P);
}

Vec3 drift_vector(const ModelParams& params, double t, const State& x, const Control& u) {
    return coefficients(params, time_frame(params, t), x, cutoff_zeta(params, x.theta),
                        control_terms(params, u))
        .drift;
}

Vec3 vol_vector(const ModelParams& params, double t, const State& x, const Control& u) {
    return coefficients(params, time_frame(params, t), x, cutoff_zeta(params, x.theta),
                        control_terms(params, u))
        .vol;
}

Mat3 diffusion_matrix(const ModelParams& params, double t, const State& x, const Control& u,
                      double epsilon) {
    const Vec3 sigma = vol_vector(params, t, x, u);
    Mat3 a = sigma * sigma.transpose();
    a.diagonal().array() += epsilon * epsilon;
    return a;
}

double running_cost(const ModelParams& params, const State& x, const Control& u) {
    return params.k * power_factor(u.eta(), params.gamma) * x.xi;
}

double truncation_cutoff(const ModelParams&, double rho, const State& x) {
    const double upper_p = 1.0 - smooth_step(x.P - rho);
    const double upper_xi = 1.0 - smooth_step(x.xi - rho);
    const double lo = 1.0 / rho;
    const double hi = 1.0 / (rho + 1.0);
    const double lower_xi = 1.0 - smooth_step((lo - x.xi) / (lo - hi));
    return upper_p * upper_xi * lower_xi;
}

double terminal_boundary_value(const State& x) { return -x.P * x.xi; }

HamiltonianValue hamiltonian(const ModelParams& params, const ControlGrid& grid, double t,
                             const State& x, const Vec3& z, const Mat3& M, double epsilon) {
    if (grid.size() == 0) throw std::invalid_argument("hamiltonian needs a nonempty control grid");
    const TimeFrame frame = time_frame(params, t);
    const double zeta = cutoff_zeta(params, x.theta);
    const double isotropic = 0.5 * epsilon * epsilon * M.trace();
    HamiltonianValue best;
    best.value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Control u = grid.at(i);
        const Coefficients co = coefficients(params, frame, x, zeta, control_terms(params, u));
        // tr(sigma sigma^T M) = sigma^T M sigma
        const double value = -co.drift.dot(z) - 0.5 * co.vol.dot(M * co.vol) - isotropic - co.running_cost;
        if (value > best.value) {
            best = {value, u, i};
        }
    }
    return best;
}

bool ConditionsReport::all_pass() const {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

const ConditionResult& ConditionsReport::operator[](const std::string& name) const {
    for (const auto& r : results) {
        if (r.name == name) return r;
    }
    throw std::out_of_range("no condition named " + name);
}

namespace {

struct Sample {
    double t, P;
    Control u;
};

void require_finite(double value, const Sample& s, const char* what) {
    if (!std::isfinite(value)) {
        throw std::domain_error(std::string("non-finite ") + what + " at t=" + std::to_string(s.t) +
                                " P=" + std::to_string(s.P) + " eta=" + std::to_string(s.u.eta()) +
                                " c=" + std::to_string(s.u.c()));
    }
}

// Estimated constants must not keep growing as the sampled region widens; a
// constant that grows by more than this factor is reported as unbounded.
constexpr double kGrowthFactor = 1.1;

}  // namespace

ConditionsReport validate_conditions(const ModelParams& params, std::size_t sample_budget,
                                     unsigned long long seed) {
    if (sample_budget < 1) throw std::invalid_argument("sample_budget must be at least 1");
    params.validate();

    // P is sampled log-uniformly on [R, R 1e6] and t log-uniformly on [T 1e-6, T];
    // the "core" sub-range [R, R 1e3] x [T 1e-3, T] is the reference for growth.
    constexpr double kPDecades = 6.0;
    constexpr double kTDecades = 6.0;
    Philox rng(seed, 0);
    std::vector<Sample> samples;
    samples.reserve(sample_budget + 4);
    for (std::size_t i = 0; i < sample_budget; ++i) {
        const double P = params.R * std::pow(10.0, kPDecades * rng.uniform());
        const double t = params.T * std::pow(10.0, -kTDecades * rng.uniform());
        samples.push_back({t, P, Control(params, params.N * rng.uniform(), params.C * rng.uniform())});
    }
    // Corners of the sampled box so the extremes are always probed.
    for (double t : {params.T, params.T * 1e-6}) {
        for (double P : {params.R, params.R * 1e6}) {
            samples.push_back({t, P, Control(params, params.N, params.C)});
        }
    }
    auto in_core = [&](const Sample& s) { return s.P <= params.R * 1e3 && s.t >= params.T * 1e-3; };

    struct Tracker {
        double all = 0.0;
        double core = 0.0;
        ConditionWitness witness;
        void add(double ratio, bool core_sample, const Sample& s) {
            if (ratio > all) {
                all = ratio;
                witness = {s.t, s.P, s.u.eta(), s.u.c(), ratio};
            }
            if (core_sample) core = std::max(core, ratio);
        }
        ConditionResult result(const std::string& name) const {
            ConditionResult r{name, all <= kGrowthFactor * core + 1e-12, all, std::nullopt};
            if (!r.pass) r.witness = witness;
            return r;
        }
    };

    Tracker lipschitz, growth, linear_t;
    ConditionResult smooth{"C3", true, 0.0, std::nullopt};
    for (const Sample& s : samples) {
        const double b = payoff_drift(params, s.t, s.P, s.u);
        const double sig = payoff_vol(params, s.t, s.P, s.u);
        require_finite(b, s, "payoff drift");
        require_finite(sig, s, "payoff volatility");

        // C1: difference quotients in P at a relative offset.
        const double dP = 1e-3 * s.P;
        const double b2 = payoff_drift(params, s.t, s.P + dP, s.u);
        const double sig2 = payoff_vol(params, s.t, s.P + dP, s.u);
        require_finite(b2, s, "payoff drift");
        require_finite(sig2, s, "payoff volatility");
        lipschitz.add(std::max(std::abs(b2 - b), std::abs(sig2 - sig)) / dP, in_core(s), s);

        // C2: (|b|^2 + |sigma|^2) / (1 + P^2), reported as L2.
        growth.add(std::sqrt((b * b + sig * sig) / (1.0 + s.P * s.P)), in_core(s), s);

        // C4: (|b| + |sigma|) / t, with P ranging over the whole sampled half-line.
        linear_t.add((std::abs(b) + std::abs(sig)) / s.t, in_core(s), s);

        // C3: second differences in P and first differences in t must converge
        // under step halving (continuity of b_t, b_P, b_PP and likewise sigma).
        auto second_diff = [&](auto&& f, double h) {
            return (f(s.t, s.P + h) - 2.0 * f(s.t, s.P) + f(s.t, s.P - h)) / (h * h);
        };
        auto time_diff = [&](auto&& f, double h) {
            const double tl = std::max(0.0, s.t - h);
            return (f(s.t + h, s.P) - f(tl, s.P)) / (s.t + h - tl);
        };
        auto fb = [&](double t, double P) { return payoff_drift(params, t, P, s.u); };
        auto fs = [&](double t, double P) { return payoff_vol(params, t, P, s.u); };
        const double h = 1e-2 * std::max(1.0, s.P);
        const double ht = 1e-3 * params.T;
        for (auto probe : {second_diff(fb, h) - second_diff(fb, 0.5 * h),
                           second_diff(fs, h) - second_diff(fs, 0.5 * h),
                           time_diff(fb, ht) - time_diff(fb, 0.5 * ht),
                           time_diff(fs, ht) - time_diff(fs, 0.5 * ht)}) {
            require_finite(probe, s, "smoothness probe");
            // Quotients of a C^{1,2} family agree up to rounding amplified by the step.
            const double rounding = 1e-8 * (1.0 + std::abs(b) + std::abs(sig)) * (1.0 / (h * h) + 1.0 / ht);
            smooth.constant = std::max(smooth.constant, std::abs(probe));
            if (std::abs(probe) > rounding && smooth.pass) {
                smooth.pass = false;
                smooth.witness = ConditionWitness{s.t, s.P, s.u.eta(), s.u.c(), std::abs(probe)};
            }
        }
    }

    ConditionsReport report;
    report.results.push_back(lipschitz.result("C1"));
    report.results.push_back(growth.result("C2"));
    report.results.push_back(smooth);
    report.results.push_back(linear_t.result("C4"));
    return report;
}

double growth_constant(const ModelParams& params) {
    // |b|^2 + |sigma|^2 <= 2 s^2 [(B0^2 + s0^2) + (mu1^2 + s1^2) P^2] with s = max time factor.
    const auto& b = params.payoff_drift;
    const auto& s = params.payoff_vol;
    const double drift_scale = b.time_scaled ? params.T : 1.0;
    const double vol_scale = s.time_scaled ? params.T : 1.0;
    const double phi_max = params.A * std::pow(params.C, params.alpha) * std::pow(params.N, params.beta);
    const double b0 = drift_scale * (std::abs(b.mu0) + std::abs(b.mu2) * phi_max);
    const double b1 = drift_scale * std::abs(b.mu1);
    const double s0 = vol_scale * std::abs(s.s0);
    const double s1 = vol_scale * std::abs(s.s1);
    return std::sqrt(2.0 * std::max(b0 * b0 + s0 * s0, b1 * b1 + s1 * s1));
}

double ell_sup(const ModelParams& params, std::size_t mesh) {
    double m = 0.0;
    for (std::size_t i = 0; i <= mesh; ++i) {
        m = std::max(m, std::abs(params.ell(params.T * double(i) / double(mesh))));
    }
    return m;
}

double lemma41_bound(const ModelParams& params, const State& y, double derived_K) {
    if (!(derived_K > 0.0)) throw std::invalid_argument("derived_K must be positive");
    const double effort = params.k * std::pow(params.N, params.gamma);
    const double moment = derived_K * (1.0 + y.P * y.P) * std::exp(derived_K * params.T);
    const double exposure = params.H +
                            params.A * std::pow(params.C, params.alpha) * std::pow(params.N, params.beta) +
                            ell_sup(params);
    const double density = std::exp(exposure * exposure * params.T / (params.varrho * params.varrho));
    if (!std::isfinite(moment) || !std::isfinite(density)) {
        throw std::overflow_error("a-priori cost bound overflows: exposure term exp(" +
                                  std::to_string(exposure * exposure * params.T /
                                                 (params.varrho * params.varrho)) +
                                  ")");
    }
    return y.xi * params.T * (effort + moment + density);
}

}  // namespace pacontrol
