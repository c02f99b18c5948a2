#pragma once

#include "pacontrol/model.hpp"
#include "pacontrol/policy_table.hpp"
#include "pacontrol/rng.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace pacontrol {

struct SimConfig {
    double dt = 1e-3;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 20240601;
    /// Truncation radius; none simulates on the untruncated closed state space.
    std::optional<double> rho_trunc;
    bool exact_xi_update = true;

    void validate(const ModelParams& params) const;
};

enum class ExitFace { payoff_floor, payoff_cap, xi_floor, xi_cap, theta_band, horizon, stopping_rule };

std::string to_string(ExitFace face);

struct PathResult {
    double exit_time = 0.0;
    State exit_state;
    /// Left-endpoint quadrature of the running cost up to the exit time.
    double running = 0.0;
    /// running - P(tau) xi(tau).
    double cost = 0.0;
    ExitFace exit_face = ExitFace::horizon;
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error of independent samples; the sum runs pairwise.
McEstimate summarize(const std::vector<double>& samples);

using MarkovPolicy = std::function<Control(double t, const State& x)>;

/// Where a simulated path gets its control: a constant, a Markov feedback, or a
/// slab-held table (the table's control is chosen from the state at each slab start).
class ControlSource {
public:
    ControlSource(Control constant) : source_(constant) {}
    ControlSource(MarkovPolicy policy) : source_(std::move(policy)) {}
    ControlSource(std::shared_ptr<const PolicyTable> table) : source_(std::move(table)) {}

    bool is_constant() const { return std::holds_alternative<Control>(source_); }
    const std::variant<Control, MarkovPolicy, std::shared_ptr<const PolicyTable>>& get() const { return source_; }

private:
    std::variant<Control, MarkovPolicy, std::shared_ptr<const PolicyTable>> source_;
};

/// Optional extra stopping: a deterministic time and/or leaving a ball around the start.
struct PathStop {
    std::optional<double> at_time;
    std::optional<double> ball_radius;
};

/// One Euler step of the controlled system. With exact_xi_update and epsilon = 0 the
/// density uses the exact exponential update; dw1 is ignored when epsilon = 0.
/// Throws std::domain_error when the new state is not finite.
State step_euler(const ModelParams& params, double t, const State& x, const Control& u, double dw,
                 const Vec3& dw1, double epsilon, double dt, bool exact_xi_update,
                 std::optional<double> rho_trunc = std::nullopt);

/// Simulates from (s, y) until the state leaves the (truncated) closed region, the
/// optional stop fires, or T. The caller's rng is one path's stream.
PathResult simulate_path(const ModelParams& params, const SimConfig& config, double s, const State& y,
                         const ControlSource& policy, double epsilon, Philox& rng,
                         const PathStop& stop = {});

/// Path i uses Philox(seed, i); results are bit-identical for any thread count.
std::vector<PathResult> simulate_paths(const ModelParams& params, const SimConfig& config, double s,
                                       const State& y, const ControlSource& policy, double epsilon,
                                       const PathStop& stop = {});

McEstimate estimate_cost(const ModelParams& params, const SimConfig& config, double s, const State& y,
                         const ControlSource& policy, double epsilon);

struct MartingaleReport {
    std::vector<double> times;
    std::vector<McEstimate> means;
    double xi0 = 0.0;
    bool all_positive = true;
    bool pass = true;
};

/// E[xi(t)] at t = s + f (T - s), f in {0.25, 0.5, 1}, against xi0 within 4 SE.
MartingaleReport check_xi_martingale(const ModelParams& params, const SimConfig& config, double s,
                                     const State& y, const ControlSource& policy);

struct TailLevel {
    double level = 0.0;
    double bound = 0.0;
    double empirical = 0.0;
    std::size_t exceedances = 0;
    bool pass = true;
};

struct TailReport {
    double kappa = 0.0;
    double horizon = 0.0;
    bool with_drift = false;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<TailLevel> levels;
    bool pass = true;
};

/// (12/n) sqrt(kappa T / 2 pi) exp(-n^2 / (18 kappa T)).
double tail_bound(double kappa, double T, double level);

/// Empirical P(max |X_t| >= n) for X = M + C started at 0. Without drift M is a
/// Brownian motion scaled so <M>_t = kappa t; with drift <M>_t = kappa t / 2 and
/// C_t = kappa t / 2. Throws std::invalid_argument when a level is not above 3 kappa T.
TailReport check_tail_bound(double kappa, double T, const std::vector<double>& levels,
                            const SimConfig& config, bool with_drift = false);

struct BoundTrial {
    double s = 0.0;
    State y;
    Control u;
    McEstimate estimate;
    double bound = 0.0;
    bool pass = true;
};

struct BoundReport {
    double derived_K = 0.0;
    std::vector<BoundTrial> trials;
    std::size_t violations = 0;
    bool pass = true;
};

/// |E J| against lemma41_bound for random (s, y, constant control) triples, simulated on
/// the untruncated state space without regularization. K is derived from the payoff
/// growth constant.
BoundReport check_cost_bound(const ModelParams& params, const SimConfig& config, std::size_t n_triples,
                             std::uint64_t seed);

/// Writes (t, P, xi, theta, eta, c) rows for one path.
struct TraceRow {
    double t, P, xi, theta, eta, c;
};

std::vector<TraceRow> trace_path(const ModelParams& params, const SimConfig& config, double s,
                                 const State& y, const ControlSource& policy, double epsilon,
                                 std::uint64_t path_index);

}  // namespace pacontrol
