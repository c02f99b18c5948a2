#pragma once

#include "pacontrol/model.hpp"
#include "pacontrol/policy_table.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace pacontrol {

/// Uniform space-time grid over [0,T] x [R,rho] x [1/rho,rho] x [-H,H].
struct GridSpec {
    double rho = 4.0;
    std::size_t nP = 21;
    std::size_t nXi = 26;
    std::size_t nTheta = 11;
    std::size_t nT = 21;
    double epsilon = 0.0;
    ControlGrid control_grid;

    void validate(const ModelParams& params) const;

    std::size_t n_space() const { return nP * nXi * nTheta; }
    double dP(const ModelParams& params) const { return (rho - params.R) / double(nP - 1); }
    double dXi() const { return (rho - 1.0 / rho) / double(nXi - 1); }
    double dTheta(const ModelParams& params) const { return 2.0 * params.H / double(nTheta - 1); }
    double dt(const ModelParams& params) const { return params.T / double(nT - 1); }
    double max_spacing(const ModelParams& params) const;

    double P(const ModelParams& params, std::size_t i) const;
    double xi(std::size_t j) const;
    double theta(const ModelParams& params, std::size_t l) const;
    double t(const ModelParams& params, std::size_t k) const;
};

/// Same spacing, different truncation radius: node counts along P and xi scale with the span.
GridSpec respaced(const ModelParams& params, const GridSpec& base, double rho);

bool operator==(const GridSpec& a, const GridSpec& b);

struct SolveDiagnostics {
    std::size_t substeps = 0;
    std::size_t cfl_retries = 0;
    double max_rate = 0.0;
    /// Share of node-control evaluations whose cross terms needed extra diagonal diffusion.
    double inflated_fraction = 0.0;
    double max_inflation = 0.0;
};

/// Solved values and the greedy control index at every node; layout (time, P, xi, theta)
/// with theta fastest.
class ValueGrid {
public:
    ValueGrid() = default;
    ValueGrid(ModelParams params, GridSpec spec);

    const ModelParams& params() const { return params_; }
    const GridSpec& spec() const { return spec_; }

    std::size_t index(std::size_t k, std::size_t i, std::size_t j, std::size_t l) const {
        return ((k * spec_.nP + i) * spec_.nXi + j) * spec_.nTheta + l;
    }
    double& at(std::size_t k, std::size_t i, std::size_t j, std::size_t l) { return values_[index(k, i, j, l)]; }
    double at(std::size_t k, std::size_t i, std::size_t j, std::size_t l) const { return values_[index(k, i, j, l)]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<std::uint16_t>& policy() { return policy_; }
    const std::vector<std::uint16_t>& policy() const { return policy_; }

    State node(std::size_t i, std::size_t j, std::size_t l) const;
    bool is_boundary(std::size_t i, std::size_t j, std::size_t l) const;

    SolveDiagnostics diagnostics;

private:
    ModelParams params_;
    GridSpec spec_;
    std::vector<double> values_;
    std::vector<std::uint16_t> policy_;
};

enum class NodeOrder { natural, reversed, shuffled };

struct SolveOptions {
    NodeOrder order = NodeOrder::natural;
    std::uint64_t shuffle_seed = 1;
    /// Fraction of the stability limit used for each substep.
    double cfl_safety = 0.95;
};

/// Explicit monotone backward sweep of the truncated, regularized HJB equation.
ValueGrid solve_regularized(const ModelParams& params, const GridSpec& spec, const SolveOptions& options = {});

struct LadderRow {
    std::string stage;  // "epsilon" or "rho"
    double rho = 0.0;
    std::size_t n = 0;
    double epsilon = 0.0;
    /// Max-norm difference to the previous row of the same stage; NaN for the first.
    double difference = std::numeric_limits<double>::quiet_NaN();
};

struct LadderResult {
    std::shared_ptr<const ValueGrid> grid;
    std::vector<LadderRow> rows;
    bool converged = false;
    double tol = 0.0;
    /// Larger of the last epsilon and the last rho Cauchy differences.
    double scheme_tolerance = 0.0;
};

/// Double limit: epsilon0^n for n = 1..n_max at each rho until successive grids differ by
/// less than tol, then rho along the schedule until successive rho grids do, measured on
/// the first rho's region. An infinite tol stops after one solve.
LadderResult solve_ladder(const ModelParams& params, const GridSpec& base_spec, double epsilon0, std::size_t n_max,
                          const std::vector<double>& rho_schedule, double tol, const SolveOptions& options = {});

/// Max |a - b| over every node of the first grid's region, evaluating the second by interpolation.
double grid_difference_on(const ValueGrid& region, const ValueGrid& a, const ValueGrid& b);

struct Interpolated {
    double value = 0.0;
    bool extrapolated = false;
};

/// Linear in t, trilinear in space; queries outside the hull are clamped and flagged.
Interpolated interpolate_value(const ValueGrid& grid, double t, const State& x);

/// Nearest-node lookup of the controls stored during the sweep.
class GreedyPolicy {
public:
    struct Query {
        Control u;
        bool extrapolated = false;
    };

    GreedyPolicy() = default;
    explicit GreedyPolicy(std::shared_ptr<const ValueGrid> grid);

    Query query(double t, const State& x) const;
    Control operator()(double t, const State& x) const { return query(t, x).u; }

    const ValueGrid& grid() const { return *grid_; }

private:
    std::shared_ptr<const ValueGrid> grid_;
};

GreedyPolicy extract_policy(const ModelParams& params, std::shared_ptr<const ValueGrid> grid);

/// Discrete Markov policy from the solved grid: for every slab start and box center
/// pick the grid control minimizing the discrete A^u W + L; cells whose best residual
/// exceeds eps_target / (4T) keep the default control and are flagged.
PolicyTable synthesize_discrete_policy(const ModelParams& params, const ValueGrid& grid, std::size_t M,
                                       std::size_t K0, double delta, double eps_target, double s = 0.0);

}  // namespace pacontrol
