#pragma once

#include "pacontrol/hjb.hpp"
#include "pacontrol/sde.hpp"

#include <string>
#include <vector>

namespace pacontrol {

struct StoppingRule {
    enum class Kind { fixed_time, first_exit, horizon };

    Kind kind = Kind::horizon;
    double t_star = 0.0;
    double radius = 0.0;

    static StoppingRule fixed_time(double t) { return {Kind::fixed_time, t, 0.0}; }
    static StoppingRule first_exit(double r) { return {Kind::first_exit, 0.0, r}; }
    static StoppingRule horizon() { return {}; }

    void validate(double s, double T) const;
};

std::string to_string(const StoppingRule& rule);

struct Candidate {
    std::string name;
    ControlSource source;
};

/// Every constant on the control grid, in flat-index order.
std::vector<Candidate> constant_candidates(const ControlGrid& grid);

struct DppRow {
    std::string name;
    McEstimate rhs;
    /// rhs.mean - V(s, y).
    double gap = 0.0;
    bool pass = true;
    std::size_t extrapolated = 0;
};

struct DppReport {
    double v_at_start = 0.0;
    double best_rhs = 0.0;
    double gap = 0.0;
    double tolerance = 0.0;
    StoppingRule rule;
    std::vector<DppRow> rows;
    std::size_t extrapolation_warnings = 0;
    bool pass = true;
};

/// Monte Carlo estimate of E[ int_s^{theta^tau} L dt + V(theta^tau, x(theta^tau)) ] with the
/// grid's epsilon inside the grid's truncated region. Paths that leave the region or reach T
/// are valued at -P xi; paths stopped by the rule use the interpolated grid value.
McEstimate dpp_rhs(const ModelParams& params, const ValueGrid& grid, double s, const State& y,
                   const StoppingRule& rule, const ControlSource& control, const SimConfig& mc,
                   std::size_t* extrapolated = nullptr);

/// Passes when V(s,y) <= rhs + 4 SE + tolerance for every candidate.
DppReport verify_dp_lower(const ModelParams& params, const ValueGrid& grid, double s, const State& y,
                          const StoppingRule& rule, const std::vector<Candidate>& controls, const SimConfig& mc,
                          double tolerance);

/// Passes when V(s,y) + delta + 4 SE >= rhs for the supplied policy.
DppReport verify_dp_upper(const ModelParams& params, const ValueGrid& grid, double s, const State& y,
                          const StoppingRule& rule, const Candidate& policy, const SimConfig& mc, double delta);

}  // namespace pacontrol
