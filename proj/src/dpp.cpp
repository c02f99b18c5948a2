#include "pacontrol/dpp.hpp"

#include "pacontrol/constants.hpp"
#include "pacontrol/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pacontrol {

void StoppingRule::validate(double s, double T) const {
    if (kind == Kind::fixed_time && !(t_star >= s && t_star <= T))
        throw std::invalid_argument("fixed_time stop must lie in [s, T]");
    if (kind == Kind::first_exit && !(radius > 0.0)) throw std::invalid_argument("first_exit radius must be positive");
}

std::string to_string(const StoppingRule& rule) {
    std::ostringstream os;
    switch (rule.kind) {
        case StoppingRule::Kind::fixed_time: os << "fixed_time(" << rule.t_star << ")"; break;
        case StoppingRule::Kind::first_exit: os << "first_exit(" << rule.radius << ")"; break;
        case StoppingRule::Kind::horizon: os << "horizon"; break;
    }
    return os.str();
}

std::vector<Candidate> constant_candidates(const ControlGrid& grid) {
    std::vector<Candidate> out;
    for (std::size_t u = 0; u < grid.size(); ++u) {
        const Control c = grid.at(u);
        std::ostringstream name;
        name << "const(" << c.eta() << "," << c.c() << ")";
        out.push_back({name.str(), ControlSource(c)});
    }
    return out;
}

McEstimate dpp_rhs(const ModelParams& params, const ValueGrid& grid, double s, const State& y,
                   const StoppingRule& rule, const ControlSource& control, const SimConfig& mc,
                   std::size_t* extrapolated) {
    rule.validate(s, params.T);
    SimConfig cfg = mc;
    cfg.rho_trunc = grid.spec().rho;
    cfg.validate(params);
    const double eps = grid.spec().epsilon;

    if (rule.kind == StoppingRule::Kind::fixed_time && rule.t_star == s) {
        const auto v = interpolate_value(grid, s, y);
        if (extrapolated) *extrapolated = v.extrapolated ? cfg.n_paths : 0;
        return {v.value, 0.0, cfg.n_paths};
    }
    PathStop stop;
    if (rule.kind == StoppingRule::Kind::fixed_time) stop.at_time = rule.t_star;
    if (rule.kind == StoppingRule::Kind::first_exit) stop.ball_radius = rule.radius;

    std::vector<double> samples(cfg.n_paths);
    std::vector<char> flagged(cfg.n_paths, 0);
    parallel_for(cfg.n_paths, [&](std::size_t i) {
        Philox rng(cfg.seed, i);
        const PathResult r = simulate_path(params, cfg, s, y, control, eps, rng, stop);
        if (r.exit_face == ExitFace::stopping_rule && r.exit_time < params.T) {
            const auto v = interpolate_value(grid, r.exit_time, r.exit_state);
            flagged[i] = v.extrapolated;
            samples[i] = r.running + v.value;
        } else {
            samples[i] = r.cost;
        }
    });
    if (extrapolated) *extrapolated = std::size_t(std::count(flagged.begin(), flagged.end(), 1));
    return summarize(samples);
}

DppReport verify_dp_lower(const ModelParams& params, const ValueGrid& grid, double s, const State& y,
                          const StoppingRule& rule, const std::vector<Candidate>& controls, const SimConfig& mc,
                          double tolerance) {
    if (controls.empty()) throw std::invalid_argument("verify_dp_lower needs at least one candidate");
    DppReport rep;
    rep.rule = rule;
    rep.tolerance = tolerance;
    rep.v_at_start = interpolate_value(grid, s, y).value;
    for (const auto& cand : controls) {
        DppRow row;
        row.name = cand.name;
        row.rhs = dpp_rhs(params, grid, s, y, rule, cand.source, mc, &row.extrapolated);
        row.gap = row.rhs.mean - rep.v_at_start;
        row.pass = row.gap >= -(kMonteCarloSigmas * row.rhs.std_error + tolerance);
        rep.extrapolation_warnings += row.extrapolated;
        rep.pass = rep.pass && row.pass;
        rep.rows.push_back(row);
    }
    const auto best = std::min_element(rep.rows.begin(), rep.rows.end(),
                                       [](const DppRow& a, const DppRow& b) { return a.rhs.mean < b.rhs.mean; });
    rep.best_rhs = best->rhs.mean;
    rep.gap = rep.best_rhs - rep.v_at_start;
    return rep;
}

DppReport verify_dp_upper(const ModelParams& params, const ValueGrid& grid, double s, const State& y,
                          const StoppingRule& rule, const Candidate& policy, const SimConfig& mc, double delta) {
    if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
    DppReport rep;
    rep.rule = rule;
    rep.tolerance = delta;
    rep.v_at_start = interpolate_value(grid, s, y).value;
    DppRow row;
    row.name = policy.name;
    row.rhs = dpp_rhs(params, grid, s, y, rule, policy.source, mc, &row.extrapolated);
    row.gap = row.rhs.mean - rep.v_at_start;
    row.pass = row.gap <= delta + kMonteCarloSigmas * row.rhs.std_error;
    rep.extrapolation_warnings = row.extrapolated;
    rep.pass = row.pass;
    rep.best_rhs = row.rhs.mean;
    rep.gap = row.gap;
    rep.rows.push_back(row);
    return rep;
}

}  // namespace pacontrol
