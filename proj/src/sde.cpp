#include "pacontrol/sde.hpp"

#include "pacontrol/constants.hpp"
#include "pacontrol/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace pacontrol {

void SimConfig::validate(const ModelParams& params) const {
    if (!(dt > 0.0) || dt > params.T) throw std::invalid_argument("sim.dt must lie in (0, T]");
    if (n_paths < 1) throw std::invalid_argument("sim.n_paths must be at least 1");
    if (rho_trunc && !(*rho_trunc > params.R)) throw std::invalid_argument("sim.rho_trunc must exceed R");
}

std::string to_string(ExitFace face) {
    switch (face) {
        case ExitFace::payoff_floor:
            return "payoff_floor";
        case ExitFace::payoff_cap:
            return "payoff_cap";
        case ExitFace::xi_floor:
            return "xi_floor";
        case ExitFace::xi_cap:
            return "xi_cap";
        case ExitFace::theta_band:
            return "theta_band";
        case ExitFace::horizon:
            return "horizon";
        case ExitFace::stopping_rule:
            return "stopping_rule";
    }
    return "horizon";
}

McEstimate summarize(const std::vector<double>& samples) {
    McEstimate est;
    est.n = samples.size();
    if (est.n == 0) return est;
    est.mean = pairwise_sum(samples.data(), est.n) / double(est.n);
    if (est.n > 1) {
        std::vector<double> sq(est.n);
        for (std::size_t i = 0; i < est.n; ++i) sq[i] = (samples[i] - est.mean) * (samples[i] - est.mean);
        const double var = pairwise_sum(sq.data(), est.n) / double(est.n - 1);
        est.std_error = std::sqrt(var / double(est.n));
    }
    return est;
}

namespace {

std::optional<ExitFace> exit_face_of(const ModelParams& params, std::optional<double> rho, const State& x) {
    if (x.P < params.R) return ExitFace::payoff_floor;
    if (rho && x.P > *rho) return ExitFace::payoff_cap;
    if (x.xi < (rho ? 1.0 / *rho : 0.0)) return ExitFace::xi_floor;
    if (rho && x.xi > *rho) return ExitFace::xi_cap;
    if (std::abs(x.theta) > params.H) return ExitFace::theta_band;
    return std::nullopt;
}

// Caches the control-dependent powers across steps that reuse the same control.
class PolicyCursor {
public:
    PolicyCursor(const ModelParams& params, const ControlSource& source) : params_(params), source_(source) {}

    const ControlTerms& at(double t, const State& x) {
        const Control u = std::visit(
            [&](const auto& src) -> Control {
                using S = std::decay_t<decltype(src)>;
                if constexpr (std::is_same_v<S, Control>) {
                    return src;
                } else if constexpr (std::is_same_v<S, MarkovPolicy>) {
                    return src(t, x);
                } else {
                    const auto slab = src->slab_of(t);
                    if (!slab) return src->default_control();
                    if (!slab_ || *slab_ != *slab) {
                        slab_ = slab;
                        held_ = src->lookup(*slab, x);
                    }
                    return held_;
                }
            },
            source_.get());
        if (!cached_ || !(terms_.u == u)) {
            terms_ = control_terms(params_, u);
            cached_ = true;
        }
        return terms_;
    }

private:
    const ModelParams& params_;
    const ControlSource& source_;
    std::optional<std::size_t> slab_;
    Control held_;
    ControlTerms terms_;
    bool cached_ = false;
};

State step_with_terms(const ModelParams& params, const TimeFrame& frame, const State& x, const ControlTerms& u,
                      double dw, const Vec3& dw1, double epsilon, double dt, bool exact_xi_update,
                      std::optional<double> rho_trunc, double* running_cost_rate) {
    const double zeta = cutoff_zeta(params, x.theta);
    Coefficients co = coefficients(params, frame, x, zeta, u);
    if (rho_trunc) {
        const double w = truncation_cutoff(params, *rho_trunc, x);
        co.drift *= w;
        co.vol *= w;
        co.running_cost *= w;
    }
    if (running_cost_rate) *running_cost_rate = co.running_cost;

    State next;
    next.P = x.P + co.drift[0] * dt + co.vol[0] * dw;
    next.theta = x.theta + co.drift[2] * dt + co.vol[2] * dw;
    if (exact_xi_update && epsilon == 0.0) {
        // d xi = -xi h dw  =>  xi' = xi exp(-h dw - h^2 dt / 2), h = -vol_xi / xi.
        const double h = x.xi != 0.0 ? -co.vol[1] / x.xi : 0.0;
        next.xi = x.xi * std::exp(-h * dw - 0.5 * h * h * dt);
    } else {
        next.xi = x.xi + co.drift[1] * dt + co.vol[1] * dw;
    }
    if (epsilon > 0.0) {
        next.P += epsilon * dw1[0];
        next.xi += epsilon * dw1[1];
        next.theta += epsilon * dw1[2];
    }
    if (!std::isfinite(next.P) || !std::isfinite(next.xi) || !std::isfinite(next.theta)) {
        std::ostringstream msg;
        msg << "non-finite state after Euler step at t=" << frame.t << ": drift=(" << co.drift.transpose()
            << ") vol=(" << co.vol.transpose() << ") from P=" << x.P << " xi=" << x.xi << " theta=" << x.theta;
        throw std::domain_error(msg.str());
    }
    return next;
}

struct PathRun {
    PathResult result;
    std::vector<TraceRow>* trace = nullptr;
};

void run_path(const ModelParams& params, const SimConfig& config, double s, const State& y,
              const ControlSource& policy, double epsilon, Philox& rng, const PathStop& stop, PathRun& run) {
    double until = params.T;
    bool stop_is_rule = false;
    if (stop.at_time && *stop.at_time < params.T) {
        until = std::max(s, *stop.at_time);
        stop_is_rule = true;
    }
    PathResult& r = run.result;
    State x = y;
    double running = 0.0;
    r.exit_face = stop_is_rule ? ExitFace::stopping_rule : ExitFace::horizon;
    double t = s;
    if (auto face = exit_face_of(params, config.rho_trunc, x)) {
        r = {s, x, 0.0, terminal_boundary_value(x), *face};
        return;
    }
    PolicyCursor cursor(params, policy);
    const double span = until - s;
    const auto n_steps = span > 0.0 ? static_cast<std::size_t>(std::ceil(span / config.dt - 1e-9)) : 0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t_next = k + 1 == n_steps ? until : s + double(k + 1) * config.dt;
        const double h = t_next - t;
        const ControlTerms& u = cursor.at(t, x);
        if (run.trace) run.trace->push_back({t, x.P, x.xi, x.theta, u.u.eta(), u.u.c()});
        const double sqrt_h = std::sqrt(h);
        const double dw = sqrt_h * rng.normal();
        Vec3 dw1 = Vec3::Zero();
        if (epsilon > 0.0) dw1 = Vec3(rng.normal(), rng.normal(), rng.normal()) * sqrt_h;
        double rate = 0.0;
        x = step_with_terms(params, time_frame(params, t), x, u, dw, dw1, epsilon, h, config.exact_xi_update,
                            config.rho_trunc, &rate);
        running += rate * h;
        t = t_next;
        if (auto face = exit_face_of(params, config.rho_trunc, x)) {
            r.exit_face = *face;
            break;
        }
        if (stop.ball_radius) {
            const double d = std::sqrt((x.P - y.P) * (x.P - y.P) + (x.xi - y.xi) * (x.xi - y.xi) +
                                       (x.theta - y.theta) * (x.theta - y.theta));
            if (d > *stop.ball_radius) {
                r.exit_face = ExitFace::stopping_rule;
                break;
            }
        }
    }
    if (run.trace) run.trace->push_back({t, x.P, x.xi, x.theta, 0.0, 0.0});
    r.exit_time = t;
    r.exit_state = x;
    r.running = running;
    r.cost = running + terminal_boundary_value(x);
}

}  // namespace

State step_euler(const ModelParams& params, double t, const State& x, const Control& u, double dw, const Vec3& dw1,
                 double epsilon, double dt, bool exact_xi_update, std::optional<double> rho_trunc) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_euler needs dt > 0");
    return step_with_terms(params, time_frame(params, t), x, control_terms(params, u), dw, dw1, epsilon, dt,
                           exact_xi_update, rho_trunc, nullptr);
}

PathResult simulate_path(const ModelParams& params, const SimConfig& config, double s, const State& y,
                         const ControlSource& policy, double epsilon, Philox& rng, const PathStop& stop) {
    PathRun run;
    run_path(params, config, s, y, policy, epsilon, rng, stop, run);
    return run.result;
}

std::vector<PathResult> simulate_paths(const ModelParams& params, const SimConfig& config, double s,
                                       const State& y, const ControlSource& policy, double epsilon,
                                       const PathStop& stop) {
    config.validate(params);
    std::vector<PathResult> out(config.n_paths);
    parallel_for(config.n_paths, [&](std::size_t i) {
        Philox rng(config.seed, i);
        out[i] = simulate_path(params, config, s, y, policy, epsilon, rng, stop);
    });
    return out;
}

McEstimate estimate_cost(const ModelParams& params, const SimConfig& config, double s, const State& y,
                         const ControlSource& policy, double epsilon) {
    const auto paths = simulate_paths(params, config, s, y, policy, epsilon);
    std::vector<double> costs(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) costs[i] = paths[i].cost;
    return summarize(costs);
}

MartingaleReport check_xi_martingale(const ModelParams& params, const SimConfig& config, double s, const State& y,
                                     const ControlSource& policy) {
    config.validate(params);
    if (!(y.xi > 0.0)) {
        // Absorbed density: every path stays at zero.
        MartingaleReport rep;
        rep.xi0 = y.xi;
        for (double f : {0.25, 0.5, 1.0}) {
            rep.times.push_back(s + f * (params.T - s));
            rep.means.push_back({0.0, 0.0, config.n_paths});
        }
        rep.all_positive = false;
        rep.pass = true;
        return rep;
    }
    const std::vector<double> fractions{0.25, 0.5, 1.0};
    MartingaleReport rep;
    rep.xi0 = y.xi;
    for (double f : fractions) rep.times.push_back(s + f * (params.T - s));
    const std::size_t n_marks = rep.times.size();
    std::vector<double> samples(config.n_paths * n_marks);
    std::vector<char> positive(config.n_paths, 1);

    // Step mesh: multiples of dt from s, merged with the observation times.
    std::vector<double> mesh;
    const auto n_steps = static_cast<std::size_t>(std::ceil((params.T - s) / config.dt - 1e-9));
    for (std::size_t k = 0; k <= n_steps; ++k) mesh.push_back(std::min(params.T, s + double(k) * config.dt));
    mesh.insert(mesh.end(), rep.times.begin(), rep.times.end());
    std::sort(mesh.begin(), mesh.end());
    mesh.erase(std::unique(mesh.begin(), mesh.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               mesh.end());

    // Region exits do not stop these paths: the density is a martingale on its own.
    parallel_for(config.n_paths, [&](std::size_t i) {
        Philox rng(config.seed, i);
        PolicyCursor cursor(params, policy);
        State x = y;
        std::size_t mark = 0;
        for (std::size_t k = 0; k + 1 < mesh.size(); ++k) {
            const double t = mesh[k];
            const double h = mesh[k + 1] - t;
            const ControlTerms& u = cursor.at(t, x);
            const double dw = std::sqrt(h) * rng.normal();
            x = step_with_terms(params, time_frame(params, t), x, u, dw, Vec3::Zero(), 0.0, h, true, std::nullopt,
                                nullptr);
            if (!(x.xi > 0.0)) positive[i] = 0;
            while (mark < n_marks && mesh[k + 1] >= rep.times[mark] - 1e-12) {
                samples[i * n_marks + mark] = x.xi;
                ++mark;
            }
        }
    });
    rep.all_positive = std::all_of(positive.begin(), positive.end(), [](char c) { return c != 0; });
    rep.pass = rep.all_positive;
    for (std::size_t m = 0; m < n_marks; ++m) {
        std::vector<double> col(config.n_paths);
        for (std::size_t i = 0; i < config.n_paths; ++i) col[i] = samples[i * n_marks + m];
        const McEstimate est = summarize(col);
        rep.means.push_back(est);
        if (std::abs(est.mean - y.xi) > kMonteCarloSigmas * est.std_error &&
            std::abs(est.mean - y.xi) > 1e-12 * y.xi) {
            rep.pass = false;
        }
    }
    return rep;
}

double tail_bound(double kappa, double T, double level) {
    return 12.0 / level * std::sqrt(kappa * T / (2.0 * std::numbers::pi)) *
           std::exp(-level * level / (18.0 * kappa * T));
}

TailReport check_tail_bound(double kappa, double T, const std::vector<double>& levels, const SimConfig& config,
                            bool with_drift) {
    if (!(kappa > 0.0) || !(T > 0.0)) throw std::invalid_argument("tail bound needs kappa > 0 and T > 0");
    if (levels.empty()) throw std::invalid_argument("tail bound needs at least one level");
    for (double n : levels) {
        // Start point x = 0, so the largeness requirement is n > 3 max(|x|, kappa T).
        if (!(n > 3.0 * kappa * T) || n < 1.0) {
            throw std::invalid_argument("tail level " + std::to_string(n) + " is not above 3 max(|x|, kappa T) = " +
                                        std::to_string(3.0 * kappa * T));
        }
    }
    if (!(config.dt > 0.0) || config.dt > T) throw std::invalid_argument("sim.dt must lie in (0, T]");
    TailReport rep;
    rep.kappa = kappa;
    rep.horizon = T;
    rep.with_drift = with_drift;
    rep.n_paths = config.n_paths;
    rep.n_steps = static_cast<std::size_t>(std::llround(std::max(1.0, T / config.dt)));
    const double h = T / double(rep.n_steps);
    const double vol = std::sqrt((with_drift ? 0.5 : 1.0) * kappa * h);
    const double drift = with_drift ? 0.5 * kappa * h : 0.0;

    std::vector<double> running_max(config.n_paths);
    parallel_for(config.n_paths, [&](std::size_t i) {
        Philox rng(config.seed, i);
        double x = 0.0;
        double m = 0.0;
        for (std::size_t k = 0; k < rep.n_steps; ++k) {
            x += drift + vol * rng.normal();
            m = std::max(m, std::abs(x));
        }
        running_max[i] = m;
    });
    for (double n : levels) {
        TailLevel lv;
        lv.level = n;
        lv.bound = tail_bound(kappa, T, n);
        lv.exceedances = static_cast<std::size_t>(
            std::count_if(running_max.begin(), running_max.end(), [n](double m) { return m >= n; }));
        lv.empirical = double(lv.exceedances) / double(config.n_paths);
        lv.pass = lv.empirical <= lv.bound;
        rep.pass = rep.pass && lv.pass;
        rep.levels.push_back(lv);
    }
    return rep;
}

std::vector<TraceRow> trace_path(const ModelParams& params, const SimConfig& config, double s, const State& y,
                                 const ControlSource& policy, double epsilon, std::uint64_t path_index) {
    std::vector<TraceRow> rows;
    PathRun run;
    run.trace = &rows;
    Philox rng(config.seed, path_index);
    run_path(params, config, s, y, policy, epsilon, rng, {}, run);
    return rows;
}

BoundReport check_cost_bound(const ModelParams& params, const SimConfig& config, std::size_t n_triples,
                             std::uint64_t seed) {
    params.validate();
    BoundReport rep;
    rep.derived_K = gronwall_constant(growth_constant(params), params.T);
    Philox rng(seed, 0);
    SimConfig cfg = config;
    cfg.rho_trunc.reset();
    for (std::size_t n = 0; n < n_triples; ++n) {
        BoundTrial trial;
        trial.s = 0.9 * params.T * rng.uniform();
        trial.y = {params.R + 3.0 * rng.uniform(), 0.2 + 2.8 * rng.uniform(),
                   (params.H - 1.0) * (2.0 * rng.uniform() - 1.0)};
        trial.u = Control(params, params.N * rng.uniform(), params.C * rng.uniform());
        cfg.seed = seed + 1 + n;
        trial.estimate = estimate_cost(params, cfg, trial.s, trial.y, ControlSource(trial.u), 0.0);
        trial.bound = lemma41_bound(params, trial.y, rep.derived_K);
        trial.pass = std::abs(trial.estimate.mean) <= trial.bound;
        rep.violations += !trial.pass;
        rep.trials.push_back(trial);
    }
    rep.pass = rep.violations == 0;
    return rep;
}

}  // namespace pacontrol
