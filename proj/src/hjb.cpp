#include "pacontrol/hjb.hpp"

#include "pacontrol/parallel.hpp"
#include "pacontrol/rng.hpp"
#include "stencil.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pacontrol {

using detail::NodeDiffs;

void GridSpec::validate(const ModelParams& params) const {
    if (!(rho > params.R) || !(rho > 1.0) || !std::isfinite(rho))
        throw std::invalid_argument("grid.rho must exceed max(R, 1)");
    if (nP < 3 || nXi < 3 || nTheta < 3) throw std::invalid_argument("grid needs at least 3 nodes per space axis");
    if (nT < 2) throw std::invalid_argument("grid.nT must be at least 2");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("grid.epsilon must be >= 0");
    control_grid.validate(params);
    if (control_grid.size() > std::numeric_limits<std::uint16_t>::max())
        throw std::invalid_argument("control grid too large");
}

double GridSpec::max_spacing(const ModelParams& params) const {
    return std::max({dP(params), dXi(), dTheta(params)});
}

double GridSpec::P(const ModelParams& params, std::size_t i) const {
    return i + 1 == nP ? rho : params.R + double(i) * dP(params);
}
double GridSpec::xi(std::size_t j) const { return j + 1 == nXi ? rho : 1.0 / rho + double(j) * dXi(); }
double GridSpec::theta(const ModelParams& params, std::size_t l) const {
    return l + 1 == nTheta ? params.H : -params.H + double(l) * dTheta(params);
}
double GridSpec::t(const ModelParams& params, std::size_t k) const {
    return k + 1 == nT ? params.T : double(k) * dt(params);
}

GridSpec respaced(const ModelParams& params, const GridSpec& base, double rho) {
    GridSpec out = base;
    out.rho = rho;
    const double hP = base.dP(params);
    const double hXi = base.dXi();
    out.nP = std::max<std::size_t>(3, std::size_t(std::lround((rho - params.R) / hP)) + 1);
    out.nXi = std::max<std::size_t>(3, std::size_t(std::lround((rho - 1.0 / rho) / hXi)) + 1);
    return out;
}

bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.rho == b.rho && a.nP == b.nP && a.nXi == b.nXi && a.nTheta == b.nTheta && a.nT == b.nT &&
           a.epsilon == b.epsilon && a.control_grid.eta_levels == b.control_grid.eta_levels &&
           a.control_grid.c_levels == b.control_grid.c_levels;
}

ValueGrid::ValueGrid(ModelParams params, GridSpec spec)
    : params_(std::move(params)), spec_(std::move(spec)),
      values_(spec_.nT * spec_.n_space(), 0.0), policy_(spec_.nT * spec_.n_space(), 0) {}

State ValueGrid::node(std::size_t i, std::size_t j, std::size_t l) const {
    return {spec_.P(params_, i), spec_.xi(j), spec_.theta(params_, l)};
}

bool ValueGrid::is_boundary(std::size_t i, std::size_t j, std::size_t l) const {
    return i == 0 || j == 0 || l == 0 || i + 1 == spec_.nP || j + 1 == spec_.nXi || l + 1 == spec_.nTheta;
}

namespace {

struct Strides {
    std::size_t s[3];
};

NodeDiffs node_diffs(const double* v, std::size_t n, const Strides& st) {
    NodeDiffs d;
    const double c = v[n];
    double m = 0.0;
    for (int i = 0; i < 3; ++i) {
        d.up[i] = v[n + st.s[i]] - c;
        d.down[i] = v[n - st.s[i]] - c;
        m = std::max({m, std::abs(d.up[i]), std::abs(d.down[i])});
    }
    for (int p = 0; p < 3; ++p) {
        const std::size_t a = st.s[detail::kPairA[p]];
        const std::size_t b = st.s[detail::kPairB[p]];
        d.pp[p] = v[n + a + b] - c;
        d.mm[p] = v[n - a - b] - c;
        d.pm[p] = v[n + a - b] - c;
        d.mp[p] = v[n - a + b] - c;
    }
    d.max_abs = m;
    return d;
}

struct NodeBest {
    double value = 0.0;
    double rate = 0.0;
    double inflation = 0.0;
    std::uint16_t index = 0;
};

/// min over controls of G^u V + L at one node.
NodeBest best_control(const ModelParams& params, const TimeFrame& frame, const State& x, double zeta,
                      const std::vector<ControlTerms>& terms, double eps2, const std::array<double, 3>& h,
                      const NodeDiffs& d) {
    NodeBest best;
    double best_scale = 0.0;
    for (std::size_t u = 0; u < terms.size(); ++u) {
        const Coefficients co = coefficients(params, frame, x, zeta, terms[u]);
        const auto g = detail::discrete_generator(co.drift, co.vol, eps2, h, d);
        const double value = g.value + co.running_cost;
        const double scale = g.rate * d.max_abs + std::abs(co.running_cost);
        if (u == 0 || detail::strictly_better(value, best.value, std::max(scale, best_scale))) {
            best.value = value;
            best.index = std::uint16_t(u);
            best_scale = scale;
        }
        best.rate = std::max(best.rate, g.rate);
        best.inflation = std::max(best.inflation, g.inflation);
    }
    return best;
}

}  // namespace

ValueGrid solve_regularized(const ModelParams& params, const GridSpec& spec, const SolveOptions& options) {
    params.validate();
    spec.validate(params);
    if (!(options.cfl_safety > 0.0 && options.cfl_safety <= 1.0))
        throw std::invalid_argument("cfl_safety must lie in (0, 1]");

    ValueGrid grid(params, spec);
    const std::size_t ns = spec.n_space();
    const Strides st{{spec.nXi * spec.nTheta, spec.nTheta, 1}};
    const std::array<double, 3> h{spec.dP(params), spec.dXi(), spec.dTheta(params)};
    const double eps2 = spec.epsilon * spec.epsilon;

    std::vector<ControlTerms> terms;
    terms.reserve(spec.control_grid.size());
    for (std::size_t u = 0; u < spec.control_grid.size(); ++u)
        terms.push_back(control_terms(params, spec.control_grid.at(u)));

    std::vector<State> states(ns);
    std::vector<double> zeta(spec.nTheta);
    std::vector<std::size_t> interior;
    for (std::size_t l = 0; l < spec.nTheta; ++l) zeta[l] = cutoff_zeta(params, spec.theta(params, l));
    for (std::size_t i = 0; i < spec.nP; ++i)
        for (std::size_t j = 0; j < spec.nXi; ++j)
            for (std::size_t l = 0; l < spec.nTheta; ++l) {
                const std::size_t n = (i * spec.nXi + j) * spec.nTheta + l;
                states[n] = grid.node(i, j, l);
                if (!grid.is_boundary(i, j, l)) interior.push_back(n);
            }
    if (options.order == NodeOrder::reversed) {
        std::reverse(interior.begin(), interior.end());
    } else if (options.order == NodeOrder::shuffled) {
        Philox rng(options.shuffle_seed, 0);
        for (std::size_t a = interior.size(); a > 1; --a) {
            const auto b = std::size_t(rng.uniform() * double(a));
            std::swap(interior[a - 1], interior[std::min(b, a - 1)]);
        }
    }

    std::vector<double> cur(ns);
    std::vector<double> next(ns);
    for (std::size_t n = 0; n < ns; ++n) cur[n] = terminal_boundary_value(states[n]);
    next = cur;
    std::copy(cur.begin(), cur.end(), grid.values().begin() + std::ptrdiff_t((spec.nT - 1) * ns));

    std::vector<double> rate(interior.size());
    std::vector<double> inflation(interior.size());
    std::vector<std::uint16_t> choice(interior.size());
    std::size_t inflated_evals = 0;
    std::size_t total_evals = 0;

    auto pass = [&](double t_new, double dt) {
        const TimeFrame frame = time_frame(params, t_new);
        parallel_for(interior.size(), [&](std::size_t q) {
            const std::size_t n = interior[q];
            const NodeDiffs d = node_diffs(cur.data(), n, st);
            const NodeBest best =
                best_control(params, frame, states[n], zeta[n % spec.nTheta], terms, eps2, h, d);
            next[n] = cur[n] + dt * best.value;
            rate[q] = best.rate;
            inflation[q] = best.inflation;
            choice[q] = best.index;
        });
        return *std::max_element(rate.begin(), rate.end());
    };

    SolveDiagnostics& diag = grid.diagnostics;
    double rate_estimate = 0.0;
    for (std::size_t kk = spec.nT - 1; kk-- > 0;) {
        const double target = spec.t(params, kk);
        double tau = spec.t(params, kk + 1);
        while (tau > target) {
            const double remaining = tau - target;
            double dt = rate_estimate > 0.0 ? std::min(remaining, options.cfl_safety / rate_estimate) : remaining;
            if (remaining - dt < 1e-9 * remaining) dt = remaining;
            const double t_new = dt == remaining ? target : tau - dt;
            const double max_rate = pass(t_new, dt);
            rate_estimate = max_rate;
            diag.max_rate = std::max(diag.max_rate, max_rate);
            if (max_rate * dt > 1.0 + 1e-12) {
                ++diag.cfl_retries;
                continue;
            }
            for (std::size_t q = 0; q < interior.size(); ++q) {
                if (inflation[q] > 0.0) ++inflated_evals;
                diag.max_inflation = std::max(diag.max_inflation, inflation[q]);
            }
            total_evals += interior.size();
            std::swap(cur, next);
            tau = t_new;
            ++diag.substeps;
        }
        for (std::size_t n = 0; n < ns; ++n)
            if (!std::isfinite(cur[n])) throw std::domain_error("value grid became non-finite");
        std::copy(cur.begin(), cur.end(), grid.values().begin() + std::ptrdiff_t(kk * ns));
        for (std::size_t q = 0; q < interior.size(); ++q) grid.policy()[kk * ns + interior[q]] = choice[q];
        next = cur;
    }
    diag.inflated_fraction = total_evals ? double(inflated_evals) / double(total_evals) : 0.0;
    return grid;
}

namespace {

struct AxisPos {
    std::size_t lo = 0;
    double w = 0.0;
    bool outside = false;
};

AxisPos locate(double x, double start, double step, std::size_t n) {
    AxisPos a;
    double s = (x - start) / step;
    const double tol = 1e-12 * double(n);
    if (s < -tol || s > double(n - 1) + tol) a.outside = true;
    s = std::clamp(s, 0.0, double(n - 1));
    a.lo = std::min(std::size_t(s), n - 2);
    a.w = s - double(a.lo);
    return a;
}

}  // namespace

Interpolated interpolate_value(const ValueGrid& grid, double t, const State& x) {
    const auto& sp = grid.spec();
    const auto& p = grid.params();
    const AxisPos at = locate(t, 0.0, sp.dt(p), sp.nT);
    const AxisPos aP = locate(x.P, p.R, sp.dP(p), sp.nP);
    const AxisPos aX = locate(x.xi, 1.0 / sp.rho, sp.dXi(), sp.nXi);
    const AxisPos aT = locate(x.theta, -p.H, sp.dTheta(p), sp.nTheta);
    double v = 0.0;
    for (int ct = 0; ct < 2; ++ct) {
        const double wt = ct ? at.w : 1.0 - at.w;
        if (wt == 0.0) continue;
        for (int ci = 0; ci < 2; ++ci) {
            const double wi = ci ? aP.w : 1.0 - aP.w;
            if (wi == 0.0) continue;
            for (int cj = 0; cj < 2; ++cj) {
                const double wj = cj ? aX.w : 1.0 - aX.w;
                if (wj == 0.0) continue;
                for (int cl = 0; cl < 2; ++cl) {
                    const double wl = cl ? aT.w : 1.0 - aT.w;
                    if (wl == 0.0) continue;
                    v += wt * wi * wj * wl * grid.at(at.lo + ct, aP.lo + ci, aX.lo + cj, aT.lo + cl);
                }
            }
        }
    }
    return {v, at.outside || aP.outside || aX.outside || aT.outside};
}

double grid_difference_on(const ValueGrid& region, const ValueGrid& a, const ValueGrid& b) {
    const auto& sp = region.spec();
    const auto& p = region.params();
    double worst = 0.0;
    for (std::size_t k = 0; k < sp.nT; ++k) {
        const double t = sp.t(p, k);
        for (std::size_t i = 0; i < sp.nP; ++i)
            for (std::size_t j = 0; j < sp.nXi; ++j)
                for (std::size_t l = 0; l < sp.nTheta; ++l) {
                    const State x = region.node(i, j, l);
                    worst = std::max(worst, std::abs(interpolate_value(a, t, x).value -
                                                     interpolate_value(b, t, x).value));
                }
    }
    return worst;
}

LadderResult solve_ladder(const ModelParams& params, const GridSpec& base_spec, double epsilon0, std::size_t n_max,
                          const std::vector<double>& rho_schedule, double tol, const SolveOptions& options) {
    if (!(epsilon0 > 0.0 && epsilon0 < 1.0)) throw std::invalid_argument("ladder.epsilon0 must lie in (0, 1)");
    if (n_max < 1) throw std::invalid_argument("ladder.n_max must be at least 1");
    if (!(tol > 0.0)) throw std::invalid_argument("ladder.tol must be positive");
    // An infinite tolerance accepts the first solve.
    std::vector<double> rhos = rho_schedule.empty() ? std::vector<double>{base_spec.rho} : rho_schedule;
    for (std::size_t r = 1; r < rhos.size(); ++r)
        if (!(rhos[r] > rhos[r - 1])) throw std::invalid_argument("ladder.rho_schedule must increase");

    LadderResult out;
    out.tol = tol;
    const bool single = std::isinf(tol);
    std::shared_ptr<const ValueGrid> region;
    std::shared_ptr<const ValueGrid> prev_rho;
    bool eps_converged = single;
    bool rho_converged = single || rhos.size() == 1;
    double last_eps_diff = 0.0;
    double last_rho_diff = 0.0;
    for (double rho : rhos) {
        GridSpec spec = respaced(params, base_spec, rho);
        std::shared_ptr<const ValueGrid> prev;
        eps_converged = single;
        for (std::size_t n = 1; n <= n_max; ++n) {
            spec.epsilon = std::pow(epsilon0, double(n));
            auto g = std::make_shared<const ValueGrid>(solve_regularized(params, spec, options));
            LadderRow row{"epsilon", rho, n, spec.epsilon};
            if (prev) {
                double d = 0.0;
                for (std::size_t q = 0; q < g->values().size(); ++q)
                    d = std::max(d, std::abs(g->values()[q] - prev->values()[q]));
                row.difference = d;
                last_eps_diff = d;
                eps_converged = d < tol;
            }
            out.rows.push_back(row);
            prev = g;
            if (eps_converged) break;
        }
        if (!region) region = prev;
        if (prev_rho) {
            LadderRow row{"rho", rho, out.rows.back().n, spec.epsilon};
            row.difference = grid_difference_on(*region, *prev, *prev_rho);
            last_rho_diff = row.difference;
            rho_converged = row.difference < tol;
            out.rows.push_back(row);
        }
        prev_rho = prev;
        if (single || (prev_rho != region && rho_converged)) break;
    }
    out.grid = prev_rho;
    out.converged = eps_converged && rho_converged;
    out.scheme_tolerance = std::max(last_eps_diff, last_rho_diff);
    return out;
}

GreedyPolicy::GreedyPolicy(std::shared_ptr<const ValueGrid> grid) : grid_(std::move(grid)) {
    if (!grid_) throw std::invalid_argument("greedy policy needs a grid");
}

GreedyPolicy::Query GreedyPolicy::query(double t, const State& x) const {
    const auto& sp = grid_->spec();
    const auto& p = grid_->params();
    bool outside = false;
    auto nearest = [&](double v, double start, double step, std::size_t n, std::size_t lo, std::size_t hi) {
        const double s = (v - start) / step;
        const double tol = 1e-12 * double(n);
        if (s < -tol || s > double(n - 1) + tol) outside = true;
        const double r = std::round(std::clamp(s, double(lo), double(hi)));
        return std::size_t(r);
    };
    const std::size_t k = nearest(t, 0.0, sp.dt(p), sp.nT, 0, sp.nT - 2);
    const std::size_t i = nearest(x.P, p.R, sp.dP(p), sp.nP, 1, sp.nP - 2);
    const std::size_t j = nearest(x.xi, 1.0 / sp.rho, sp.dXi(), sp.nXi, 1, sp.nXi - 2);
    const std::size_t l = nearest(x.theta, -p.H, sp.dTheta(p), sp.nTheta, 1, sp.nTheta - 2);
    if (outside) return {Control::unchecked(0.0, 0.0), true};
    return {sp.control_grid.at(grid_->policy()[grid_->index(k, i, j, l)]), false};
}

GreedyPolicy extract_policy(const ModelParams& params, std::shared_ptr<const ValueGrid> grid) {
    if (!grid) throw std::invalid_argument("extract_policy needs a grid");
    if (params.T != grid->params().T || params.R != grid->params().R || params.H != grid->params().H)
        throw std::invalid_argument("model does not match the solved grid");
    return GreedyPolicy(std::move(grid));
}

PolicyTable synthesize_discrete_policy(const ModelParams& params, const ValueGrid& grid, std::size_t M,
                                       std::size_t K0, double delta, double eps_target, double s) {
    const auto& sp = grid.spec();
    if (M < 1) throw std::invalid_argument("discrete_policy.M must be at least 1");
    if (!(eps_target > 0.0)) throw std::invalid_argument("discrete_policy.eps_target must be positive");
    const double r = sp.rho - delta;
    if (!(delta > 0.0) || !(r > params.R) || !(r > 1.0 / r))
        throw std::invalid_argument("discrete_policy.delta must leave a non-empty region");
    if (!(s >= 0.0 && s < params.T - delta)) throw std::invalid_argument("start time must lie before T - delta");

    PolicyTable table(s, params.T - delta, M, {params.R, 1.0 / r, -params.H}, {r, r, params.H},
                      box_divisions(K0), Control::unchecked(0.0, 0.0));
    const std::array<double, 3> h{sp.dP(params), sp.dXi(), sp.dTheta(params)};
    const double eps2 = sp.epsilon * sp.epsilon;
    const double dt_grid = sp.dt(params);
    const double threshold = eps_target / (4.0 * params.T);

    std::vector<ControlTerms> terms;
    for (std::size_t u = 0; u < sp.control_grid.size(); ++u)
        terms.push_back(control_terms(params, sp.control_grid.at(u)));

    const std::size_t nc = table.n_cells();
    parallel_for(M * nc, [&](std::size_t q) {
        const std::size_t slab = q / nc;
        const std::size_t cell = q % nc;
        const double t = table.slab_start(slab);
        const State x = table.cell_center(cell);
        // Stencil points past the solved box take the exit data -P xi.
        auto W = [&](double tt, const State& y) {
            const bool outside = y.P < params.R || y.P > sp.rho || y.xi < 1.0 / sp.rho || y.xi > sp.rho ||
                                 std::abs(y.theta) > params.H;
            return outside ? terminal_boundary_value(y) : interpolate_value(grid, tt, y).value;
        };
        auto shifted = [&](int i, double di, int j, double dj) {
            double c[3] = {x.P, x.xi, x.theta};
            c[i] += di * h[i];
            if (j >= 0) c[j] += dj * h[j];
            return State{c[0], c[1], c[2]};
        };
        const double w0 = W(t, x);
        NodeDiffs d;
        for (int i = 0; i < 3; ++i) {
            d.up[i] = W(t, shifted(i, 1, -1, 0)) - w0;
            d.down[i] = W(t, shifted(i, -1, -1, 0)) - w0;
            d.max_abs = std::max({d.max_abs, std::abs(d.up[i]), std::abs(d.down[i])});
        }
        for (int p = 0; p < 3; ++p) {
            const int a = detail::kPairA[p];
            const int b = detail::kPairB[p];
            d.pp[p] = W(t, shifted(a, 1, b, 1)) - w0;
            d.mm[p] = W(t, shifted(a, -1, b, -1)) - w0;
            d.pm[p] = W(t, shifted(a, 1, b, -1)) - w0;
            d.mp[p] = W(t, shifted(a, -1, b, 1)) - w0;
        }
        const double dt = std::min(dt_grid, params.T - t);
        const double w_t = (W(t + dt, x) - w0) / dt;
        const NodeBest best =
            best_control(params, time_frame(params, t), x, cutoff_zeta(params, x.theta), terms, eps2, h, d);
        auto& out = table.at(slab, cell);
        out.residual = w_t + best.value;
        if (out.residual > threshold) {
            out.fallback = true;
            out.u = table.default_control();
        } else {
            out.u = sp.control_grid.at(best.index);
        }
    });
    return table;
}

}  // namespace pacontrol
