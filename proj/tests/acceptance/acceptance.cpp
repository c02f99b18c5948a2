#include "pacontrol/config.hpp"
#include "pacontrol/constants.hpp"
#include "pacontrol/dpp.hpp"
#include "pacontrol/hjb.hpp"
#include "pacontrol/sde.hpp"
#include "pacontrol/viscosity.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

using namespace pacontrol;

namespace {

int n_failed = 0;

void report(int id, bool pass, const std::string& title, const std::string& detail) {
    std::printf("criterion %2d [%s] %s: %s\n", id, pass ? "PASS" : "FAIL", title.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++n_failed;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Returns the frozen grid for reuse by criterion 7.
std::shared_ptr<const ValueGrid> criterion_frozen() {
    Stopwatch clock;
    const ModelParams p = frozen_payoff_model();
    GridSpec spec;
    spec.rho = 4.0;
    spec.nP = 40;
    spec.nXi = 40;
    spec.nTheta = 20;
    spec.nT = 50;
    spec.control_grid = ControlGrid::uniform(p, 5, 3);
    const auto ladder = solve_ladder(p, spec, 0.5, 4, {4.0}, 1e-2);
    const ValueGrid& g = *ladder.grid;

    double err = 0.0;
    double scale = 0.0;
    for (std::size_t k = 0; k < spec.nT; ++k)
        for (std::size_t i = 0; i < spec.nP; ++i)
            for (std::size_t j = 0; j < spec.nXi; ++j)
                for (std::size_t l = 0; l < spec.nTheta; ++l) {
                    const State x = g.node(i, j, l);
                    err = std::max(err, std::abs(g.at(k, i, j, l) + x.P * x.xi));
                    scale = std::max(scale, x.P * x.xi);
                }
    const double solve_seconds = clock.seconds();

    SimConfig cfg;
    cfg.n_paths = 100000;
    cfg.dt = 2e-3;
    const State y{2.0, 1.0, 1.0};
    const auto policy = extract_policy(p, ladder.grid);
    const auto est = estimate_cost(p, cfg, 0.0, y, MarkovPolicy(policy), 0.0);
    const double target = -y.P * y.xi;
    const bool grid_ok = ladder.converged && err <= 1e-2 * scale;
    const bool mc_ok = std::abs(est.mean - target) <= kMonteCarloSigmas * est.std_error + 1e-12;
    const bool time_ok = clock.seconds() <= 120.0;
    report(1, grid_ok && mc_ok && time_ok, "frozen-payoff exact solution",
           "max|V+P xi| = " + fmt("%.3g", err) + " vs " + fmt("%.3g", 1e-2 * scale) + ", ladder rows " +
               std::to_string(ladder.rows.size()) + ", MC " + fmt("%.5f", est.mean) + " +- " +
               fmt("%.5f", est.std_error) + " vs " + fmt("%.5f", target) + ", solve " + fmt("%.1f", solve_seconds) +
               " s, total " + fmt("%.1f", clock.seconds()) + " s");
    return ladder.grid;
}

void criterion_martingale(const RunConfig& desk) {
    SimConfig cfg = desk.sim;
    cfg.n_paths = 100000;
    const auto rep = check_xi_martingale(desk.model, cfg, 0.0, {2.0, 1.0, 1.0}, Control(desk.model, 0.5, 0.5));
    std::string detail;
    for (std::size_t m = 0; m < rep.times.size(); ++m) {
        const double z = (rep.means[m].mean - rep.xi0) / rep.means[m].std_error;
        detail += "t=" + fmt("%.2f", rep.times[m]) + " z=" + fmt("%+.2f", z) + " ";
    }
    detail += rep.all_positive ? "all paths positive" : "non-positive path";
    report(2, rep.pass, "Girsanov martingale", detail);
}

void criterion_bound(const RunConfig& desk) {
    SimConfig cfg = desk.sim;
    cfg.n_paths = desk.bound.n_paths;
    const auto rep = check_cost_bound(desk.model, cfg, 20, desk.bound.seed);
    double worst = 0.0;
    for (const auto& t : rep.trials) worst = std::max(worst, std::abs(t.estimate.mean) / t.bound);
    report(3, rep.pass && rep.trials.size() == 20, "a-priori cost bound",
           std::to_string(rep.violations) + " violations in " + std::to_string(rep.trials.size()) +
               " triples, K = " + fmt("%.4f", rep.derived_K) + ", worst |mean|/bound = " + fmt("%.3g", worst));
}

void criterion_tail() {
    SimConfig cfg;
    cfg.n_paths = 1000000;
    cfg.dt = 0.005;
    cfg.seed = 20240601;
    const auto rep = check_tail_bound(1.0, 1.0, {3.5, 4.0, 5.0}, cfg);
    std::string detail;
    for (const auto& lv : rep.levels)
        detail += "n=" + fmt("%.1f", lv.level) + ": " + fmt("%.3g", lv.empirical) + " <= " + fmt("%.4f", lv.bound) + " ";
    report(4, rep.pass, "tail bound", detail);
}

void criteria_dpp(const RunConfig& desk, const LadderResult& ladder) {
    const ModelParams& p = desk.model;
    const ValueGrid& g = *ladder.grid;
    const State y = desk.start.y;
    const double s = desk.start.s;
    auto candidates = constant_candidates(g.spec().control_grid);
    const Candidate greedy{"greedy", MarkovPolicy(extract_policy(p, ladder.grid))};
    candidates.push_back(greedy);

    bool lower_ok = true;
    bool upper_ok = true;
    std::string lower_detail;
    std::string upper_detail;
    for (const auto& rule : desk.dpp.rules) {
        const auto lo = verify_dp_lower(p, g, s, y, rule, candidates, desk.sim, ladder.scheme_tolerance);
        double worst = INFINITY;
        for (const auto& row : lo.rows) worst = std::min(worst, row.gap + 4.0 * row.rhs.std_error);
        lower_ok = lower_ok && lo.pass;
        lower_detail += to_string(rule) + " min(gap+4SE) " + fmt("%+.4f", worst) + "; ";

        const auto up = verify_dp_upper(p, g, s, y, rule, greedy, desk.sim, ladder.scheme_tolerance);
        upper_ok = upper_ok && up.pass;
        upper_detail += to_string(rule) + " gap " + fmt("%+.4f", up.gap) + " SE " +
                        fmt("%.4f", up.rows.front().rhs.std_error) + "; ";
    }
    const std::string tol = "scheme tol " + fmt("%.4f", ladder.scheme_tolerance);
    report(5, lower_ok, "DP lower inequality",
           std::to_string(candidates.size()) + " candidates; " + lower_detail + "bound -" + tol);
    report(6, upper_ok, "DP upper inequality (greedy)", upper_detail + "bound +" + tol + " + 4SE");
}

void criterion_viscosity(const RunConfig& desk, const ValueGrid& g, const ValueGrid& frozen) {
    const double tol = viscosity_tolerance(g, desk.viscosity.c1);
    const auto sites = interior_sites(g, desk.viscosity.margin, desk.viscosity.stencil_radius);
    const auto& cg = g.spec().control_grid;
    const auto sub = check_subsolution(desk.model, g, cg, tol, sites, desk.viscosity.stencil_radius);
    const auto sup = check_supersolution(desk.model, g, cg, tol, sites, desk.viscosity.stencil_radius);
    const bool desk_ok = sub.pass_fraction() >= 0.99 && sup.pass_fraction() >= 0.99;

    const ModelParams fp = frozen_payoff_model();
    auto fsites = interior_sites(frozen, desk.viscosity.margin, desk.viscosity.stencil_radius);
    const auto bsites = boundary_sites(frozen);
    fsites.insert(fsites.end(), bsites.begin(), bsites.end());
    const auto& fcg = frozen.spec().control_grid;
    const auto fsub = check_subsolution(fp, frozen, fcg, 1e-2, fsites);
    const auto fsup = check_supersolution(fp, frozen, fcg, 1e-2, fsites);
    const bool frozen_ok = fsub.n_violations_sub == 0 && fsup.n_violations_super == 0 && fsub.n_skipped == 0;

    report(7, desk_ok && frozen_ok, "viscosity residuals",
           "desk tol " + fmt("%.3f", tol) + ": sub " + fmt("%.4f", sub.pass_fraction()) + " (worst " +
               fmt("%+.3f", sub.worst_residual) + "), super " + fmt("%.4f", sup.pass_fraction()) + " (worst " +
               fmt("%+.3f", sup.worst_residual) + ") over " + std::to_string(sites.size()) + " sites; frozen " +
               std::to_string(fsites.size()) + " sites at 1e-2: " + std::to_string(fsub.n_violations_sub) + "/" +
               std::to_string(fsup.n_violations_super) + " violations, worst " +
               fmt("%.2g", std::max(std::abs(fsub.worst_residual), std::abs(fsup.worst_residual))));
}

void criterion_comparison(const RunConfig& desk, const ValueGrid& base) {
    ModelParams dear = desk.model;
    dear.k *= 2.0;
    const auto doubled = solve_regularized(dear, base.spec());
    // Baseline W must lie below the dearer V.
    const auto cmp = check_comparison(base, doubled, 1e-10);

    double order_diff = 0.0;
    for (const auto order : {NodeOrder::reversed, NodeOrder::shuffled}) {
        const auto other = solve_regularized(desk.model, base.spec(), {order, 7});
        for (std::size_t n = 0; n < base.values().size(); ++n)
            order_diff = std::max(order_diff, std::abs(other.values()[n] - base.values()[n]));
    }
    report(8, cmp.pass && order_diff <= 1e-12, "comparison and uniqueness surrogates",
           "max(V_k - V_2k) = " + fmt("%.3g", cmp.max_difference) + ", permuted-order max difference " +
               fmt("%.3g", order_diff));
}

void criterion_ladder(const LadderResult& ladder, const std::vector<double>& schedule, std::size_t n_max) {
    bool ok = true;
    std::string detail;
    for (double rho : schedule) {
        std::vector<double> diffs;
        for (const auto& r : ladder.rows)
            if (r.stage == "epsilon" && r.rho == rho && !std::isnan(r.difference)) diffs.push_back(r.difference);
        ok = ok && diffs.size() == n_max - 1;
        for (std::size_t m = 1; m < diffs.size(); ++m) ok = ok && diffs[m] < diffs[m - 1];
        detail += "rho " + fmt("%g", rho) + ":";
        for (double d : diffs) detail += " " + fmt("%.4f", d);
        detail += "; ";
    }
    std::vector<double> rho_diffs;
    for (const auto& r : ladder.rows)
        if (r.stage == "rho") rho_diffs.push_back(r.difference);
    ok = ok && rho_diffs.size() == schedule.size() - 1;
    for (std::size_t m = 1; m < rho_diffs.size(); ++m) ok = ok && rho_diffs[m] < rho_diffs[m - 1];
    detail += "rho:";
    for (double d : rho_diffs) detail += " " + fmt("%.4f", d);
    report(9, ok, "ladder Cauchy behaviour", detail);
}

void criterion_discrete_policy(const RunConfig& desk, const LadderResult& ladder) {
    const ValueGrid& g = *ladder.grid;
    const auto& dp = desk.discrete_policy;
    const auto table = std::make_shared<const PolicyTable>(
        synthesize_discrete_policy(desk.model, g, dp.M, dp.K0, dp.delta, dp.eps_target, desk.start.s));
    SimConfig cfg = desk.sim;
    cfg.rho_trunc = g.spec().rho;
    const auto est = estimate_cost(desk.model, cfg, desk.start.s, desk.start.y, table, g.spec().epsilon);
    const double v = interpolate_value(g, desk.start.s, desk.start.y).value;
    const double allowed = dp.eps_target + ladder.scheme_tolerance + 4.0 * est.std_error;
    report(10, std::abs(est.mean - v) <= allowed, "discrete Markov policy",
           "MC " + fmt("%.4f", est.mean) + " +- " + fmt("%.4f", est.std_error) + " vs V " + fmt("%.4f", v) +
               ", |gap| " + fmt("%.4f", std::abs(est.mean - v)) + " <= " + fmt("%.4f", allowed) + ", " +
               std::to_string(table->n_fallback()) + " of " + std::to_string(dp.M * table->n_cells()) +
               " cells fall back");
}

}  // namespace

int main() {
    Stopwatch total;
    const RunConfig desk = desk_config();

    const auto frozen = criterion_frozen();
    criterion_martingale(desk);
    criterion_bound(desk);
    criterion_tail();

    const auto ladder = solve_ladder(desk.model, desk.grid, desk.ladder.epsilon0, desk.ladder.n_max,
                                     desk.ladder.rho_schedule, desk.ladder.tol);
    std::printf("desk ladder: converged %s, scheme tolerance %.4f, final rho %g, epsilon %g\n",
                ladder.converged ? "yes" : "no", ladder.scheme_tolerance, ladder.grid->spec().rho,
                ladder.grid->spec().epsilon);
    criteria_dpp(desk, ladder);
    criterion_viscosity(desk, *ladder.grid, *frozen);
    criterion_comparison(desk, *ladder.grid);
    criterion_ladder(ladder, desk.ladder.rho_schedule, desk.ladder.n_max);
    criterion_discrete_policy(desk, ladder);

    std::printf("%d of 10 criteria failed; %.1f s\n", n_failed, total.seconds());
    return n_failed == 0 ? 0 : 1;
}
