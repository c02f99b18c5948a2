#include "pacontrol/cli.hpp"

#include "pacontrol/constants.hpp"
#include "pacontrol/parallel.hpp"
#include "pacontrol/viscosity.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace pacontrol {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Missing or unreadable artifact from an earlier command.
class ArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json header(const RunConfig& config, const std::string& command) {
    return {{"command", command}, {"seed", config.sim.seed}, {"config", to_json(config)}};
}

json estimate_json(const McEstimate& e) { return {{"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n}}; }

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_header(const json& head) { return "# " + head.dump() + "\n"; }

std::shared_ptr<const ValueGrid> load_grid(const fs::path& out) {
    if (!fs::exists(out / "value_grid.json"))
        throw ArtifactError("missing artifact " + (out / "value_grid.json").string() + "; run solve first");
    try {
        return std::make_shared<const ValueGrid>(read_value_grid(out));
    } catch (const std::exception& e) {
        throw ArtifactError(e.what());
    }
}

double load_scheme_tolerance(const fs::path& out) {
    std::ifstream in(out / "convergence.json");
    if (!in) throw ArtifactError("missing artifact " + (out / "convergence.json").string() + "; run solve first");
    try {
        return json::parse(in).at("scheme_tolerance").get<double>();
    } catch (const json::exception& e) {
        throw ArtifactError(std::string("corrupt convergence.json: ") + e.what());
    }
}

struct LoadedPolicy {
    Candidate candidate;
    std::shared_ptr<const ValueGrid> grid;
};

LoadedPolicy load_policy(const RunConfig& config, const fs::path& out) {
    if (config.policy.kind == "constant") {
        const Control u(config.model, config.policy.eta, config.policy.c);
        return {{"constant", ControlSource(u)}, nullptr};
    }
    auto grid = load_grid(out);
    if (config.policy.kind == "greedy") {
        const GreedyPolicy greedy = extract_policy(config.model, grid);
        return {{"greedy", ControlSource(MarkovPolicy(greedy))}, grid};
    }
    const fs::path file = out / "policy_table.csv";
    if (!fs::exists(file)) throw ArtifactError("missing artifact " + file.string() + "; run export-policy first");
    try {
        auto table = std::make_shared<const PolicyTable>(read_policy_table(file));
        return {{"table", ControlSource(table)}, grid};
    } catch (const std::exception& e) {
        throw ArtifactError(e.what());
    }
}

PolicyTable synthesize(const RunConfig& config, const ValueGrid& grid) {
    const auto& d = config.discrete_policy;
    return synthesize_discrete_policy(config.model, grid, d.M, d.K0, d.delta, d.eps_target, config.start.s);
}

int verify_dpp(const RunConfig& config, const fs::path& out, json& summary) {
    auto grid = load_grid(out);
    const double delta = load_scheme_tolerance(out);
    const GreedyPolicy greedy = extract_policy(config.model, grid);
    const Candidate greedy_candidate{"greedy", ControlSource(MarkovPolicy(greedy))};
    std::vector<Candidate> candidates = constant_candidates(grid->spec().control_grid);
    candidates.push_back(greedy_candidate);
    if (fs::exists(out / "policy_table.csv")) {
        try {
            auto table = std::make_shared<const PolicyTable>(read_policy_table(out / "policy_table.csv"));
            candidates.push_back({"table", ControlSource(table)});
        } catch (const std::exception& e) {
            throw ArtifactError(e.what());
        }
    }

    json rules = json::array();
    std::ostringstream csv;
    csv << csv_header(header(config, "verify dpp"));
    csv << "rule,check,candidate,rhs_mean,rhs_se,gap,pass,extrapolated\n";
    bool pass = true;
    for (const auto& rule : config.dpp.rules) {
        const auto lower = verify_dp_lower(config.model, *grid, config.start.s, config.start.y, rule, candidates,
                                           config.sim, delta);
        const auto upper =
            verify_dp_upper(config.model, *grid, config.start.s, config.start.y, rule, greedy_candidate, config.sim, delta);
        pass = pass && lower.pass && upper.pass;
        json failures = json::array();
        for (const auto* rep : {&lower, &upper})
            for (const auto& row : rep->rows) {
                const char* check = rep == &lower ? "lower" : "upper";
                csv << to_string(rule) << ',' << check << ',' << row.name << ',' << fmt(row.rhs.mean) << ','
                    << fmt(row.rhs.std_error) << ',' << fmt(row.gap) << ',' << (row.pass ? 1 : 0) << ','
                    << row.extrapolated << '\n';
                if (!row.pass) failures.push_back({{"check", check}, {"candidate", row.name}, {"gap", row.gap}});
            }
        rules.push_back({{"rule", to_string(rule)},
                         {"v_at_start", lower.v_at_start},
                         {"lower", {{"pass", lower.pass}, {"best_rhs", lower.best_rhs}, {"gap", lower.gap}}},
                         {"upper", {{"pass", upper.pass}, {"rhs", upper.best_rhs}, {"gap", upper.gap}}},
                         {"extrapolation_warnings", lower.extrapolation_warnings + upper.extrapolation_warnings},
                         {"failures", failures}});
    }
    json report = header(config, "verify dpp");
    report["tolerance"] = delta;
    report["mc_sigmas"] = kMonteCarloSigmas;
    report["rules"] = rules;
    report["pass"] = pass;
    write_text(out / "dpp.json", report.dump(2) + "\n");
    write_text(out / "dpp.csv", csv.str());
    summary["pass"] = pass;
    summary["rules"] = rules;
    return pass ? kPass : kVerificationFailure;
}

int verify_viscosity(const RunConfig& config, const fs::path& out, json& summary) {
    auto grid = load_grid(out);
    const auto& vc = config.viscosity;
    const double tol = viscosity_tolerance(*grid, vc.c1);
    const auto& controls = grid->spec().control_grid;
    const auto sites = interior_sites(*grid, vc.margin, vc.stencil_radius);
    const auto sub = check_subsolution(grid->params(), *grid, controls, tol, sites, vc.stencil_radius);
    const auto super = check_supersolution(grid->params(), *grid, controls, tol, sites, vc.stencil_radius);
    const auto edge = boundary_sites(*grid);
    const auto edge_sub = check_subsolution(grid->params(), *grid, controls, tol, edge, vc.stencil_radius);
    const auto edge_super = check_supersolution(grid->params(), *grid, controls, tol, edge, vc.stencil_radius);

    const bool pass = sub.pass_fraction() >= vc.min_pass_fraction && super.pass_fraction() >= vc.min_pass_fraction &&
                      edge_sub.n_violations_sub == 0 && edge_super.n_violations_super == 0;
    auto rep_json = [](const ViscosityReport& r) {
        return json{{"n_sites", r.n_sites},
                    {"n_skipped", r.n_skipped},
                    {"n_violations_sub", r.n_violations_sub},
                    {"n_violations_super", r.n_violations_super},
                    {"worst_residual", r.worst_residual},
                    {"pass_fraction", r.pass_fraction()}};
    };
    json report = header(config, "verify viscosity");
    report["tolerance"] = tol;
    report["subsolution"] = rep_json(sub);
    report["supersolution"] = rep_json(super);
    report["boundary"] = {{"n_sites", edge_sub.n_sites},
                          {"n_violations_sub", edge_sub.n_violations_sub},
                          {"n_violations_super", edge_super.n_violations_super}};
    report["pass"] = pass;
    write_text(out / "viscosity.json", report.dump(2) + "\n");

    std::ostringstream csv;
    csv << csv_header(header(config, "verify viscosity"));
    csv << "k,i,j,l,residual,sub_violation,super_violation\n";
    for (std::size_t n = 0; n < sub.residuals.size(); ++n) {
        const auto& a = sub.residuals[n];
        const auto& b = super.residuals[n];
        csv << a.site.k << ',' << a.site.i << ',' << a.site.j << ',' << a.site.l << ',' << fmt(a.residual) << ','
            << (a.violation ? 1 : 0) << ',' << (b.violation ? 1 : 0) << '\n';
    }
    write_text(out / "viscosity_residuals.csv", csv.str());
    summary["pass"] = pass;
    summary["tolerance"] = tol;
    summary["subsolution"] = rep_json(sub);
    summary["supersolution"] = rep_json(super);
    return pass ? kPass : kVerificationFailure;
}

int verify_martingale(const RunConfig& config, const fs::path& out, json& summary) {
    const auto policy = load_policy(config, out);
    const auto rep = check_xi_martingale(config.model, config.sim, config.start.s, config.start.y,
                                         policy.candidate.source);
    json marks = json::array();
    for (std::size_t m = 0; m < rep.times.size(); ++m)
        marks.push_back({{"t", rep.times[m]}, {"estimate", estimate_json(rep.means[m])}});
    json report = header(config, "verify martingale");
    report["xi0"] = rep.xi0;
    report["marks"] = marks;
    report["all_positive"] = rep.all_positive;
    report["pass"] = rep.pass;
    write_text(out / "martingale.json", report.dump(2) + "\n");
    summary["pass"] = rep.pass;
    summary["marks"] = marks;
    return rep.pass ? kPass : kVerificationFailure;
}

int verify_tail(const RunConfig& config, const fs::path& out, json& summary) {
    SimConfig sim = config.sim;
    sim.n_paths = config.tail.n_paths;
    sim.dt = config.tail.dt;
    TailReport rep;
    try {
        rep = check_tail_bound(config.tail.kappa, config.tail.T, config.tail.levels, sim, config.tail.with_drift);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("tail: ") + e.what());
    }
    json levels = json::array();
    std::ostringstream csv;
    csv << csv_header(header(config, "verify tail"));
    csv << "level,bound,empirical,exceedances,pass\n";
    for (const auto& lv : rep.levels) {
        levels.push_back({{"level", lv.level},
                          {"bound", lv.bound},
                          {"empirical", lv.empirical},
                          {"exceedances", lv.exceedances},
                          {"pass", lv.pass}});
        csv << fmt(lv.level) << ',' << fmt(lv.bound) << ',' << fmt(lv.empirical) << ',' << lv.exceedances << ','
            << (lv.pass ? 1 : 0) << '\n';
    }
    json report = header(config, "verify tail");
    report["n_paths"] = rep.n_paths;
    report["n_steps"] = rep.n_steps;
    report["levels"] = levels;
    report["pass"] = rep.pass;
    write_text(out / "tail.json", report.dump(2) + "\n");
    write_text(out / "tail.csv", csv.str());
    summary["pass"] = rep.pass;
    summary["levels"] = levels;
    return rep.pass ? kPass : kVerificationFailure;
}

int verify_conditions(const RunConfig& config, const fs::path& out, json& summary) {
    const auto rep = validate_conditions(config.model, config.conditions.budget, config.conditions.seed);
    json results = json::array();
    for (const auto& r : rep.results) {
        json row = {{"name", r.name}, {"pass", r.pass}, {"constant", number(r.constant)}};
        if (r.witness)
            row["witness"] = {{"t", r.witness->t},
                              {"P", r.witness->P},
                              {"eta", r.witness->eta},
                              {"c", r.witness->c},
                              {"ratio", number(r.witness->ratio)}};
        results.push_back(row);
    }
    json report = header(config, "verify conditions");
    report["results"] = results;
    report["pass"] = rep.all_pass();
    write_text(out / "conditions.json", report.dump(2) + "\n");
    summary["pass"] = rep.all_pass();
    summary["results"] = results;
    return rep.all_pass() ? kPass : kVerificationFailure;
}

int verify_bound(const RunConfig& config, const fs::path& out, json& summary) {
    SimConfig sim = config.sim;
    sim.n_paths = config.bound.n_paths;
    const auto rep = check_cost_bound(config.model, sim, config.bound.n_triples, config.bound.seed);
    std::ostringstream csv;
    csv << csv_header(header(config, "verify bound"));
    csv << "s,P,xi,theta,eta,c,mean,std_error,bound,pass\n";
    for (const auto& t : rep.trials)
        csv << fmt(t.s) << ',' << fmt(t.y.P) << ',' << fmt(t.y.xi) << ',' << fmt(t.y.theta) << ',' << fmt(t.u.eta())
            << ',' << fmt(t.u.c()) << ',' << fmt(t.estimate.mean) << ',' << fmt(t.estimate.std_error) << ','
            << fmt(t.bound) << ',' << (t.pass ? 1 : 0) << '\n';
    json report = header(config, "verify bound");
    report["derived_K"] = rep.derived_K;
    report["n_triples"] = rep.trials.size();
    report["violations"] = rep.violations;
    report["pass"] = rep.pass;
    write_text(out / "bound.json", report.dump(2) + "\n");
    write_text(out / "bound.csv", csv.str());
    summary["pass"] = rep.pass;
    summary["violations"] = rep.violations;
    summary["derived_K"] = rep.derived_K;
    return rep.pass ? kPass : kVerificationFailure;
}

void emit(std::ostream& log, const json& summary) { log << summary.dump() << "\n"; }

}  // namespace

int cmd_solve(const RunConfig& config, const fs::path& out, std::ostream& log) {
    const auto& lc = config.ladder;
    const LadderResult ladder =
        solve_ladder(config.model, config.grid, lc.epsilon0, lc.n_max, lc.rho_schedule, lc.tol);
    const json head = header(config, "solve");
    write_value_grid(out, *ladder.grid, head);

    json rows = json::array();
    std::ostringstream csv;
    csv << csv_header(head);
    csv << "stage,rho,n,epsilon,difference\n";
    for (const auto& r : ladder.rows) {
        rows.push_back({{"stage", r.stage},
                        {"rho", r.rho},
                        {"n", r.n},
                        {"epsilon", r.epsilon},
                        {"difference", number(r.difference)}});
        csv << r.stage << ',' << fmt(r.rho) << ',' << r.n << ',' << fmt(r.epsilon) << ','
            << (std::isnan(r.difference) ? std::string() : fmt(r.difference)) << '\n';
    }
    json report = head;
    report["converged"] = ladder.converged;
    report["tol"] = std::isinf(ladder.tol) ? json("inf") : json(ladder.tol);
    report["scheme_tolerance"] = ladder.scheme_tolerance;
    report["rows"] = rows;
    write_text(out / "convergence.json", report.dump(2) + "\n");
    write_text(out / "convergence.csv", csv.str());

    const PolicyTable table = synthesize(config, *ladder.grid);
    write_policy_table(out / "policy_table.csv", table, head);

    emit(log, {{"command", "solve"},
               {"converged", ladder.converged},
               {"scheme_tolerance", ladder.scheme_tolerance},
               {"rows", ladder.rows.size()},
               {"policy_fallback_cells", table.n_fallback()},
               {"out", out.string()}});
    return ladder.converged ? kPass : kBudgetFailure;
}

int cmd_simulate(const RunConfig& config, const fs::path& out, std::ostream& log) {
    const auto policy = load_policy(config, out);
    SimConfig sim = config.sim;
    double epsilon = 0.0;
    if (policy.grid) {
        epsilon = policy.grid->spec().epsilon;
        if (!sim.rho_trunc) sim.rho_trunc = policy.grid->spec().rho;
    }
    const auto paths = simulate_paths(config.model, sim, config.start.s, config.start.y, policy.candidate.source,
                                      epsilon);
    std::vector<double> costs(paths.size());
    std::map<std::string, std::size_t> faces;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        costs[i] = paths[i].cost;
        ++faces[to_string(paths[i].exit_face)];
    }
    const McEstimate est = summarize(costs);
    json report = header(config, "simulate");
    report["policy"] = policy.candidate.name;
    report["epsilon"] = epsilon;
    report["estimate"] = estimate_json(est);
    report["exit_faces"] = faces;
    if (policy.grid) report["grid_value"] = interpolate_value(*policy.grid, config.start.s, config.start.y).value;
    write_text(out / "simulate.json", report.dump(2) + "\n");

    if (config.traces > 0) {
        std::ostringstream csv;
        csv << csv_header(header(config, "simulate"));
        csv << "path,t,P,xi,theta,eta,c\n";
        for (std::size_t p = 0; p < std::min(config.traces, sim.n_paths); ++p)
            for (const auto& r : trace_path(config.model, sim, config.start.s, config.start.y, policy.candidate.source,
                                            epsilon, p))
                csv << p << ',' << fmt(r.t) << ',' << fmt(r.P) << ',' << fmt(r.xi) << ',' << fmt(r.theta) << ','
                    << fmt(r.eta) << ',' << fmt(r.c) << '\n';
        write_text(out / "traces.csv", csv.str());
    }
    emit(log, {{"command", "simulate"}, {"policy", policy.candidate.name}, {"estimate", estimate_json(est)}});
    return kPass;
}

int cmd_verify(const RunConfig& config, const std::string& which, const fs::path& out, std::ostream& log) {
    json summary = {{"command", "verify"}, {"which", which}};
    int status = kPass;
    if (which == "dpp") {
        status = verify_dpp(config, out, summary);
    } else if (which == "viscosity") {
        status = verify_viscosity(config, out, summary);
    } else if (which == "martingale") {
        status = verify_martingale(config, out, summary);
    } else if (which == "tail") {
        status = verify_tail(config, out, summary);
    } else if (which == "conditions") {
        status = verify_conditions(config, out, summary);
    } else if (which == "bound") {
        status = verify_bound(config, out, summary);
    } else {
        throw ConfigError("verify: unknown suite '" + which +
                          "' (expected dpp, viscosity, martingale, tail, conditions or bound)");
    }
    emit(log, summary);
    return status;
}

int cmd_export_policy(const RunConfig& config, const fs::path& out, std::ostream& log) {
    auto grid = load_grid(out);
    const PolicyTable table = synthesize(config, *grid);
    write_policy_table(out / "policy_table.csv", table, header(config, "export-policy"));
    emit(log, {{"command", "export-policy"},
               {"slabs", table.n_slabs()},
               {"cells", table.n_cells()},
               {"fallback_cells", table.n_fallback()}});
    return kPass;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Principal-agent HJB solver and verification harness", "pacontrol"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir;
    std::size_t threads = 1;
    std::optional<std::uint64_t> seed;
    std::string which;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config-path", config_path, "JSON run configuration");
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
        sub->add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "Override sim.seed");
    };
    auto* solve = app.add_subcommand("solve", "Run the regularization ladder and write the value grid");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo cost of the configured policy");
    auto* verify = app.add_subcommand("verify", "Run one verification suite");
    auto* export_policy = app.add_subcommand("export-policy", "Synthesize the discrete policy table");
    verify->add_option("which", which, "dpp | viscosity | martingale | tail | conditions | bound")->required();
    for (auto* sub : {solve, simulate, verify, export_policy}) add_common(sub);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kPass;
    } catch (const CLI::ParseError& e) {
        err << json{{"status", kUsageError}, {"error", e.what()}}.dump() << "\n";
        return kUsageError;
    }

    try {
        if (config_path.empty()) throw ConfigError("no configuration given");
        RunConfig config = load_config(config_path);
        if (seed) config.sim.seed = *seed;
        if (!out_dir.empty()) config.output_dir = out_dir;
        set_thread_count(threads);
        const fs::path dir = config.output_dir;
        if (*solve) return cmd_solve(config, dir, out);
        if (*simulate) return cmd_simulate(config, dir, out);
        if (*verify) return cmd_verify(config, which, dir, out);
        return cmd_export_policy(config, dir, out);
    } catch (const ConfigError& e) {
        err << json{{"status", kUsageError}, {"error", e.what()}}.dump() << "\n";
        return kUsageError;
    } catch (const ArtifactError& e) {
        err << json{{"status", kUsageError}, {"error", e.what()}}.dump() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << json{{"status", kBudgetFailure}, {"error", e.what()}}.dump() << "\n";
        return kBudgetFailure;
    }
}

}  // namespace pacontrol
