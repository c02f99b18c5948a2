#include "pacontrol/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

namespace pacontrol {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(section + ": expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items())
        if (!ok.count(item.key()))
            throw ConfigError(section + ": unknown key '" + item.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(section + "." + key + ": wrong type");
    }
}

void read_size(const json& j, const char* key, std::size_t& out, const std::string& section) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(section + "." + key + ": expected a non-negative integer");
    out = v.get<std::size_t>();
}

double read_real(const json& j, const char* key, double fallback, const std::string& section) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (v.is_string() && (v == "inf" || v == "Infinity")) return std::numeric_limits<double>::infinity();
    if (!v.is_number()) throw ConfigError(section + "." + key + ": expected a number");
    return v.get<double>();
}

TimeFunction parse_time_function(const json& j, const std::string& section) {
    if (j.is_number()) return TimeFunction::constant(j.get<double>());
    check_keys(j, section, {"family", "coeffs"});
    TimeFunction f;
    std::string family = "constant";
    read(j, "family", family, section);
    try {
        f.family = time_family_from_string(family);
    } catch (const std::exception& e) {
        throw ConfigError(section + ".family: " + e.what());
    }
    read(j, "coeffs", f.coeffs, section);
    try {
        f.validate();
    } catch (const std::exception& e) {
        throw ConfigError(section + ": " + e.what());
    }
    return f;
}

json time_function_json(const TimeFunction& f) { return {{"family", to_string(f.family)}, {"coeffs", f.coeffs}}; }

ModelParams parse_model(const json& j) {
    const std::string sec = "model";
    check_keys(j, sec, {"A", "alpha", "beta", "k", "gamma", "varrho", "N", "C", "H", "R", "T", "ell", "theta_drift",
                        "theta_vol", "payoff_drift", "payoff_vol"});
    ModelParams p = desk_model();
    read(j, "A", p.A, sec);
    read(j, "alpha", p.alpha, sec);
    read(j, "beta", p.beta, sec);
    read(j, "k", p.k, sec);
    read(j, "gamma", p.gamma, sec);
    read(j, "varrho", p.varrho, sec);
    read(j, "N", p.N, sec);
    read(j, "C", p.C, sec);
    read(j, "H", p.H, sec);
    read(j, "R", p.R, sec);
    read(j, "T", p.T, sec);
    if (j.contains("ell")) p.ell = parse_time_function(j["ell"], sec + ".ell");
    if (j.contains("theta_drift")) p.theta_drift = parse_time_function(j["theta_drift"], sec + ".theta_drift");
    if (j.contains("theta_vol")) p.theta_vol = parse_time_function(j["theta_vol"], sec + ".theta_vol");
    if (j.contains("payoff_drift")) {
        const json& d = j["payoff_drift"];
        check_keys(d, sec + ".payoff_drift", {"time_scaled", "mu0", "mu1", "mu2"});
        read(d, "time_scaled", p.payoff_drift.time_scaled, sec + ".payoff_drift");
        read(d, "mu0", p.payoff_drift.mu0, sec + ".payoff_drift");
        read(d, "mu1", p.payoff_drift.mu1, sec + ".payoff_drift");
        read(d, "mu2", p.payoff_drift.mu2, sec + ".payoff_drift");
    }
    if (j.contains("payoff_vol")) {
        const json& v = j["payoff_vol"];
        check_keys(v, sec + ".payoff_vol", {"time_scaled", "s0", "s1"});
        read(v, "time_scaled", p.payoff_vol.time_scaled, sec + ".payoff_vol");
        read(v, "s0", p.payoff_vol.s0, sec + ".payoff_vol");
        read(v, "s1", p.payoff_vol.s1, sec + ".payoff_vol");
    }
    try {
        p.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    return p;
}

GridSpec parse_grid(const json& j, const ModelParams& p) {
    const std::string sec = "grid";
    check_keys(j, sec, {"rho", "nP", "nXi", "nTheta", "nT", "epsilon", "control_grid"});
    GridSpec g = desk_config().grid;
    read(j, "rho", g.rho, sec);
    read_size(j, "nP", g.nP, sec);
    read_size(j, "nXi", g.nXi, sec);
    read_size(j, "nTheta", g.nTheta, sec);
    read_size(j, "nT", g.nT, sec);
    read(j, "epsilon", g.epsilon, sec);
    if (j.contains("control_grid")) {
        const json& c = j["control_grid"];
        const std::string cs = sec + ".control_grid";
        check_keys(c, cs, {"n_eta", "n_c", "eta_levels", "c_levels"});
        if (c.contains("eta_levels") || c.contains("c_levels")) {
            if (c.contains("n_eta") || c.contains("n_c"))
                throw ConfigError(cs + ": give either level counts or explicit levels");
            read(c, "eta_levels", g.control_grid.eta_levels, cs);
            read(c, "c_levels", g.control_grid.c_levels, cs);
        } else {
            std::size_t n_eta = 5;
            std::size_t n_c = 3;
            read_size(c, "n_eta", n_eta, cs);
            read_size(c, "n_c", n_c, cs);
            try {
                g.control_grid = ControlGrid::uniform(p, n_eta, n_c);
            } catch (const std::exception& e) {
                throw ConfigError(cs + ": " + e.what());
            }
        }
    } else {
        g.control_grid = ControlGrid::uniform(p, 5, 3);
    }
    try {
        g.validate(p);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    return g;
}

StoppingRule parse_rule(const json& j) {
    const std::string sec = "dpp.rules[]";
    check_keys(j, sec, {"kind", "t_star", "radius"});
    std::string kind = "horizon";
    read(j, "kind", kind, sec);
    if (kind == "fixed_time") return StoppingRule::fixed_time(read_real(j, "t_star", 0.0, sec));
    if (kind == "first_exit") return StoppingRule::first_exit(read_real(j, "radius", 0.0, sec));
    if (kind == "horizon") return StoppingRule::horizon();
    throw ConfigError(sec + ".kind: expected fixed_time, first_exit or horizon");
}

json rule_json(const StoppingRule& r) {
    switch (r.kind) {
        case StoppingRule::Kind::fixed_time: return {{"kind", "fixed_time"}, {"t_star", r.t_star}};
        case StoppingRule::Kind::first_exit: return {{"kind", "first_exit"}, {"radius", r.radius}};
        case StoppingRule::Kind::horizon: break;
    }
    return {{"kind", "horizon"}};
}

json real_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ifstream open_in(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("missing artifact: " + file.string());
    return in;
}

}  // namespace

RunConfig desk_config() {
    RunConfig c;
    c.model = desk_model();
    c.grid.control_grid = ControlGrid::uniform(c.model, 5, 3);
    c.sim.n_paths = 4000;
    c.sim.dt = 2e-3;
    return c;
}

RunConfig parse_config(const json& doc) {
    check_keys(doc, "config", {"model", "grid", "sim", "start", "policy", "ladder", "dpp", "viscosity",
                               "discrete_policy", "tail", "conditions", "bound", "traces", "output_dir"});
    RunConfig c = desk_config();
    if (doc.contains("model")) c.model = parse_model(doc["model"]);
    c.grid = parse_grid(doc.value("grid", json::object()), c.model);

    if (doc.contains("sim")) {
        const json& j = doc["sim"];
        const std::string sec = "sim";
        check_keys(j, sec, {"dt", "n_paths", "seed", "rho_trunc", "exact_xi_update"});
        read(j, "dt", c.sim.dt, sec);
        read_size(j, "n_paths", c.sim.n_paths, sec);
        read(j, "seed", c.sim.seed, sec);
        read(j, "exact_xi_update", c.sim.exact_xi_update, sec);
        if (j.contains("rho_trunc") && !j["rho_trunc"].is_null()) c.sim.rho_trunc = read_real(j, "rho_trunc", 0, sec);
    }
    try {
        c.sim.validate(c.model);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("sim: ") + e.what());
    }

    if (doc.contains("start")) {
        const json& j = doc["start"];
        check_keys(j, "start", {"s", "P", "xi", "theta"});
        read(j, "s", c.start.s, "start");
        read(j, "P", c.start.y.P, "start");
        read(j, "xi", c.start.y.xi, "start");
        read(j, "theta", c.start.y.theta, "start");
    }
    if (!(c.start.s >= 0.0 && c.start.s < c.model.T)) throw ConfigError("start.s must lie in [0, T)");
    if (!in_closed_state_space(c.model, c.start.y)) throw ConfigError("start state lies outside the state space");

    if (doc.contains("policy")) {
        const json& j = doc["policy"];
        check_keys(j, "policy", {"kind", "eta", "c"});
        read(j, "kind", c.policy.kind, "policy");
        read(j, "eta", c.policy.eta, "policy");
        read(j, "c", c.policy.c, "policy");
    }
    if (c.policy.kind != "constant" && c.policy.kind != "greedy" && c.policy.kind != "table")
        throw ConfigError("policy.kind: expected constant, greedy or table");
    if (!(c.policy.eta >= 0.0 && c.policy.eta <= c.model.N && c.policy.c >= 0.0 && c.policy.c <= c.model.C))
        throw ConfigError("policy: (eta, c) must lie in [0,N] x [0,C]");

    if (doc.contains("ladder")) {
        const json& j = doc["ladder"];
        check_keys(j, "ladder", {"epsilon0", "n_max", "rho_schedule", "tol"});
        read(j, "epsilon0", c.ladder.epsilon0, "ladder");
        read_size(j, "n_max", c.ladder.n_max, "ladder");
        read(j, "rho_schedule", c.ladder.rho_schedule, "ladder");
        c.ladder.tol = read_real(j, "tol", c.ladder.tol, "ladder");
    }
    if (!(c.ladder.epsilon0 > 0.0 && c.ladder.epsilon0 < 1.0)) throw ConfigError("ladder.epsilon0 must lie in (0, 1)");
    if (c.ladder.n_max < 1) throw ConfigError("ladder.n_max must be at least 1");
    if (!(c.ladder.tol > 0.0)) throw ConfigError("ladder.tol must be positive");
    for (std::size_t r = 0; r < c.ladder.rho_schedule.size(); ++r) {
        if (r > 0 && !(c.ladder.rho_schedule[r] > c.ladder.rho_schedule[r - 1]))
            throw ConfigError("ladder.rho_schedule must increase");
        if (!(c.ladder.rho_schedule[r] > std::max(c.model.R, 1.0)))
            throw ConfigError("ladder.rho_schedule entries must exceed max(R, 1)");
    }

    if (doc.contains("dpp")) {
        const json& j = doc["dpp"];
        check_keys(j, "dpp", {"rules"});
        if (j.contains("rules")) {
            if (!j["rules"].is_array()) throw ConfigError("dpp.rules: expected an array");
            c.dpp.rules.clear();
            for (const auto& r : j["rules"]) c.dpp.rules.push_back(parse_rule(r));
        }
    }
    for (const auto& r : c.dpp.rules) {
        try {
            r.validate(c.start.s, c.model.T);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("dpp.rules: ") + e.what());
        }
    }

    if (doc.contains("viscosity")) {
        const json& j = doc["viscosity"];
        check_keys(j, "viscosity", {"c1", "margin", "stencil_radius", "min_pass_fraction"});
        read(j, "c1", c.viscosity.c1, "viscosity");
        read_size(j, "margin", c.viscosity.margin, "viscosity");
        read_size(j, "stencil_radius", c.viscosity.stencil_radius, "viscosity");
        read(j, "min_pass_fraction", c.viscosity.min_pass_fraction, "viscosity");
    }
    if (!(c.viscosity.c1 >= 0.0)) throw ConfigError("viscosity.c1 must be >= 0");
    if (c.viscosity.stencil_radius < 1) throw ConfigError("viscosity.stencil_radius must be at least 1");
    if (!(c.viscosity.min_pass_fraction >= 0.0 && c.viscosity.min_pass_fraction <= 1.0))
        throw ConfigError("viscosity.min_pass_fraction must lie in [0, 1]");

    if (doc.contains("discrete_policy")) {
        const json& j = doc["discrete_policy"];
        const std::string sec = "discrete_policy";
        check_keys(j, sec, {"M", "K0", "delta", "eps_target"});
        read_size(j, "M", c.discrete_policy.M, sec);
        read_size(j, "K0", c.discrete_policy.K0, sec);
        read(j, "delta", c.discrete_policy.delta, sec);
        read(j, "eps_target", c.discrete_policy.eps_target, sec);
    }
    if (c.discrete_policy.M < 1 || c.discrete_policy.K0 < 1) throw ConfigError("discrete_policy: M and K0 must be >= 1");
    if (!(c.discrete_policy.delta > 0.0) || !(c.discrete_policy.eps_target > 0.0))
        throw ConfigError("discrete_policy: delta and eps_target must be positive");

    if (doc.contains("tail")) {
        const json& j = doc["tail"];
        check_keys(j, "tail", {"kappa", "T", "levels", "with_drift", "n_paths", "dt"});
        read(j, "kappa", c.tail.kappa, "tail");
        read(j, "T", c.tail.T, "tail");
        read(j, "levels", c.tail.levels, "tail");
        read(j, "with_drift", c.tail.with_drift, "tail");
        read_size(j, "n_paths", c.tail.n_paths, "tail");
        read(j, "dt", c.tail.dt, "tail");
    }
    if (!(c.tail.kappa > 0.0 && c.tail.T > 0.0 && c.tail.dt > 0.0) || c.tail.n_paths < 2)
        throw ConfigError("tail: kappa, T and dt must be positive and n_paths at least 2");

    if (doc.contains("conditions")) {
        const json& j = doc["conditions"];
        check_keys(j, "conditions", {"budget", "seed"});
        read_size(j, "budget", c.conditions.budget, "conditions");
        read(j, "seed", c.conditions.seed, "conditions");
    }
    if (c.conditions.budget < 1) throw ConfigError("conditions.budget must be at least 1");

    if (doc.contains("bound")) {
        const json& j = doc["bound"];
        check_keys(j, "bound", {"n_triples", "n_paths", "seed"});
        read_size(j, "n_triples", c.bound.n_triples, "bound");
        read_size(j, "n_paths", c.bound.n_paths, "bound");
        read(j, "seed", c.bound.seed, "bound");
    }
    if (c.bound.n_triples < 1 || c.bound.n_paths < 2) throw ConfigError("bound: n_triples >= 1 and n_paths >= 2");

    read_size(doc, "traces", c.traces, "config");
    read(doc, "output_dir", c.output_dir, "config");
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

json to_json(const ModelParams& p) {
    return {{"A", p.A},
            {"alpha", p.alpha},
            {"beta", p.beta},
            {"k", p.k},
            {"gamma", p.gamma},
            {"varrho", p.varrho},
            {"N", p.N},
            {"C", p.C},
            {"H", p.H},
            {"R", p.R},
            {"T", p.T},
            {"ell", time_function_json(p.ell)},
            {"theta_drift", time_function_json(p.theta_drift)},
            {"theta_vol", time_function_json(p.theta_vol)},
            {"payoff_drift",
             {{"time_scaled", p.payoff_drift.time_scaled},
              {"mu0", p.payoff_drift.mu0},
              {"mu1", p.payoff_drift.mu1},
              {"mu2", p.payoff_drift.mu2}}},
            {"payoff_vol",
             {{"time_scaled", p.payoff_vol.time_scaled}, {"s0", p.payoff_vol.s0}, {"s1", p.payoff_vol.s1}}}};
}

json to_json(const GridSpec& g) {
    return {{"rho", g.rho},
            {"nP", g.nP},
            {"nXi", g.nXi},
            {"nTheta", g.nTheta},
            {"nT", g.nT},
            {"epsilon", g.epsilon},
            {"control_grid", {{"eta_levels", g.control_grid.eta_levels}, {"c_levels", g.control_grid.c_levels}}}};
}

json to_json(const RunConfig& c) {
    json rules = json::array();
    for (const auto& r : c.dpp.rules) rules.push_back(rule_json(r));
    return {{"model", to_json(c.model)},
            {"grid", to_json(c.grid)},
            {"sim",
             {{"dt", c.sim.dt},
              {"n_paths", c.sim.n_paths},
              {"seed", c.sim.seed},
              {"rho_trunc", c.sim.rho_trunc ? json(*c.sim.rho_trunc) : json(nullptr)},
              {"exact_xi_update", c.sim.exact_xi_update}}},
            {"start", {{"s", c.start.s}, {"P", c.start.y.P}, {"xi", c.start.y.xi}, {"theta", c.start.y.theta}}},
            {"policy", {{"kind", c.policy.kind}, {"eta", c.policy.eta}, {"c", c.policy.c}}},
            {"ladder",
             {{"epsilon0", c.ladder.epsilon0},
              {"n_max", c.ladder.n_max},
              {"rho_schedule", c.ladder.rho_schedule},
              {"tol", real_json(c.ladder.tol)}}},
            {"dpp", {{"rules", rules}}},
            {"viscosity",
             {{"c1", c.viscosity.c1},
              {"margin", c.viscosity.margin},
              {"stencil_radius", c.viscosity.stencil_radius},
              {"min_pass_fraction", c.viscosity.min_pass_fraction}}},
            {"discrete_policy",
             {{"M", c.discrete_policy.M},
              {"K0", c.discrete_policy.K0},
              {"delta", c.discrete_policy.delta},
              {"eps_target", c.discrete_policy.eps_target}}},
            {"tail",
             {{"kappa", c.tail.kappa},
              {"T", c.tail.T},
              {"levels", c.tail.levels},
              {"with_drift", c.tail.with_drift},
              {"n_paths", c.tail.n_paths},
              {"dt", c.tail.dt}}},
            {"conditions", {{"budget", c.conditions.budget}, {"seed", c.conditions.seed}}},
            {"bound", {{"n_triples", c.bound.n_triples}, {"n_paths", c.bound.n_paths}, {"seed", c.bound.seed}}},
            {"traces", c.traces},
            {"output_dir", c.output_dir}};
}

void write_text(const fs::path& file, const std::string& text) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
}

void write_value_grid(const fs::path& dir, const ValueGrid& grid, const json& header) {
    json head = header;
    head["format"] = "pacontrol.value_grid/1";
    head["index_order"] = {"t", "P", "xi", "theta"};
    head["spec"] = to_json(grid.spec());
    head["model"] = to_json(grid.params());
    head["diagnostics"] = {{"substeps", grid.diagnostics.substeps},
                           {"cfl_retries", grid.diagnostics.cfl_retries},
                           {"max_rate", grid.diagnostics.max_rate},
                           {"inflated_fraction", grid.diagnostics.inflated_fraction},
                           {"max_inflation", grid.diagnostics.max_inflation}};
    write_text(dir / "value_grid.json", head.dump(2) + "\n");

    std::string values;
    values.reserve(grid.values().size() * 24);
    for (double v : grid.values()) values += fmt(v) + "\n";
    write_text(dir / "value_grid.csv", values);

    std::string policy;
    for (auto q : grid.policy()) policy += std::to_string(q) + "\n";
    write_text(dir / "greedy_policy.csv", policy);
}

ValueGrid read_value_grid(const fs::path& dir) {
    json head;
    {
        auto in = open_in(dir / "value_grid.json");
        try {
            head = json::parse(in);
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("corrupt value_grid.json: ") + e.what());
        }
    }
    ModelParams params;
    GridSpec spec;
    try {
        params = parse_model(head.at("model"));
        spec = parse_grid(head.at("spec"), params);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("corrupt value_grid.json: ") + e.what());
    }
    ValueGrid grid(params, spec);
    {
        auto in = open_in(dir / "value_grid.csv");
        std::size_t n = 0;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (n >= grid.values().size()) throw std::runtime_error("value_grid.csv has too many values");
            grid.values()[n++] = std::stod(line);
        }
        if (n != grid.values().size()) throw std::runtime_error("value_grid.csv has too few values");
    }
    {
        auto in = open_in(dir / "greedy_policy.csv");
        std::size_t n = 0;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (n >= grid.policy().size()) throw std::runtime_error("greedy_policy.csv has too many entries");
            const unsigned long q = std::stoul(line);
            if (q >= spec.control_grid.size()) throw std::runtime_error("greedy_policy.csv index out of range");
            grid.policy()[n++] = std::uint16_t(q);
        }
        if (n != grid.policy().size()) throw std::runtime_error("greedy_policy.csv has too few entries");
    }
    return grid;
}

void write_policy_table(const fs::path& file, const PolicyTable& table, const json& header) {
    json head = header;
    head["format"] = "pacontrol.policy_table/1";
    head["table"] = {{"t_start", table.t_start()},
                     {"t_end", table.t_end()},
                     {"n_slabs", table.n_slabs()},
                     {"lower", table.lower()},
                     {"upper", table.upper()},
                     {"divisions", table.divisions()},
                     {"default", {table.default_control().eta(), table.default_control().c()}},
                     {"n_fallback", table.n_fallback()}};
    std::ostringstream out;
    out << "# " << head.dump() << "\n";
    out << "slab,t_lo,t_hi,cell,P_lo,P_hi,xi_lo,xi_hi,theta_lo,theta_hi,eta,c,residual,fallback\n";
    for (std::size_t i = 0; i < table.n_slabs(); ++i)
        for (std::size_t j = 0; j < table.n_cells(); ++j) {
            const auto lo = table.cell_lower(j);
            const auto hi = table.cell_upper(j);
            const auto& cell = table.at(i, j);
            out << i << ',' << fmt(table.slab_start(i)) << ',' << fmt(table.slab_end(i)) << ',' << j << ','
                << fmt(lo[0]) << ',' << fmt(hi[0]) << ',' << fmt(lo[1]) << ',' << fmt(hi[1]) << ',' << fmt(lo[2])
                << ',' << fmt(hi[2]) << ',' << fmt(cell.u.eta()) << ',' << fmt(cell.u.c()) << ','
                << fmt(cell.residual) << ',' << (cell.fallback ? 1 : 0) << '\n';
        }
    write_text(file, out.str());
}

PolicyTable read_policy_table(const fs::path& file) {
    auto in = open_in(file);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw std::runtime_error("policy table header missing");
    json head;
    try {
        head = json::parse(line.substr(2));
        const json& t = head.at("table");
        PolicyTable table(t.at("t_start").get<double>(), t.at("t_end").get<double>(), t.at("n_slabs").get<std::size_t>(),
                          t.at("lower").get<std::array<double, 3>>(), t.at("upper").get<std::array<double, 3>>(),
                          t.at("divisions").get<std::array<std::size_t, 3>>(),
                          Control::unchecked(t.at("default")[0].get<double>(), t.at("default")[1].get<double>()));
        std::getline(in, line);  // column names
        std::size_t rows = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::stringstream ss(line);
            std::string item;
            while (std::getline(ss, item, ',')) f.push_back(item);
            if (f.size() != 14) throw std::runtime_error("policy table row has " + std::to_string(f.size()) + " fields");
            const std::size_t slab = std::stoul(f[0]);
            const std::size_t index = std::stoul(f[3]);
            if (slab >= table.n_slabs() || index >= table.n_cells())
                throw std::runtime_error("policy table row out of range");
            auto& cell = table.at(slab, index);
            cell.u = Control::unchecked(std::stod(f[10]), std::stod(f[11]));
            cell.residual = std::stod(f[12]);
            cell.fallback = f[13] == "1";
            ++rows;
        }
        if (rows != table.n_slabs() * table.n_cells()) throw std::runtime_error("policy table is incomplete");
        return table;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("corrupt policy table header: ") + e.what());
    }
}

}  // namespace pacontrol
