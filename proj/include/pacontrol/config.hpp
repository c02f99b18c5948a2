#pragma once

#include "pacontrol/dpp.hpp"
#include "pacontrol/hjb.hpp"
#include "pacontrol/sde.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace pacontrol {

/// Schema or value error in a run configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct StartConfig {
    double s = 0.0;
    State y{2.0, 1.0, 1.0};
};

struct PolicyConfig {
    std::string kind = "constant";  // constant | greedy | table
    double eta = 0.5;
    double c = 0.5;
};

struct LadderConfig {
    double epsilon0 = 0.5;
    std::size_t n_max = 4;
    std::vector<double> rho_schedule{3.0, 4.0, 5.0};
    double tol = 0.2;
};

struct DppConfig {
    std::vector<StoppingRule> rules{StoppingRule::fixed_time(0.5), StoppingRule::first_exit(0.5),
                                    StoppingRule::horizon()};
};

struct ViscosityConfig {
    double c1 = 5.0;
    std::size_t margin = 2;
    std::size_t stencil_radius = 1;
    double min_pass_fraction = 0.99;
};

struct DiscretePolicyConfig {
    std::size_t M = 20;
    std::size_t K0 = 512;
    double delta = 0.05;
    double eps_target = 0.1;
};

struct TailConfig {
    double kappa = 1.0;
    double T = 1.0;
    std::vector<double> levels{3.5, 4.0, 5.0};
    bool with_drift = false;
    std::size_t n_paths = 100000;
    double dt = 0.005;
};

struct ConditionsConfig {
    std::size_t budget = 20000;
    unsigned long long seed = 7;
};

struct BoundConfig {
    std::size_t n_triples = 20;
    std::size_t n_paths = 2000;
    std::uint64_t seed = 11;
};

struct RunConfig {
    ModelParams model;
    GridSpec grid;
    SimConfig sim;
    StartConfig start;
    PolicyConfig policy;
    LadderConfig ladder;
    DppConfig dpp;
    ViscosityConfig viscosity;
    DiscretePolicyConfig discrete_policy;
    TailConfig tail;
    ConditionsConfig conditions;
    BoundConfig bound;
    std::size_t traces = 0;
    std::string output_dir = "out";
};

/// Builds a configuration from defaults plus the given document. Unknown keys and
/// invalid values throw ConfigError naming the offending field.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved document; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const ModelParams& params);
nlohmann::json to_json(const GridSpec& spec);

/// Default configuration for the reference model.
RunConfig desk_config();

/// value_grid.json (header), value_grid.csv (values) and greedy_policy.csv (control
/// indices), all in the (t, P, xi, theta) index order with theta fastest.
void write_value_grid(const std::filesystem::path& dir, const ValueGrid& grid, const nlohmann::json& header);
/// Throws std::runtime_error when an artifact is missing or inconsistent.
ValueGrid read_value_grid(const std::filesystem::path& dir);

void write_policy_table(const std::filesystem::path& file, const PolicyTable& table, const nlohmann::json& header);
PolicyTable read_policy_table(const std::filesystem::path& file);

/// Writes text, creating parent directories.
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace pacontrol
