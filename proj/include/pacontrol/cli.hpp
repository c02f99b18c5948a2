#pragma once

#include "pacontrol/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pacontrol {

enum ExitStatus : int { kPass = 0, kUsageError = 1, kBudgetFailure = 2, kVerificationFailure = 3 };

/// Each command writes its artifacts under `out` and a one-line JSON summary to `log`.
int cmd_solve(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
int cmd_simulate(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
/// which: dpp, viscosity, martingale, tail, conditions or bound.
int cmd_verify(const RunConfig& config, const std::string& which, const std::filesystem::path& out,
               std::ostream& log);
int cmd_export_policy(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

/// Full command line, argv[0] excluded. Config and missing-artifact errors print a JSON
/// diagnostic to err and return kUsageError.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pacontrol
