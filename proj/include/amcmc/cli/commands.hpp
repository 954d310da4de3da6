#pragma once

#include <iosfwd>
#include <memory>

#include "amcmc/cli/config.hpp"
#include "amcmc/samplers.hpp"
#include "amcmc/targets.hpp"

namespace amcmc::cli {

enum ExitCode { exit_ok = 0, exit_runtime = 1, exit_usage = 2 };

std::unique_ptr<TargetModel> make_target(const Config& config);

/// Kernel, backend and schedule settings from [run] / [adapt]. Structure is
/// resolved separately.
RunConfig make_run_config(const Config& config, const TargetModel& target);

/// Regressor sets for the precision backend per [structure] source.
std::optional<RegressorSets> resolve_structure(const Config& config, const TargetModel& target, std::ostream& log);

// Each command throws ConfigError on config problems and other exceptions on
// runtime failure.
void cmd_structure(const Config& config, std::ostream& log);
void cmd_run(const Config& config, std::ostream& log);
void cmd_bench(const Config& config, std::ostream& log);
void cmd_bfactor(const Config& config, std::ostream& log);

/// Parses argv, dispatches and maps failures to exit codes.
int main_entry(int argc, char** argv);

}  // namespace amcmc::cli
