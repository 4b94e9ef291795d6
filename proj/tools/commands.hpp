#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "io.hpp"

namespace condfilter::cli {

/// Settings shared by every command. Precedence, lowest first: built-in
/// defaults (or the calibration artifact's config), the config file,
/// CONDFILTER_* environment variables, then command-line flags.
struct CommonOptions {
  std::optional<std::filesystem::path> config_path;
  KeyValues flag_overrides;
  unsigned workers = 0;
};

FilterConfig resolve_config(const CommonOptions& options, FilterConfig base = {});

void cmd_calibrate(const std::filesystem::path& cal_path, const CommonOptions& options,
                   const std::filesystem::path& out_path);

void cmd_filter(const std::filesystem::path& artifact_path,
                const std::filesystem::path& aug_path, const std::string& strategy,
                const CommonOptions& options, const std::filesystem::path& out_path);

void cmd_simulate(const std::filesystem::path& scenario_path,
                  const std::vector<std::string>& strategies, const CommonOptions& options,
                  const std::filesystem::path& out_path);

/// Returns the metrics document; also writes it (with a manifest) when
/// `out_path` is set.
std::string cmd_metrics(const std::filesystem::path& decisions_path,
                        const std::filesystem::path& gold_path, const CommonOptions& options,
                        const std::optional<std::filesystem::path>& out_path);

/// Maps an in-flight exception to the process exit code: 1 validation or
/// config, 2 I/O, 3 solver non-convergence.
int exit_code_for(const std::exception& e);

}  // namespace condfilter::cli
