#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xchain/sim.hpp"

namespace xchain {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitInvariant = 2;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "XCHAIN_OUT_DIR";

struct ScenarioFile {
  SimConfig base;
  std::vector<SystemConfig> overrides;
  std::vector<std::size_t> sweep_n;
  std::vector<double> sweep_p_c;
  std::vector<double> sweep_g;
  std::size_t max_runs = 100;

  bool is_sweep() const { return !sweep_n.empty() || !sweep_p_c.empty() || !sweep_g.empty(); }
  /// One finalized config per sweep point (just the base without a sweep).
  /// Throws ConfigError past max_runs.
  std::vector<SimConfig> expand() const;
};

/// Throws ConfigError on unknown fields, bad types or invalid values.
ScenarioFile parse_scenario(const nlohmann::json& j, const std::string& fallback_name = "run");
ScenarioFile load_scenario(const std::filesystem::path& path);

/// Every free parameter with its default value.
nlohmann::json scenario_to_json(const ScenarioFile& s);

/// "3_1_1" style label: p_c and g in tenths when they are whole tenths.
std::string point_name(std::size_t n, double p_c, double g);

std::string metrics_csv_header();
std::string metrics_csv_row(const SimConfig& config, const Metrics& metrics);
std::string gaps_csv(const Metrics& metrics);
std::string transcript_text(const SimResult& result);

int cmd_run(const std::filesystem::path& scenario, const std::filesystem::path& out_dir,
            std::optional<std::uint64_t> seed, unsigned parallel, std::ostream& out,
            std::ostream& err);
int cmd_attack(const std::filesystem::path& scenario, const std::filesystem::path& out_dir,
               std::ostream& out, std::ostream& err);
int cmd_print_config(const std::optional<std::filesystem::path>& scenario, std::ostream& out,
                     std::ostream& err);

}  // namespace xchain
