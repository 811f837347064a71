#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "study/event_log.hpp"
#include "study/evidence.hpp"
#include "study/simulator.hpp"

namespace study {

// Exit codes shared by the subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInput = 2;

int cmd_validate(const std::string& map_path, bool json, std::ostream& out, std::ostream& err);

int cmd_generate(const std::string& templates_dir, std::size_t per_template, const std::string& out_path, bool json,
                 std::ostream& out, std::ostream& err);

int cmd_simulate(const std::string& map_path, const std::string& bank_path, const SimulationOptions& options,
                 const std::optional<std::string>& log_path, bool json, std::ostream& out, std::ostream& err);

struct UsageReport {
  std::size_t total_answers = 0;
  std::size_t students = 0;
  double mean_answers = 0.0;
  double sd_answers = 0.0;  // population
  std::size_t solution_views = 0;
  std::map<std::string, std::size_t> answers_per_student;
  std::vector<std::string> warnings;

  // Only with a map and bank: students whose course posterior is above
  // 0.5 and 0.8.
  bool has_thresholds = false;
  std::size_t above_50 = 0;
  std::size_t above_80 = 0;
  std::map<std::string, double> course_posterior;
};

/// Counts events in a log. Corrupt or malformed lines end the read at the
/// valid prefix with a warning, as replay does.
UsageReport usage_report(std::istream& log);
void add_thresholds(UsageReport& report, const std::string& map_path, const std::string& bank_path,
                    const std::string& log_path, Strategy strategy);
nlohmann::json to_json(const UsageReport& r);

int cmd_report(const std::string& log_path, const std::optional<std::string>& map_path,
               const std::optional<std::string>& bank_path, Strategy strategy, bool json, std::ostream& out,
               std::ostream& err);

struct ServeConfig {
  std::string map_path;
  std::string bank_path;
  std::string listen = "127.0.0.1:8080";
  Strategy strategy = Strategy::linear;
  std::optional<std::string> log_path;
};

/// "host:port" -> pair; throws std::invalid_argument.
std::pair<std::string, int> parse_listen(const std::string& text);

/// Blocks until SIGINT or SIGTERM. Prints "listening on http://host:port"
/// once the socket is bound.
int cmd_serve(const ServeConfig& config, std::ostream& out, std::ostream& err);

/// Full command line entry point.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace study
