#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace study {

class LogError : public std::runtime_error {
public:
  LogError(const std::string& message, std::size_t offset) : std::runtime_error(message), offset_(offset) {}
  // Byte offset of the start of the offending line.
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

enum class RecoveryPolicy {
  strict,  // throw on the first corrupt line
  prefix,  // keep the valid prefix, warn, ignore the rest
};

struct LogRecord {
  nlohmann::json event;
  std::size_t offset = 0;
};

struct LogReadResult {
  std::vector<LogRecord> records;
  std::vector<std::string> warnings;
  // Length of the valid prefix in bytes.
  std::size_t valid_bytes = 0;
};

/// Reads JSON-lines. A line that fails to parse is corrupt; under the prefix
/// policy reading stops there.
LogReadResult read_log(std::istream& in, RecoveryPolicy policy);
LogReadResult read_log_file(const std::string& path, RecoveryPolicy policy);

/// Append-only JSON-lines writer; each append is flushed before returning.
class EventLog {
public:
  explicit EventLog(const std::string& path);

  void append(const nlohmann::json& event);
  void flush();
  const std::string& path() const { return path_; }

  /// Cuts the file back to `bytes` (used after prefix recovery so new
  /// events do not follow a torn line).
  static void truncate(const std::string& path, std::size_t bytes);

private:
  std::string path_;
  std::ofstream out_;
  std::mutex mutex_;
};

}  // namespace study
