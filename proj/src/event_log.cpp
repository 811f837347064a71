#include "study/event_log.hpp"

#include <filesystem>

namespace study {

LogReadResult read_log(std::istream& in, RecoveryPolicy policy) {
  LogReadResult result;
  std::string line;
  std::size_t offset = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const bool terminated = !in.eof();
    const std::size_t next = offset + line.size() + (terminated ? 1 : 0);
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      offset = next;
      result.valid_bytes = next;
      continue;
    }
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      std::string msg = "corrupt log line " + std::to_string(lineno) + " at byte offset " + std::to_string(offset) +
                        (terminated ? "" : " (truncated final line)");
      if (policy == RecoveryPolicy::strict) throw LogError(msg, offset);
      result.warnings.push_back(msg + "; recovered the " + std::to_string(result.records.size()) +
                                "-event prefix");
      return result;
    }
    result.records.push_back(LogRecord{std::move(j), offset});
    offset = next;
    result.valid_bytes = next;
  }
  return result;
}

LogReadResult read_log_file(const std::string& path, RecoveryPolicy policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return read_log(in, policy);
}

EventLog::EventLog(const std::string& path) : path_(path) {
  bool needs_newline = false;
  {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (in && in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      needs_newline = in.get() != '\n';
    }
  }
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw std::runtime_error("cannot open event log '" + path + "' for appending");
  if (needs_newline) out_ << '\n';
}

void EventLog::append(const nlohmann::json& event) {
  std::lock_guard lock(mutex_);
  out_ << event.dump() << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("write to event log '" + path_ + "' failed");
}

void EventLog::flush() {
  std::lock_guard lock(mutex_);
  out_.flush();
}

void EventLog::truncate(const std::string& path, std::size_t bytes) {
  std::error_code ec;
  if (std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) > bytes) {
    std::filesystem::resize_file(path, bytes);
  }
}

}  // namespace study
