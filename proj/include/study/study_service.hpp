#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "study/concept_map.hpp"
#include "study/event_log.hpp"
#include "study/inference.hpp"
#include "study/question_bank.hpp"
#include "study/rng.hpp"

namespace study {

/// A multiple-choice index or a true/false value.
using Choice = std::variant<std::size_t, bool>;

struct AnswerEvent {
  std::uint64_t seq = 0;
  std::string student;
  std::uint64_t number = 0;
  Choice chosen = std::size_t{0};
  bool correct = false;
  std::int64_t ts = 0;  // UTC milliseconds
};

struct SolutionViewEvent {
  std::uint64_t seq = 0;
  std::string student;
  std::uint64_t number = 0;
  std::int64_t ts = 0;
};

nlohmann::json to_json(const AnswerEvent& e);
nlohmann::json to_json(const SolutionViewEvent& e);

/// Integer percent for a progress bar: round half up, with a 1e-9 allowance
/// so values like 0.555 that land a hair below the half in binary still
/// round up.
int to_percent(double p);

struct ProgressNode {
  std::string id;
  std::string title;
  double posterior = 0.0;
  int percent = 0;
  std::vector<ProgressNode> children;
};

struct ProgressView {
  std::string student;
  ProgressNode root;

  const ProgressNode* find(std::string_view id) const;
  // Flattened id -> percent.
  std::map<std::string, int> percents() const;
};

nlohmann::json to_json(const ProgressView& view);
ProgressView make_progress_view(const ConceptMap& map, const PosteriorMap& post, std::string student);

class ServiceError : public std::runtime_error {
public:
  enum class Kind {
    unknown_instance,
    unknown_student,
    unknown_concept,
    malformed_choice,
    no_related_questions,
    no_students,
  };

  ServiceError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

struct AnswerResult {
  bool correct = false;
  std::uint64_t number = 0;
  ProgressView progress;
};

struct ServiceConfig {
  NetworkOptions network;
  EliminationOptions elimination;
  std::uint64_t selection_seed = 1;
  // UTC milliseconds; defaults to the system clock.
  std::function<std::int64_t()> clock;
};

/// Student records, answer ingestion and progress. Events for one student
/// are applied in order under that student's lock; different students run
/// concurrently. Every event is handed to the attached log (if any) before
/// the call returns.
class StudyService {
public:
  StudyService(std::shared_ptr<const ConceptMap> map, std::vector<QuestionInstance> bank, ServiceConfig config = {});
  ~StudyService();

  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  void attach_log(std::shared_ptr<EventLog> log) { log_ = std::move(log); }

  const ConceptMap& map() const { return *map_; }
  const std::vector<QuestionInstance>& bank() const { return bank_; }

  AnswerResult record_answer(const std::string& student, std::uint64_t number, Choice chosen);
  ProgressView get_progress(const std::string& student) const;
  // What a student with no answers sees; does not register the id.
  ProgressView prior_progress(const std::string& student) const;
  PosteriorMap posteriors_of(const std::string& student) const;

  /// Uniform over instances tagged with the concept or any concept below it.
  const QuestionInstance& select_question(const std::string& concept_id);
  const QuestionInstance& get_question_by_number(std::uint64_t number) const;

  /// Logs a view event when a student is given; never adds evidence.
  const std::string& get_solution(std::uint64_t number, const std::optional<std::string>& student = std::nullopt);

  int class_average(const std::string& concept_id) const;
  std::vector<std::string> weakest_concepts(const std::string& student, std::size_t k) const;

  std::vector<std::string> students() const;
  bool has_student(const std::string& student) const;
  std::vector<AnswerEvent> answers(const std::string& student) const;
  std::vector<SolutionViewEvent> solution_views(const std::string& student) const;
  // Last outcome per instance number.
  std::map<std::uint64_t, bool> last_outcomes(const std::string& student) const;

  struct ReplayReport {
    std::size_t events = 0;
    std::vector<std::string> warnings;
    std::size_t valid_bytes = 0;
  };

  /// Applies a log to this (normally empty) service without re-logging.
  ReplayReport replay(std::istream& log, RecoveryPolicy policy);
  ReplayReport replay_file(const std::string& path, RecoveryPolicy policy);

  bool is_correct(const QuestionInstance& q, const Choice& chosen) const;

private:
  struct Student;

  Student& student_for_write(const std::string& id);
  const Student& student_for_read(const std::string& id) const;
  const QuestionInstance& instance(std::uint64_t number) const;
  void apply_answer(Student& s, const QuestionInstance& q, const AnswerEvent& e);
  void refresh(Student& s) const;
  std::int64_t now() const;

  std::shared_ptr<const ConceptMap> map_;
  std::vector<QuestionInstance> bank_;
  ServiceConfig config_;
  std::unordered_map<std::uint64_t, std::size_t> by_number_;
  std::map<std::string, std::vector<std::uint64_t>> related_;
  std::shared_ptr<EventLog> log_;
  PosteriorMap prior_;

  mutable std::mutex students_mutex_;
  std::map<std::string, std::unique_ptr<Student>> students_;

  std::mutex rng_mutex_;
  Rng selection_rng_;
};

/// Builds a service from the concept map, bank and log in one step.
std::unique_ptr<StudyService> rebuild_from_log(std::shared_ptr<const ConceptMap> map,
                                               std::vector<QuestionInstance> bank, std::istream& log,
                                               RecoveryPolicy policy, StudyService::ReplayReport* report = nullptr,
                                               ServiceConfig config = {});

}  // namespace study
