#include "study/study_service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

namespace study {

nlohmann::json to_json(const AnswerEvent& e) {
  nlohmann::json j;
  j["seq"] = e.seq;
  j["student"] = e.student;
  j["number"] = e.number;
  if (const auto* b = std::get_if<bool>(&e.chosen)) {
    j["chosen"] = *b;
  } else {
    j["chosen"] = std::get<std::size_t>(e.chosen);
  }
  j["correct"] = e.correct;
  j["ts"] = e.ts;
  return j;
}

nlohmann::json to_json(const SolutionViewEvent& e) {
  nlohmann::json j;
  j["seq"] = e.seq;
  j["student"] = e.student;
  j["number"] = e.number;
  j["event"] = "solution_view";
  j["ts"] = e.ts;
  return j;
}

int to_percent(double p) {
  const double scaled = std::clamp(p, 0.0, 1.0) * 100.0;
  return static_cast<int>(std::floor(scaled + 0.5 + 1e-9));
}

const ProgressNode* ProgressView::find(std::string_view id) const {
  std::vector<const ProgressNode*> stack{&root};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    if (n->id == id) return n;
    for (const auto& c : n->children) stack.push_back(&c);
  }
  return nullptr;
}

std::map<std::string, int> ProgressView::percents() const {
  std::map<std::string, int> out;
  std::vector<const ProgressNode*> stack{&root};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    out[n->id] = n->percent;
    for (const auto& c : n->children) stack.push_back(&c);
  }
  return out;
}

namespace {

ProgressNode progress_node(const ConceptMap& map, const PosteriorMap& post, const std::string& id) {
  const auto& node = map.node(id);
  ProgressNode out;
  out.id = id;
  out.title = node.title;
  out.posterior = post.at(id);
  out.percent = to_percent(out.posterior);
  for (const auto& c : node.children) out.children.push_back(progress_node(map, post, c.id));
  return out;
}

nlohmann::json node_json(const ProgressNode& n) {
  nlohmann::json j;
  j["id"] = n.id;
  j["title"] = n.title;
  j["percent"] = n.percent;
  j["posterior"] = n.posterior;
  auto& cs = j["children"] = nlohmann::json::array();
  for (const auto& c : n.children) cs.push_back(node_json(c));
  return j;
}

}  // namespace

ProgressView make_progress_view(const ConceptMap& map, const PosteriorMap& post, std::string student) {
  return ProgressView{std::move(student), progress_node(map, post, map.root())};
}

nlohmann::json to_json(const ProgressView& view) {
  nlohmann::json j;
  j["student"] = view.student;
  j["root"] = node_json(view.root);
  return j;
}

// ---------------------------------------------------------------------------

struct StudyService::Student {
  mutable std::mutex mutex;
  std::string id;
  std::uint64_t next_seq = 1;
  std::vector<AnswerEvent> answers;
  std::vector<SolutionViewEvent> views;
  std::map<std::uint64_t, bool> last;
  Network net;
  PosteriorMap post;
};

StudyService::StudyService(std::shared_ptr<const ConceptMap> map, std::vector<QuestionInstance> bank,
                           ServiceConfig config)
    : map_(std::move(map)), bank_(std::move(bank)), config_(std::move(config)), selection_rng_(config_.selection_seed) {
  if (!map_) throw std::invalid_argument("study service needs a concept map");
  for (std::size_t i = 0; i < bank_.size(); ++i) {
    const auto& q = bank_[i];
    if (!by_number_.emplace(q.number, i).second) {
      throw std::invalid_argument("bank lists question number " + std::to_string(q.number) + " twice");
    }
    if (q.choices.empty() || q.correct_index >= q.choices.size()) {
      throw std::invalid_argument("question " + std::to_string(q.number) + " has no valid correct choice");
    }
    check_meta(q.meta, *map_);
    std::set<std::string> tagged;
    for (const auto& c : q.meta.concepts) {
      std::optional<std::string> cur = c.id;
      while (cur) {
        tagged.insert(*cur);
        cur = map_->parent_of(*cur);
      }
    }
    for (const auto& id : tagged) related_[id].push_back(q.number);
  }
  for (auto& [id, numbers] : related_) std::sort(numbers.begin(), numbers.end());
  prior_ = posteriors(build_network(*map_, {}, config_.network), config_.elimination);
}

StudyService::~StudyService() = default;

std::int64_t StudyService::now() const {
  if (config_.clock) return config_.clock();
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

const QuestionInstance& StudyService::instance(std::uint64_t number) const {
  auto it = by_number_.find(number);
  if (it == by_number_.end()) {
    throw ServiceError(ServiceError::Kind::unknown_instance, "no question number " + std::to_string(number));
  }
  return bank_[it->second];
}

StudyService::Student& StudyService::student_for_write(const std::string& id) {
  std::lock_guard lock(students_mutex_);
  auto& slot = students_[id];
  if (!slot) {
    slot = std::make_unique<Student>();
    slot->id = id;
    slot->net = build_network(*map_, {}, config_.network);
    slot->post = prior_;
  }
  return *slot;
}

const StudyService::Student& StudyService::student_for_read(const std::string& id) const {
  std::lock_guard lock(students_mutex_);
  auto it = students_.find(id);
  if (it == students_.end()) {
    throw ServiceError(ServiceError::Kind::unknown_student, "unknown student '" + id + "'");
  }
  return *it->second;
}

bool StudyService::is_correct(const QuestionInstance& q, const Choice& chosen) const {
  const std::size_t n = q.choices.size();
  std::size_t index = 0;
  if (const auto* b = std::get_if<bool>(&chosen)) {
    if (q.kind != QuestionKind::true_false) {
      throw ServiceError(ServiceError::Kind::malformed_choice,
                         "question " + std::to_string(q.number) + " is multiple choice; expected a choice index");
    }
    index = *b ? 0 : 1;
  } else {
    index = std::get<std::size_t>(chosen);
    if (index >= n) {
      throw ServiceError(ServiceError::Kind::malformed_choice, "choice " + std::to_string(index) +
                                                                   " out of range for question " +
                                                                   std::to_string(q.number));
    }
  }
  return index == q.correct_index;
}

void StudyService::apply_answer(Student& s, const QuestionInstance& q, const AnswerEvent& e) {
  s.net.observe(q.meta, e.correct);
  s.answers.push_back(e);
  s.last[q.number] = e.correct;
  s.next_seq = e.seq + 1;
}

void StudyService::refresh(Student& s) const { s.post = posteriors(s.net, config_.elimination); }

AnswerResult StudyService::record_answer(const std::string& student, std::uint64_t number, Choice chosen) {
  const auto& q = instance(number);
  const bool correct = is_correct(q, chosen);

  Student& s = student_for_write(student);
  std::lock_guard lock(s.mutex);

  AnswerEvent e{s.next_seq, student, number, chosen, correct, now()};

  // Inference first so a failure leaves neither the log nor the record touched.
  Network next = s.net;
  next.observe(q.meta, correct);
  PosteriorMap post = posteriors(next, config_.elimination);

  if (log_) log_->append(to_json(e));

  s.net = std::move(next);
  s.post = std::move(post);
  s.answers.push_back(e);
  s.last[number] = correct;
  s.next_seq = e.seq + 1;

  return AnswerResult{correct, number, make_progress_view(*map_, s.post, student)};
}

ProgressView StudyService::get_progress(const std::string& student) const {
  const auto& s = student_for_read(student);
  std::lock_guard lock(s.mutex);
  return make_progress_view(*map_, s.post, student);
}

ProgressView StudyService::prior_progress(const std::string& student) const {
  return make_progress_view(*map_, prior_, student);
}

PosteriorMap StudyService::posteriors_of(const std::string& student) const {
  const auto& s = student_for_read(student);
  std::lock_guard lock(s.mutex);
  return s.post;
}

const QuestionInstance& StudyService::select_question(const std::string& concept_id) {
  if (!map_->contains(concept_id)) {
    throw ServiceError(ServiceError::Kind::unknown_concept, "unknown concept '" + concept_id + "'");
  }
  auto it = related_.find(concept_id);
  if (it == related_.end() || it->second.empty()) {
    throw ServiceError(ServiceError::Kind::no_related_questions, "no questions for concept '" + concept_id + "'");
  }
  std::uint64_t pick = 0;
  {
    std::lock_guard lock(rng_mutex_);
    pick = it->second[selection_rng_.below(it->second.size())];
  }
  return instance(pick);
}

const QuestionInstance& StudyService::get_question_by_number(std::uint64_t number) const { return instance(number); }

const std::string& StudyService::get_solution(std::uint64_t number, const std::optional<std::string>& student) {
  const auto& q = instance(number);
  if (student) {
    Student& s = student_for_write(*student);
    std::lock_guard lock(s.mutex);
    SolutionViewEvent e{s.next_seq, *student, number, now()};
    if (log_) log_->append(to_json(e));
    s.views.push_back(e);
    s.next_seq = e.seq + 1;
  }
  return q.solution;
}

int StudyService::class_average(const std::string& concept_id) const {
  if (!map_->contains(concept_id)) {
    throw ServiceError(ServiceError::Kind::unknown_concept, "unknown concept '" + concept_id + "'");
  }
  std::lock_guard lock(students_mutex_);
  if (students_.empty()) {
    throw ServiceError(ServiceError::Kind::no_students, "no students yet");
  }
  double sum = 0.0;
  for (const auto& [id, s] : students_) {
    std::lock_guard slock(s->mutex);
    sum += s->post.at(concept_id);
  }
  return to_percent(sum / static_cast<double>(students_.size()));
}

std::vector<std::string> StudyService::weakest_concepts(const std::string& student, std::size_t k) const {
  const auto post = posteriors_of(student);
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& leaf : map_->leaves()) ranked.emplace_back(post.at(leaf), leaf);
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].second);
  return out;
}

std::vector<std::string> StudyService::students() const {
  std::lock_guard lock(students_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : students_) out.push_back(id);
  return out;
}

bool StudyService::has_student(const std::string& student) const {
  std::lock_guard lock(students_mutex_);
  return students_.contains(student);
}

std::vector<AnswerEvent> StudyService::answers(const std::string& student) const {
  const auto& s = student_for_read(student);
  std::lock_guard lock(s.mutex);
  return s.answers;
}

std::vector<SolutionViewEvent> StudyService::solution_views(const std::string& student) const {
  const auto& s = student_for_read(student);
  std::lock_guard lock(s.mutex);
  return s.views;
}

std::map<std::uint64_t, bool> StudyService::last_outcomes(const std::string& student) const {
  const auto& s = student_for_read(student);
  std::lock_guard lock(s.mutex);
  return s.last;
}

// ---------------------------------------------------------------------------
// Replay

namespace {

struct ParsedEvent {
  bool view = false;
  AnswerEvent answer;
  SolutionViewEvent solution;
};

ParsedEvent parse_event(const nlohmann::json& j) {
  ParsedEvent p;
  const auto seq = j.at("seq").get<std::uint64_t>();
  const auto student = j.at("student").get<std::string>();
  const auto number = j.at("number").get<std::uint64_t>();
  const auto ts = j.at("ts").get<std::int64_t>();
  if (j.contains("event")) {
    if (j["event"] != "solution_view") throw std::invalid_argument("unknown event type");
    p.view = true;
    p.solution = SolutionViewEvent{seq, student, number, ts};
    return p;
  }
  const auto& c = j.at("chosen");
  Choice chosen;
  if (c.is_boolean()) {
    chosen = c.get<bool>();
  } else if (c.is_number_unsigned()) {
    chosen = c.get<std::size_t>();
  } else {
    throw std::invalid_argument("'chosen' must be an index or a boolean");
  }
  p.answer = AnswerEvent{seq, student, number, chosen, j.at("correct").get<bool>(), ts};
  return p;
}

}  // namespace

StudyService::ReplayReport StudyService::replay(std::istream& log, RecoveryPolicy policy) {
  auto read = read_log(log, policy);
  ReplayReport report;
  report.warnings = std::move(read.warnings);
  report.valid_bytes = read.valid_bytes;

  std::set<std::string> touched;
  for (const auto& rec : read.records) {
    try {
      ParsedEvent ev = parse_event(rec.event);
      const auto& q = instance(ev.view ? ev.solution.number : ev.answer.number);
      const std::string& who = ev.view ? ev.solution.student : ev.answer.student;
      const std::uint64_t seq = ev.view ? ev.solution.seq : ev.answer.seq;
      Student& s = student_for_write(who);
      std::lock_guard lock(s.mutex);
      if (seq < s.next_seq) {
        throw std::invalid_argument("sequence number " + std::to_string(seq) + " does not increase for student '" +
                                    who + "'");
      }
      if (ev.view) {
        s.views.push_back(ev.solution);
        s.next_seq = seq + 1;
      } else {
        if (is_correct(q, ev.answer.chosen) != ev.answer.correct) {
          throw std::invalid_argument("logged correctness disagrees with question " + std::to_string(q.number));
        }
        apply_answer(s, q, ev.answer);
        touched.insert(who);
      }
      ++report.events;
    } catch (const std::exception& e) {
      const std::string msg =
          "invalid log event at byte offset " + std::to_string(rec.offset) + ": " + e.what();
      if (policy == RecoveryPolicy::strict) throw LogError(msg, rec.offset);
      report.warnings.push_back(msg + "; recovered the " + std::to_string(report.events) + "-event prefix");
      report.valid_bytes = rec.offset;
      break;
    }
  }

  for (const auto& id : touched) {
    Student& s = student_for_write(id);
    std::lock_guard lock(s.mutex);
    refresh(s);
  }
  return report;
}

StudyService::ReplayReport StudyService::replay_file(const std::string& path, RecoveryPolicy policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return replay(in, policy);
}

std::unique_ptr<StudyService> rebuild_from_log(std::shared_ptr<const ConceptMap> map,
                                               std::vector<QuestionInstance> bank, std::istream& log,
                                               RecoveryPolicy policy, StudyService::ReplayReport* report,
                                               ServiceConfig config) {
  auto svc = std::make_unique<StudyService>(std::move(map), std::move(bank), std::move(config));
  auto r = svc->replay(log, policy);
  if (report) *report = std::move(r);
  return svc;
}

}  // namespace study
