#include "study/http_api.hpp"

#include <httplib.h>

#include <charconv>

#include <json.hpp>

#include "study/study_service.hpp"

namespace study {

namespace {

using nlohmann::json;

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  send(res, status, json{{"error", kind}, {"message", message}});
}

std::uint64_t parse_number(const std::string& text) {
  std::uint64_t n = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc{} || p != text.data() + text.size()) {
    throw std::invalid_argument("'" + text + "' is not a question number");
  }
  return n;
}

std::string_view kind_name(ServiceError::Kind k) {
  switch (k) {
    case ServiceError::Kind::unknown_instance: return "unknown_instance";
    case ServiceError::Kind::unknown_student: return "unknown_student";
    case ServiceError::Kind::unknown_concept: return "unknown_concept";
    case ServiceError::Kind::malformed_choice: return "malformed_choice";
    case ServiceError::Kind::no_related_questions: return "no_related_questions";
    case ServiceError::Kind::no_students: return "no_students";
  }
  return "error";
}

// Runs a handler and maps exceptions onto status codes.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      const int status = e.kind() == ServiceError::Kind::malformed_choice ? 400 : 404;
      fail(res, status, kind_name(e.kind()), e.what());
    } catch (const InferenceError& e) {
      fail(res, e.kind() == InferenceError::Kind::impossible_evidence ? 422 : 500, "inference", e.what());
    } catch (const json::exception& e) {
      fail(res, 400, "bad_request", e.what());
    } catch (const std::invalid_argument& e) {
      fail(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      fail(res, 500, "internal", e.what());
    }
  };
}

std::string required_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) throw std::invalid_argument(std::string("missing query parameter '") + name + "'");
  return req.get_param_value(name);
}

Choice parse_choice(const json& c) {
  if (c.is_boolean()) return c.get<bool>();
  if (c.is_number_unsigned()) return c.get<std::size_t>();
  if (c.is_string()) {
    const auto s = c.get<std::string>();
    if (s == "true") return true;
    if (s == "false") return false;
  }
  throw ServiceError(ServiceError::Kind::malformed_choice, "'chosen' must be a choice index or true/false");
}

}  // namespace

void install_routes(httplib::Server& server, StudyService& service) {
  server.Get(R"(/api/progress/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string student = req.matches[1];
               const auto view = service.has_student(student) ? service.get_progress(student)
                                                              : service.prior_progress(student);
               send(res, 200, to_json(view));
             }));

  server.Get("/api/question", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send(res, 200, public_json(service.select_question(required_param(req, "concept"))));
             }));

  server.Get(R"(/api/question/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send(res, 200, public_json(service.get_question_by_number(parse_number(req.matches[1]))));
             }));

  server.Post("/api/answer", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = json::parse(req.body);
                const auto student = body.at("student").get<std::string>();
                if (student.empty()) throw std::invalid_argument("'student' must not be empty");
                const auto number = body.at("number").get<std::uint64_t>();
                const auto result = service.record_answer(student, number, parse_choice(body.at("chosen")));
                send(res, 200,
                     json{{"correct", result.correct},
                          {"number", result.number},
                          {"progress", to_json(result.progress)},
                          {"solution", "/api/solution/" + std::to_string(result.number)}});
              }));

  server.Get(R"(/api/solution/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               std::optional<std::string> student;
               if (req.has_param("student")) student = req.get_param_value("student");
               const auto number = parse_number(req.matches[1]);
               send(res, 200, json{{"number", number}, {"solution", service.get_solution(number, student)}});
             }));

  server.Get("/api/teacher/average", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const auto concept_id = required_param(req, "concept");
               send(res, 200, json{{"concept", concept_id}, {"percent", service.class_average(concept_id)}});
             }));

  server.Get(R"(/api/teacher/student/([^/]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send(res, 200, to_json(service.get_progress(req.matches[1])));
             }));
}

}  // namespace study
