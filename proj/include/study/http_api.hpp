#pragma once

#include <string>

namespace httplib {
class Server;
}

namespace study {

class StudyService;

/// Registers the JSON API on `server`:
///   GET  /api/progress/{student}
///   GET  /api/question?concept={id}
///   GET  /api/question/{number}
///   POST /api/answer          {student, number, chosen}
///   GET  /api/solution/{number}[?student={id}]
///   GET  /api/teacher/average?concept={id}
///   GET  /api/teacher/student/{id}
/// Failures come back as {"error": kind, "message": text} with a 4xx/5xx code.
void install_routes(httplib::Server& server, StudyService& service);

}  // namespace study
