#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "study/cli.hpp"
#include "study/study_service.hpp"
#include "support.hpp"

using namespace study;
using nlohmann::json;
using testing::data_path;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "studyctl");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(args.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("studycli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return file(name);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& path) {
  const auto text = slurp(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

const char* kBrokenWeights = R"({"root": "C", "nodes": [
  {"id": "C", "title": "Course", "children": [{"id": "A", "weight": 0.5}, {"id": "B", "weight": 0.4}]},
  {"id": "A", "title": "A"}, {"id": "B", "title": "B"}]})";

}  // namespace

TEST_CASE("validate") {
  TempDir dir;
  auto ok = cli({"validate", "--map", data_path("demo_map.json")});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("ok (57 concepts)") != std::string::npos);

  const auto broken = dir.write("broken.json", kBrokenWeights);
  auto bad = cli({"validate", "--map", broken});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("weight sum") != std::string::npos);
  CHECK(bad.out.find("sum to 0.9,") != std::string::npos);
  CHECK(bad.out.find("  C ") != std::string::npos);

  auto as_json = cli({"--json", "validate", "--map", broken});
  CHECK(as_json.code == 1);
  const auto j = json::parse(as_json.out);
  CHECK(j["valid"] == false);
  REQUIRE(j["violations"].size() == 1);
  CHECK(j["violations"][0]["node"] == "C");

  CHECK(cli({"validate", "--map", dir.file("missing.json")}).code == 2);
  CHECK(cli({"validate", "--map", dir.write("syntax.json", "{\"root\": ")}).code == 2);
  CHECK(cli({"validate", "--map", dir.write("schema.json", "{\"nodes\": 3}")}).code == 2);
  CHECK(cli({"validate"}).code != 0);
}

TEST_CASE("generate") {
  TempDir dir;
  const auto bank = dir.file("bank.jsonl");
  auto r = cli({"generate", "--templates", data_path("templates"), "--per-template", "5", "--bank", bank});
  CHECK(r.code == 0);
  CHECK(r.out.find("templates read    12") != std::string::npos);
  const auto lines = line_count(bank);
  CHECK(r.out.find("instances         " + std::to_string(lines) + "\n") != std::string::npos);
  CHECK(load_bank(bank).size() == lines);

  auto j = cli({"--json", "generate", "--templates", data_path("templates"), "--per-template", "1", "--bank", bank});
  CHECK(j.code == 0);
  const auto summary = json::parse(j.out);
  CHECK(summary["instances"] == 12);
  CHECK(summary["template_errors"] == 0);
  CHECK(line_count(bank) == 12);

  fs::create_directories(dir.path / "empty");
  CHECK(cli({"generate", "--templates", dir.file("empty"), "--bank", dir.file("none.jsonl")}).code == 1);
  CHECK(cli({"generate", "--templates", dir.file("absent"), "--bank", dir.file("none.jsonl")}).code == 2);

  fs::create_directories(dir.path / "mixed");
  fs::copy_file(data_path("templates/01_partial_derivative.tmpl"), dir.path / "mixed" / "a.tmpl");
  std::ofstream(dir.path / "mixed" / "b.tmpl") << "%template broken\n%stem\n{{ x + }}\n";
  auto mixed = cli({"generate", "--templates", dir.file("mixed"), "--per-template", "3", "--bank", bank});
  CHECK(mixed.code == 0);
  CHECK(mixed.out.find("template errors   1") != std::string::npos);
  CHECK(mixed.err.find("b.tmpl") != std::string::npos);
}

TEST_CASE("simulate") {
  TempDir dir;
  const std::vector<std::string> base{"--json",  "simulate", "--map",     data_path("demo_map.json"), "--bank",
                                      data_path("demo_bank.jsonl"), "--students", "10", "--answers", "5"};
  auto a = base, b = base;
  a.insert(a.end(), {"--seed", "7"});
  b.insert(b.end(), {"--seed", "7", "--log", dir.file("sim.jsonl")});
  const auto ra = cli(a), rb = cli(b);
  REQUIRE(ra.code == 0);
  CHECK(ra.out == rb.out);
  const auto j = json::parse(ra.out);
  CHECK(j["answers"] == 50);
  CHECK(j["students"] == 10);
  CHECK(j["degenerate"] == false);
  CHECK(line_count(dir.file("sim.jsonl")) == 50);

  auto c = base;
  c.insert(c.end(), {"--seed", "8"});
  CHECK(cli(c).out != ra.out);

  auto zero = cli({"simulate", "--map", data_path("demo_map.json"), "--bank", data_path("demo_bank.jsonl"),
                   "--students", "3", "--answers", "0"});
  CHECK(zero.code == 0);
  CHECK(zero.out.find("note: no answers were simulated") != std::string::npos);

  CHECK(cli({"simulate", "--map", dir.file("nope.json"), "--bank", data_path("demo_bank.jsonl")}).code == 2);
  CHECK(cli({"simulate", "--map", data_path("demo_map.json"), "--bank", data_path("demo_bank.jsonl"), "--strategy",
             "cubic"})
            .code != 0);
}

TEST_CASE("simulator matches the evidence model") {
  const auto map = load_concept_map(data_path("demo_map.json"));
  const int n = 10000;
  SUBCASE("mastery sampling") {
    Rng rng("fidelity", 3);
    std::map<std::string, int> known;
    for (int i = 0; i < n; ++i)
      for (const auto& [id, m] : sample_mastery(map, rng, 0.3)) known[id] += m;
    for (const auto& leaf : map.leaves()) CHECK(std::abs(known[leaf] / double(n) - 0.3) <= 0.02);
    // Additive aggregates: expected value equals the leaf rate.
    CHECK(std::abs(known[map.root()] / double(n) - 0.3) <= 0.02);
  }
  SUBCASE("response sampling") {
    auto meta = testing::sample_meta();
    meta.concepts = {{"gradient", 0.7}, {"hessian", 0.3}};
    Rng rng("responses", 4);
    for (const auto strategy : {Strategy::linear, Strategy::logistic}) {
      for (const bool g : {false, true}) {
        for (const bool h : {false, true}) {
          const std::map<std::string, bool> mastery{{"gradient", g}, {"hessian", h}};
          const double p = response_probability(meta, strategy, mastery);
          int hits = 0;
          for (int i = 0; i < n; ++i) hits += sample_response(meta, strategy, mastery, rng);
          CHECK(std::abs(hits / double(n) - p) <= 0.02);
        }
      }
      CHECK(response_probability(meta, strategy, {{"gradient", false}, {"hessian", false}}) ==
            doctest::Approx(0.25).epsilon(1e-12));
      CHECK(response_probability(meta, strategy, {{"gradient", true}, {"hessian", true}}) ==
            doctest::Approx(0.8).epsilon(1e-12));
    }
  }
}

TEST_CASE("report") {
  TempDir dir;
  SUBCASE("worked counts") {
    // Three students with 3, 5 and 4 answers: mean 4, population SD sqrt(2/3).
    // Two students with 3 and 5: mean 4, SD 1.
    std::ostringstream log;
    int seq = 1;
    auto answer = [&](const std::string& s, int n) {
      for (int i = 0; i < n; ++i)
        log << json{{"seq", seq++}, {"student", s}, {"number", 1}, {"chosen", 0}, {"correct", false}, {"ts", 0}}.dump()
            << "\n";
    };
    answer("a", 3);
    answer("b", 5);
    log << json{{"seq", seq++}, {"student", "a"}, {"number", 1}, {"event", "solution_view"}, {"ts", 0}}.dump() << "\n";
    std::istringstream in(log.str());
    const auto r = usage_report(in);
    CHECK(r.total_answers == 8);
    CHECK(r.students == 2);
    CHECK(r.mean_answers == doctest::Approx(4.0));
    CHECK(r.sd_answers == doctest::Approx(1.0));
    CHECK(r.solution_views == 1);
    CHECK(r.warnings.empty());

    const auto path = dir.write("log.jsonl", log.str());
    auto text = cli({"report", "--log", path});
    CHECK(text.code == 0);
    CHECK(text.out.find("mean per student  4.00") != std::string::npos);
    CHECK(text.out.find("sd per student    1.00") != std::string::npos);
  }
  SUBCASE("empty log") {
    std::istringstream in("");
    const auto r = usage_report(in);
    CHECK(r.total_answers == 0);
    CHECK(r.students == 0);
    CHECK(r.mean_answers == 0.0);
    CHECK(r.sd_answers == 0.0);
    const auto j = json::parse(cli({"--json", "report", "--log", dir.write("empty.jsonl", "")}).out);
    CHECK(j["total_answers"] == 0);
    // A log that does not exist yet is an empty log.
    CHECK(cli({"report", "--log", dir.file("missing.jsonl")}).code == 0);
  }
  SUBCASE("matches a direct count of a simulated log") {
    const auto log = dir.file("sim.jsonl");
    REQUIRE(cli({"simulate", "--map", data_path("calculus_map.json"), "--bank", data_path("calculus_bank.jsonl"),
                 "--students", "12", "--answers", "7", "--seed", "3", "--log", log})
                .code == 0);
    // Append a truncated line; the report should cover the valid prefix.
    std::ofstream(log, std::ios::app) << R"({"seq": 99, "stud)";

    std::map<std::string, double> counts;
    {
      std::ifstream in(log);
      std::string line;
      while (std::getline(in, line)) {
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) break;
        counts[j["student"]] += 1;
      }
    }
    double sum = 0, sumsq = 0;
    for (const auto& [s, c] : counts) {
      sum += c;
      sumsq += c * c;
    }
    const double n = static_cast<double>(counts.size());
    const double mean = sum / n;
    const double sd = std::sqrt(sumsq / n - mean * mean);

    auto run = cli({"--json", "report", "--log", log, "--map", data_path("calculus_map.json"), "--bank",
                    data_path("calculus_bank.jsonl")});
    CHECK(run.code == 0);
    CHECK(run.err.find("warning:") != std::string::npos);
    const auto j = json::parse(run.out);
    CHECK(j["total_answers"] == static_cast<std::size_t>(sum));
    CHECK(j["students"] == counts.size());
    CHECK(j["mean_answers"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
    CHECK(j["sd_answers"].get<double>() == doctest::Approx(sd).epsilon(1e-9));

    std::ifstream in(log, std::ios::binary);
    const auto svc = rebuild_from_log(std::make_shared<const ConceptMap>(testing::calculus_map()),
                                      load_bank(data_path("calculus_bank.jsonl")), in, RecoveryPolicy::prefix);
    std::size_t above50 = 0, above80 = 0;
    for (const auto& s : svc->students()) {
      const double p = svc->posteriors_of(s).at("C");
      above50 += p > 0.5;
      above80 += p > 0.8;
    }
    CHECK(j["above_50"] == above50);
    CHECK(j["above_80"] == above80);

    CHECK(cli({"report", "--log", log, "--map", data_path("calculus_map.json")}).code == 2);
  }
}

TEST_CASE("listen address parsing") {
  CHECK(parse_listen("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(parse_listen("0.0.0.0:0").second == 0);
  CHECK_THROWS(parse_listen("localhost"));
  CHECK_THROWS(parse_listen("host:99999"));
  CHECK_THROWS(parse_listen("host:http"));
}

namespace {

struct Child {
  pid_t pid = -1;
  FILE* out = nullptr;
};

Child spawn(const std::vector<std::string>& args) {
  int fds[2];
  REQUIRE(::pipe(fds) == 0);
  const pid_t pid = ::fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    std::vector<char*> argv;
    std::string exe = STUDYCTL_PATH;
    argv.push_back(exe.data());
    std::vector<std::string> copy = args;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execv(exe.c_str(), argv.data());
    ::_exit(127);
  }
  ::close(fds[1]);
  return {pid, ::fdopen(fds[0], "r")};
}

int wait_exit(pid_t pid) {
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

}  // namespace

TEST_CASE("serve runs until SIGTERM and its log replays") {
  TempDir dir;
  const auto log = dir.file("serve.jsonl");
  auto child = spawn({"serve", "--map", data_path("demo_map.json"), "--bank", data_path("demo_bank.jsonl"), "--listen",
                      "127.0.0.1:0", "--log", log});
  char line[256] = {0};
  REQUIRE(std::fgets(line, sizeof line, child.out) != nullptr);
  const std::string banner(line);
  const std::string prefix = "listening on http://127.0.0.1:";
  REQUIRE(banner.rfind(prefix, 0) == 0);
  const int port = std::stoi(banner.substr(prefix.size()));

  httplib::Client client("127.0.0.1", port);
  auto progress = client.Get("/api/progress/new");
  REQUIRE(progress);
  CHECK(progress->status == 200);
  std::function<void(const json&)> all_fifty = [&](const json& node) {
    CHECK(node["percent"] == 50);
    for (const auto& c : node["children"]) all_fifty(c);
  };
  all_fifty(json::parse(progress->body)["root"]);

  const auto bank = load_bank(data_path("demo_bank.jsonl"));
  auto posted = client.Post("/api/answer", json{{"student", "ana"}, {"number", 5}, {"chosen", 0}}.dump(),
                            "application/json");
  REQUIRE(posted);
  CHECK(posted->status == 200);
  const auto answer = json::parse(posted->body);

  ::kill(child.pid, SIGTERM);
  CHECK(wait_exit(child.pid) == 0);
  std::fclose(child.out);

  std::ifstream in(log, std::ios::binary);
  const auto map = std::make_shared<const ConceptMap>(load_concept_map(data_path("demo_map.json")));
  const auto svc = rebuild_from_log(map, bank, in, RecoveryPolicy::strict);
  CHECK(svc->students() == std::vector<std::string>{"ana"});
  CHECK(to_json(svc->get_progress("ana")) == answer["progress"]);

  // A restarted server picks the student up from the log.
  auto again = spawn({"serve", "--map", data_path("demo_map.json"), "--bank", data_path("demo_bank.jsonl"), "--listen",
                      "127.0.0.1:0", "--log", log});
  REQUIRE(std::fgets(line, sizeof line, again.out) != nullptr);
  const int port2 = std::stoi(std::string(line).substr(prefix.size()));
  httplib::Client client2("127.0.0.1", port2);
  auto restored = client2.Get("/api/teacher/student/ana");
  REQUIRE(restored);
  CHECK(restored->status == 200);
  ::kill(again.pid, SIGINT);
  CHECK(wait_exit(again.pid) == 0);
  std::fclose(again.out);
}

TEST_CASE("serve rejects bad inputs") {
  auto child = spawn({"serve", "--map", "/nonexistent/map.json", "--bank", data_path("demo_bank.jsonl"), "--listen",
                      "127.0.0.1:0"});
  CHECK(wait_exit(child.pid) != 0);
  std::fclose(child.out);
  auto bad_listen = spawn({"serve", "--map", data_path("demo_map.json"), "--bank", data_path("demo_bank.jsonl"),
                           "--listen", "nowhere"});
  CHECK(wait_exit(bad_listen.pid) != 0);
  std::fclose(bad_listen.out);
}
