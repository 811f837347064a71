#include "study/cli.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <charconv>
#include <set>
#include <csignal>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include "study/concept_map.hpp"
#include "study/http_api.hpp"
#include "study/question_bank.hpp"
#include "study/study_service.hpp"

namespace study {

namespace fs = std::filesystem;
using nlohmann::json;

int cmd_validate(const std::string& map_path, bool as_json, std::ostream& out, std::ostream& err) {
  std::ifstream in(map_path, std::ios::binary);
  if (!in) {
    err << "error: cannot read '" << map_path << "'\n";
    return kExitInput;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  std::vector<Violation> violations;
  std::size_t nodes = 0;
  try {
    nodes = parse_concept_map(buf.str()).size();
  } catch (const ConceptMapError& e) {
    if (e.kind() != ConceptMapError::Kind::invalid) {
      err << "error: " << map_path << ": " << e.what() << "\n";
      return kExitInput;
    }
    violations = e.violations();
  }
  if (as_json) {
    json j;
    j["map"] = map_path;
    j["valid"] = violations.empty();
    j["nodes"] = nodes;
    auto& vs = j["violations"] = json::array();
    for (const auto& v : violations) vs.push_back({{"node", v.node_id}, {"rule", to_string(v.rule)}, {"message", v.message}});
    out << j.dump(2) << "\n";
  } else if (violations.empty()) {
    out << map_path << ": ok (" << nodes << " concepts)\n";
  } else {
    out << map_path << ": " << violations.size() << " violation(s)\n";
    for (const auto& v : violations) {
      out << "  " << std::left << std::setw(16) << (v.node_id.empty() ? "-" : v.node_id) << std::setw(18)
          << to_string(v.rule) << v.message << "\n";
    }
  }
  return violations.empty() ? kExitOk : kExitFailure;
}

int cmd_generate(const std::string& templates_dir, std::size_t per_template, const std::string& out_path,
                 bool as_json, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(templates_dir)) {
    err << "error: '" << templates_dir << "' is not a directory\n";
    return kExitInput;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(templates_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tmpl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<QuestionTemplate> templates;
  std::vector<std::pair<std::string, std::string>> template_errors;
  for (const auto& f : files) {
    try {
      templates.push_back(load_template(f.string()));
    } catch (const std::exception& e) {
      template_errors.emplace_back(f.filename().string(), e.what());
    }
  }
  const BankResult bank = generate_bank(templates, per_template);

  for (const auto& [file, msg] : template_errors) err << "template " << file << ": " << msg << "\n";
  for (const auto& e : bank.errors) err << e.message << "\n";

  if (bank.instances.empty()) {
    err << "error: no instances generated from '" << templates_dir << "'\n";
    return kExitFailure;
  }
  {
    std::ofstream o(out_path, std::ios::binary | std::ios::trunc);
    if (!o) {
      err << "error: cannot write '" << out_path << "'\n";
      return kExitInput;
    }
    o << to_jsonl(bank.instances);
    if (!o.flush()) {
      err << "error: write to '" << out_path << "' failed\n";
      return kExitFailure;
    }
  }

  if (as_json) {
    out << json{{"templates_read", files.size()},
                {"templates_loaded", templates.size()},
                {"template_errors", template_errors.size()},
                {"instances", bank.instances.size()},
                {"duplicates", bank.duplicates},
                {"instance_errors", bank.errors.size()},
                {"bank", out_path}}
               .dump(2)
        << "\n";
  } else {
    out << "templates read    " << files.size() << "\n"
        << "template errors   " << template_errors.size() << "\n"
        << "instances         " << bank.instances.size() << "\n"
        << "duplicates        " << bank.duplicates << "\n"
        << "instance errors   " << bank.errors.size() << "\n"
        << "bank              " << out_path << "\n";
  }
  return kExitOk;
}

namespace {

// Loads map and bank, reporting problems on err; returns false on failure.
bool load_inputs(const std::string& map_path, const std::string& bank_path, std::shared_ptr<const ConceptMap>& map,
                 std::vector<QuestionInstance>& bank, std::ostream& err) {
  try {
    map = std::make_shared<const ConceptMap>(load_concept_map(map_path));
  } catch (const std::exception& e) {
    err << "error: map '" << map_path << "': " << e.what() << "\n";
    return false;
  }
  try {
    bank = load_bank(bank_path);
  } catch (const std::exception& e) {
    err << "error: bank '" << bank_path << "': " << e.what() << "\n";
    return false;
  }
  return true;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

int cmd_simulate(const std::string& map_path, const std::string& bank_path, const SimulationOptions& options,
                 const std::optional<std::string>& log_path, bool as_json, std::ostream& out, std::ostream& err) {
  std::shared_ptr<const ConceptMap> map;
  std::vector<QuestionInstance> bank;
  if (!load_inputs(map_path, bank_path, map, bank, err)) return kExitInput;
  if (bank.empty()) {
    err << "error: bank '" << bank_path << "' is empty\n";
    return kExitInput;
  }
  SimulationOptions opts = options;
  SimulationReport report;
  try {
    if (log_path) opts.log = std::make_shared<EventLog>(*log_path);
    report = simulate(map, bank, opts);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  if (as_json) {
    json j = to_json(report);
    j["seed"] = opts.seed;
    j["strategy"] = to_string(opts.strategy);
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  out << "students          " << report.students << "\n"
      << "answers           " << report.answers << "\n"
      << "mastered leaves   " << report.mastered_leaves << "\n"
      << "unmastered leaves " << report.unmastered_leaves << "\n"
      << "separation        " << fixed(report.separation) << "\n"
      << "match rate        " << fixed(report.match_rate) << "\n";
  if (report.degenerate) out << "note: no answers were simulated; every posterior is the prior\n";
  out << "\n" << std::left << std::setw(20) << "leaf" << std::right << std::setw(10) << "mastered" << std::setw(12)
      << "unmastered" << "\n";
  for (const auto& [leaf, m] : report.per_leaf) {
    out << std::left << std::setw(20) << leaf << std::right << std::setw(10) << fixed(m.first, 3) << std::setw(12)
        << fixed(m.second, 3) << "\n";
  }
  return kExitOk;
}

UsageReport usage_report(std::istream& log) {
  UsageReport r;
  auto read = read_log(log, RecoveryPolicy::prefix);
  r.warnings = std::move(read.warnings);
  std::set<std::string> students;
  for (const auto& rec : read.records) {
    const auto& j = rec.event;
    const bool ok = j.contains("student") && j["student"].is_string() && j.contains("number") && j.contains("seq");
    if (!ok) {
      r.warnings.push_back("malformed log event at byte offset " + std::to_string(rec.offset) +
                           "; report covers the preceding prefix");
      break;
    }
    const auto who = j["student"].get<std::string>();
    students.insert(who);
    if (j.contains("event")) {
      if (j["event"] == "solution_view") ++r.solution_views;
      continue;
    }
    ++r.total_answers;
    ++r.answers_per_student[who];
  }
  for (const auto& s : students) r.answers_per_student.try_emplace(s, 0);
  r.students = students.size();
  if (r.students > 0) {
    const double n = static_cast<double>(r.students);
    r.mean_answers = static_cast<double>(r.total_answers) / n;
    double ss = 0.0;
    for (const auto& [s, c] : r.answers_per_student) {
      const double d = static_cast<double>(c) - r.mean_answers;
      ss += d * d;
    }
    r.sd_answers = std::sqrt(ss / n);
  }
  return r;
}

void add_thresholds(UsageReport& report, const std::string& map_path, const std::string& bank_path,
                    const std::string& log_path, Strategy strategy) {
  auto map = std::make_shared<const ConceptMap>(load_concept_map(map_path));
  auto bank = load_bank(bank_path);
  ServiceConfig config;
  config.network.strategy = strategy;
  std::ifstream in(log_path, std::ios::binary);
  StudyService::ReplayReport replay;
  auto svc = rebuild_from_log(map, std::move(bank), in, RecoveryPolicy::prefix, &replay, config);
  for (const auto& w : replay.warnings) {
    if (std::find(report.warnings.begin(), report.warnings.end(), w) == report.warnings.end()) {
      report.warnings.push_back(w);
    }
  }
  report.has_thresholds = true;
  for (const auto& s : svc->students()) {
    const double p = svc->posteriors_of(s).at(map->root());
    report.course_posterior[s] = p;
    if (p > 0.5) ++report.above_50;
    if (p > 0.8) ++report.above_80;
  }
}

nlohmann::json to_json(const UsageReport& r) {
  json j;
  j["total_answers"] = r.total_answers;
  j["students"] = r.students;
  j["mean_answers"] = r.mean_answers;
  j["sd_answers"] = r.sd_answers;
  j["solution_views"] = r.solution_views;
  j["answers_per_student"] = r.answers_per_student;
  j["warnings"] = r.warnings;
  if (r.has_thresholds) {
    j["above_50"] = r.above_50;
    j["above_80"] = r.above_80;
    j["course_posterior"] = r.course_posterior;
  }
  return j;
}

int cmd_report(const std::string& log_path, const std::optional<std::string>& map_path,
               const std::optional<std::string>& bank_path, Strategy strategy, bool as_json, std::ostream& out,
               std::ostream& err) {
  UsageReport r;
  {
    std::ifstream in(log_path, std::ios::binary);
    if (!in && fs::exists(log_path)) {
      err << "error: cannot read '" << log_path << "'\n";
      return kExitInput;
    }
    if (in) r = usage_report(in);
  }
  if (map_path.has_value() != bank_path.has_value()) {
    err << "error: the threshold table needs both --map and --bank\n";
    return kExitInput;
  }
  if (map_path) {
    try {
      add_thresholds(r, *map_path, *bank_path, log_path, strategy);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitInput;
    }
  }
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";

  if (as_json) {
    out << to_json(r).dump(2) << "\n";
    return kExitOk;
  }
  out << "total answers     " << r.total_answers << "\n"
      << "students          " << r.students << "\n"
      << "mean per student  " << fixed(r.mean_answers, 2) << "\n"
      << "sd per student    " << fixed(r.sd_answers, 2) << "\n"
      << "solution views    " << r.solution_views << "\n";
  if (r.has_thresholds) {
    const auto n = r.course_posterior.size();
    auto pct = [n](std::size_t k) { return n ? fixed(100.0 * static_cast<double>(k) / static_cast<double>(n), 1) : fixed(0.0, 1); };
    out << "\n" << std::left << std::setw(18) << "course posterior" << std::right << std::setw(10) << "students"
        << std::setw(10) << "%" << "\n"
        << std::left << std::setw(18) << "above 50%" << std::right << std::setw(10) << r.above_50 << std::setw(10)
        << pct(r.above_50) << "\n"
        << std::left << std::setw(18) << "above 80%" << std::right << std::setw(10) << r.above_80 << std::setw(10)
        << pct(r.above_80) << "\n";
  }
  return kExitOk;
}

std::pair<std::string, int> parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw std::invalid_argument("listen address '" + text + "' must look like host:port");
  }
  const std::string host = text.substr(0, colon);
  const std::string port_text = text.substr(colon + 1);
  int port = -1;
  auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || p != port_text.data() + port_text.size() || port < 0 || port > 65535) {
    throw std::invalid_argument("bad port in listen address '" + text + "'");
  }
  return {host, port};
}

int cmd_serve(const ServeConfig& config, std::ostream& out, std::ostream& err) {
  std::pair<std::string, int> addr;
  try {
    addr = parse_listen(config.listen);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  std::shared_ptr<const ConceptMap> map;
  std::vector<QuestionInstance> bank;
  if (!load_inputs(config.map_path, config.bank_path, map, bank, err)) return kExitInput;

  ServiceConfig sc;
  sc.network.strategy = config.strategy;
  std::unique_ptr<StudyService> service;
  std::shared_ptr<EventLog> log;
  try {
    service = std::make_unique<StudyService>(map, std::move(bank), sc);
    if (config.log_path) {
      const auto report = service->replay_file(*config.log_path, RecoveryPolicy::prefix);
      for (const auto& w : report.warnings) err << "warning: " << w << "\n";
      if (!report.warnings.empty()) EventLog::truncate(*config.log_path, report.valid_bytes);
      log = std::make_shared<EventLog>(*config.log_path);
      service->attach_log(log);
      err << "replayed " << report.events << " event(s) from " << *config.log_path << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  // Block the stop signals here so every server thread inherits the mask and
  // only sigwait below sees them.
  sigset_t stop_set;
  sigemptyset(&stop_set);
  sigaddset(&stop_set, SIGINT);
  sigaddset(&stop_set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_set, nullptr);

  httplib::Server server;
  install_routes(server, *service);

  int port = addr.second;
  if (port == 0) {
    port = server.bind_to_any_port(addr.first);
  } else if (!server.bind_to_port(addr.first, port)) {
    port = -1;
  }
  if (port < 0) {
    err << "error: cannot bind " << config.listen << "\n";
    return kExitFailure;
  }
  out << "listening on http://" << addr.first << ":" << port << std::endl;

  std::thread worker([&server] { server.listen_after_bind(); });
  int sig = 0;
  sigwait(&stop_set, &sig);
  server.stop();
  worker.join();
  if (log) log->flush();
  err << "stopped on signal " << sig << "\n";
  return kExitOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Course concept maps, question banks and the study service"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output");

  std::string map_path;
  std::string bank_path;
  std::string templates_dir;
  std::string log_path;
  std::string listen = "127.0.0.1:8080";
  std::string strategy_name = "linear";
  std::size_t per_template = 100;
  std::size_t students = 100;
  std::size_t answers = 20;
  std::uint64_t seed = 1;

  auto strategy_check = CLI::IsMember({"linear", "logistic"});

  auto* validate = app.add_subcommand("validate", "Check a concept map");
  validate->add_option("--map", map_path, "Concept map JSON")->required()->envname("STUDY_MAP");
  validate->add_flag("--json", as_json);

  auto* generate = app.add_subcommand("generate", "Instantiate templates into a bank");
  generate->add_option("--templates", templates_dir, "Directory of .tmpl files")->required()->envname("STUDY_TEMPLATES");
  generate->add_option("--per-template", per_template, "Seeds tried per template")->capture_default_str();
  generate->add_option("--bank", bank_path, "Output bank (JSON lines)")->required()->envname("STUDY_BANK");
  generate->add_flag("--json", as_json);

  auto* sim = app.add_subcommand("simulate", "Diagnose simulated students");
  sim->add_option("--map", map_path)->required()->envname("STUDY_MAP");
  sim->add_option("--bank", bank_path)->required()->envname("STUDY_BANK");
  sim->add_option("--students", students)->capture_default_str();
  sim->add_option("--answers", answers, "Answers per student")->capture_default_str();
  sim->add_option("--seed", seed)->capture_default_str();
  sim->add_option("--strategy", strategy_name)->check(strategy_check)->envname("STUDY_STRATEGY")->capture_default_str();
  sim->add_option("--log", log_path, "Append simulated answers to this log");
  sim->add_flag("--json", as_json);

  auto* report = app.add_subcommand("report", "Usage statistics from an event log");
  report->add_option("--log", log_path)->required()->envname("STUDY_LOG");
  report->add_option("--map", map_path, "With --bank: add the course posterior table");
  report->add_option("--bank", bank_path);
  report->add_option("--strategy", strategy_name)->check(strategy_check)->envname("STUDY_STRATEGY");
  report->add_flag("--json", as_json);

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--map", map_path)->required()->envname("STUDY_MAP");
  serve->add_option("--bank", bank_path)->required()->envname("STUDY_BANK");
  serve->add_option("--listen", listen, "host:port (port 0 picks one)")->envname("STUDY_LISTEN")->capture_default_str();
  serve->add_option("--strategy", strategy_name)->check(strategy_check)->envname("STUDY_STRATEGY");
  serve->add_option("--log", log_path, "Event log to replay and append to")->envname("STUDY_LOG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  const Strategy strategy = *parse_strategy(strategy_name);
  if (*validate) return cmd_validate(map_path, as_json, out, err);
  if (*generate) return cmd_generate(templates_dir, per_template, bank_path, as_json, out, err);
  if (*sim) {
    SimulationOptions opts;
    opts.students = students;
    opts.answers_each = answers;
    opts.seed = seed;
    opts.strategy = strategy;
    return cmd_simulate(map_path, bank_path, opts, log_path.empty() ? std::nullopt : std::optional(log_path),
                        as_json, out, err);
  }
  if (*report) {
    auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional(s); };
    return cmd_report(log_path, opt(map_path), opt(bank_path), strategy, as_json, out, err);
  }
  ServeConfig config;
  config.map_path = map_path;
  config.bank_path = bank_path;
  config.listen = listen;
  config.strategy = strategy;
  if (!log_path.empty()) config.log_path = log_path;
  return cmd_serve(config, out, err);
}

}  // namespace study
