#pragma once

/**
 * Candidate scoring against problem test suites.
 *
 * Problems come in two shapes: stdin/stdout tests (input piped to the
 * program, trimmed stdout compared line-wise) and entry-point tests (a
 * call harness is appended and the printed repr compared). Programs run in
 * an isolated per-evaluation temp directory under a configurable
 * interpreter with wall-clock and output-size limits. Program failures
 * (crash, timeout, wrong answer) are verdicts; only infrastructure
 * failures are retried.
 */

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "evoroute/common.hpp"
#include "evoroute/rng.hpp"

namespace evoroute {

// ============================================================================
// Types
// ============================================================================

struct TestCase {
  std::string input;     // stdin payload (stdin/stdout problems)
  std::string args;      // argument list source text (entry-point problems)
  std::string expected;  // expected trimmed output
};

struct Problem {
  std::string id;
  std::string statement;
  std::string entry_point;  // empty for stdin/stdout problems
  double time_limit_s = 10.0;
  std::vector<TestCase> tests;
};

enum class Verdict { Pass, WrongAnswer, RuntimeError, Timeout };

struct EvalResult {
  double pass_rate = 0.0;
  std::vector<Verdict> verdicts;
  bool binary_accuracy = false;  // 1 iff every test passed
  std::string error_class;       // non-empty when execution itself failed

  static EvalResult from_verdicts(std::vector<Verdict> v) {
    EvalResult r;
    r.verdicts = std::move(v);
    size_t passed = 0;
    for (auto verdict : r.verdicts)
      if (verdict == Verdict::Pass) ++passed;
    r.pass_rate = r.verdicts.empty()
                      ? 0.0
                      : static_cast<double>(passed) /
                            static_cast<double>(r.verdicts.size());
    r.binary_accuracy = !r.verdicts.empty() && passed == r.verdicts.size();
    return r;
  }
};

struct EvalLimits {
  double timeout_s = 1200.0;  // cap on any single test
  int max_retries = 4;        // infrastructure retries
  size_t max_output_bytes = 1 << 20;
};

// Interface consumed by the evolution loop and warm-up.
struct CandidateEvaluator {
  virtual ~CandidateEvaluator() = default;
  virtual EvalResult evaluate_program(const std::string& program,
                                      const Problem& problem) = 0;
};

// ============================================================================
// Output comparison: trailing-whitespace-insensitive, line-wise exact
// ============================================================================

inline std::vector<std::string> normalized_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) lines.push_back(current);
  for (auto& line : lines) {
    while (!line.empty() &&
           (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline bool outputs_match(const std::string& got, const std::string& expected) {
  return normalized_lines(got) == normalized_lines(expected);
}

// ============================================================================
// Subprocess runner
// ============================================================================

namespace detail {

struct RunOutcome {
  enum class Kind { Completed, Timeout, Infra } kind = Kind::Infra;
  int exit_code = -1;
  std::string stdout_text;
};

// Run argv with `input` on stdin; capture stdout up to max_bytes; kill on
// deadline. Infra means the process could not be run at all.
inline RunOutcome run_subprocess(const std::vector<std::string>& argv,
                                 const std::string& input, double timeout_s,
                                 size_t max_bytes, const std::string& cwd) {
  RunOutcome out;
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) return out;
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    return out;
  }

  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    return out;
  }

  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(out_pipe[1], STDERR_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    if (!cwd.empty() && chdir(cwd.c_str()) != 0) _exit(127);
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    _exit(127);  // exec failed
  }

  close(in_pipe[0]);
  close(out_pipe[1]);

  // Feed stdin fully, then close. Test inputs are small; a blocking write
  // is acceptable because the reader drains below.
  {
    size_t off = 0;
    // Avoid SIGPIPE if the child exits before reading.
    signal(SIGPIPE, SIG_IGN);
    while (off < input.size()) {
      const ssize_t n =
          write(in_pipe[1], input.data() + off, input.size() - off);
      if (n <= 0) break;
      off += static_cast<size_t>(n);
    }
    close(in_pipe[1]);
  }

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_s);
  bool timed_out = false;
  std::string captured;
  char buf[4096];
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    const int remaining_ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
            .count());
    pollfd pfd{out_pipe[0], POLLIN, 0};
    const int pr = poll(&pfd, 1, std::min(remaining_ms, 100));
    if (pr < 0) break;
    if (pr == 0) continue;
    const ssize_t n = read(out_pipe[0], buf, sizeof buf);
    if (n < 0) break;
    if (n == 0) break;  // EOF: child closed stdout
    if (captured.size() < max_bytes)
      captured.append(buf, buf + std::min<size_t>(n, max_bytes - captured.size()));
    if (captured.size() >= max_bytes) {
      timed_out = false;
      kill(pid, SIGKILL);  // output cap exceeded
      break;
    }
  }
  close(out_pipe[0]);

  if (timed_out) kill(pid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);

  if (timed_out) {
    out.kind = RunOutcome::Kind::Timeout;
    return out;
  }
  out.kind = RunOutcome::Kind::Completed;
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
  out.stdout_text = std::move(captured);
  return out;
}

inline std::string make_temp_dir() {
  const char* base = std::getenv("TMPDIR");
  std::string templ =
      std::string(base && *base ? base : "/tmp") + "/evoroute-eval-XXXXXX";
  std::vector<char> buf(templ.begin(), templ.end());
  buf.push_back('\0');
  if (!mkdtemp(buf.data())) return {};
  return std::string(buf.data());
}

}  // namespace detail

// ============================================================================
// Evaluator
// ============================================================================

struct SubprocessEvaluatorOptions {
  std::vector<std::string> interpreter{"python3"};
  EvalLimits limits;
  int parallel = 32;
};

class SubprocessEvaluator : public CandidateEvaluator {
 public:
  using Options = SubprocessEvaluatorOptions;

  explicit SubprocessEvaluator(Options opt = {}) : opt_(std::move(opt)) {
    if (opt_.interpreter.empty())
      throw InvalidInput("evaluator: empty interpreter command");
    if (opt_.parallel < 1) throw InvalidInput("evaluator: parallel must be >= 1");
  }

  EvalResult evaluate_program(const std::string& program,
                              const Problem& problem) override {
    if (program.empty()) throw InvalidInput("evaluate: empty program");
    if (problem.tests.empty())
      throw InvalidInput("evaluate: problem has no test cases");

    // An absolute interpreter path that does not exist can never run.
    const std::string& interp = opt_.interpreter.front();
    if (interp.find('/') != std::string::npos && access(interp.c_str(), X_OK) != 0)
      throw EvaluatorUnavailable("evaluator: interpreter not executable: " + interp);

    const std::string dir = with_infra_retries([&] {
      std::string d = detail::make_temp_dir();
      if (d.empty()) throw EvaluatorUnavailable("evaluator: cannot create sandbox dir");
      return d;
    });
    struct DirGuard {
      std::string path;
      ~DirGuard() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
      }
    } guard{dir};

    std::vector<Verdict> verdicts;
    for (const auto& test : problem.tests)
      verdicts.push_back(run_test(program, problem, test, dir));
    return EvalResult::from_verdicts(std::move(verdicts));
  }

  // Bounded pool; results are delivered in submission order.
  std::vector<EvalResult> evaluate_many(
      const std::vector<std::pair<std::string, const Problem*>>& batch) {
    std::vector<EvalResult> results(batch.size());
    std::vector<std::string> errors(batch.size());
    std::atomic<size_t> next{0};
    const int width = std::min<int>(opt_.parallel, static_cast<int>(batch.size()));
    std::vector<std::thread> workers;
    for (int w = 0; w < width; ++w)
      workers.emplace_back([&] {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= batch.size()) return;
          try {
            results[i] = evaluate_program(batch[i].first, *batch[i].second);
          } catch (const std::exception& e) {
            errors[i] = e.what();
          }
        }
      });
    for (auto& t : workers) t.join();
    for (const auto& err : errors)
      if (!err.empty()) throw EvaluatorUnavailable(err);
    return results;
  }

 private:
  Options opt_;

  template <typename F>
  auto with_infra_retries(F&& f) -> decltype(f()) {
    for (int attempt = 0;; ++attempt) {
      try {
        return f();
      } catch (const EvaluatorUnavailable&) {
        if (attempt >= opt_.limits.max_retries) throw;
      }
    }
  }

  Verdict run_test(const std::string& program, const Problem& problem,
                   const TestCase& test, const std::string& dir) {
    std::string source = program;
    if (!problem.entry_point.empty()) {
      source += "\nprint(repr(" + problem.entry_point + "(" + test.args + ")))\n";
    }
    const std::string path = dir + "/candidate";
    {
      std::ofstream out(path);
      out << source;
      if (!out) throw EvaluatorUnavailable("evaluator: cannot write program file");
    }

    std::vector<std::string> argv = opt_.interpreter;
    argv.push_back(path);
    const double timeout = std::min(problem.time_limit_s, opt_.limits.timeout_s);

    const auto outcome = with_infra_retries([&] {
      auto o = detail::run_subprocess(argv, test.input, timeout,
                                      opt_.limits.max_output_bytes, dir);
      if (o.kind == detail::RunOutcome::Kind::Infra)
        throw EvaluatorUnavailable("evaluator: sandbox process failed to start");
      if (o.kind == detail::RunOutcome::Kind::Completed && o.exit_code == 127)
        throw EvaluatorUnavailable("evaluator: interpreter not found");
      return o;
    });

    if (outcome.kind == detail::RunOutcome::Kind::Timeout) return Verdict::Timeout;
    if (outcome.exit_code != 0) return Verdict::RuntimeError;
    return outputs_match(outcome.stdout_text, test.expected)
               ? Verdict::Pass
               : Verdict::WrongAnswer;
  }
};

// ============================================================================
// Simulation-path scoring
// ============================================================================

// Unsolved generations land on a uniform partial score; solved means a
// perfect pass. Drawn from the caller's derived stream for reproducibility.
inline EvalResult sim_evaluate(bool solved, Rng& rng) {
  EvalResult r;
  if (solved) {
    r.pass_rate = 1.0;
    r.binary_accuracy = true;
    r.verdicts = {Verdict::Pass};
    return r;
  }
  static constexpr double kPartial[4] = {0.0, 0.25, 0.5, 0.75};
  r.pass_rate = kPartial[rng.below(4)];
  r.binary_accuracy = false;
  r.verdicts = {Verdict::WrongAnswer};
  return r;
}

// ============================================================================
// Problem suite I/O (line-delimited JSON records)
// ============================================================================

inline Problem problem_from_json(const nlohmann::json& j) {
  Problem p;
  p.id = j.at("id").get<std::string>();
  p.statement = j.value("statement", std::string{});
  p.entry_point = j.value("entry_point", std::string{});
  p.time_limit_s = j.value("time_limit_s", 10.0);
  if (!j.contains("tests") || !j.at("tests").is_array() || j.at("tests").empty())
    throw InvalidInput("problem '" + p.id + "' has no test cases");
  for (const auto& t : j.at("tests")) {
    TestCase tc;
    tc.input = t.value("input", std::string{});
    tc.args = t.value("args", std::string{});
    tc.expected = t.at("expected").get<std::string>();
    p.tests.push_back(std::move(tc));
  }
  return p;
}

inline nlohmann::json problem_to_json(const Problem& p) {
  nlohmann::json j;
  j["id"] = p.id;
  j["statement"] = p.statement;
  if (!p.entry_point.empty()) j["entry_point"] = p.entry_point;
  j["time_limit_s"] = p.time_limit_s;
  j["tests"] = nlohmann::json::array();
  for (const auto& t : p.tests) {
    nlohmann::json tc;
    if (!t.input.empty() || t.args.empty()) tc["input"] = t.input;
    if (!t.args.empty()) tc["args"] = t.args;
    tc["expected"] = t.expected;
    j["tests"].push_back(tc);
  }
  return j;
}

// Parses, validates, and returns problems in stable id order. An empty
// file yields an empty suite; `warning` (when given) is set in that case.
inline std::vector<Problem> load_problems(const std::string& path,
                                          std::string* warning = nullptr) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("load_problems: cannot open " + path);

  std::vector<Problem> problems;
  std::set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      problems.push_back(problem_from_json(j));
    } catch (const std::exception& e) {
      throw ParseError("load_problems: line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (!seen.insert(problems.back().id).second)
      throw InvalidInput("load_problems: duplicate problem id '" +
                         problems.back().id + "' at line " +
                         std::to_string(line_no));
  }
  if (problems.empty() && warning)
    *warning = "problem suite is empty: " + path;
  std::sort(problems.begin(), problems.end(),
            [](const Problem& a, const Problem& b) { return a.id < b.id; });
  return problems;
}

inline void save_problems(const std::vector<Problem>& problems,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("save_problems: cannot open " + path);
  for (const auto& p : problems) out << problem_to_json(p).dump() << "\n";
}

}  // namespace evoroute
