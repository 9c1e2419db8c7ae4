#include <cstdint>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "dichotomy/error.hpp"
#include "dichotomy/io.hpp"
#include "dichotomy/pipeline.hpp"
#include "dichotomy/problems.hpp"

namespace {

using namespace dichotomy;

struct Flags {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool allow_failed_gates = false;
  std::size_t threads = 0;
  std::string problem;
  std::vector<std::string> params;
};

RunConfig load_config(const Flags& f) {
  RunConfig c = f.config_path.empty() ? RunConfig{} : RunConfig::from_json(io::read_text_file(f.config_path));
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed_set) c.seed = f.seed;
  c.threads = f.threads ? f.threads : (c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency()));
  if (!f.problem.empty() && f.problem != c.problem_id) {
    c.problem_id = f.problem;
    c.problem_params.clear();
  }
  for (const auto& kv : f.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ConfigInvalid, "--param expects name=value, got " + kv);
    try {
      c.problem_params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigInvalid, "--param value is not a number: " + kv);
    }
  }
  c.validate();
  return c;
}

int run(const Flags& f, const std::vector<std::string>& stages_override, bool use_override) {
  RunConfig c = load_config(f);
  if (use_override) c.pipeline = stages_override;
  const RunResult r = run_pipeline(c, RunOptions{f.allow_failed_gates});
  for (const auto& e : r.manifest) std::cout << e.stage << "  " << e.file << "  " << e.sha256 << '\n';
  for (const auto& g : r.failed_gates) std::cerr << "failed gate: " << g << '\n';
  return r.exit_status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant manifolds of dichotomous evolution equations"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", f.out, "output directory");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& s) { f.seed = s, f.seed_set = true; }, "sampler seed");
  app.add_flag("--allow-failed-gates", f.allow_failed_gates, "exit 0 when hypotheses or gates fail");
  app.add_option("--threads", f.threads, "worker threads (default: logical cores)");
  app.add_option("--problem", f.problem, "catalog problem id");
  app.add_option("--param", f.params, "problem parameter name=value (repeatable)");

  std::vector<std::string> chosen;
  for (const auto& s : known_stages()) {
    auto* sub = app.add_subcommand(s, "run the " + s + " stage");
    sub->callback([&chosen, s] { chosen = {s}; });
  }
  bool run_config = false;
  app.add_subcommand("run", "run the pipeline listed in the config")->callback([&] { run_config = true; });
  auto* problems = app.add_subcommand("problems", "problem catalog");
  problems->require_subcommand(1);
  bool list = false;
  problems->add_subcommand("list", "list catalog problems and parameters")->callback([&] { list = true; });

  // global options are accepted after the subcommand as well
  app.fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (list) {
      std::cout << problems_listing() << '\n';
      return 0;
    }
    return run(f, chosen, !run_config);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::ConfigInvalid || e.kind() == ErrorKind::UnknownProblem ||
                   e.kind() == ErrorKind::ParamOutOfRange
               ? 2
               : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
