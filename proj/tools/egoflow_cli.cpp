// Command-line front end; talks to the library only through the C API.

#include "egoflow/egoflow.h"

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace {

struct SessionCloser {
  void operator()(egoflow_session* s) const { egoflow_session_close(s); }
};

int fail(egoflow_status status) {
  std::fprintf(stderr, "egoflow: %s\n", egoflow_last_error());
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> commands{"synth", "corrupt", "build", "stats", "train", "eval", "ablate", "report"};
  CLI::App app{"Synthetic ego-view trajectory benchmark and dual-stream flow forecaster"};
  app.set_version_flag("--version", std::string(egoflow_version()));

  std::string command;
  std::string config;
  std::string out = "run";
  long long seed = -1;
  int k = 0;
  int steps = 0;
  bool print_config = false;
  app.add_option("command", command, "synth | corrupt | build | stats | train | eval | ablate | report")
      ->required()
      ->check(CLI::IsMember(commands));
  app.add_option("--config", config, "JSON run config; built-in defaults when omitted");
  app.add_option("--seed", seed, "Seed for every stage (overrides the config)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "Run directory holding every artifact")->capture_default_str();
  app.add_option("--k", k, "Evaluate minADE/minFDE at this K only")->check(CLI::PositiveNumber);
  app.add_option("--steps", steps, "Sampler steps for evaluation")->check(CLI::PositiveNumber);
  app.add_flag("--print-config", print_config, "Print the merged config before running");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : EGOFLOW_ERR_CONFIG;
  }

  egoflow_session* raw = nullptr;
  if (auto st = egoflow_session_open(config.empty() ? nullptr : config.c_str(), out.c_str(), &raw); st != EGOFLOW_OK) {
    return fail(st);
  }
  std::unique_ptr<egoflow_session, SessionCloser> session(raw);

  std::vector<std::pair<std::string, std::string>> overrides;
  if (seed >= 0) overrides.emplace_back("seed", std::to_string(seed));
  if (k > 0) overrides.emplace_back("eval.ks", "[" + std::to_string(k) + "]");
  if (steps > 0) overrides.emplace_back("eval.steps", std::to_string(steps));
  for (const auto& [key, value] : overrides) {
    if (auto st = egoflow_session_override(session.get(), key.c_str(), value.c_str()); st != EGOFLOW_OK) {
      return fail(st);
    }
  }
  if (print_config) std::printf("%s\n", egoflow_session_config(session.get()));

  if (auto st = egoflow_session_run(session.get(), command.c_str()); st != EGOFLOW_OK) return fail(st);
  std::fputs(egoflow_session_output(session.get()), stdout);
  return 0;
}
