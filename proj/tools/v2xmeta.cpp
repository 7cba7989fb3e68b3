// Command line front end: one subcommand per mode.
#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "v2xmeta/config.hpp"
#include "v2xmeta/studies.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  bool desk = false;
  bool print_resolved = false;
  bool quiet = false;
  std::vector<std::string> overrides;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config,-c", f.config, "config file (key = value lines)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--jobs,-j", f.jobs, "worker threads");
  cmd->add_option("--out,-o", f.out, "output directory");
  cmd->add_flag("--desk", f.desk, "desk-scale profile");
  cmd->add_flag("--print-resolved", f.print_resolved,
                "print the effective config and exit");
  cmd->add_flag("--quiet,-q", f.quiet, "no progress output");
  cmd->add_option("--set", f.overrides, "override one key, key=value (repeatable)");
}

v2xmeta::RunConfig resolve(const std::string& mode, const Flags& f) {
  using namespace v2xmeta;
  RunConfig cfg = f.config.empty() ? parse_config("", "<defaults>", f.desk)
                                   : load_config(f.config, f.desk);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  cfg.mode = mode;
  if (f.seed) cfg.seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.out) cfg.out = *f.out;
  if (f.desk) cfg.desk = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"v2xmeta: meta-learned spectrum sharing for vehicular networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(V2XMETA_VERSION));

  Flags flags;
  const std::vector<std::pair<std::string, std::string>> modes{
      {"meta-train", "Reptile meta-training over a task set"},
      {"adapt", "adapt a checkpoint to one task"},
      {"evaluate", "evaluate policies on one task"},
      {"study", "run a figure study (fig3, fig45, fig6, fig7)"},
      {"calibrate", "estimate the V2V reward constant per task"}};
  for (const auto& [name, help] : modes) add_flags(app.add_subcommand(name, help), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string mode = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(mode, flags);
    if (flags.print_resolved) {
      std::cout << v2xmeta::emit_config(cfg);
      return 0;
    }
    v2xmeta::studies::Log log;
    if (!flags.quiet) log = [](const std::string& msg) { std::cerr << msg << '\n'; };
    const auto outputs = v2xmeta::studies::run(cfg, log);
    for (const auto& f : outputs.files) std::cout << cfg.out << '/' << f << '\n';
  } catch (const v2xmeta::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
