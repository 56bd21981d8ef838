// Command-line front end: one subcommand per experiment, configuration from
// a JSON file, artifacts plus a run manifest written to the output directory.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spinmem/errors.hpp"
#include "spinmem/run.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

void print_error_json(const std::string& kind, const std::string& what) {
  nlohmann::json err = {{"error", kind}, {"message", what}};
  std::cerr << err.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinmem: spin-memory simulator for rare-earth hyperfine systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string format;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;

  const std::vector<std::string> experiments = {"levels", "spectrum", "endor", "relax",
                                                "sdmc", "rabi", "store", "qpt", "fit"};
  for (const std::string& name : experiments) {
    CLI::App* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--out-dir", out_dir, "output directory (overrides config)");
    sub->add_option("--format", format, "csv or json (overrides config)")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed = s; seed_set = true; },
        "random seed (overrides config)");
    sub->add_option("--threads", threads, "worker thread budget");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  std::string text;
  {
    std::ifstream in(config_path);
    if (!in) {
      print_error_json("io", "cannot read config file: " + config_path);
      return kExitIo;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }

  try {
    spinmem::RunConfig cfg = spinmem::parse_config(text);
    if (spinmem::experiment_name(cfg.experiment) != subcommand) {
      print_error_json("config", "config experiment.type '" +
                                     std::string(spinmem::experiment_name(cfg.experiment)) +
                                     "' does not match subcommand '" + subcommand + "'");
      return kExitConfig;
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (!format.empty()) cfg.output_format = format;
    if (seed_set) {
      cfg.seed = seed;
      cfg.ensemble.seed = seed;
    }
    if (threads > 0) cfg.threads = threads;

    const spinmem::RunOutcome outcome = spinmem::run(cfg, text);
    std::cout << outcome.summary.dump(2) << "\n";
    return kExitOk;
  } catch (const spinmem::ConfigError& e) {
    print_error_json("config", e.what());
    return kExitConfig;
  } catch (const spinmem::IoError& e) {
    print_error_json("io", e.what());
    return kExitIo;
  } catch (const spinmem::Error& e) {
    print_error_json("numerical", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    print_error_json("numerical", e.what());
    return kExitNumerical;
  }
}
