#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spinmem/config.hpp"
#include "spinmem/errors.hpp"
#include "spinmem/io.hpp"
#include "spinmem/run.hpp"

using namespace spinmem;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMinimalRelax = R"({
  "experiment": {
    "type": "relax",
    "temperatures_k": [5.0, 6.0, 7.0]
  },
  "seed": 3,
  "output": { "dir": "PLACEHOLDER" }
})";

std::string with_dir(const std::string& templ, const std::string& dir) {
  std::string out = templ;
  const auto pos = out.find("PLACEHOLDER");
  out.replace(pos, std::string("PLACEHOLDER").size(), dir);
  return out;
}

}  // namespace

TEST_CASE("a minimal config parses with defaults filled") {
  const RunConfig cfg = parse_config(with_dir(kMinimalRelax, "/tmp/x"));
  CHECK(cfg.experiment == ExperimentKind::Relax);
  CHECK(cfg.seed == 3);
  CHECK(cfg.relax.orbach.prefactor_per_s == doctest::Approx(6e10));
  CHECK(cfg.relax.orbach.gap_wavenumber == doctest::Approx(77.0));
  CHECK(cfg.relax.kappa == doctest::Approx(62.9));
  CHECK(cfg.output_format == "csv");
  CHECK(cfg.ensemble.members == 1);
}

TEST_CASE("unknown keys are rejected with the nearest valid key named") {
  const char* bad = R"({
    "system": {
      "nuclear_spin": 3.5,
      "gx_tensor": { "principal_values": [2, 2, 2] },
      "hyperfine_mhz": { "principal_values": [0, 0, 0] }
    },
    "field": { "magnitude_mt": 350.0, "direction": [0, 0, 1] },
    "experiment": { "type": "levels" }
  })";
  try {
    parse_config(bad);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gx_tensor") != std::string::npos);
    CHECK(msg.find("g_tensor") != std::string::npos);
    CHECK(msg.find("did you mean") != std::string::npos);
  }
}

TEST_CASE("an empty config lists all missing pieces and exits nonzero") {
  try {
    parse_config("{}");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("experiment") != std::string::npos);
  }
}

TEST_CASE("all schema violations are reported together") {
  const char* bad = R"({
    "experiment": { "type": "spectrum", "points": "many" },
    "sneed": 5,
    "output": { "format": "yaml" }
  })";
  try {
    parse_config(bad);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("sneed") != std::string::npos);        // unknown key
    CHECK(msg.find("points") != std::string::npos);       // type error
    CHECK(msg.find("format") != std::string::npos);       // enum violation
    CHECK(msg.find("system") != std::string::npos);       // missing block
  }
}

TEST_CASE("invalid JSON is a config error") {
  CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
}

TEST_CASE("bundled configuration files parse") {
  const std::filesystem::path configs = std::filesystem::path(SPINMEM_SOURCE_DIR) / "configs";
  REQUIRE(std::filesystem::exists(configs));
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(configs)) {
    if (entry.path().extension() != ".json") continue;
    ++count;
    CHECK_NOTHROW(parse_config(slurp(entry.path())));
  }
  CHECK(count >= 5);
}

TEST_CASE("relax experiment writes its artifacts and manifest") {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "spinmem_relax";
  std::filesystem::remove_all(dir);
  const std::string text = with_dir(kMinimalRelax, dir.string());
  const RunConfig cfg = parse_config(text);
  const RunOutcome outcome = run(cfg, text);
  CHECK(outcome.artifacts == std::vector<std::string>{"relax.csv"});
  CHECK(std::filesystem::exists(dir / "relax.csv"));
  CHECK(std::filesystem::exists(dir / "manifest.json"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("seed") == 3);
  CHECK(manifest.at("artifacts").size() == 1);
  CHECK(manifest.at("config_hash") == content_hash(text));

  const std::string csv = slurp(dir / "relax.csv");
  CHECK(csv.rfind("temperature_k,t1e_s,t2n_s", 0) == 0);
}

TEST_CASE("identical config and seed give byte-identical numeric artifacts") {
  const char* store_templ = R"({
    "experiment": {
      "type": "store",
      "t1e_s": 0.00042, "t2e_s": 5e-05, "t2n_s": 0.00066,
      "storage_times_us": [20.0, 40.0, 60.0, 80.0, 100.0]
    },
    "ensemble": {
      "members": 64,
      "electron_detuning_fwhm_mhz": 12.0,
      "rf_detuning_fwhm_mhz": 0.15,
      "mw_amplitude_sigma": 0.015,
      "rf_amplitude_sigma": 0.14,
      "rf_amplitude_bound": 0.07
    },
    "seed": 11,
    "output": { "dir": "PLACEHOLDER" }
  })";
  const auto base = std::filesystem::temp_directory_path();
  std::string first, second;
  for (int round = 0; round < 2; ++round) {
    const auto dir = base / ("spinmem_det_" + std::to_string(round));
    std::filesystem::remove_all(dir);
    const std::string text = with_dir(store_templ, dir.string());
    const RunConfig cfg = parse_config(text);
    run(cfg, text);
    const std::string payload = slurp(dir / "store.csv") + slurp(dir / "store_fit.json");
    (round == 0 ? first : second) = payload;
  }
  CHECK(first == second);
  CHECK(!first.empty());
}

TEST_CASE("the sdmc experiment emits the decay curve and fit parameters") {
  const char* sdmc_templ = R"({
    "experiment": {
      "type": "sdmc",
      "t1_bath_s": 0.0001245,
      "trajectories": 1500,
      "box_spins": 150,
      "tau_points": 8
    },
    "seed": 5,
    "output": { "dir": "PLACEHOLDER" }
  })";
  const auto dir = std::filesystem::temp_directory_path() / "spinmem_sdmc";
  std::filesystem::remove_all(dir);
  const std::string text = with_dir(sdmc_templ, dir.string());
  const RunOutcome outcome = run(parse_config(text), text);
  CHECK(std::filesystem::exists(dir / "sdmc.csv"));
  CHECK(std::filesystem::exists(dir / "sdmc_fit.json"));
  const auto fit = nlohmann::json::parse(slurp(dir / "sdmc_fit.json"));
  CHECK(fit.at("fit_t2_s").get<double>() > 0.0);
  CHECK(outcome.summary.contains("fit_stretch"));
}

TEST_CASE("the qpt experiment emits chi JSON and the bar-chart CSV") {
  const char* qpt_templ = R"({
    "experiment": {
      "type": "qpt",
      "t1e_s": 0.00042, "t2e_s": 5e-05, "t2n_s": 0.00066
    },
    "ensemble": {
      "members": 96,
      "electron_detuning_fwhm_mhz": 12.0,
      "rf_detuning_fwhm_mhz": 0.15,
      "mw_amplitude_sigma": 0.015,
      "rf_amplitude_sigma": 0.14,
      "rf_amplitude_bound": 0.07
    },
    "seed": 2,
    "output": { "dir": "PLACEHOLDER" }
  })";
  const auto dir = std::filesystem::temp_directory_path() / "spinmem_qpt";
  std::filesystem::remove_all(dir);
  const std::string text = with_dir(qpt_templ, dir.string());
  const RunOutcome outcome = run(parse_config(text), text);
  CHECK(std::filesystem::exists(dir / "chi.json"));
  CHECK(std::filesystem::exists(dir / "chi.csv"));

  const std::string csv = slurp(dir / "chi.csv");
  CHECK(csv.rfind("basis_row,basis_col,re,im", 0) == 0);
  // 16 data rows for the 4x4 matrix.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);

  const auto chi = nlohmann::json::parse(slurp(dir / "chi.json"));
  CHECK(chi.at("chi").size() == 4);
  CHECK(outcome.summary.at("process_fidelity").get<double>() > 0.3);
}

TEST_CASE("csv numbers use 9 significant digits") {
  CHECK(csv_number(1.0) == "1");
  CHECK(csv_number(0.123456789123) == "0.123456789");
  CHECK(csv_number(-2.5e-7) == "-2.5e-07");
}
