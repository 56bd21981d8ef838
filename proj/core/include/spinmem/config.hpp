#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinmem/dynamics.hpp"
#include "spinmem/fitting.hpp"
#include "spinmem/relaxation.hpp"

namespace spinmem {

enum class ExperimentKind { Levels, Spectrum, Endor, Relax, Sdmc, Rabi, Store, Qpt, Fit };

const char* experiment_name(ExperimentKind kind);
std::optional<ExperimentKind> experiment_from_name(const std::string& name);

// Orientation given directly or searched within a cone of an axis.
struct FieldConfig {
  double magnitude_mt = 561.5;
  std::optional<Eigen::Vector3d> direction;
  Eigen::Vector3d cone_axis = Eigen::Vector3d::UnitX();
  double cone_half_angle_deg = 5.0;
};

struct SpectrumConfig {
  double mw_frequency_mhz = 9700.0;
  double field_min_mt = 430.0;
  double field_max_mt = 660.0;
  int points = 2301;
  double lineshape_fwhm_mhz = 12.0;
  bool include_partner = true;
};

struct EndorConfig {
  double rf_min_mhz = 195.0;
  double rf_max_mhz = 210.0;
  int points = 1501;
  std::vector<double> linewidths_mhz = {0.235, 0.248};
};

struct RelaxConfig {
  OrbachParams orbach{6e10, 77.0};
  std::vector<double> temperatures_k = {5.0, 5.5, 6.0, 6.5, 7.0};
  double t2e_reference_s = 106e-6;
  double kappa = 62.9;
};

struct SdmcConfig {
  BathSpec bath{9.4e16, 1.5, 0.1245e-3, 400, 1.0, 10000, 1};
  int tau_points = 32;
  double tau_max_factor = 0.8;  // of the analytic estimate
};

struct RabiConfig {
  Channel channel = Channel::Microwave;
  double rabi_frequency_mhz = 15.625;
  double periods = 10.5;
  int samples = 421;
};

struct StoreConfig {
  RelaxationChannels channels{0.42e-3, 50e-6, 0.66e-3};
  StorageTimings timings;
  std::vector<double> storage_times_us;  // swept 2 tau_n values
};

struct QptConfig {
  RelaxationChannels channels{0.42e-3, 50e-6, 0.66e-3};
  StorageTimings timings;
};

struct FitExperimentConfig {
  std::optional<std::string> pattern_csv;  // else synthesize from the system
  std::vector<RotationPlane> planes = {RotationPlane::PerpB, RotationPlane::PerpD2,
                                       RotationPlane::PerpD1};
  double angle_step_deg = 15.0;
  double mw_frequency_mhz = 9700.0;
  double field_min_mt = 100.0;
  double field_max_mt = 900.0;
  double noise_sigma_mt = 0.0;
  double guess_perturbation = 0.05;
};

struct RunConfig {
  ExperimentKind experiment = ExperimentKind::Levels;
  std::optional<SpinSystem> system;
  FieldConfig field;
  EnsembleSpec ensemble;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  std::string output_format = "csv";  // csv | json
  int threads = 1;

  SpectrumConfig spectrum;
  EndorConfig endor;
  RelaxConfig relax;
  SdmcConfig sdmc;
  RabiConfig rabi;
  StoreConfig store;
  QptConfig qpt;
  FitExperimentConfig fit;
};

// Parses and validates a JSON config. All schema violations are collected
// and reported together; unknown keys are rejected with the closest valid
// key named.
RunConfig parse_config(const std::string& text);

// The parsed config re-serialized in canonical form (for hashing).
std::string canonical_config(const nlohmann::json& j);

}  // namespace spinmem
