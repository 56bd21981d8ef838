#include "spinmem/config.hpp"

#include <algorithm>
#include <cmath>

#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

using nlohmann::json;

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

class Validator {
 public:
  void unknown_keys(const json& obj, const std::string& path,
                    const std::vector<std::string>& allowed) {
    if (!obj.is_object()) return;
    for (const auto& [key, value] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
      std::string best;
      int best_dist = 1000;
      for (const auto& cand : allowed) {
        const int d = edit_distance(key, cand);
        if (d < best_dist) {
          best_dist = d;
          best = cand;
        }
      }
      std::string msg = "unknown key '" + path + key + "'";
      if (!best.empty() && best_dist <= std::max<int>(2, static_cast<int>(key.size()) / 2)) {
        msg += " (did you mean '" + best + "'?)";
      }
      problems.push_back(msg);
    }
  }

  bool require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.is_object() || !obj.contains(key)) {
      problems.push_back("missing required key '" + path + key + "'");
      return false;
    }
    return true;
  }

  template <typename T>
  std::optional<T> get(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.is_object() || !obj.contains(key)) return std::nullopt;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      problems.push_back("wrong type for '" + path + key + "'");
      return std::nullopt;
    }
  }

  std::optional<Eigen::Vector3d> get_vec3(const json& obj, const std::string& path,
                                          const std::string& key) {
    auto arr = get<std::vector<double>>(obj, path, key);
    if (!arr) return std::nullopt;
    if (arr->size() != 3) {
      problems.push_back("'" + path + key + "' must have exactly 3 entries");
      return std::nullopt;
    }
    return Eigen::Vector3d((*arr)[0], (*arr)[1], (*arr)[2]);
  }

  std::vector<std::string> problems;
};

InteractionTensor parse_tensor(Validator& v, const json& obj, const std::string& path) {
  v.unknown_keys(obj, path, {"principal_values", "euler_xzx_deg"});
  InteractionTensor t;
  v.require(obj, path, "principal_values");
  if (auto p = v.get_vec3(obj, path, "principal_values")) t.principal_values = *p;
  if (auto e = v.get_vec3(obj, path, "euler_xzx_deg")) {
    t.orientation = {(*e)(0), (*e)(1), (*e)(2)};
  }
  return t;
}

}  // namespace

const char* experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Levels: return "levels";
    case ExperimentKind::Spectrum: return "spectrum";
    case ExperimentKind::Endor: return "endor";
    case ExperimentKind::Relax: return "relax";
    case ExperimentKind::Sdmc: return "sdmc";
    case ExperimentKind::Rabi: return "rabi";
    case ExperimentKind::Store: return "store";
    case ExperimentKind::Qpt: return "qpt";
    case ExperimentKind::Fit: return "fit";
  }
  return "unknown";
}

std::optional<ExperimentKind> experiment_from_name(const std::string& name) {
  static const std::pair<const char*, ExperimentKind> table[] = {
      {"levels", ExperimentKind::Levels}, {"spectrum", ExperimentKind::Spectrum},
      {"endor", ExperimentKind::Endor},   {"relax", ExperimentKind::Relax},
      {"sdmc", ExperimentKind::Sdmc},     {"rabi", ExperimentKind::Rabi},
      {"store", ExperimentKind::Store},   {"qpt", ExperimentKind::Qpt},
      {"fit", ExperimentKind::Fit}};
  for (const auto& [n, k] : table) {
    if (name == n) return k;
  }
  return std::nullopt;
}

std::string canonical_config(const nlohmann::json& j) { return j.dump(); }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("configuration root must be a JSON object");

  Validator v;
  RunConfig cfg;

  v.unknown_keys(j, "", {"system", "field", "experiment", "ensemble", "seed", "output",
                         "threads"});

  // experiment
  json exp;
  if (v.require(j, "", "experiment")) {
    exp = j.at("experiment");
    if (v.require(exp, "experiment.", "type")) {
      if (auto name = v.get<std::string>(exp, "experiment.", "type")) {
        if (auto kind = experiment_from_name(*name)) {
          cfg.experiment = *kind;
        } else {
          v.problems.push_back("experiment.type '" + *name +
                               "' is not one of levels|spectrum|endor|relax|sdmc|rabi|store"
                               "|qpt|fit");
        }
      }
    }
  }

  // system
  if (j.contains("system")) {
    const json& s = j.at("system");
    v.unknown_keys(s, "system.", {"electron_spin", "nuclear_spin", "g_tensor",
                                  "hyperfine_mhz", "nuclear_g_factor"});
    SpinSystem sys;
    if (auto es = v.get<double>(s, "system.", "electron_spin")) sys.electron_spin = *es;
    v.require(s, "system.", "nuclear_spin");
    if (auto ns = v.get<double>(s, "system.", "nuclear_spin")) sys.nuclear_spin = *ns;
    if (v.require(s, "system.", "g_tensor")) {
      sys.g = parse_tensor(v, s.at("g_tensor"), "system.g_tensor.");
    }
    if (v.require(s, "system.", "hyperfine_mhz")) {
      sys.hyperfine_mhz = parse_tensor(v, s.at("hyperfine_mhz"), "system.hyperfine_mhz.");
    }
    if (auto gn = v.get<double>(s, "system.", "nuclear_g_factor")) sys.nuclear_g_factor = *gn;
    cfg.system = sys;
  }

  // field
  if (j.contains("field")) {
    const json& f = j.at("field");
    v.unknown_keys(f, "field.", {"magnitude_mt", "direction", "orientation_search"});
    if (auto b = v.get<double>(f, "field.", "magnitude_mt")) cfg.field.magnitude_mt = *b;
    if (f.contains("direction")) {
      if (auto dir = v.get_vec3(f, "field.", "direction")) {
        cfg.field.direction = dir->normalized();
      }
    }
    if (f.contains("orientation_search")) {
      const json& o = f.at("orientation_search");
      v.unknown_keys(o, "field.orientation_search.", {"cone_axis", "half_angle_deg"});
      if (auto axis = v.get_vec3(o, "field.orientation_search.", "cone_axis")) {
        cfg.field.cone_axis = axis->normalized();
      }
      if (auto half = v.get<double>(o, "field.orientation_search.", "half_angle_deg")) {
        cfg.field.cone_half_angle_deg = *half;
      }
    }
  }

  // ensemble
  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    v.unknown_keys(e, "ensemble.",
                   {"members", "electron_detuning_fwhm_mhz", "rf_detuning_fwhm_mhz",
                    "mw_amplitude_sigma", "rf_amplitude_sigma", "rf_amplitude_bound"});
    if (auto m = v.get<int>(e, "ensemble.", "members")) cfg.ensemble.members = *m;
    if (auto x = v.get<double>(e, "ensemble.", "electron_detuning_fwhm_mhz"))
      cfg.ensemble.electron_detuning_fwhm_mhz = *x;
    if (auto x = v.get<double>(e, "ensemble.", "rf_detuning_fwhm_mhz"))
      cfg.ensemble.rf_detuning_fwhm_mhz = *x;
    if (auto x = v.get<double>(e, "ensemble.", "mw_amplitude_sigma"))
      cfg.ensemble.mw_amplitude_sigma = *x;
    if (auto x = v.get<double>(e, "ensemble.", "rf_amplitude_sigma"))
      cfg.ensemble.rf_amplitude_sigma = *x;
    if (auto x = v.get<double>(e, "ensemble.", "rf_amplitude_bound"))
      cfg.ensemble.rf_amplitude_bound = *x;
  }

  if (auto seed = v.get<std::uint64_t>(j, "", "seed")) {
    cfg.seed = *seed;
    cfg.ensemble.seed = *seed;
  }
  if (auto threads = v.get<int>(j, "", "threads")) cfg.threads = *threads;

  if (j.contains("output")) {
    const json& o = j.at("output");
    v.unknown_keys(o, "output.", {"dir", "format"});
    if (auto d = v.get<std::string>(o, "output.", "dir")) cfg.output_dir = *d;
    if (auto f = v.get<std::string>(o, "output.", "format")) {
      if (*f != "csv" && *f != "json") {
        v.problems.push_back("output.format must be 'csv' or 'json'");
      } else {
        cfg.output_format = *f;
      }
    }
  }

  // Per-experiment blocks.
  const std::string ep = "experiment.";
  switch (cfg.experiment) {
    case ExperimentKind::Levels:
      v.unknown_keys(exp, ep, {"type"});
      break;
    case ExperimentKind::Spectrum: {
      v.unknown_keys(exp, ep,
                     {"type", "mw_frequency_mhz", "field_min_mt", "field_max_mt", "points",
                      "lineshape_fwhm_mhz", "include_partner"});
      auto& c = cfg.spectrum;
      if (auto x = v.get<double>(exp, ep, "mw_frequency_mhz")) c.mw_frequency_mhz = *x;
      if (auto x = v.get<double>(exp, ep, "field_min_mt")) c.field_min_mt = *x;
      if (auto x = v.get<double>(exp, ep, "field_max_mt")) c.field_max_mt = *x;
      if (auto x = v.get<int>(exp, ep, "points")) c.points = *x;
      if (auto x = v.get<double>(exp, ep, "lineshape_fwhm_mhz")) c.lineshape_fwhm_mhz = *x;
      if (auto x = v.get<bool>(exp, ep, "include_partner")) c.include_partner = *x;
      break;
    }
    case ExperimentKind::Endor: {
      v.unknown_keys(exp, ep, {"type", "rf_min_mhz", "rf_max_mhz", "points",
                               "linewidths_mhz"});
      auto& c = cfg.endor;
      if (auto x = v.get<double>(exp, ep, "rf_min_mhz")) c.rf_min_mhz = *x;
      if (auto x = v.get<double>(exp, ep, "rf_max_mhz")) c.rf_max_mhz = *x;
      if (auto x = v.get<int>(exp, ep, "points")) c.points = *x;
      if (auto x = v.get<std::vector<double>>(exp, ep, "linewidths_mhz"))
        c.linewidths_mhz = *x;
      break;
    }
    case ExperimentKind::Relax: {
      v.unknown_keys(exp, ep, {"type", "prefactor_per_s", "gap_wavenumber",
                               "temperatures_k", "t2e_reference_s", "kappa"});
      auto& c = cfg.relax;
      if (auto x = v.get<double>(exp, ep, "prefactor_per_s")) c.orbach.prefactor_per_s = *x;
      if (auto x = v.get<double>(exp, ep, "gap_wavenumber")) c.orbach.gap_wavenumber = *x;
      if (auto x = v.get<std::vector<double>>(exp, ep, "temperatures_k"))
        c.temperatures_k = *x;
      if (auto x = v.get<double>(exp, ep, "t2e_reference_s")) c.t2e_reference_s = *x;
      if (auto x = v.get<double>(exp, ep, "kappa")) c.kappa = *x;
      break;
    }
    case ExperimentKind::Sdmc: {
      v.unknown_keys(exp, ep,
                     {"type", "concentration_per_cm3", "g_factor", "t1_bath_s", "box_spins",
                      "trajectories", "tau_points", "tau_max_factor", "exclusion_radius_nm"});
      auto& c = cfg.sdmc;
      if (auto x = v.get<double>(exp, ep, "concentration_per_cm3"))
        c.bath.concentration_per_cm3 = *x;
      if (auto x = v.get<double>(exp, ep, "g_factor")) c.bath.g_factor = *x;
      if (auto x = v.get<double>(exp, ep, "t1_bath_s")) c.bath.t1_bath_s = *x;
      if (auto x = v.get<int>(exp, ep, "box_spins")) c.bath.box_spins = *x;
      if (auto x = v.get<int>(exp, ep, "trajectories")) c.bath.trajectories = *x;
      if (auto x = v.get<int>(exp, ep, "tau_points")) c.tau_points = *x;
      if (auto x = v.get<double>(exp, ep, "tau_max_factor")) c.tau_max_factor = *x;
      if (auto x = v.get<double>(exp, ep, "exclusion_radius_nm"))
        c.bath.exclusion_radius_nm = *x;
      break;
    }
    case ExperimentKind::Rabi: {
      v.unknown_keys(exp, ep, {"type", "channel", "rabi_frequency_mhz", "periods",
                               "samples"});
      auto& c = cfg.rabi;
      if (auto ch = v.get<std::string>(exp, ep, "channel")) {
        if (*ch == "mw") {
          c.channel = Channel::Microwave;
        } else if (*ch == "rf") {
          c.channel = Channel::RadioFrequency;
        } else {
          v.problems.push_back("experiment.channel must be 'mw' or 'rf'");
        }
      }
      if (auto x = v.get<double>(exp, ep, "rabi_frequency_mhz")) c.rabi_frequency_mhz = *x;
      if (auto x = v.get<double>(exp, ep, "periods")) c.periods = *x;
      if (auto x = v.get<int>(exp, ep, "samples")) c.samples = *x;
      break;
    }
    case ExperimentKind::Store:
    case ExperimentKind::Qpt: {
      std::vector<std::string> keys = {"type", "t1e_s", "t2e_s", "t2n_s", "timings"};
      if (cfg.experiment == ExperimentKind::Store) keys.push_back("storage_times_us");
      v.unknown_keys(exp, ep, keys);
      RelaxationChannels* ch = cfg.experiment == ExperimentKind::Store
                                   ? &cfg.store.channels
                                   : &cfg.qpt.channels;
      StorageTimings* tm = cfg.experiment == ExperimentKind::Store ? &cfg.store.timings
                                                                   : &cfg.qpt.timings;
      if (auto x = v.get<double>(exp, ep, "t1e_s")) ch->t1e_s = *x;
      if (auto x = v.get<double>(exp, ep, "t2e_s")) ch->t2e_s = *x;
      if (auto x = v.get<double>(exp, ep, "t2n_s")) ch->t2n_s = *x;
      if (exp.contains("timings")) {
        const json& t = exp.at("timings");
        v.unknown_keys(t, ep + "timings.",
                       {"tau_e_us", "d1_us", "tau_n_us", "d4_us", "mw_rabi_mhz",
                        "rf_rabi_mhz"});
        if (auto x = v.get<double>(t, ep + "timings.", "tau_e_us")) tm->tau_e_us = *x;
        if (auto x = v.get<double>(t, ep + "timings.", "d1_us")) tm->d1_us = *x;
        if (auto x = v.get<double>(t, ep + "timings.", "tau_n_us")) tm->tau_n_us = *x;
        if (auto x = v.get<double>(t, ep + "timings.", "d4_us")) tm->d4_us = *x;
        if (auto x = v.get<double>(t, ep + "timings.", "mw_rabi_mhz")) tm->mw_rabi_mhz = *x;
        if (auto x = v.get<double>(t, ep + "timings.", "rf_rabi_mhz")) tm->rf_rabi_mhz = *x;
      }
      if (cfg.experiment == ExperimentKind::Store) {
        if (auto x = v.get<std::vector<double>>(exp, ep, "storage_times_us")) {
          cfg.store.storage_times_us = *x;
        }
      }
      break;
    }
    case ExperimentKind::Fit: {
      v.unknown_keys(exp, ep,
                     {"type", "pattern_csv", "planes", "angle_step_deg", "mw_frequency_mhz",
                      "field_min_mt", "field_max_mt", "noise_sigma_mt",
                      "guess_perturbation"});
      auto& c = cfg.fit;
      if (auto x = v.get<std::string>(exp, ep, "pattern_csv")) c.pattern_csv = *x;
      if (auto planes = v.get<std::vector<std::string>>(exp, ep, "planes")) {
        c.planes.clear();
        for (const auto& p : *planes) {
          if (p == "perp_d1") {
            c.planes.push_back(RotationPlane::PerpD1);
          } else if (p == "perp_d2") {
            c.planes.push_back(RotationPlane::PerpD2);
          } else if (p == "perp_b") {
            c.planes.push_back(RotationPlane::PerpB);
          } else {
            v.problems.push_back("experiment.planes entries must be perp_d1|perp_d2|perp_b");
          }
        }
      }
      if (auto x = v.get<double>(exp, ep, "angle_step_deg")) c.angle_step_deg = *x;
      if (auto x = v.get<double>(exp, ep, "mw_frequency_mhz")) c.mw_frequency_mhz = *x;
      if (auto x = v.get<double>(exp, ep, "field_min_mt")) c.field_min_mt = *x;
      if (auto x = v.get<double>(exp, ep, "field_max_mt")) c.field_max_mt = *x;
      if (auto x = v.get<double>(exp, ep, "noise_sigma_mt")) c.noise_sigma_mt = *x;
      if (auto x = v.get<double>(exp, ep, "guess_perturbation")) c.guess_perturbation = *x;
      break;
    }
  }

  // Cross-field requirements.
  const bool needs_system =
      cfg.experiment == ExperimentKind::Levels || cfg.experiment == ExperimentKind::Spectrum ||
      cfg.experiment == ExperimentKind::Endor || cfg.experiment == ExperimentKind::Fit;
  if (needs_system && !cfg.system) {
    v.problems.push_back("missing required key 'system' for this experiment");
  }
  const bool needs_field =
      cfg.experiment == ExperimentKind::Levels || cfg.experiment == ExperimentKind::Endor;
  if (needs_field && !j.contains("field")) {
    v.problems.push_back("missing required key 'field' for this experiment");
  }

  if (!v.problems.empty()) {
    std::string msg = "configuration errors:";
    for (const auto& p : v.problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace spinmem
