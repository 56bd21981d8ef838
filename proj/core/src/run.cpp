#include "spinmem/run.hpp"

#include <chrono>
#include <fstream>
#include <map>

#include "spinmem/errors.hpp"
#include "spinmem/io.hpp"
#include "spinmem/rng.hpp"
#include "spinmem/tomography.hpp"

namespace spinmem {

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;

Eigen::Vector3d resolve_direction(const RunConfig& cfg, const SpinSystem& sys) {
  if (cfg.field.direction) return *cfg.field.direction;
  const OrientationResult found = find_working_orientation(
      sys, cfg.field.cone_axis, cfg.field.cone_half_angle_deg);
  return found.direction;
}

json tensor_json(const InteractionTensor& t) {
  return {{"principal_values",
           {t.principal_values(0), t.principal_values(1), t.principal_values(2)}},
          {"euler_xzx_deg",
           {t.orientation.alpha_deg, t.orientation.beta_deg, t.orientation.gamma_deg}}};
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) out[k] = lo + (hi - lo) * k / (n - 1);
  return out;
}

struct ArtifactWriter {
  std::filesystem::path dir;
  std::string format;  // csv | json
  std::vector<std::string> names;

  std::filesystem::path path(const std::string& name) {
    names.push_back(name);
    return dir / name;
  }

  // Tabular artifact in the configured format: CSV with the given header or
  // a JSON object with column names and row arrays.
  void table(const std::string& base_name, const std::string& header,
             const std::vector<std::vector<double>>& rows) {
    if (format == "json") {
      std::vector<std::string> columns;
      std::string cur;
      for (char c : header) {
        if (c == ',') {
          columns.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      columns.push_back(cur);
      write_json(path(base_name + ".json"), {{"columns", columns}, {"rows", rows}});
    } else {
      write_csv(path(base_name + ".csv"), header, rows);
    }
  }
};

void run_levels(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  const SpinSystem& sys = *cfg.system;
  const Eigen::Vector3d dir = resolve_direction(cfg, sys);
  const FieldSpec field{cfg.field.magnitude_mt, dir};
  const Matrix h = build_hamiltonian(sys, field);
  const EigenSystem eig = eigensystem(h);
  const auto labels = level_labels(sys, dir, eig);

  std::vector<std::vector<double>> rows;
  for (int k = 0; k < eig.energies_mhz.size(); ++k) {
    rows.push_back({static_cast<double>(k), eig.energies_mhz(k), labels[k].m_s,
                    labels[k].m_i, labels[k].weight});
  }
  w.table("levels", "level,energy_mhz,m_s,m_i,label_weight", rows);

  for (auto [channel, name] : {std::pair{DriveChannel::Microwave, "transitions_mw"},
                               std::pair{DriveChannel::RadioFrequency, "transitions_rf"}}) {
    const TransitionTable table = transition_table(sys, field, channel, dir.unitOrthogonal());
    std::vector<std::vector<double>> trows;
    for (const auto& t : table.entries) {
      trows.push_back({static_cast<double>(t.lower), static_cast<double>(t.upper),
                       t.frequency_mhz, t.intensity, t.forbidden ? 1.0 : 0.0});
    }
    w.table(name, "lower,upper,frequency_mhz,intensity,forbidden", trows);
  }
  write_json(w.path("hamiltonian.json"),
             {{"units", "MHz"},
              {"basis", "|m_S, m_I>, m_S slowest, both descending"},
              {"matrix", matrix_to_json(h)}});
  summary["dimension"] = sys.dim();
  summary["direction"] = {dir(0), dir(1), dir(2)};
}

void run_spectrum(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  const SpinSystem& sys = *cfg.system;
  const Eigen::Vector3d dir = resolve_direction(cfg, sys);
  std::vector<SpinSystem> systems = {sys};
  if (cfg.spectrum.include_partner) systems.push_back(class_partner(sys));

  const auto grid =
      linspace(cfg.spectrum.field_min_mt, cfg.spectrum.field_max_mt, cfg.spectrum.points);
  SpectrumTrace trace = ese_field_sweep(systems, cfg.spectrum.mw_frequency_mhz, dir, grid,
                                        LineShapeSpec{cfg.spectrum.lineshape_fwhm_mhz});
  trace.normalize_max();

  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < trace.abscissa.size(); ++k) {
    rows.push_back({trace.abscissa[k], trace.intensity[k]});
  }
  w.table("spectrum", "abscissa,intensity", rows);
  write_json(w.path("spectrum_units.json"),
             {{"abscissa", "mT"},
              {"intensity", "arb (peak normalized to 1)"},
              {"mw_frequency_mhz", cfg.spectrum.mw_frequency_mhz},
              {"direction", {dir(0), dir(1), dir(2)}}});
  summary["classes"] = systems.size();
}

void run_endor(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  const SpinSystem& sys = *cfg.system;
  const Eigen::Vector3d dir = resolve_direction(cfg, sys);
  const FieldSpec field{cfg.field.magnitude_mt, dir};
  const auto levels = storage_levels(sys, field);

  const auto grid = linspace(cfg.endor.rf_min_mhz, cfg.endor.rf_max_mhz, cfg.endor.points);
  std::vector<LineShapeSpec> widths;
  for (double wdt : cfg.endor.linewidths_mhz) widths.push_back({wdt});
  SpectrumTrace trace =
      endor_spectrum(sys, field, {levels[0], levels[1]}, grid, widths);
  trace.normalize_max();

  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < trace.abscissa.size(); ++k) {
    rows.push_back({trace.abscissa[k], trace.intensity[k]});
  }
  w.table("endor", "abscissa,intensity", rows);
  write_json(w.path("endor_units.json"),
             {{"abscissa", "MHz"},
              {"intensity", "arb (peak normalized to 1)"},
              {"field_mt", field.magnitude_mt},
              {"direction", {dir(0), dir(1), dir(2)}}});

  const auto lines = endor_lines(sys, field, {levels[0], levels[1]});
  json line_list = json::array();
  for (const auto& l : lines) {
    line_list.push_back({{"frequency_mhz", l.frequency_mhz}, {"intensity", l.intensity}});
  }
  summary["lines"] = line_list;
}

void run_relax(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  const auto& c = cfg.relax;
  std::vector<std::vector<double>> rows;
  for (double t : c.temperatures_k) {
    const double t1e = orbach_t1(c.orbach, t);
    const double t2n = t2n_composite(t1e, c.t2e_reference_s, c.kappa);
    rows.push_back({t, t1e, t2n});
  }
  w.table("relax", "temperature_k,t1e_s,t2n_s", rows);
  summary["orbach"] = {{"prefactor_per_s", c.orbach.prefactor_per_s},
                       {"gap_wavenumber", c.orbach.gap_wavenumber}};
  summary["kappa"] = c.kappa;
}

void run_sdmc(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  SdmcConfig c = cfg.sdmc;
  c.bath.seed = cfg.seed;
  const double estimate = spectral_diffusion_estimate(c.bath);
  if (!std::isfinite(estimate)) {
    throw NumericalError("sdmc: empty bath has no finite phase-memory time");
  }
  std::vector<double> taus(c.tau_points);
  for (int k = 0; k < c.tau_points; ++k) {
    taus[k] = 0.5 * estimate * c.tau_max_factor * (k + 1) / c.tau_points;
  }
  const SpectralDiffusionCurve curve = spectral_diffusion_mc(c.bath, taus, cfg.threads);

  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < curve.tau_s.size(); ++k) {
    rows.push_back({2.0 * curve.tau_s[k] * 1e6, curve.amplitude[k]});
  }
  w.table("sdmc", "tau_us,amplitude", rows);
  write_json(w.path("sdmc_fit.json"),
             {{"analytic_estimate_s", estimate},
              {"dipolar_linewidth_hz", dipolar_linewidth_hz(c.bath)},
              {"fit_t2_s", curve.fit.decay.t2_s},
              {"fit_stretch", curve.fit.decay.stretch},
              {"fit_amplitude", curve.fit.decay.amplitude},
              {"fit_converged", curve.fit.converged}});
  summary["analytic_estimate_s"] = estimate;
  summary["fit_t2_s"] = curve.fit.decay.t2_s;
  summary["fit_stretch"] = curve.fit.decay.stretch;
}

void run_rabi(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  const auto& c = cfg.rabi;
  const WorkingSpace space = WorkingSpace::three_level();
  const std::pair<int, int> target =
      c.channel == Channel::Microwave ? std::pair{0, 1} : std::pair{1, 2};
  EngineOptions opt;
  opt.threads = cfg.threads;
  const RabiTrace trace =
      preset_rabi(space, c.channel, target, c.rabi_frequency_mhz,
                  c.periods / c.rabi_frequency_mhz, c.samples, cfg.ensemble, opt);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < trace.duration_us.size(); ++k) {
    rows.push_back({trace.duration_us[k], trace.z[k]});
  }
  w.table("rabi", "duration_us,z", rows);
  summary["periods"] = c.periods;
}

void run_store(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  const auto& c = cfg.store;
  const WorkingSpace space = WorkingSpace::three_level();
  std::vector<double> times = c.storage_times_us;
  if (times.empty()) times = linspace(20.0, 2e6 * c.channels.t2n_s, 12);

  EngineOptions opt;
  opt.threads = cfg.threads;
  const auto input = DensityOperator::from_bloch(3, {0, 1}, 1.0, 0.0, 0.0);
  const auto sweep =
      preset_storage_sweep(space, input, c.timings, times, c.channels, cfg.ensemble, opt);

  // Observable timeline of the sequence at the first storage time.
  {
    StorageTimings t0 = c.timings;
    t0.tau_n_us = 0.5 * times.front();
    const SequenceResult res = run_sequence(space, input, build_storage_sequence(t0),
                                            c.channels, cfg.ensemble, opt);
    std::vector<std::vector<double>> trows;
    for (const auto& p : res.timeline) trows.push_back({p.time_us, p.x, p.y, p.z});
    w.table("store_timeline", "time_us,X,Y,Z", trows);
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> t_s, amp;
  for (const auto& p : sweep) {
    rows.push_back({p.storage_time_us, p.amplitude});
    t_s.push_back(p.storage_time_us * 1e-6);
    amp.push_back(p.amplitude);
  }
  w.table("store", "tau_us,amplitude", rows);

  json fit_info;
  try {
    const auto fit = fit_stretched(t_s, amp);
    fit_info = {{"t2n_fit_s", fit.decay.t2_s},
                {"stretch", fit.decay.stretch},
                {"amplitude", fit.decay.amplitude},
                {"converged", fit.converged}};
  } catch (const Error& e) {
    fit_info = {{"error", e.what()}};
  }

  // Echo quadratures at the shortest storage time, for quick inspection.
  const json first_point = {{"echo_x", sweep.front().echo_x},
                            {"echo_y", sweep.front().echo_y},
                            {"amplitude", sweep.front().amplitude}};
  write_json(w.path("store_fit.json"), {{"fit", fit_info}, {"first_point", first_point}});
  summary["fit"] = fit_info;
}

void run_qpt(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  EngineOptions opt;
  opt.threads = cfg.threads;
  const MemoryTomographyResult res =
      run_memory_tomography(cfg.qpt.timings, cfg.qpt.channels, cfg.ensemble, opt);

  const char* basis[4] = {"I", "X", "Y", "Z"};
  json states = json::array();
  for (std::size_t k = 0; k < res.inputs.size(); ++k) {
    states.push_back({{"input", matrix_to_json(res.inputs[k])},
                      {"output", matrix_to_json(res.outputs[k])},
                      {"output_projected", static_cast<bool>(res.output_projected[k])}});
  }
  write_json(w.path("chi.json"),
             {{"basis", {"I", "X", "Y", "Z"}},
              {"chi", matrix_to_json(res.reconstruction.chi)},
              {"chi_cptp", matrix_to_json(res.physical.chi)},
              {"reference_amplitude", res.reference_amplitude},
              {"residual", res.reconstruction.residual},
              {"process_fidelity", res.process_fid},
              {"avg_state_fidelity_formula", res.avg_state_fidelity_formula},
              {"avg_state_fidelity_direct", res.avg_state_fidelity_direct},
              {"states", states}});

  // Bar-chart layout: one row per chi element.
  std::ofstream chi_csv(w.path("chi.csv"));
  if (!chi_csv) throw IoError("cannot write chi.csv");
  chi_csv << "basis_row,basis_col,re,im\n";
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      chi_csv << basis[r] << "," << basis[c] << ","
              << csv_number(res.reconstruction.chi(r, c).real()) << ","
              << csv_number(res.reconstruction.chi(r, c).imag()) << "\n";
    }
  }
  summary["process_fidelity"] = res.process_fid;
  summary["avg_state_fidelity_direct"] = res.avg_state_fidelity_direct;
  summary["reference_amplitude"] = res.reference_amplitude;
}

const char* plane_name(RotationPlane p) {
  switch (p) {
    case RotationPlane::PerpD1: return "perp_d1";
    case RotationPlane::PerpD2: return "perp_d2";
    case RotationPlane::PerpB: default: return "perp_b";
  }
}

RotationPattern load_pattern_csv(const std::string& path, double mw_mhz, double b_min,
                                 double b_max) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read pattern file: " + path);
  RotationPattern pattern;
  pattern.mw_frequency_mhz = mw_mhz;
  pattern.field_min_mt = b_min;
  pattern.field_max_mt = b_max;
  std::map<std::pair<std::string, double>, RotationPatternPoint> points;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ConfigError("pattern file row must be plane,angle_deg,field_mT: " + line);
    }
    const std::string plane = line.substr(0, c1);
    const double angle = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    const double field = std::stod(line.substr(c2 + 1));
    auto& point = points[{plane, angle}];
    if (plane == "perp_d1") {
      point.plane = RotationPlane::PerpD1;
    } else if (plane == "perp_d2") {
      point.plane = RotationPlane::PerpD2;
    } else if (plane == "perp_b") {
      point.plane = RotationPlane::PerpB;
    } else {
      throw ConfigError("unknown plane in pattern file: " + plane);
    }
    point.angle_deg = angle;
    point.fields_mt.push_back(field);
  }
  for (auto& [key, point] : points) {
    std::sort(point.fields_mt.begin(), point.fields_mt.end());
    pattern.points.push_back(std::move(point));
  }
  return pattern;
}

void run_fit(const RunConfig& cfg, ArtifactWriter& w, json& summary) {
  const auto& c = cfg.fit;
  const SpinSystem& truth = *cfg.system;

  RotationPattern pattern;
  SpinSystem guess = truth;
  if (c.pattern_csv) {
    pattern = load_pattern_csv(*c.pattern_csv, c.mw_frequency_mhz, c.field_min_mt,
                               c.field_max_mt);
  } else {
    pattern = simulate_rotation_pattern(truth, c.mw_frequency_mhz, c.planes,
                                        c.angle_step_deg, c.field_min_mt, c.field_max_mt);
    Rng rng(cfg.seed);
    if (c.noise_sigma_mt > 0) {
      for (auto& point : pattern.points) {
        for (double& f : point.fields_mt) f += c.noise_sigma_mt * rng.normal();
        std::sort(point.fields_mt.begin(), point.fields_mt.end());
      }
    }
    if (c.guess_perturbation > 0) {
      auto jiggle = [&](const Eigen::Matrix3d& m) {
        Eigen::Matrix3d out = m;
        const double scale = m.norm() / 3.0;
        for (int r = 0; r < 3; ++r) {
          for (int col = r; col < 3; ++col) {
            const double ref = std::max(std::abs(out(r, col)), 0.1 * scale);
            out(r, col) += c.guess_perturbation * ref * (2.0 * rng.uniform() - 1.0);
            out(col, r) = out(r, col);
          }
        }
        return out;
      };
      guess.g = tensor_from_matrix(jiggle(tensor_to_matrix(truth.g)));
      guess.hyperfine_mhz = tensor_from_matrix(jiggle(tensor_to_matrix(truth.hyperfine_mhz)));
    }

    std::ofstream pat(w.path("pattern.csv"));
    if (!pat) throw IoError("cannot write pattern.csv");
    pat << "plane,angle_deg,field_mT\n";
    for (const auto& point : pattern.points) {
      for (double f : point.fields_mt) {
        pat << plane_name(point.plane) << "," << csv_number(point.angle_deg) << ","
            << csv_number(f) << "\n";
      }
    }
  }

  const FitResult res = fit_tensors(pattern, guess);
  const json report = {
      {"converged", res.converged},
      {"iterations", res.iterations},
      {"rms_residual_mt", res.rms_residual_mt},
      {"g_tensor", tensor_json(res.system.g)},
      {"hyperfine_mhz", tensor_json(res.system.hyperfine_mhz)},
      {"uncertainties", res.uncertainties},
  };
  write_json(w.path("fit_report.json"), report);
  summary["fit"] = report;
}

}  // namespace

RunOutcome run(const RunConfig& cfg, const std::string& raw_config_text) {
  const auto t_start = std::chrono::steady_clock::now();

  try {
    std::filesystem::create_directories(cfg.output_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create output directory: ") + e.what());
  }
  ArtifactWriter writer{cfg.output_dir, cfg.output_format, {}};
  json summary;
  summary["experiment"] = experiment_name(cfg.experiment);

  switch (cfg.experiment) {
    case ExperimentKind::Levels: run_levels(cfg, writer, summary); break;
    case ExperimentKind::Spectrum: run_spectrum(cfg, writer, summary); break;
    case ExperimentKind::Endor: run_endor(cfg, writer, summary); break;
    case ExperimentKind::Relax: run_relax(cfg, writer, summary); break;
    case ExperimentKind::Sdmc: run_sdmc(cfg, writer, summary); break;
    case ExperimentKind::Rabi: run_rabi(cfg, writer, summary); break;
    case ExperimentKind::Store: run_store(cfg, writer, summary); break;
    case ExperimentKind::Qpt: run_qpt(cfg, writer, summary); break;
    case ExperimentKind::Fit: run_fit(cfg, writer, summary); break;
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  json manifest = {{"version", kVersion},
                   {"config_hash", content_hash(raw_config_text)},
                   {"seed", cfg.seed},
                   {"wall_time_s", wall},
                   {"artifacts", writer.names}};
  write_json(std::filesystem::path(cfg.output_dir) / "manifest.json", manifest);

  RunOutcome outcome;
  outcome.artifacts = writer.names;
  outcome.summary = std::move(summary);
  return outcome;
}

}  // namespace spinmem
