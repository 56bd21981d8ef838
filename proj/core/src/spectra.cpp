#include "spinmem/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spinmem/constants.hpp"
#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

constexpr double kFourLn2 = 2.772588722239781;

// Area-normalized Gaussian of given FWHM.
double gaussian_line(double x, double fwhm) {
  const double amp = 2.0 * std::sqrt(std::log(2.0) / constants::kPi) / fwhm;
  return amp * std::exp(-kFourLn2 * x * x / (fwhm * fwhm));
}

// A deterministic unit vector perpendicular to the static field, standing in
// for the resonator/coil drive axis.
Eigen::Vector3d default_drive_direction(const Eigen::Vector3d& field_direction) {
  Eigen::Vector3d cand = field_direction.cross(Eigen::Vector3d::UnitZ());
  if (cand.norm() < 1e-8) cand = field_direction.cross(Eigen::Vector3d::UnitX());
  return cand.normalized();
}

void check_grid(const std::vector<double>& grid, const char* who) {
  if (grid.size() < 2) throw InvalidArgument(std::string(who) + ": grid needs >= 2 points");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (grid[k] <= grid[k - 1]) {
      throw InvalidArgument(std::string(who) + ": grid must be strictly increasing");
    }
  }
}

}  // namespace

void LineShapeSpec::validate() const {
  if (!(fwhm > 0.0)) throw InvalidArgument("LineShapeSpec: width must be > 0");
}

SpectrumTrace& SpectrumTrace::normalize_max() {
  double peak = 0.0;
  for (double v : intensity) peak = std::max(peak, v);
  if (peak > 0.0) {
    for (double& v : intensity) v /= peak;
  }
  return *this;
}

SpinSystem class_partner(const SpinSystem& sys) {
  // C2 about the crystal b axis.
  Eigen::Matrix3d c2 = Eigen::Matrix3d::Identity();
  c2(0, 0) = -1.0;
  c2(1, 1) = -1.0;

  auto conjugate = [&](const InteractionTensor& t) {
    InteractionTensor out;
    out.principal_values = t.principal_values;
    out.orientation = euler_from_rotation(c2 * euler_to_rotation(t.orientation));
    return out;
  };

  SpinSystem partner = sys;
  partner.g = conjugate(sys.g);
  partner.hyperfine_mhz = conjugate(sys.hyperfine_mhz);
  return partner;
}

std::vector<ResonanceHit> resonance_fields(const SpinSystem& sys, double mw_frequency_mhz,
                                           const Eigen::Vector3d& direction,
                                           double range_min_mt, double range_max_mt,
                                           const ResonanceSearchOptions& options) {
  if (!(mw_frequency_mhz > 0)) {
    throw InvalidArgument("resonance_fields: mw frequency must be > 0");
  }
  if (!(range_max_mt > range_min_mt)) {
    throw InvalidArgument("resonance_fields: empty search range");
  }

  const int d = sys.dim();
  const FieldLinearHamiltonian flh = field_linear_hamiltonian(sys, direction);
  auto energies_at = [&](double b) { return eigensystem(flh.at(b)).energies_mhz; };

  const int steps =
      std::max(2, static_cast<int>(std::ceil((range_max_mt - range_min_mt) /
                                             options.grid_step_mt)) + 1);
  std::vector<double> grid(steps);
  std::vector<Eigen::VectorXd> energy(steps);
  for (int k = 0; k < steps; ++k) {
    grid[k] = range_min_mt + (range_max_mt - range_min_mt) * k / (steps - 1);
    energy[k] = energies_at(grid[k]);
  }

  std::vector<ResonanceHit> hits;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      for (int k = 0; k + 1 < steps; ++k) {
        const double f_lo = energy[k](j) - energy[k](i) - mw_frequency_mhz;
        const double f_hi = energy[k + 1](j) - energy[k + 1](i) - mw_frequency_mhz;
        if (f_lo == 0.0 || f_lo * f_hi > 0.0) continue;

        double lo = grid[k], hi = grid[k + 1], flo = f_lo;
        double mid = lo;
        for (int it = 0; it < 100; ++it) {
          mid = 0.5 * (lo + hi);
          const Eigen::VectorXd e = energies_at(mid);
          const double fmid = e(j) - e(i) - mw_frequency_mhz;
          if (std::abs(fmid) < options.tol_mhz) break;
          if ((fmid > 0) == (flo > 0)) {
            lo = mid;
            flo = fmid;
          } else {
            hi = mid;
          }
        }

        // Classify the transition at the root.
        FieldSpec fr{mid, direction};
        const TransitionTable table = transition_table(
            sys, fr, DriveChannel::Microwave, default_drive_direction(direction),
            options.forbidden_threshold);
        for (const Transition& t : table.entries) {
          if (t.lower == i && t.upper == j) {
            if (!options.allowed_only || !t.forbidden) {
              hits.push_back({mid, t});
            }
            break;
          }
        }
      }
    }
  }
  std::sort(hits.begin(), hits.end(),
            [](const ResonanceHit& a, const ResonanceHit& b) {
              return a.field_mt < b.field_mt;
            });
  return hits;
}

SpectrumTrace ese_field_sweep(std::span<const SpinSystem> systems, double mw_frequency_mhz,
                              const Eigen::Vector3d& direction,
                              const std::vector<double>& field_grid_mt,
                              const LineShapeSpec& lineshape_mhz) {
  lineshape_mhz.validate();
  check_grid(field_grid_mt, "ese_field_sweep");

  SpectrumTrace trace;
  trace.abscissa = field_grid_mt;
  trace.intensity.assign(field_grid_mt.size(), 0.0);

  for (const SpinSystem& sys : systems) {
    const auto hits = resonance_fields(sys, mw_frequency_mhz, direction,
                                       field_grid_mt.front(), field_grid_mt.back());
    const FieldLinearHamiltonian flh = field_linear_hamiltonian(sys, direction);
    for (const ResonanceHit& hit : hits) {
      // Frequency-domain FWHM -> field domain via the local slope.
      const double db = 0.1;
      auto freq_at = [&](double b) {
        const auto e = eigensystem(flh.at(b)).energies_mhz;
        return e(hit.transition.upper) - e(hit.transition.lower);
      };
      const double slope =
          std::abs(freq_at(hit.field_mt + db) - freq_at(hit.field_mt - db)) / (2 * db);
      if (slope < 1e-12) continue;  // field-independent transition, no line
      const double fwhm_mt = lineshape_mhz.fwhm / slope;
      for (std::size_t k = 0; k < field_grid_mt.size(); ++k) {
        trace.intensity[k] += hit.transition.intensity *
                              gaussian_line(field_grid_mt[k] - hit.field_mt, fwhm_mt);
      }
    }
  }
  return trace;
}

std::vector<EndorLine> endor_lines(const SpinSystem& sys, const FieldSpec& field,
                                   std::pair<int, int> pumped_esr_levels) {
  const int d = sys.dim();
  const auto [pi, pj] = pumped_esr_levels;
  if (pi < 0 || pi >= d || pj < 0 || pj >= d || pi == pj) {
    throw InvalidArgument("endor_lines: invalid pumped transition");
  }
  const TransitionTable table = transition_table(
      sys, field, DriveChannel::RadioFrequency, default_drive_direction(field.direction));

  std::vector<EndorLine> lines;
  for (const Transition& t : table.entries) {
    const bool shares = t.lower == pi || t.lower == pj || t.upper == pi || t.upper == pj;
    if (!shares) continue;
    if (t.lower == std::min(pi, pj) && t.upper == std::max(pi, pj)) continue;
    // Nuclear transitions: electron spin projection unchanged, one nuclear
    // flip. Unlabeled (strongly mixed) entries are not reported.
    if (!t.delta_m_s || !t.delta_m_i) continue;
    if (std::abs(*t.delta_m_s) > 0.25 || std::abs(std::abs(*t.delta_m_i) - 1.0) > 0.25)
      continue;
    lines.push_back({t.frequency_mhz, t.intensity, t.lower, t.upper});
  }
  std::sort(lines.begin(), lines.end(), [](const EndorLine& a, const EndorLine& b) {
    return a.frequency_mhz < b.frequency_mhz;
  });
  return lines;
}

SpectrumTrace endor_spectrum(const SpinSystem& sys, const FieldSpec& field,
                             std::pair<int, int> pumped_esr_levels,
                             const std::vector<double>& rf_grid_mhz,
                             const std::vector<LineShapeSpec>& lineshapes_mhz) {
  check_grid(rf_grid_mhz, "endor_spectrum");
  if (lineshapes_mhz.empty()) {
    throw InvalidArgument("endor_spectrum: need at least one lineshape");
  }
  for (const auto& ls : lineshapes_mhz) ls.validate();

  const auto lines = endor_lines(sys, field, pumped_esr_levels);

  SpectrumTrace trace;
  trace.abscissa = rf_grid_mhz;
  trace.intensity.assign(rf_grid_mhz.size(), 0.0);
  std::size_t in_range_index = 0;
  for (const EndorLine& line : lines) {
    if (line.frequency_mhz < rf_grid_mhz.front() ||
        line.frequency_mhz > rf_grid_mhz.back()) {
      continue;
    }
    const double fwhm = lineshapes_mhz[std::min(in_range_index, lineshapes_mhz.size() - 1)].fwhm;
    ++in_range_index;
    for (std::size_t k = 0; k < rf_grid_mhz.size(); ++k) {
      trace.intensity[k] +=
          line.intensity * gaussian_line(rf_grid_mhz[k] - line.frequency_mhz, fwhm);
    }
  }
  return trace;
}

OrientationResult find_working_orientation(const SpinSystem& sys,
                                           const Eigen::Vector3d& cone_axis,
                                           double half_angle_deg,
                                           const OrientationAnchors& anchors,
                                           int polar_steps, int azimuth_steps) {
  const Eigen::Vector3d axis = cone_axis.normalized();
  Eigen::Vector3d e1 = axis.cross(Eigen::Vector3d::UnitZ());
  if (e1.norm() < 1e-8) e1 = axis.cross(Eigen::Vector3d::UnitY());
  e1.normalize();
  const Eigen::Vector3d e2 = axis.cross(e1).normalized();

  // The two extremal nuclear gaps (one per electron manifold) adjacent to
  // the pumped ESR transition, at the anchor field.
  auto doublet_at = [&](const Eigen::Vector3d& dir, double& f_lo, double& f_hi) {
    FieldSpec field{anchors.target_field_mt, dir};
    std::vector<int> lv;
    try {
      lv = storage_levels(sys, field, anchors.mw_frequency_mhz, true);
    } catch (const Error&) {
      return false;
    }
    const EigenSystem eig = eigensystem(build_hamiltonian(sys, field));
    const double f_upper = std::abs(eig.energies_mhz(lv[1]) - eig.energies_mhz(lv[2]));
    const double f_lower = std::abs(eig.energies_mhz(lv[0]) - eig.energies_mhz(lv[3]));
    f_lo = std::min(f_upper, f_lower);
    f_hi = std::max(f_upper, f_lower);
    return true;
  };

  OrientationResult best;
  best.score = std::numeric_limits<double>::infinity();

  for (int p = 0; p <= polar_steps; ++p) {
    const double theta = half_angle_deg * p / polar_steps * constants::kDegToRad;
    const int n_az = (p == 0) ? 1 : azimuth_steps;
    for (int m = 0; m < n_az; ++m) {
      const double phi = 2.0 * constants::kPi * m / n_az;
      const Eigen::Vector3d dir =
          (std::cos(theta) * axis +
           std::sin(theta) * (std::cos(phi) * e1 + std::sin(phi) * e2))
              .normalized();

      double f_lo = 0, f_hi = 0;
      if (!doublet_at(dir, f_lo, f_hi)) continue;

      // Resonance field of the allowed ESR line on the top-m_I levels.
      ResonanceSearchOptions opt;
      opt.grid_step_mt = 2.0;
      opt.tol_mhz = 1e-6;
      const auto hits =
          resonance_fields(sys, anchors.mw_frequency_mhz, dir,
                           anchors.target_field_mt - 60.0, anchors.target_field_mt + 60.0, opt);
      double b_res = 0.0;
      double b_dist = std::numeric_limits<double>::infinity();
      for (const auto& hit : hits) {
        const Transition& t = hit.transition;
        if (!t.delta_m_s || !t.delta_m_i) continue;
        if (std::abs(std::abs(*t.delta_m_s) - 1.0) > 0.25 || std::abs(*t.delta_m_i) > 0.25)
          continue;
        const double dist = std::abs(hit.field_mt - anchors.target_field_mt);
        if (dist < b_dist) {
          b_dist = dist;
          b_res = hit.field_mt;
        }
      }
      if (!std::isfinite(b_dist)) continue;

      const double score = 0.25 * b_dist * b_dist +
                           std::pow(f_lo - anchors.target_endor_low_mhz, 2) +
                           std::pow(f_hi - anchors.target_endor_high_mhz, 2);
      if (score < best.score) {
        best.direction = dir;
        best.resonance_field_mt = b_res;
        best.endor_low_mhz = f_lo;
        best.endor_high_mhz = f_hi;
        best.score = score;
      }
    }
  }
  if (!std::isfinite(best.score)) {
    throw NumericalError("find_working_orientation: no orientation in the cone "
                         "produced labelable levels and a resonance in range");
  }
  return best;
}

}  // namespace spinmem
