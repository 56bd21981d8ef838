#include "spinmem/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "spinmem/constants.hpp"
#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

constexpr int kParams = 12;  // 6 for g, 6 for A: xx, yy, zz, xy, xz, yz

const std::array<std::pair<int, int>, 6> kSymIndex = {
    std::make_pair(0, 0), {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};

Eigen::Matrix3d unpack_symmetric(const Eigen::VectorXd& p, int offset) {
  Eigen::Matrix3d m;
  for (int k = 0; k < 6; ++k) {
    const auto [a, b] = kSymIndex[k];
    m(a, b) = p(offset + k);
    m(b, a) = p(offset + k);
  }
  return m;
}

Eigen::VectorXd pack_tensors(const Eigen::Matrix3d& g, const Eigen::Matrix3d& a) {
  Eigen::VectorXd p(kParams);
  for (int k = 0; k < 6; ++k) {
    const auto [r, c] = kSymIndex[k];
    p(k) = g(r, c);
    p(6 + k) = a(r, c);
  }
  return p;
}

// C2 about b flips the xz and yz components of a symmetric tensor.
Eigen::Matrix3d conjugate_c2b(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d c = m;
  c(0, 2) = -m(0, 2);
  c(2, 0) = -m(2, 0);
  c(1, 2) = -m(1, 2);
  c(2, 1) = -m(2, 1);
  return c;
}

// Sign picked up by the derivative w.r.t. the base-class parameter when the
// line belongs to the conjugated class.
double partner_sign(int sym_index) {
  return (sym_index == 4 || sym_index == 5) ? -1.0 : 1.0;
}

struct LineModel {
  int lower = 0;
  int upper = 0;
  double field_mt = 0.0;
  Eigen::VectorXd gradient;  // dB*/d(param); empty unless requested
};

// Stable identity of a matched line across parameter steps: the level pair
// plus the occurrence index for pairs crossing the spectrometer frequency
// more than once.
struct MatchKey {
  int point = 0;
  int class_index = 0;
  int lower = 0;
  int upper = 0;
  int occurrence = 0;

  auto tie() const { return std::tie(point, class_index, lower, upper, occurrence); }
  bool operator<(const MatchKey& other) const { return tie() < other.tie(); }
  bool operator==(const MatchKey& other) const { return tie() == other.tie(); }
};

SpinSystem materialize(const SpinSystem& base, const Eigen::Matrix3d& g,
                       const Eigen::Matrix3d& a) {
  SpinSystem sys = base;
  sys.g = tensor_from_matrix(g);
  sys.hyperfine_mhz = tensor_from_matrix(a);
  return sys;
}

// Forward model for one class at one orientation: fields of the intense
// allowed transitions, with Hellmann-Feynman gradients computed from the
// same eigensolves that polish the roots. The parameter-derivative
// operators are precomputed per orientation.
class OrientationModel {
 public:
  OrientationModel(const SpinSystem& dims, double mw_mhz, double b_min, double b_max,
                   double min_intensity, const std::vector<Eigen::Vector3d>& directions)
      : mw_(mw_mhz), b_min_(b_min), b_max_(b_max), min_intensity_(min_intensity) {
    const ProductOperators ops = product_operators(dims);
    const std::array<const Matrix*, 3> s = {&ops.sx, &ops.sy, &ops.sz};
    const std::array<const Matrix*, 3> n = {&ops.ix, &ops.iy, &ops.iz};
    for (int k = 0; k < 6; ++k) {
      const auto [p, q] = kSymIndex[k];
      Matrix dh = (*s[p]) * (*n[q]);
      if (p != q) dh += (*s[q]) * (*n[p]);
      da_[k] = dh;
    }
    dg_.resize(directions.size());
    for (std::size_t d = 0; d < directions.size(); ++d) {
      const Eigen::Vector3d& dir = directions[d];
      for (int k = 0; k < 6; ++k) {
        const auto [p, q] = kSymIndex[k];
        // dH/dG_pq per mT of field; scaled by B at evaluation time.
        Matrix dh = constants::kBohrMagnetonMHzPerMT * dir(p) * (*s[q]);
        if (p != q) dh += constants::kBohrMagnetonMHzPerMT * dir(q) * (*s[p]);
        dg_[d][k] = dh;
      }
    }
  }

  std::vector<LineModel> positions(const SpinSystem& base, const Eigen::Matrix3d& g,
                                   const Eigen::Matrix3d& a, int direction_index,
                                   const Eigen::Vector3d& dir,
                                   std::vector<LineModel>& cache, bool partner,
                                   bool want_gradients) const {
    const SpinSystem sys = materialize(base, g, a);
    const FieldLinearHamiltonian flh = field_linear_hamiltonian(sys, dir);

    if (!cache.empty()) {
      std::vector<LineModel> refined;
      refined.reserve(cache.size());
      bool ok = true;
      for (const LineModel& line : cache) {
        LineModel out = line;
        if (!refine(flh, direction_index, out, want_gradients, partner)) {
          ok = false;
          break;
        }
        refined.push_back(std::move(out));
      }
      if (ok && !refined.empty()) {
        cache = refined;
        return refined;
      }
    }

    ResonanceSearchOptions opt;
    opt.grid_step_mt = 4.0;
    opt.tol_mhz = 1e-6;
    opt.forbidden_threshold = min_intensity_;
    const auto hits = resonance_fields(sys, mw_, dir, b_min_, b_max_, opt);
    std::vector<LineModel> lines;
    lines.reserve(hits.size());
    for (const auto& h : hits) {
      LineModel line{h.transition.lower, h.transition.upper, h.field_mt, {}};
      if (refine(flh, direction_index, line, want_gradients, partner)) {
        lines.push_back(std::move(line));
      }
    }
    cache = lines;
    return lines;
  }

 private:
  // Newton on the resonance condition with the Hellmann-Feynman slope; the
  // final eigensolve also yields the parameter gradient.
  bool refine(const FieldLinearHamiltonian& flh, int direction_index, LineModel& line,
              bool want_gradients, bool partner) const {
    double b = line.field_mt;
    for (int it = 0; it < 15; ++it) {
      if (b < b_min_ - 20.0 || b > b_max_ + 20.0) return false;
      const EigenSystem eig = eigensystem(flh.at(b));
      const Vector vi = eig.vectors.col(line.lower);
      const Vector vj = eig.vectors.col(line.upper);
      const double f = eig.energies_mhz(line.upper) - eig.energies_mhz(line.lower) - mw_;
      const double slope =
          (vj.dot(flh.zeeman_unit * vj) - vi.dot(flh.zeeman_unit * vi)).real();
      if (std::abs(slope) < 1e-10) return false;
      if (std::abs(f) < 1e-7) {
        line.field_mt = b;
        if (want_gradients) {
          line.gradient = gradient(eig, direction_index, line, b, slope, partner);
        }
        return true;
      }
      const double step = -f / slope;
      if (std::abs(step) > 60.0) return false;  // lost the line
      b += step;
    }
    return false;
  }

  Eigen::VectorXd gradient(const EigenSystem& eig, int direction_index,
                           const LineModel& line, double b, double dnu_db,
                           bool partner) const {
    const Vector vi = eig.vectors.col(line.lower);
    const Vector vj = eig.vectors.col(line.upper);
    auto pair_expectation = [&](const Matrix& op) {
      return (vj.dot(op * vj) - vi.dot(op * vi)).real();
    };
    Eigen::VectorXd grad(kParams);
    for (int k = 0; k < 6; ++k) {
      double dnu = b * pair_expectation(dg_[direction_index][k]);
      if (partner) dnu *= partner_sign(k);
      grad(k) = -dnu / dnu_db;
    }
    for (int k = 0; k < 6; ++k) {
      double dnu = pair_expectation(da_[k]);
      if (partner) dnu *= partner_sign(k);
      grad(6 + k) = -dnu / dnu_db;
    }
    return grad;
  }

  double mw_;
  double b_min_;
  double b_max_;
  double min_intensity_;
  std::array<Matrix, 6> da_;
  std::vector<std::array<Matrix, 6>> dg_;
};

}  // namespace

Eigen::Vector3d plane_direction(RotationPlane plane, double angle_deg) {
  const double t = angle_deg * constants::kDegToRad;
  switch (plane) {
    case RotationPlane::PerpD1:
      return {0.0, std::cos(t), std::sin(t)};
    case RotationPlane::PerpD2:
      return {std::cos(t), 0.0, std::sin(t)};
    case RotationPlane::PerpB:
    default:
      return {std::cos(t), std::sin(t), 0.0};
  }
}

std::size_t RotationPattern::total_positions() const {
  std::size_t n = 0;
  for (const auto& p : points) n += p.fields_mt.size();
  return n;
}

int RotationPattern::plane_count() const {
  std::set<RotationPlane> planes;
  for (const auto& p : points) planes.insert(p.plane);
  return static_cast<int>(planes.size());
}

RotationPattern simulate_rotation_pattern(const SpinSystem& sys, double mw_frequency_mhz,
                                          const std::vector<RotationPlane>& planes,
                                          double angle_step_deg, double field_min_mt,
                                          double field_max_mt, bool include_partner) {
  if (!(angle_step_deg > 0)) {
    throw InvalidArgument("simulate_rotation_pattern: angle step must be > 0");
  }
  RotationPattern pattern;
  pattern.mw_frequency_mhz = mw_frequency_mhz;
  pattern.field_min_mt = field_min_mt;
  pattern.field_max_mt = field_max_mt;

  std::vector<SpinSystem> systems = {sys};
  if (include_partner) systems.push_back(class_partner(sys));

  ResonanceSearchOptions opt;
  opt.grid_step_mt = 4.0;
  opt.tol_mhz = 1e-7;
  opt.forbidden_threshold = 0.01;  // the intense lines a CW fit would use
  for (RotationPlane plane : planes) {
    for (double angle = 0.0; angle < 180.0 - 1e-9; angle += angle_step_deg) {
      RotationPatternPoint point;
      point.plane = plane;
      point.angle_deg = angle;
      const Eigen::Vector3d dir = plane_direction(plane, angle);
      for (const SpinSystem& s : systems) {
        // A failed search at one orientation yields a missing entry, not an
        // abort.
        try {
          const auto hits =
              resonance_fields(s, mw_frequency_mhz, dir, field_min_mt, field_max_mt, opt);
          for (const auto& h : hits) point.fields_mt.push_back(h.field_mt);
        } catch (const Error&) {
        }
      }
      std::sort(point.fields_mt.begin(), point.fields_mt.end());
      pattern.points.push_back(std::move(point));
    }
  }
  return pattern;
}

FitResult fit_tensors(const RotationPattern& pattern, const SpinSystem& initial_guess,
                      const FitOptions& options) {
  if (pattern.plane_count() < 2) {
    throw InvalidArgument(
        "fit_tensors: the data span a single rotation plane, which leaves the tensor "
        "rotation about that plane's normal undetermined; patterns from >= 2 planes "
        "are required");
  }
  if (pattern.total_positions() < 20) {
    throw InvalidArgument("fit_tensors: need >= 20 line positions");
  }
  initial_guess.validate();

  const int n_points = static_cast<int>(pattern.points.size());
  std::vector<Eigen::Vector3d> directions(n_points);
  for (int k = 0; k < n_points; ++k) {
    directions[k] = plane_direction(pattern.points[k].plane, pattern.points[k].angle_deg);
  }
  const OrientationModel model(initial_guess, pattern.mw_frequency_mhz, pattern.field_min_mt,
                               pattern.field_max_mt, 0.01, directions);

  using LineSets = std::vector<std::array<std::vector<LineModel>, 2>>;
  LineSets caches(n_points);

  // Residuals and Jacobian with order-preserving assignment: sorted observed
  // positions aligned to sorted model lines per orientation (line branches
  // shift under a parameter error but keep their ordering). Skipping a model
  // line is free; dropping an observed point costs the outlier penalty
  // derived from the all-matched misfit scale.
  auto evaluate = [&](const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                      Eigen::MatrixXd& jacobian, LineSets& cache,
                      double merge_tolerance) -> double {
    const Eigen::Matrix3d g = unpack_symmetric(params, 0);
    const Eigen::Matrix3d a = unpack_symmetric(params, 6);
    const Eigen::Matrix3d g2 = conjugate_c2b(g);
    const Eigen::Matrix3d a2 = conjugate_c2b(a);

    struct Entry {
      double field = 0.0;
      const Eigen::VectorXd* gradient = nullptr;
      int cluster = 0;
    };
    struct ClusterResidual {
      double model_field = 0.0;
      Eigen::VectorXd gradient;
      double observed_mean = 0.0;
      int multiplicity = 0;
    };
    std::vector<ClusterResidual> residual_set;
    LineSets lines(n_points);
    for (int k = 0; k < n_points; ++k) {
      const auto& point = pattern.points[k];
      lines[k][0] = model.positions(initial_guess, g, a, k, directions[k], cache[k][0],
                                    false, true);
      lines[k][1] = model.positions(initial_guess, g2, a2, k, directions[k], cache[k][1],
                                    true, true);

      std::vector<Entry> sorted;
      for (int c = 0; c < 2; ++c) {
        for (const LineModel& line : lines[k][c]) {
          sorted.push_back({line.field_mt, &line.gradient, 0});
        }
      }
      std::sort(sorted.begin(), sorted.end(),
                [](const Entry& x, const Entry& y) { return x.field < y.field; });
      const int n_obs = static_cast<int>(point.fields_mt.size());
      const int n_mod = static_cast<int>(sorted.size());
      if (n_obs == 0 || n_mod == 0) continue;

      // Sub-resolution model lines behave as one peak: collapse clusters to
      // centroids. The observed positions are aggregated over the same
      // clusters after matching, which makes the residual independent of the
      // ordering noise inside a cluster.
      std::vector<ClusterResidual> clusters;
      {
        int start = 0;
        while (start < n_mod) {
          int end = start + 1;
          while (end < n_mod &&
                 sorted[end].field - sorted[end - 1].field < merge_tolerance) {
            ++end;
          }
          ClusterResidual cl;
          cl.gradient = Eigen::VectorXd::Zero(kParams);
          for (int m = start; m < end; ++m) {
            cl.model_field += sorted[m].field;
            cl.gradient += *sorted[m].gradient;
            sorted[m].cluster = static_cast<int>(clusters.size());
          }
          cl.model_field /= (end - start);
          cl.gradient /= (end - start);
          for (int m = start; m < end; ++m) sorted[m].field = cl.model_field;
          clusters.push_back(std::move(cl));
          start = end;
        }
      }

      // Order-preserving assignment of every observed position to a model
      // entry; model entries may be skipped freely (extra weak branches).
      {
        const double skip_penalty = 1e9;
        Eigen::MatrixXd dp(n_obs + 1, n_mod + 1);
        Eigen::MatrixXi back(n_obs + 1, n_mod + 1);  // 0 match, 1 skip model, 2 skip obs
        dp.row(0).setZero();
        for (int i = 1; i <= n_obs; ++i) dp(i, 0) = i * skip_penalty;
        for (int i = 1; i <= n_obs; ++i) {
          for (int j = 1; j <= n_mod; ++j) {
            const double match =
                dp(i - 1, j - 1) + std::abs(point.fields_mt[i - 1] - sorted[j - 1].field);
            const double skip_model = dp(i, j - 1);
            const double skip_obs = dp(i - 1, j) + skip_penalty;
            double best = match;
            int which = 0;
            if (skip_model < best) {
              best = skip_model;
              which = 1;
            }
            if (skip_obs < best) {
              best = skip_obs;
              which = 2;
            }
            dp(i, j) = best;
            back(i, j) = which;
          }
        }
        int i = n_obs, j = n_mod;
        while (i > 0 && j > 0) {
          if (back(i, j) == 0) {
            ClusterResidual& cl = clusters[sorted[j - 1].cluster];
            cl.observed_mean += point.fields_mt[i - 1];
            ++cl.multiplicity;
            --i;
            --j;
          } else if (back(i, j) == 1) {
            --j;
          } else {
            --i;
          }
        }
      }
      for (ClusterResidual& cl : clusters) {
        if (cl.multiplicity == 0) continue;
        cl.observed_mean /= cl.multiplicity;
        residual_set.push_back(std::move(cl));
      }
    }
    if (residual_set.empty()) {
      throw NumericalError("fit_tensors: no model lines matched the data");
    }

    // Outlier rejection at `outlier_sigma` of the current residual scale;
    // never starves the solver below its parameter count.
    double sigma = 0.0;
    int weight_sum = 0;
    for (const auto& cl : residual_set) {
      const double res = cl.observed_mean - cl.model_field;
      sigma += cl.multiplicity * res * res;
      weight_sum += cl.multiplicity;
    }
    sigma = std::sqrt(sigma / std::max(1, weight_sum));
    const double cut = std::max(options.outlier_sigma * sigma, 2.0);
    std::vector<const ClusterResidual*> kept;
    for (const auto& cl : residual_set) {
      if (std::abs(cl.observed_mean - cl.model_field) <= cut) kept.push_back(&cl);
    }
    if (static_cast<int>(kept.size()) < kParams) {
      kept.clear();
      for (const auto& cl : residual_set) kept.push_back(&cl);
    }

    int n = 0;
    for (const auto* cl : kept) n += cl->multiplicity;
    residuals.resize(n);
    jacobian.resize(n, kParams);
    double cost = 0.0;
    int row = 0;
    for (const auto* cl : kept) {
      const double res = cl->observed_mean - cl->model_field;
      for (int m = 0; m < cl->multiplicity; ++m) {
        cost += 0.5 * res * res;
        residuals(row) = res;
        // residual = observed - model: d r / d p = -dB*/dp.
        jacobian.row(row) = -cl->gradient.transpose();
        ++row;
      }
    }
    return cost;
  };

  Eigen::VectorXd params = pack_tensors(tensor_to_matrix(initial_guess.g),
                                        tensor_to_matrix(initial_guess.hyperfine_mhz));

  double merge_tol = std::max(6.0, options.merge_tolerance_mt);

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double cost = evaluate(params, r, jac, caches, merge_tol);

  // Identifiability at the starting point.
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (smin < 1e-8 * smax) {
      const Eigen::VectorXd null_dir = svd.matrixV().col(svd.singularValues().size() - 1);
      static const char* names[kParams] = {"g_xx", "g_yy", "g_zz", "g_xy", "g_xz", "g_yz",
                                           "A_xx", "A_yy", "A_zz", "A_xy", "A_xz", "A_yz"};
      std::string desc;
      for (int k = 0; k < kParams; ++k) {
        if (std::abs(null_dir(k)) > 0.3) {
          desc += std::string(desc.empty() ? "" : ", ") + names[k];
        }
      }
      throw InvalidArgument("fit_tensors: rank-deficient Jacobian; the data do not "
                            "determine the parameter direction spanned by {" +
                            desc + "}");
    }
  }

  // Damped least squares with per-iteration re-assignment. A vanishing
  // relative drop can be a plateau of the re-assignment rather than the
  // optimum, so convergence is only declared after a damping reset fails to
  // improve the cost.
  FitResult result;
  double lambda = options.initial_damping;
  int iter = 0;
  int small_drops = 0;
  int resets = 0;
  int recycles = 0;
  double cost_at_last_reset = std::numeric_limits<double>::infinity();
  while (iter < options.max_iterations) {
    ++iter;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    Eigen::MatrixXd damped = jtj;
    damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
    const Eigen::VectorXd step = damped.ldlt().solve(-grad);

    auto trial_caches = caches;
    Eigen::VectorXd r_trial;
    Eigen::MatrixXd jac_trial;
    double trial_cost;
    try {
      trial_cost = evaluate(params + step, r_trial, jac_trial, trial_caches, merge_tol);
    } catch (const Error&) {
      trial_cost = std::numeric_limits<double>::infinity();
    }

    bool plateau = false;
    if (trial_cost < cost) {
      const double drop = (cost - trial_cost) / std::max(cost, 1e-300);
      params += step;
      r.swap(r_trial);
      jac.swap(jac_trial);
      caches.swap(trial_caches);
      cost = trial_cost;
      result.damping_trace.push_back(lambda);
      lambda = std::max(lambda * 0.3, 1e-14);
      small_drops = drop < options.relative_tolerance ? small_drops + 1 : 0;
      plateau = small_drops >= 3;
    } else {
      lambda *= 8.0;
      plateau = lambda > 1e13;
    }

    if (plateau) {
      if (merge_tol > options.merge_tolerance_mt) {
        // Coarse-matching phase done: refine the cluster resolution and
        // continue from here.
        merge_tol = options.merge_tolerance_mt;
        cost = evaluate(params, r, jac, caches, merge_tol);
        cost_at_last_reset = std::numeric_limits<double>::infinity();
        lambda = 1e-2;
        small_drops = 0;
        resets = 0;
        continue;
      }
      const bool improved =
          cost < cost_at_last_reset * (1.0 - 10.0 * options.relative_tolerance);
      if (resets >= 3 || (!improved && resets > 0)) {
        if (recycles == 0) {
          ++recycles;
          merge_tol = std::max(6.0, options.merge_tolerance_mt);
          cost = evaluate(params, r, jac, caches, merge_tol);
          cost_at_last_reset = std::numeric_limits<double>::infinity();
          lambda = 1e-2;
          small_drops = 0;
          resets = 0;
          continue;
        }
        result.converged = true;
        break;
      }
      cost_at_last_reset = cost;
      ++resets;
      lambda = 1e-2;
      small_drops = 0;
    }
  }
  result.iterations = iter;
  result.rms_residual_mt = std::sqrt(2.0 * cost / std::max<int>(1, r.size()));
  if (result.rms_residual_mt < 1e-6) result.converged = true;

  result.g_matrix = unpack_symmetric(params, 0);
  result.hyperfine_matrix_mhz = unpack_symmetric(params, 6);
  result.system = initial_guess;
  result.system.g = tensor_from_matrix(result.g_matrix);
  result.system.hyperfine_mhz = tensor_from_matrix(result.hyperfine_matrix_mhz);

  // Approximate covariance from the damped normal equations at the optimum.
  {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double dof = std::max<double>(1.0, r.size() - kParams);
    const double variance = 2.0 * cost / dof;
    const Eigen::MatrixXd cov =
        variance * jtj.ldlt().solve(Eigen::MatrixXd::Identity(kParams, kParams));
    result.uncertainties.resize(kParams);
    for (int k = 0; k < kParams; ++k) {
      result.uncertainties[k] = std::sqrt(std::max(0.0, cov(k, k)));
    }
  }
  return result;
}

}  // namespace spinmem
