#include "cavloss/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "cavloss/errors.hpp"

namespace cavloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void SampleBlock::validate() const {
  require(!table.sample_id.empty(), "sample block: empty sample id");
  require(table.rows.size() == q_inv.size() && q_inv.size() == sigma.size(),
          "sample block: row/measurement length mismatch");
  for (const auto& r : table.rows) r.validate();
  for (std::size_t i = 0; i < q_inv.size(); ++i) {
    require(std::isfinite(q_inv[i]), "sample block: Q^-1 must be finite");
    require(std::isfinite(sigma[i]) && sigma[i] > 0.0,
            "sample block: sigma must be positive");
  }
}

void LossSystem::validate() const {
  require(!samples.empty(), "loss system: no samples");
  require(std::isfinite(omega_ref) && omega_ref > 0.0,
          "loss system: omega_ref must be positive");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    s.validate();
    require(ids.insert(s.table.sample_id).second,
            "loss system: duplicate sample id " + s.table.sample_id);
  }
  require(sub_bounds.empty() || sub_bounds.size() == samples.size(),
          "loss system: sub_bounds size mismatch");
  auto check = [](const Bounds& b, const std::string& name) {
    if (!(b.lower <= b.upper))
      throw std::invalid_argument("loss system: infeasible bounds on " + name);
  };
  check(cond_bounds, "q_cond_inv");
  check(ma_bounds, "q_MA_inv");
  for (std::size_t i = 0; i < sub_bounds.size(); ++i)
    check(sub_bounds[i], "q_sub_inv:" + samples[i].table.sample_id);
}

std::size_t LossSystem::n_params() const {
  const std::size_t s = samples.size();
  return (share_cond ? 1 : s) + (share_MA ? 1 : s) + s;
}

std::size_t LossSystem::n_rows() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.table.rows.size();
  return n;
}

std::vector<std::string> LossSystem::labels() const {
  std::vector<std::string> out;
  if (share_cond) {
    out.push_back("q_cond_inv");
  } else {
    for (const auto& s : samples)
      out.push_back("q_cond_inv:" + s.table.sample_id);
  }
  if (share_MA) {
    out.push_back("q_MA_inv");
  } else {
    for (const auto& s : samples) out.push_back("q_MA_inv:" + s.table.sample_id);
  }
  for (const auto& s : samples) out.push_back("q_sub_inv:" + s.table.sample_id);
  return out;
}

std::vector<Bounds> LossSystem::all_bounds() const {
  std::vector<Bounds> out;
  const std::size_t s = samples.size();
  for (std::size_t k = 0; k < (share_cond ? 1 : s); ++k)
    out.push_back(cond_bounds);
  for (std::size_t k = 0; k < (share_MA ? 1 : s); ++k) out.push_back(ma_bounds);
  for (std::size_t k = 0; k < s; ++k)
    out.push_back(sub_bounds.empty() ? Bounds{} : sub_bounds[k]);
  return out;
}

Eigen::MatrixXd LossSystem::design() const {
  validate();
  const std::size_t s = samples.size();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(
      static_cast<long>(n_rows()), static_cast<long>(n_params()));
  const std::size_t ma_base = share_cond ? 1 : s;
  const std::size_t sub_base = ma_base + (share_MA ? 1 : s);
  long row = 0;
  for (std::size_t k = 0; k < s; ++k) {
    for (const auto& r : samples[k].table.rows) {
      const long c_cond = static_cast<long>(share_cond ? 0 : k);
      const long c_ma = static_cast<long>(ma_base + (share_MA ? 0 : k));
      const long c_sub = static_cast<long>(sub_base + k);
      p(row, c_cond) = r.p_cond * (omega_ref / r.omega);
      p(row, c_ma) = r.p_MA;
      p(row, c_sub) = r.p_bulk;
      ++row;
    }
  }
  return p;
}

Eigen::VectorXd LossSystem::rhs() const {
  Eigen::VectorXd y(static_cast<long>(n_rows()));
  long row = 0;
  for (const auto& s : samples)
    for (double v : s.q_inv) y(row++) = v;
  return y;
}

Eigen::VectorXd LossSystem::sigmas() const {
  Eigen::VectorXd sg(static_cast<long>(n_rows()));
  long row = 0;
  for (const auto& s : samples)
    for (double v : s.sigma) sg(row++) = v;
  return sg;
}

namespace {

// rank check on the whitened design; throws naming the dependent columns
void check_rank(const Eigen::MatrixXd& pw,
                const std::vector<std::string>& labels) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(pw);
  qr.setThreshold(1e-10);
  const long rank = qr.rank();
  if (rank >= pw.cols()) return;
  const auto perm = qr.colsPermutation().indices();
  std::string names;
  for (long k = rank; k < pw.cols(); ++k) {
    if (!names.empty()) names += ", ";
    names += labels[static_cast<std::size_t>(perm(k))];
  }
  throw numeric_error(
      "loss system is rank deficient, near-dependent columns: " + names);
}

}  // namespace

Eigen::MatrixXd covariance(const LossSystem& system) {
  system.validate();
  const Eigen::MatrixXd p = system.design();
  const Eigen::VectorXd sg = system.sigmas();
  Eigen::MatrixXd pw = p.array().colwise() / sg.array();
  check_rank(pw, system.labels());
  const Eigen::MatrixXd ata = pw.transpose() * pw;
  return ata.ldlt().solve(
      Eigen::MatrixXd::Identity(ata.rows(), ata.cols()));
}

LossSolution solve(const LossSystem& system) {
  system.validate();
  const Eigen::MatrixXd p = system.design();
  const Eigen::VectorXd y = system.rhs();
  const Eigen::VectorXd sg = system.sigmas();
  const auto labels = system.labels();
  const auto bounds = system.all_bounds();
  const long np = p.cols();

  Eigen::MatrixXd pw = p.array().colwise() / sg.array();
  Eigen::VectorXd yw = y.array() / sg.array();
  check_rank(pw, labels);

  // active-set iteration: start everything at a feasible bound, free the
  // variable with the strongest descent direction, retreat to the bound
  // set whenever a trial solution leaves the box
  enum class State { free_var, at_lower, at_upper };
  std::vector<State> state(static_cast<std::size_t>(np));
  Eigen::VectorXd x(np);
  bool any_finite_bound = false;
  for (long j = 0; j < np; ++j) {
    const auto& b = bounds[static_cast<std::size_t>(j)];
    if (std::isfinite(b.lower)) {
      x(j) = b.lower;
      state[static_cast<std::size_t>(j)] = State::at_lower;
      any_finite_bound = true;
    } else if (std::isfinite(b.upper)) {
      x(j) = b.upper;
      state[static_cast<std::size_t>(j)] = State::at_upper;
      any_finite_bound = true;
    } else {
      x(j) = 0.0;
      state[static_cast<std::size_t>(j)] = State::free_var;
    }
  }
  (void)any_finite_bound;

  const double g_scale = (pw.transpose() * yw).cwiseAbs().maxCoeff();
  const double g_tol = 1e-12 * (g_scale > 0 ? g_scale : 1.0);

  auto solve_free = [&](const std::vector<State>& st) {
    std::vector<long> free_idx;
    for (long j = 0; j < np; ++j)
      if (st[static_cast<std::size_t>(j)] == State::free_var)
        free_idx.push_back(j);
    Eigen::VectorXd rhs_adj = yw;
    for (long j = 0; j < np; ++j)
      if (st[static_cast<std::size_t>(j)] != State::free_var)
        rhs_adj -= pw.col(j) * x(j);
    Eigen::VectorXd xf;
    if (!free_idx.empty()) {
      Eigen::MatrixXd pf(pw.rows(), static_cast<long>(free_idx.size()));
      for (std::size_t k = 0; k < free_idx.size(); ++k)
        pf.col(static_cast<long>(k)) = pw.col(free_idx[k]);
      const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(pf);
      xf = qr.solve(rhs_adj);
      // one refinement pass keeps poorly conditioned free sets near
      // machine accuracy instead of eps * cond
      xf += qr.solve(rhs_adj - pf * xf);
    }
    return std::pair{free_idx, xf};
  };

  const int max_outer = 30 * static_cast<int>(np) + 10;
  for (int outer = 0; outer < max_outer; ++outer) {
    // candidate to free: strongest KKT violation among bound variables
    const Eigen::VectorXd g = pw.transpose() * (yw - pw * x);
    long pick = -1;
    double worst = g_tol;
    bool any_free = false;
    for (long j = 0; j < np; ++j) {
      const auto st = state[static_cast<std::size_t>(j)];
      if (st == State::free_var) {
        any_free = true;
      } else if (st == State::at_lower && g(j) > worst) {
        worst = g(j);
        pick = j;
      } else if (st == State::at_upper && -g(j) > worst) {
        worst = -g(j);
        pick = j;
      }
    }
    if (pick >= 0) {
      state[static_cast<std::size_t>(pick)] = State::free_var;
    } else if (outer > 0 || !any_free) {
      break;  // KKT holds at every bound and the free set is stationary
    }
    // first pass with no violator still needs the free-set solve: the
    // initial point is feasible but not yet stationary

    // inner loop: solve on the free set, walk back to the box if needed
    for (int inner = 0; inner < max_outer; ++inner) {
      auto [free_idx, xf] = solve_free(state);
      if (free_idx.empty()) break;
      bool feasible = true;
      double alpha = 1.0;
      long blocker = -1;
      bool blocker_lower = true;
      for (std::size_t k = 0; k < free_idx.size(); ++k) {
        const long j = free_idx[k];
        const auto& b = bounds[static_cast<std::size_t>(j)];
        const double xn = xf(static_cast<long>(k));
        if (xn < b.lower || xn > b.upper) feasible = false;
        const double step = xn - x(j);
        if (step < 0 && std::isfinite(b.lower) && xn < b.lower) {
          const double a = (b.lower - x(j)) / step;
          if (a < alpha) {
            alpha = a;
            blocker = j;
            blocker_lower = true;
          }
        } else if (step > 0 && std::isfinite(b.upper) && xn > b.upper) {
          const double a = (b.upper - x(j)) / step;
          if (a < alpha) {
            alpha = a;
            blocker = j;
            blocker_lower = false;
          }
        }
      }
      if (feasible) {
        for (std::size_t k = 0; k < free_idx.size(); ++k)
          x(free_idx[k]) = xf(static_cast<long>(k));
        break;
      }
      for (std::size_t k = 0; k < free_idx.size(); ++k) {
        const long j = free_idx[k];
        x(j) += alpha * (xf(static_cast<long>(k)) - x(j));
      }
      if (blocker >= 0) {
        const auto& b = bounds[static_cast<std::size_t>(blocker)];
        if (blocker_lower) {
          x(blocker) = b.lower;
          state[static_cast<std::size_t>(blocker)] = State::at_lower;
        } else {
          x(blocker) = b.upper;
          state[static_cast<std::size_t>(blocker)] = State::at_upper;
        }
      } else {
        break;  // defensive; cannot happen with a finite blocker
      }
    }
  }

  LossSolution sol;
  sol.labels = labels;
  sol.q = x;

  // covariance of the unconstrained subproblem on the free parameters
  std::vector<long> free_idx;
  for (long j = 0; j < np; ++j) {
    const auto st = state[static_cast<std::size_t>(j)];
    if (st == State::free_var) {
      free_idx.push_back(j);
    } else {
      sol.active_bounds.push_back(labels[static_cast<std::size_t>(j)] +
                                  (st == State::at_lower ? "@lower"
                                                         : "@upper"));
    }
  }
  sol.covariance = Eigen::MatrixXd::Zero(np, np);
  if (!free_idx.empty()) {
    Eigen::MatrixXd pf(pw.rows(), static_cast<long>(free_idx.size()));
    for (std::size_t k = 0; k < free_idx.size(); ++k)
      pf.col(static_cast<long>(k)) = pw.col(free_idx[k]);
    const Eigen::MatrixXd ata = pf.transpose() * pf;
    const Eigen::MatrixXd cf =
        ata.ldlt().solve(Eigen::MatrixXd::Identity(ata.rows(), ata.cols()));
    for (std::size_t a = 0; a < free_idx.size(); ++a)
      for (std::size_t b = 0; b < free_idx.size(); ++b)
        sol.covariance(free_idx[a], free_idx[b]) =
            cf(static_cast<long>(a), static_cast<long>(b));
  }

  const Eigen::VectorXd pred = p * x;
  sol.residuals.resize(static_cast<std::size_t>(y.size()));
  for (long i = 0; i < y.size(); ++i)
    sol.residuals[static_cast<std::size_t>(i)] = y(i) - pred(i);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(pw);
  const auto& sv = svd.singularValues();
  sol.condition_number = sv(0) / sv(sv.size() - 1);
  return sol;
}

// ---------------------------------------------------------------------------
// Sensitivity
// ---------------------------------------------------------------------------

namespace {

// marching squares on a scalar grid; emits chained polylines per level.
// grid(i, j) with x[i], y[j]; interpolation is linear in log(value) and in
// the log of the axes, matching how the map is sampled.
std::vector<ContourPolyline> extract_contours(
    const std::vector<double>& xs, const std::vector<double>& ys,
    const Eigen::MatrixXd& v, const std::vector<double>& levels) {
  struct Pt {
    double x, y;
    bool operator<(const Pt& o) const {
      return x < o.x || (x == o.x && y < o.y);
    }
  };
  std::vector<ContourPolyline> out;
  const long nx = static_cast<long>(xs.size());
  const long ny = static_cast<long>(ys.size());
  auto lg = [](double a) { return std::log(a); };

  for (double level : levels) {
    const double lv = lg(level);
    // collect segments cell by cell
    std::vector<std::pair<Pt, Pt>> segs;
    auto interp = [&](double a, double va, double b, double vb) {
      const double t = (lv - va) / (vb - va);
      return a + t * (b - a);
    };
    for (long i = 0; i + 1 < nx; ++i) {
      for (long j = 0; j + 1 < ny; ++j) {
        const double x0 = lg(xs[i]), x1 = lg(xs[i + 1]);
        const double y0 = lg(ys[j]), y1 = lg(ys[j + 1]);
        const double v00 = lg(v(i, j)), v10 = lg(v(i + 1, j));
        const double v01 = lg(v(i, j + 1)), v11 = lg(v(i + 1, j + 1));
        std::vector<Pt> hits;
        auto edge = [&](double ax, double ay, double av, double bx, double by,
                        double bv) {
          if ((av < lv) != (bv < lv)) {
            if (ax == bx)
              hits.push_back({ax, interp(ay, av, by, bv)});
            else
              hits.push_back({interp(ax, av, bx, bv), ay});
          }
        };
        edge(x0, y0, v00, x1, y0, v10);
        edge(x1, y0, v10, x1, y1, v11);
        edge(x0, y1, v01, x1, y1, v11);
        edge(x0, y0, v00, x0, y1, v01);
        if (hits.size() == 2) segs.push_back({hits[0], hits[1]});
        // saddle cells (4 hits) are split arbitrarily into two segments
        if (hits.size() == 4) {
          segs.push_back({hits[0], hits[1]});
          segs.push_back({hits[2], hits[3]});
        }
      }
    }
    // chain segments into polylines by matching endpoints
    auto key = [](const Pt& p) {
      return std::pair<long long, long long>(
          std::llround(p.x * 1e9), std::llround(p.y * 1e9));
    };
    std::multimap<std::pair<long long, long long>, std::size_t> ends;
    std::vector<bool> used(segs.size(), false);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      ends.insert({key(segs[s].first), s});
      ends.insert({key(segs[s].second), s});
    }
    auto take_next = [&](const Pt& p, std::size_t& seg, Pt& other) {
      auto range = ends.equal_range(key(p));
      for (auto it = range.first; it != range.second; ++it) {
        if (used[it->second]) continue;
        seg = it->second;
        other = (key(segs[seg].first) == key(p)) ? segs[seg].second
                                                 : segs[seg].first;
        return true;
      }
      return false;
    };
    for (std::size_t s = 0; s < segs.size(); ++s) {
      if (used[s]) continue;
      used[s] = true;
      std::vector<Pt> line{segs[s].first, segs[s].second};
      // grow forward
      for (;;) {
        std::size_t nseg;
        Pt nxt;
        if (!take_next(line.back(), nseg, nxt)) break;
        used[nseg] = true;
        line.push_back(nxt);
      }
      // grow backward
      for (;;) {
        std::size_t nseg;
        Pt nxt;
        if (!take_next(line.front(), nseg, nxt)) break;
        used[nseg] = true;
        line.insert(line.begin(), nxt);
      }
      ContourPolyline poly;
      poly.level = level;
      for (const auto& p : line)
        poly.points.push_back({std::exp(p.x), std::exp(p.y)});
      out.push_back(std::move(poly));
    }
  }
  return out;
}

}  // namespace

SensitivityMap sensitivity_map(const SensitivityConfig& cfg) {
  require(!cfg.profile.rows.empty(), "sensitivity: empty profile");
  require(cfg.p_SA_over_p_bulk >= 0.0,
          "sensitivity: p_SA/p_bulk must be >= 0");
  require(cfg.fractional_error > 0.0,
          "sensitivity: fractional error must be positive");
  require(cfg.omega_ref > 0.0, "sensitivity: omega_ref must be positive");
  const auto& g = cfg.grid;
  require(g.n_bulk >= 2 && g.n_SA >= 2, "sensitivity: grid too small");
  require(g.q_bulk_inv_min > 0 && g.q_bulk_inv_max > g.q_bulk_inv_min &&
              g.q_SA_inv_min > 0 && g.q_SA_inv_max > g.q_SA_inv_min,
          "sensitivity: bad grid ranges");

  const std::size_t n = cfg.profile.rows.size();
  require(n >= 3, "sensitivity: profile needs at least 3 rows");

  Eigen::MatrixXd p(static_cast<long>(n), 3);
  Eigen::VectorXd bg(static_cast<long>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = cfg.profile.rows[i];
    r.validate();
    p(static_cast<long>(i), 0) = r.p_cond * (cfg.omega_ref / r.omega);
    p(static_cast<long>(i), 1) = r.p_MA;
    p(static_cast<long>(i), 2) = r.p_bulk;
    bg(static_cast<long>(i)) = p(static_cast<long>(i), 0) * cfg.q_cond_inv +
                               r.p_MA * cfg.q_MA_inv;
  }

  SensitivityMap map;
  map.q_bulk_inv.resize(static_cast<std::size_t>(g.n_bulk));
  map.q_SA_inv.resize(static_cast<std::size_t>(g.n_SA));
  for (int i = 0; i < g.n_bulk; ++i)
    map.q_bulk_inv[static_cast<std::size_t>(i)] =
        g.q_bulk_inv_min * std::pow(g.q_bulk_inv_max / g.q_bulk_inv_min,
                                    static_cast<double>(i) / (g.n_bulk - 1));
  for (int j = 0; j < g.n_SA; ++j)
    map.q_SA_inv[static_cast<std::size_t>(j)] =
        g.q_SA_inv_min * std::pow(g.q_SA_inv_max / g.q_SA_inv_min,
                                  static_cast<double>(j) / (g.n_SA - 1));
  map.ci.resize(g.n_bulk, g.n_SA);
  map.frac_err.resize(g.n_bulk, g.n_SA);

  for (int i = 0; i < g.n_bulk; ++i) {
    for (int j = 0; j < g.n_SA; ++j) {
      const double q_sub = map.q_bulk_inv[static_cast<std::size_t>(i)] +
                           cfg.p_SA_over_p_bulk *
                               map.q_SA_inv[static_cast<std::size_t>(j)];
      const Eigen::VectorXd q_tot = bg + p.col(2) * q_sub;
      const Eigen::VectorXd sg = cfg.fractional_error * q_tot;
      const Eigen::MatrixXd pw = p.array().colwise() / sg.array();
      const Eigen::Matrix3d ata = pw.transpose() * pw;
      const Eigen::Matrix3d c =
          ata.ldlt().solve(Eigen::Matrix3d::Identity());
      const double sigma_sub = std::sqrt(std::max(0.0, c(2, 2)));
      map.ci(i, j) = 2.0 * sigma_sub;
      map.frac_err(i, j) = map.ci(i, j) / q_sub;
    }
  }
  map.contours = extract_contours(map.q_bulk_inv, map.q_SA_inv, map.frac_err,
                                  cfg.contour_levels);
  return map;
}

PolySensitivity polynomial_sensitivity(const PolynomialBasis& basis,
                                       double q_MA_inv, double q_MA_inv_sigma) {
  require(basis.y.size() >= 2 && basis.x_MA.size() >= 2 &&
              basis.y_err.size() == basis.y.size() &&
              basis.x_MA_err.size() == basis.x_MA.size(),
          "polynomial sensitivity: basis missing linear coefficients");
  require(std::isfinite(q_MA_inv) && q_MA_inv >= 0.0,
          "polynomial sensitivity: q_MA^-1 must be >= 0");
  require(std::isfinite(q_MA_inv_sigma) && q_MA_inv_sigma >= 0.0,
          "polynomial sensitivity: sigma must be >= 0");
  PolySensitivity s;
  s.q_sub_inv = basis.y[1] - basis.x_MA[1] * q_MA_inv;
  s.term_y1 = basis.y_err[1];
  s.term_slope = std::abs(basis.x_MA[1]) * q_MA_inv_sigma;
  s.term_slope_err = basis.x_MA_err[1] * q_MA_inv;
  s.sigma_total = s.term_y1 + s.term_slope + s.term_slope_err;
  return s;
}

}  // namespace cavloss
