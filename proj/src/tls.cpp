#include "cavloss/tls.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cavloss/errors.hpp"

namespace cavloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void PowerSweep::validate() const {
  require(!points.empty(), "power sweep: no points");
  for (const auto& p : points) {
    require(std::isfinite(p.n_photons) && p.n_photons > 0.0,
            "power sweep: photon numbers must be positive");
    require(std::isfinite(p.q_inv) && p.q_inv > 0.0,
            "power sweep: Q^-1 must be positive");
    require(std::isfinite(p.sigma) && p.sigma >= 0.0,
            "power sweep: sigma must be >= 0");
  }
  for (double v : {p_cond, p_MA, p_bulk})
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0,
            "power sweep: participations outside [0,1]");
}

void PowerSweep::validate_for_fit() const {
  validate();
  require(points.size() >= 5, "power sweep: need at least 5 points to fit");
  double lo = points[0].n_photons, hi = points[0].n_photons;
  for (const auto& p : points) {
    lo = std::min(lo, p.n_photons);
    hi = std::max(hi, p.n_photons);
  }
  require(hi / lo >= 100.0,
          "power sweep: drive range must span at least two decades");
}

double tls_model(double n, double q_hp_inv, double q_sat_inv, double n_c,
                 double alpha) {
  require(n >= 0.0, "tls_model: n must be >= 0");
  require(n_c > 0.0 && alpha > 0.0, "tls_model: n_c and alpha must be positive");
  const double u = n > 0.0 ? std::pow(n / n_c, alpha) : 0.0;
  return q_hp_inv + q_sat_inv / std::sqrt(1.0 + u);
}

namespace {

struct FitData {
  std::vector<double> n, y, sig;
};

// model and its partials with respect to (q_hp, q_sat, n_c, alpha)
void model_and_grad(double n, const Eigen::Vector4d& p, double& m,
                    Eigen::Vector4d& g) {
  const double q_hp = p(0), q_sat = p(1), n_c = p(2), alpha = p(3);
  const double lr = std::log(n / n_c);
  const double u = std::exp(alpha * lr);
  const double root = std::sqrt(1.0 + u);
  m = q_hp + q_sat / root;
  const double dm_du = -0.5 * q_sat / (root * root * root);
  g(0) = 1.0;
  g(1) = 1.0 / root;
  g(2) = dm_du * (-alpha * u / n_c);
  g(3) = dm_du * (u * lr);
}

struct LmResult {
  Eigen::Vector4d p;
  double chi2 = std::numeric_limits<double>::infinity();
  bool converged = false;
};

// Levenberg-Marquardt over log parameters; positivity is built in and the
// iteration is scale free.
LmResult lm_fit(const FitData& d, Eigen::Vector4d p0, const TlsFitOptions& opt) {
  const std::size_t n = d.n.size();
  Eigen::Vector4d th = p0.array().log();
  const double th_alpha_cap = std::log(opt.alpha_max);

  auto cost = [&](const Eigen::Vector4d& theta, Eigen::VectorXd* r_out,
                  Eigen::MatrixXd* j_out) {
    const Eigen::Vector4d p = theta.array().exp();
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double m;
      Eigen::Vector4d g;
      model_and_grad(d.n[i], p, m, g);
      const double r = (m - d.y[i]) / d.sig[i];
      c += r * r;
      if (r_out) (*r_out)(static_cast<int>(i)) = r;
      if (j_out)
        for (int j = 0; j < 4; ++j)
          (*j_out)(static_cast<int>(i), j) = g(j) * p(j) / d.sig[i];
    }
    return c;
  };

  Eigen::VectorXd r(n);
  Eigen::MatrixXd J(n, 4);
  double c = cost(th, &r, &J);
  double lambda = 1e-3;
  LmResult res;
  res.p = th.array().exp();
  res.chi2 = c;

  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::Matrix4d jtj = J.transpose() * J;
    const Eigen::Vector4d jtr = J.transpose() * r;
    if (jtr.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + c)) {
      res.converged = true;
      break;
    }
    Eigen::Matrix4d a = jtj;
    for (int j = 0; j < 4; ++j)
      a(j, j) += lambda * std::max(jtj(j, j), 1e-30);
    const Eigen::Vector4d step = a.ldlt().solve(-jtr);
    Eigen::Vector4d th_new = th + step;
    if (th_new(3) > th_alpha_cap) th_new(3) = th_alpha_cap;
    const double c_new = cost(th_new, nullptr, nullptr);
    if (c_new < c) {
      const double rel = (c - c_new) / std::max(c, 1e-300);
      th = th_new;
      c = cost(th, &r, &J);
      lambda = std::max(lambda / 3.0, 1e-12);
      if (step.cwiseAbs().maxCoeff() < 1e-11 || rel < 1e-14) {
        res.converged = true;
        break;
      }
    } else {
      lambda *= 4.0;
      if (lambda > 1e12) break;
    }
  }
  res.p = th.array().exp();
  res.chi2 = c;
  return res;
}

}  // namespace

TlsFit fit_tls(const PowerSweep& sweep, const TlsFitOptions& opt) {
  sweep.validate();
  require(opt.n_cutoff > 0.0, "fit_tls: n_cutoff must be positive");
  require(opt.n_c_grid >= 2 && !opt.alpha_starts.empty(),
          "fit_tls: empty start grid");

  FitData d;
  for (const auto& p : sweep.points) {
    if (sweep.position == SweepPosition::inserted && p.n_photons > opt.n_cutoff)
      continue;
    d.n.push_back(p.n_photons);
    d.y.push_back(p.q_inv);
    d.sig.push_back(p.sigma > 0.0 ? p.sigma : 1.0);
  }
  {
    PowerSweep used = sweep;
    used.points.clear();
    for (std::size_t i = 0; i < d.n.size(); ++i)
      used.points.push_back({d.n[i], d.y[i], d.sig[i]});
    used.validate_for_fit();
  }

  const auto [y_min_it, y_max_it] = std::minmax_element(d.y.begin(), d.y.end());
  const auto [n_min_it, n_max_it] = std::minmax_element(d.n.begin(), d.n.end());
  const double q_hp0 = 0.9 * *y_min_it;
  const double q_sat0 = std::max(*y_max_it - *y_min_it, 0.05 * *y_min_it);

  LmResult best;
  double best_nc_start = 0.0;
  const double nc_lo = *n_min_it / 10.0, nc_hi = *n_max_it * 10.0;
  for (int k = 0; k < opt.n_c_grid; ++k) {
    const double nc0 =
        nc_lo * std::pow(nc_hi / nc_lo,
                         static_cast<double>(k) / (opt.n_c_grid - 1));
    for (double a0 : opt.alpha_starts) {
      Eigen::Vector4d p0(q_hp0, q_sat0, nc0, a0);
      LmResult r = lm_fit(d, p0, opt);
      if (!r.converged) continue;
      // strict improvement keeps the lowest-n_c start on ties
      if (!best.converged || r.chi2 < best.chi2 - 1e-9 * (1.0 + best.chi2)) {
        best = r;
        best_nc_start = nc0;
      }
    }
  }
  (void)best_nc_start;
  if (!best.converged)
    throw numeric_error("fit_tls: no multi-start converged");

  TlsFit fit;
  fit.q_hp_inv = best.p(0);
  fit.q_sat_inv = best.p(1);
  fit.n_c = best.p(2);
  fit.alpha = best.p(3);
  fit.chi2 = best.chi2;
  fit.converged = true;
  fit.n_used = d.n.size();

  // covariance from the Jacobian in the original parameters
  const std::size_t n = d.n.size();
  Eigen::MatrixXd J(n, 4);
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m;
    Eigen::Vector4d g;
    model_and_grad(d.n[i], best.p, m, g);
    for (int j = 0; j < 4; ++j) J(static_cast<int>(i), j) = g(j) / d.sig[i];
    fit.residuals[i] = (m - d.y[i]) / d.sig[i];
  }
  // column-scale before the SVD so the defective-direction cut responds to
  // genuine degeneracy, not to the parameters' wildly different units
  Eigen::Vector4d scale;
  for (int j = 0; j < 4; ++j)
    scale(j) = std::max(J.col(j).norm(), 1e-300);
  const Eigen::MatrixXd js = J * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(js, Eigen::ComputeThinU |
                                                Eigen::ComputeThinV);
  const double tol = 1e-13 * svd.singularValues()(0);
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
  for (int k = 0; k < 4; ++k) {
    const double s = svd.singularValues()(k);
    if (s <= tol) continue;  // pseudoinverse drops defective directions
    const Eigen::Vector4d v =
        scale.cwiseInverse().cwiseProduct(svd.matrixV().col(k)) / s;
    cov += v * v.transpose();
  }
  fit.q_hp_inv_err = std::sqrt(cov(0, 0));
  fit.q_sat_inv_err = std::sqrt(cov(1, 1));
  fit.n_c_err = std::sqrt(cov(2, 2));
  fit.alpha_err = std::sqrt(cov(3, 3));
  fit.covariance.resize(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) fit.covariance[4 * r + c] = cov(r, c);
  return fit;
}

double saturation_fraction(double n, const TlsFit& fit) {
  require(std::isfinite(n) && n >= 0.0, "saturation_fraction: n must be >= 0");
  require(fit.n_c > 0.0 && fit.alpha > 0.0,
          "saturation_fraction: fit must have positive n_c and alpha");
  const double u = n > 0.0 ? std::pow(n / fit.n_c, fit.alpha) : 0.0;
  return 1.0 - 1.0 / std::sqrt(1.0 + u);
}

double low_power_boundary(double f_max, const TlsFit& fit) {
  require(std::isfinite(f_max) && f_max >= 0.0 && f_max < 1.0,
          "low_power_boundary: F must be in [0,1)");
  require(fit.n_c > 0.0, "low_power_boundary: fit must have positive n_c");
  if (!(fit.alpha > 0.0))
    throw std::domain_error(
        "low_power_boundary: alpha = 0 leaves the boundary undefined");
  const double g = 1.0 / ((1.0 - f_max) * (1.0 - f_max)) - 1.0;
  return fit.n_c * std::pow(g, 1.0 / fit.alpha);
}

CavityBounds cavity_bounds(const PowerSweep& sweep, const TlsFit* fit) {
  sweep.validate();
  require(sweep.position == SweepPosition::withdrawn,
          "cavity_bounds: requires a withdrawn-position sweep");
  if (sweep.p_cond <= 0.0)
    throw std::invalid_argument(
        "cavity_bounds: p_cond is zero, conductor bound undefined");
  if (sweep.p_MA <= 0.0)
    throw std::invalid_argument(
        "cavity_bounds: p_MA is zero, interface bound undefined");

  double q_min = sweep.points[0].q_inv, q_max = sweep.points[0].q_inv;
  for (const auto& p : sweep.points) {
    q_min = std::min(q_min, p.q_inv);
    q_max = std::max(q_max, p.q_inv);
  }
  double delta = q_max - q_min;
  if (fit && fit->converged) delta = fit->q_sat_inv;

  CavityBounds b;
  b.q_cond_inv_upper = q_min / sweep.p_cond;
  b.q_MA_inv_lower = delta / sweep.p_MA;
  b.q_MA_inv_upper = q_max / sweep.p_MA;
  return b;
}

}  // namespace cavloss
