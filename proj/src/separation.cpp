#include "cavloss/separation.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "cavloss/constants.hpp"
#include "cavloss/errors.hpp"

namespace cavloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void ConstraintLine::validate() const {
  require(std::isfinite(q_sub_inv) && q_sub_inv >= 0.0,
          "constraint line: q_sub^-1 must be >= 0");
  require(std::isfinite(sigma) && sigma >= 0.0,
          "constraint line: sigma must be >= 0");
  require(ratio >= 0.0, "constraint line: ratio must be >= 0");
  require(std::isfinite(ratio_sigma) && ratio_sigma >= 0.0,
          "constraint line: ratio sigma must be >= 0");
}

double ConstraintLine::intercept_sa() const {
  require(ratio > 0.0, "constraint line: ratio must be > 0 for SA intercept");
  return q_sub_inv / ratio;
}

namespace {

// shared core: the point solution without clipping
struct RawIntersection {
  double sa, bulk, denom;
};

RawIntersection solve_pair(double q1, double r1, double q2, double r2) {
  RawIntersection s;
  s.denom = r1 - r2;
  s.sa = (q1 - q2) / s.denom;
  s.bulk = q1 - r1 * s.sa;
  return s;
}

}  // namespace

LossPair intersect(const ConstraintLine& a, const ConstraintLine& b) {
  a.validate();
  b.validate();
  require(a.kind == LineKind::equality && b.kind == LineKind::equality,
          "intersect: both lines must be equality constraints");
  const double gap = std::abs(a.ratio - b.ratio);
  const double tol =
      std::max(a.ratio_sigma + b.ratio_sigma,
               8.0 * std::numeric_limits<double>::epsilon() *
                   std::max(a.ratio, b.ratio));
  if (gap <= tol)
    throw numeric_error(
        "intersect: participation ratios too close, lines are parallel "
        "within tolerance");

  const auto raw = solve_pair(a.q_sub_inv, a.ratio, b.q_sub_inv, b.ratio);
  const double d = raw.denom;
  const double s = raw.sa;

  // first-order propagation, independent inputs
  const double ds_dq1 = 1.0 / d;
  const double ds_dq2 = -1.0 / d;
  const double ds_dr1 = -s / d;
  const double ds_dr2 = s / d;
  const double db_dq1 = -b.ratio / d;
  const double db_dq2 = a.ratio / d;
  const double db_dr1 = s * b.ratio / d;
  const double db_dr2 = -a.ratio * s / d;

  auto quad = [](double t1, double t2, double t3, double t4) {
    return std::sqrt(t1 * t1 + t2 * t2 + t3 * t3 + t4 * t4);
  };

  LossPair out;
  out.q_sa_inv = s;
  out.q_bulk_inv = raw.bulk;
  out.q_sa_inv_sigma = quad(ds_dq1 * a.sigma, ds_dq2 * b.sigma,
                            ds_dr1 * a.ratio_sigma, ds_dr2 * b.ratio_sigma);
  out.q_bulk_inv_sigma = quad(db_dq1 * a.sigma, db_dq2 * b.sigma,
                              db_dr1 * a.ratio_sigma, db_dr2 * b.ratio_sigma);
  if (out.q_sa_inv < 0.0) {
    out.q_sa_inv = 0.0;
    out.clipped_sa = true;
  }
  if (out.q_bulk_inv < 0.0) {
    out.q_bulk_inv = 0.0;
    out.clipped_bulk = true;
  }
  return out;
}

LossPair intersect_sampled(const ConstraintLine& a, const ConstraintLine& b,
                           int n_draws, std::uint64_t seed) {
  a.validate();
  b.validate();
  require(n_draws >= 2, "intersect_sampled: need at least 2 draws");
  // reject configurations the deterministic solver would reject
  (void)intersect(a, b);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double sum_s = 0, sum_s2 = 0, sum_b = 0, sum_b2 = 0;
  for (int k = 0; k < n_draws; ++k) {
    const double q1 = a.q_sub_inv + a.sigma * gauss(rng);
    const double q2 = b.q_sub_inv + b.sigma * gauss(rng);
    const double r1 = a.ratio + a.ratio_sigma * gauss(rng);
    const double r2 = b.ratio + b.ratio_sigma * gauss(rng);
    const auto raw = solve_pair(q1, r1, q2, r2);
    sum_s += raw.sa;
    sum_s2 += raw.sa * raw.sa;
    sum_b += raw.bulk;
    sum_b2 += raw.bulk * raw.bulk;
  }
  const double n = static_cast<double>(n_draws);
  LossPair out;
  out.q_sa_inv = sum_s / n;
  out.q_bulk_inv = sum_b / n;
  out.q_sa_inv_sigma =
      std::sqrt(std::max(0.0, sum_s2 / n - out.q_sa_inv * out.q_sa_inv) * n /
                (n - 1.0));
  out.q_bulk_inv_sigma =
      std::sqrt(std::max(0.0, sum_b2 / n - out.q_bulk_inv * out.q_bulk_inv) *
                n / (n - 1.0));
  if (out.q_sa_inv < 0.0) {
    out.q_sa_inv = 0.0;
    out.clipped_sa = true;
  }
  if (out.q_bulk_inv < 0.0) {
    out.q_bulk_inv = 0.0;
    out.clipped_bulk = true;
  }
  return out;
}

SubstrateBounds single_sample_bounds(const ConstraintLine& line) {
  line.validate();
  require(line.kind == LineKind::equality,
          "single_sample_bounds: need an equality line");
  SubstrateBounds out;
  out.bulk.upper = line.q_sub_inv;
  out.bulk.upper_sigma = line.sigma;
  if (line.ratio > 0.0) {
    const double y = line.q_sub_inv / line.ratio;
    out.sa.upper = y;
    // relative errors add in quadrature on the quotient
    const double rel_q =
        line.q_sub_inv > 0.0 ? line.sigma / line.q_sub_inv : 0.0;
    const double rel_r = line.ratio_sigma / line.ratio;
    out.sa.upper_sigma =
        line.q_sub_inv > 0.0 ? y * std::sqrt(rel_q * rel_q + rel_r * rel_r)
                             : line.sigma / line.ratio;
  } else {
    out.sa.unbounded = true;  // no surface sensitivity at this position
  }
  return out;
}

MagneticBounds magnetic_bounds(const ProbeConstraint& probe,
                               const StriplineConstraint& stripline) {
  require(std::isfinite(probe.q_bulk_inv) && probe.q_bulk_inv >= 0.0,
          "magnetic bounds: probe q_bulk^-1 must be >= 0");
  require(probe.ratio > 0.0, "magnetic bounds: probe ratio must be > 0");
  require(std::isfinite(stripline.q_total_inv) && stripline.q_total_inv > 0.0,
          "magnetic bounds: stripline loss must be > 0");
  require(stripline.p_e > 0.0 && stripline.p_e <= 1.0,
          "magnetic bounds: stripline p_E must be in (0, 1]");
  require(stripline.p_h >= 0.0 && stripline.p_h <= 1.0,
          "magnetic bounds: stripline p_H must be in [0, 1]");

  // parametrize the probe line by h = q_H^-1 >= 0: q_E^-1 = qb - h * slope
  const double qb = probe.q_bulk_inv;
  const double slope = std::isinf(probe.ratio) ? 0.0 : 1.0 / probe.ratio;
  const double rhs = stripline.q_total_inv - stripline.p_e * qb;
  const double c = stripline.p_h - stripline.p_e * slope;

  MagneticBounds out;
  if (c > 0.0) {
    if (rhs < 0.0)
      throw numeric_error(
          "magnetic bounds: stripline loss is below the probe line, the "
          "constraints have no common point");
    double h_max = rhs / c;
    if (slope > 0.0) h_max = std::min(h_max, qb / slope);  // q_E^-1 >= 0
    out.q_h_inv.upper = h_max;
    out.q_e_inv.lower = qb - h_max * slope;
    out.q_e_inv.upper = qb;
  } else if (c == 0.0) {
    // the stripline mixture is constant along the probe line
    if (rhs < 0.0)
      throw numeric_error(
          "magnetic bounds: stripline loss is below the probe line, the "
          "constraints have no common point");
    out.q_e_inv.lower = qb;
    out.q_e_inv.upper = qb;
    if (slope > 0.0) {
      out.q_h_inv.upper = qb / slope;
      out.q_e_inv.lower = 0.0;
    } else {
      out.q_h_inv.unbounded = true;
    }
  } else {
    throw numeric_error(
        "magnetic bounds: stripline weighting cannot cap the magnetic loss "
        "along this probe line (p_H < p_E / ratio)");
  }
  return out;
}

CoherenceLimit coherence_limit(double participation, double q_inv,
                               double f_Hz) {
  require(std::isfinite(f_Hz) && f_Hz > 0.0,
          "coherence limit: frequency must be > 0");
  require(std::isfinite(participation) && participation >= 0.0,
          "coherence limit: participation must be >= 0");
  require(std::isfinite(q_inv) && q_inv >= 0.0,
          "coherence limit: loss must be >= 0");
  CoherenceLimit out;
  const double loss = participation * q_inv;
  if (loss == 0.0) return out;
  out.quality_factor = 1.0 / loss;
  out.t1_s = *out.quality_factor / (kTwoPi * f_Hz);
  return out;
}

double conductor_participation_shift(double q_inserted_inv,
                                     double q_withdrawn_inv) {
  require(std::isfinite(q_inserted_inv) && std::isfinite(q_withdrawn_inv),
          "participation shift: losses must be finite");
  require(q_withdrawn_inv != 0.0,
          "participation shift: withdrawn loss must be nonzero");
  return (q_inserted_inv - q_withdrawn_inv) / q_withdrawn_inv;
}

}  // namespace cavloss
