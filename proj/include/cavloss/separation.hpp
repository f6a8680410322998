#pragma once

// Splits composite substrate loss into bulk and surface parts. Each sample
// measured at a different surface-to-bulk participation ratio pins a straight
// line in the (q_bulk^-1, q_SA^-1) plane; two lines intersect in a point,
// one line alone still bounds both axes. The same machinery handles the
// electric/magnetic split from probe and stripline data.

#include <cstdint>
#include <optional>
#include <string>

namespace cavloss {

enum class LineKind { equality, upper_bound };

// q_sub^-1 = q_bulk^-1 + ratio * q_SA^-1 along the line (equality kind),
// or the half-plane below it (upper_bound kind).
struct ConstraintLine {
  std::string label;
  double q_sub_inv = 0.0;
  double sigma = 0.0;
  double ratio = 0.0;        // p_SA / p_bulk for this sample
  double ratio_sigma = 0.0;
  LineKind kind = LineKind::equality;

  void validate() const;
  double intercept_bulk() const { return q_sub_inv; }
  double intercept_sa() const;  // q_sub_inv / ratio; requires ratio > 0
};

struct LossPair {
  double q_bulk_inv = 0.0;
  double q_bulk_inv_sigma = 0.0;
  double q_sa_inv = 0.0;
  double q_sa_inv_sigma = 0.0;
  bool clipped_bulk = false;  // negative solution clipped to zero
  bool clipped_sa = false;
};

// Solves the 2x2 system of two equality lines; sigmas propagate to first
// order from both measured losses and both ratios. Near-parallel lines
// (ratio gap below the combined ratio uncertainty) throw numeric_error.
LossPair intersect(const ConstraintLine& a, const ConstraintLine& b);

// Monte-Carlo cross-check of the first-order propagation: draws all four
// inputs from independent normals and reports sample mean and spread.
LossPair intersect_sampled(const ConstraintLine& a, const ConstraintLine& b,
                           int n_draws = 20000, std::uint64_t seed = 1);

struct LossInterval {
  double lower = 0.0;
  double upper = 0.0;
  double upper_sigma = 0.0;
  bool unbounded = false;  // no finite upper endpoint
};

struct SubstrateBounds {
  LossInterval bulk;  // [0, q_sub_inv]
  LossInterval sa;    // [0, q_sub_inv / ratio]
};

// One sample cannot separate the two losses but caps both: each axis
// intercept is an upper bound, with sigma scaled onto the intercept.
SubstrateBounds single_sample_bounds(const ConstraintLine& line);

// Electric/magnetic split. The immersed probe measurement fixes the line
// q_E^-1 + q_H^-1 / ratio = q_bulk_inv (ratio = p_E/p_H of the probe mode,
// infinity when the mode has no magnetic participation). The stripline
// resonator adds the half-plane p_E q_E^-1 + p_H q_H^-1 <= q_total_inv.
struct ProbeConstraint {
  double q_bulk_inv = 0.0;
  double ratio = 0.0;  // p_E / p_H
};

struct StriplineConstraint {
  double q_total_inv = 0.0;  // 1/Q of the stripline mode
  double p_e = 0.0;
  double p_h = 0.0;
};

struct MagneticBounds {
  LossInterval q_e_inv;  // [q_E_min, q_E_max]
  LossInterval q_h_inv;  // [0, q_H_max] or unbounded
};

MagneticBounds magnetic_bounds(const ProbeConstraint& probe,
                               const StriplineConstraint& stripline);

// Loss-tangent ceiling on a device storing fraction p of its energy in the
// lossy medium: Q = 1/(p q_inv), T1 = Q/(2 pi f). Zero p*q_inv means the
// medium imposes no limit; both fields are then absent.
struct CoherenceLimit {
  std::optional<double> quality_factor;
  std::optional<double> t1_s;
  bool unbounded() const { return !quality_factor.has_value(); }
};

CoherenceLimit coherence_limit(double participation, double q_inv,
                               double f_Hz);

// Fractional change of total loss between sample-inserted and withdrawn
// configurations; in the conductor-dominated regime this estimates the
// fractional shift of conductor participation.
double conductor_participation_shift(double q_inserted_inv,
                                     double q_withdrawn_inv);

}  // namespace cavloss
