#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cavloss {

// ---------------------------------------------------------------------------
// Frequency jitter
// ---------------------------------------------------------------------------

enum class JitterKind { none, discrete_lines, lorentzian, one_over_f };

// One spectral line: weight is the integrated fractional-frequency power
// carried by the line (units of epsilon^2, dimensionless).
struct JitterLine {
  double f_Hz = 0.0;
  double weight = 0.0;
};

// One-sided PSD S(f) of the zero-mean fractional frequency excursion
// epsilon(t), normalized so <epsilon^2> = integral of S(f) df.
// Realizations are synthesized as a sum of sinusoids with deterministic
// frequencies/amplitudes and per-shot random phases.
struct JitterSpectrum {
  JitterKind kind = JitterKind::none;

  std::vector<JitterLine> lines;  // discrete_lines only

  // Continuous kinds. lorentzian: S(f) = amplitude / (1 + (f/f_corner)^2)
  // on [0, f_max]. one_over_f: S(f) = amplitude / f on [f_corner, f_max].
  double amplitude = 0.0;  // 1/Hz
  double f_corner_Hz = 0.0;
  double f_max_Hz = 0.0;
  int synth_lines = 256;  // sinusoids used to realize continuous spectra

  void validate() const;
  double psd(double f_Hz) const;  // continuous part only
  double mean_square() const;     // <epsilon^2>, closed form
  double max_frequency() const;   // support upper edge, Hz
  // rms cavity-frequency excursion in units of the linewidth kappa_tot.
  double rms_linewidths(double omega0, double kappa_tot) const;
  // Copy rescaled so rms_linewidths(omega0, kappa_tot) == target.
  JitterSpectrum scaled_to_rms_linewidths(double target, double omega0,
                                          double kappa_tot) const;

  static JitterSpectrum none_spectrum();
  static JitterSpectrum discrete(std::vector<JitterLine> lines);
  static JitterSpectrum make_lorentzian(double amplitude, double f_corner_Hz,
                                        double f_max_Hz);
  static JitterSpectrum make_one_over_f(double amplitude, double f_lo_Hz,
                                        double f_hi_Hz);
};

// Deterministic sinusoid decomposition of a spectrum; the phases are the
// only per-shot random quantities.
struct JitterSynth {
  std::vector<double> omega;  // 2*pi*f_k, rad/s
  std::vector<double> amp;    // sqrt(2 * weight_k)
  std::vector<double> phase;

  double eval(double t) const;
};

// Build the synthesis for one shot; shot_seed fixes the phases.
JitterSynth make_jitter_synth(const JitterSpectrum& s, std::uint64_t shot_seed);

// ---------------------------------------------------------------------------
// Cavity, drive, ensembles
// ---------------------------------------------------------------------------

struct CavityModel {
  double omega0 = 0.0;      // resonance, rad/s
  double kappa_tot = 0.0;   // total energy decay rate, rad/s
  double kappa_ext = 0.0;   // external coupling rate, rad/s
  JitterSpectrum jitter;

  void validate() const;
};

// Square drive pulse in the rotating frame of the drive:
// a_in(t) = a0 for 0 <= t < t_p, 0 afterwards. a0 in sqrt(photons/s).
struct Pulse {
  double a0 = 0.0;
  double t_p_s = 0.0;
  double detuning = 0.0;  // drive minus bare cavity frequency, rad/s

  void validate() const;
};

// Complex output record of repeated identical shots on a uniform grid,
// sample i at t = i*dt. t_m is the detector averaging window used when
// fitting; seed is the master seed the per-shot streams derive from.
struct ShotEnsemble {
  double dt_s = 0.0;
  double t_m_s = 0.0;
  std::uint64_t seed = 0;
  double t_p_s = 0.0;  // pulse end, carried for window bookkeeping
  std::vector<std::vector<std::complex<double>>> shots;

  std::size_t n_samples() const { return shots.empty() ? 0 : shots[0].size(); }
  double time(std::size_t i) const { return static_cast<double>(i) * dt_s; }
};

// Integrates da/dt = (i(delta + omega0 eps(t)) - kappa_tot/2) a
//                    + sqrt(kappa_ext) a_in(t)
// with an exponential-Euler step (exact for piecewise constant
// coefficients) and returns the reflected output
//     a_out(t) = a_in(t) - sqrt(kappa_ext) a(t),
// the port convention under which the pulse is fully reflected in steady
// state and input and output energies balance.
// Preconditions: dt*f_max <= 0.1 for the jitter support, kappa_tot*dt <=
// 0.1*2*pi, |detuning|*dt <= 0.1*2*pi. Violations throw std::domain_error
// before any integration work.
std::vector<std::complex<double>> simulate_shot(
    const CavityModel& cavity, const Pulse& pulse, double dt_s,
    double duration_s, std::uint64_t shot_seed,
    std::complex<double> initial_amplitude = 0.0);

// n_shots independent shots; shot k uses a stream derived from (seed, k),
// so results are independent of execution order and thread count.
ShotEnsemble simulate_ensemble(const CavityModel& cavity, const Pulse& pulse,
                               double dt_s, double duration_s,
                               std::size_t n_shots, std::uint64_t seed,
                               double t_m_s);

// ---------------------------------------------------------------------------
// Detection and estimation
// ---------------------------------------------------------------------------

// Boxcar average of width t_m centered on each sample; near the ends the
// window shrinks symmetrically. t_m == dt is the identity.
std::vector<double> apply_detector_bandwidth(const std::vector<double>& series,
                                             double dt_s, double t_m_s);
std::vector<std::complex<double>> apply_detector_bandwidth(
    const std::vector<std::complex<double>>& series, double dt_s,
    double t_m_s);

enum class DecayMode {
  power_average,  // mean over shots of |a_out|^2, boxcar-averaged
  field_average,  // |mean over shots of a_out|^2, field boxcar-averaged
};

struct DecayFit {
  DecayMode mode{};
  double rate = 0.0;         // fitted decay rate of the power series, rad/s
  double rate_stderr = 0.0;
  double contrast = 0.0;     // fitted amplitude at the window start
  double window_start_s = 0.0;
  double window_end_s = 0.0;
  std::size_t n_used = 0;
};

// Weighted log-linear least squares on the averaged, bandwidth-filtered
// power series restricted to [t_start, t_end]. Samples at or below
// 3*noise_floor are excluded; remaining non-positive samples raise
// numeric_error (insufficient SNR). Weights come from the cross-shot
// scatter; with zero scatter the fit is unweighted and the standard error
// derives from residuals.
DecayFit fit_decay(const ShotEnsemble& ensemble, double t_start_s,
                   double t_end_s, DecayMode mode, double noise_floor = 0.0);

enum class KappaExtMethod { exact, short_pulse };

// Coupling rate from the start/ring power ratio of a reflection
// measurement. exact:
//   kappa_ext = kappa_tot / (2 (1 - exp(-kappa_tot t_p / 2)))
//               * sqrt(P_ring / P_start)
// short_pulse: kappa_ext = sqrt(P_ring / P_start) / t_p.
double extract_kappa_ext(double p_start, double p_ring, double kappa_tot,
                         double t_p_s, KappaExtMethod method);

// Intracavity photon number estimators.
double photon_number_from_output(double a_out_sq, double kappa_ext);
double photon_number_from_input(double a0, double t_p_s, double kappa_ext,
                                double kappa_tot);
double photon_number_short_pulse(double a0, double t_p_s, double kappa_ext);
// n = P_in t_p^2 / (hbar Q_ext).
double photon_number_from_power(double p_in_W, double t_p_s, double q_ext);

// Dephasing spectral weights.
// w0(f, t) = sin^2(pi f t) / (pi f)^2, w0 -> t^2 as f -> 0.
double spectral_weight_w0(double f_Hz, double t_s);
// w1(omega) = (1 - sinc^2(omega t_m / 2)) / ((kappa_tot/2)^2 + omega^2).
double spectral_weight_w1(double omega, double t_m_s, double kappa_tot);

struct FieldDecayPrediction {
  std::vector<double> amplitude;   // |<a>|/|a(0)| on the given grid
  std::vector<double> mean_square_phase;  // <theta^2>(t)
  bool expansion_valid = true;     // false once <theta^2> exceeds 0.5
};

// Slow-jitter second-order prediction of the ensemble-averaged field
// envelope: exp(-kappa_tot t / 2) (1 - 0.5 omega0^2 int S(f) w0(f,t) df).
// Continuous spectra integrate by adaptive quadrature; discrete lines sum
// in closed form.
FieldDecayPrediction predict_field_decay(const CavityModel& cavity,
                                         const std::vector<double>& t_s);

// Per-shot stream derivation, exposed for reproducibility tests.
std::uint64_t derive_shot_seed(std::uint64_t master, std::uint64_t index);

}  // namespace cavloss
