#include "cavloss/ringdown.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "cavloss/constants.hpp"
#include "cavloss/errors.hpp"

namespace cavloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_shot_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

// ---------------------------------------------------------------------------
// Jitter spectra
// ---------------------------------------------------------------------------

void JitterSpectrum::validate() const {
  switch (kind) {
    case JitterKind::none:
      break;
    case JitterKind::discrete_lines:
      require(!lines.empty(), "jitter: discrete spectrum with no lines");
      for (const auto& l : lines) {
        require(std::isfinite(l.f_Hz) && l.f_Hz > 0.0,
                "jitter: line frequency must be positive");
        require(std::isfinite(l.weight) && l.weight >= 0.0,
                "jitter: line weight must be >= 0");
      }
      break;
    case JitterKind::lorentzian:
      require(std::isfinite(amplitude) && amplitude >= 0.0,
              "jitter: amplitude must be >= 0");
      require(f_corner_Hz > 0.0, "jitter: corner frequency must be positive");
      require(f_max_Hz > f_corner_Hz,
              "jitter: f_max must exceed the corner frequency");
      require(synth_lines >= 8, "jitter: too few synthesis lines");
      break;
    case JitterKind::one_over_f:
      require(std::isfinite(amplitude) && amplitude >= 0.0,
              "jitter: amplitude must be >= 0");
      require(f_corner_Hz > 0.0, "jitter: low cutoff must be positive");
      require(f_max_Hz > f_corner_Hz,
              "jitter: high cutoff must exceed the low cutoff");
      require(synth_lines >= 8, "jitter: too few synthesis lines");
      break;
  }
}

double JitterSpectrum::psd(double f_Hz) const {
  switch (kind) {
    case JitterKind::lorentzian: {
      if (f_Hz < 0.0 || f_Hz > f_max_Hz) return 0.0;
      const double r = f_Hz / f_corner_Hz;
      return amplitude / (1.0 + r * r);
    }
    case JitterKind::one_over_f:
      if (f_Hz < f_corner_Hz || f_Hz > f_max_Hz) return 0.0;
      return amplitude / f_Hz;
    default:
      return 0.0;
  }
}

double JitterSpectrum::mean_square() const {
  switch (kind) {
    case JitterKind::none:
      return 0.0;
    case JitterKind::discrete_lines: {
      double s = 0.0;
      for (const auto& l : lines) s += l.weight;
      return s;
    }
    case JitterKind::lorentzian:
      return amplitude * f_corner_Hz * std::atan(f_max_Hz / f_corner_Hz);
    case JitterKind::one_over_f:
      return amplitude * std::log(f_max_Hz / f_corner_Hz);
  }
  return 0.0;
}

double JitterSpectrum::max_frequency() const {
  switch (kind) {
    case JitterKind::none:
      return 0.0;
    case JitterKind::discrete_lines: {
      double m = 0.0;
      for (const auto& l : lines) m = std::max(m, l.f_Hz);
      return m;
    }
    default:
      return f_max_Hz;
  }
}

double JitterSpectrum::rms_linewidths(double omega0, double kappa_tot) const {
  require(omega0 > 0.0 && kappa_tot > 0.0,
          "jitter: omega0 and kappa_tot must be positive");
  return omega0 * std::sqrt(mean_square()) / kappa_tot;
}

JitterSpectrum JitterSpectrum::scaled_to_rms_linewidths(double target,
                                                        double omega0,
                                                        double kappa_tot) const {
  require(std::isfinite(target) && target >= 0.0,
          "jitter: target rms must be >= 0");
  const double cur = rms_linewidths(omega0, kappa_tot);
  if (cur == 0.0)
    throw std::domain_error("jitter: cannot rescale a zero spectrum");
  const double gain = (target / cur) * (target / cur);
  JitterSpectrum out = *this;
  out.amplitude *= gain;
  for (auto& l : out.lines) l.weight *= gain;
  return out;
}

JitterSpectrum JitterSpectrum::none_spectrum() { return JitterSpectrum{}; }

JitterSpectrum JitterSpectrum::discrete(std::vector<JitterLine> lines) {
  JitterSpectrum s;
  s.kind = JitterKind::discrete_lines;
  s.lines = std::move(lines);
  s.validate();
  return s;
}

JitterSpectrum JitterSpectrum::make_lorentzian(double amplitude,
                                               double f_corner_Hz,
                                               double f_max_Hz) {
  JitterSpectrum s;
  s.kind = JitterKind::lorentzian;
  s.amplitude = amplitude;
  s.f_corner_Hz = f_corner_Hz;
  s.f_max_Hz = f_max_Hz;
  s.validate();
  return s;
}

JitterSpectrum JitterSpectrum::make_one_over_f(double amplitude, double f_lo_Hz,
                                               double f_hi_Hz) {
  JitterSpectrum s;
  s.kind = JitterKind::one_over_f;
  s.amplitude = amplitude;
  s.f_corner_Hz = f_lo_Hz;
  s.f_max_Hz = f_hi_Hz;
  s.validate();
  return s;
}

double JitterSynth::eval(double t) const {
  double e = 0.0;
  for (std::size_t k = 0; k < omega.size(); ++k)
    e += amp[k] * std::cos(omega[k] * t + phase[k]);
  return e;
}

JitterSynth make_jitter_synth(const JitterSpectrum& s, std::uint64_t shot_seed) {
  s.validate();
  JitterSynth syn;
  switch (s.kind) {
    case JitterKind::none:
      return syn;
    case JitterKind::discrete_lines:
      for (const auto& l : s.lines) {
        syn.omega.push_back(kTwoPi * l.f_Hz);
        syn.amp.push_back(std::sqrt(2.0 * l.weight));
      }
      break;
    case JitterKind::lorentzian: {
      // midpoint bins on a linear grid reproduce <eps^2> as K grows
      const int K = s.synth_lines;
      const double df = s.f_max_Hz / K;
      for (int k = 0; k < K; ++k) {
        const double f = (k + 0.5) * df;
        syn.omega.push_back(kTwoPi * f);
        syn.amp.push_back(std::sqrt(2.0 * s.psd(f) * df));
      }
      break;
    }
    case JitterKind::one_over_f: {
      // log bins carry equal weight for a 1/f shape, exact per bin
      const int K = s.synth_lines;
      const double ratio = std::pow(s.f_max_Hz / s.f_corner_Hz, 1.0 / K);
      double lo = s.f_corner_Hz;
      for (int k = 0; k < K; ++k) {
        const double hi = lo * ratio;
        const double f = std::sqrt(lo * hi);
        syn.omega.push_back(kTwoPi * f);
        syn.amp.push_back(std::sqrt(2.0 * s.amplitude * std::log(hi / lo)));
        lo = hi;
      }
      break;
    }
  }
  std::mt19937_64 eng(shot_seed);
  std::uniform_real_distribution<double> uni(0.0, kTwoPi);
  syn.phase.resize(syn.omega.size());
  for (auto& p : syn.phase) p = uni(eng);
  return syn;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

void CavityModel::validate() const {
  require(std::isfinite(omega0) && omega0 > 0.0,
          "cavity: omega0 must be positive");
  require(std::isfinite(kappa_tot) && kappa_tot > 0.0,
          "cavity: kappa_tot must be positive");
  require(std::isfinite(kappa_ext) && kappa_ext >= 0.0,
          "cavity: kappa_ext must be >= 0");
  require(kappa_ext <= kappa_tot, "cavity: kappa_ext exceeds kappa_tot");
  jitter.validate();
}

void Pulse::validate() const {
  require(std::isfinite(a0) && a0 >= 0.0, "pulse: a0 must be >= 0");
  require(std::isfinite(t_p_s) && t_p_s >= 0.0, "pulse: t_p must be >= 0");
  require(std::isfinite(detuning), "pulse: detuning must be finite");
}

namespace {

void check_step_size(const CavityModel& c, const Pulse& p, double dt,
                     double duration) {
  if (!(std::isfinite(dt) && dt > 0.0))
    throw std::invalid_argument("simulate: dt must be positive");
  if (!(std::isfinite(duration) && duration >= dt))
    throw std::invalid_argument("simulate: duration must be >= dt");
  const double f_max = c.jitter.max_frequency();
  if (f_max * dt > 0.1)
    throw std::domain_error(
        "simulate: unstable step size, dt does not resolve the jitter "
        "bandwidth (need dt*f_max <= 0.1)");
  if (c.kappa_tot * dt > 0.1 * kTwoPi)
    throw std::domain_error(
        "simulate: unstable step size, dt too coarse for the decay rate "
        "(need kappa_tot*dt <= 0.1*2*pi)");
  if (std::abs(p.detuning) * dt > 0.1 * kTwoPi)
    throw std::domain_error(
        "simulate: unstable step size, dt does not resolve the detuning");
}

struct Integrator {
  const CavityModel& cav;
  const Pulse& pulse;
  const JitterSynth& syn;
  double sqrt_ke;

  // exact segment update for piecewise constant coefficient and drive
  void step(std::complex<double>& a, double t0, double h, bool driven) const {
    const double eps = syn.omega.empty() ? 0.0 : syn.eval(t0 + 0.5 * h);
    const std::complex<double> lam(-0.5 * cav.kappa_tot,
                                   pulse.detuning + cav.omega0 * eps);
    const std::complex<double> lh = lam * h;
    const std::complex<double> e = std::exp(lh);
    a *= e;
    if (driven && pulse.a0 != 0.0) {
      std::complex<double> phi;  // (e^{lam h} - 1)/lam
      if (std::abs(lh) < 1e-6) {
        phi = h * (1.0 + lh * 0.5 + lh * lh / 6.0);
      } else {
        phi = (e - 1.0) / lam;
      }
      a += sqrt_ke * pulse.a0 * phi;
    }
  }

  // advance across [ta, tb], splitting at the pulse edge; driven segments
  // are subdivided so jitter is sampled within the pulse as well
  void advance(std::complex<double>& a, double ta, double tb) const {
    const double tp = pulse.t_p_s;
    if (ta < tp && tb > tp) {
      advance(a, ta, tp);
      advance(a, tp, tb);
      return;
    }
    if (tb <= ta) return;
    const bool driven = tb <= tp && pulse.a0 != 0.0;
    if (driven && !syn.omega.empty()) {
      const double h_max = tp / 16.0;
      const int m = std::max(1, static_cast<int>(std::ceil((tb - ta) / h_max)));
      const double h = (tb - ta) / m;
      for (int j = 0; j < m; ++j) step(a, ta + j * h, h, true);
    } else {
      step(a, ta, tb - ta, driven);
    }
  }
};

}  // namespace

std::vector<std::complex<double>> simulate_shot(
    const CavityModel& cavity, const Pulse& pulse, double dt_s,
    double duration_s, std::uint64_t shot_seed,
    std::complex<double> initial_amplitude) {
  cavity.validate();
  pulse.validate();
  check_step_size(cavity, pulse, dt_s, duration_s);

  const auto syn = make_jitter_synth(cavity.jitter, shot_seed);
  const double sqrt_ke = std::sqrt(cavity.kappa_ext);
  Integrator integ{cavity, pulse, syn, sqrt_ke};

  const std::size_t n =
      static_cast<std::size_t>(std::floor(duration_s / dt_s)) + 1;
  std::vector<std::complex<double>> out(n);
  auto a_in = [&](double t) {
    return (t < pulse.t_p_s) ? std::complex<double>(pulse.a0, 0.0)
                             : std::complex<double>(0.0, 0.0);
  };

  std::complex<double> a = initial_amplitude;
  out[0] = a_in(0.0) - sqrt_ke * a;
  for (std::size_t i = 1; i < n; ++i) {
    const double t0 = (i - 1) * dt_s;
    const double t1 = i * dt_s;
    integ.advance(a, t0, t1);
    out[i] = a_in(t1) - sqrt_ke * a;
  }
  return out;
}

ShotEnsemble simulate_ensemble(const CavityModel& cavity, const Pulse& pulse,
                               double dt_s, double duration_s,
                               std::size_t n_shots, std::uint64_t seed,
                               double t_m_s) {
  cavity.validate();
  pulse.validate();
  check_step_size(cavity, pulse, dt_s, duration_s);
  require(n_shots >= 1, "simulate: need at least one shot");
  require(std::isfinite(t_m_s) && t_m_s >= dt_s,
          "simulate: t_m must be >= dt");

  ShotEnsemble e;
  e.dt_s = dt_s;
  e.t_m_s = t_m_s;
  e.seed = seed;
  e.t_p_s = pulse.t_p_s;
  e.shots.resize(n_shots);

  // shot k depends only on (seed, k); slots are preallocated so the thread
  // count cannot change the result
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const std::size_t n_threads = std::min<std::size_t>(hw, n_shots);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  auto work = [&](std::size_t tid) {
    try {
      for (std::size_t k = tid; k < n_shots; k += n_threads)
        e.shots[k] = simulate_shot(cavity, pulse, dt_s, duration_s,
                                   derive_shot_seed(seed, k));
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  if (n_threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return e;
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::vector<T> boxcar(const std::vector<T>& series, double dt, double t_m) {
  if (!(dt > 0.0)) throw std::invalid_argument("boxcar: dt must be positive");
  if (!(std::isfinite(t_m) && t_m >= 0.0))
    throw std::invalid_argument("boxcar: t_m must be >= 0");
  if (t_m <= dt || series.size() < 2) return series;
  const long n_req = std::lround(t_m / dt);
  const long taps = std::max(1l, 2 * std::lround((static_cast<double>(n_req) - 1.0) / 2.0) + 1);
  const long half = (taps - 1) / 2;
  const long n = static_cast<long>(series.size());
  std::vector<T> out(series.size());
  for (long i = 0; i < n; ++i) {
    const long he = std::min({half, i, n - 1 - i});
    T acc{};
    for (long j = i - he; j <= i + he; ++j) acc += series[j];
    out[i] = acc / static_cast<double>(2 * he + 1);
  }
  return out;
}

}  // namespace

std::vector<double> apply_detector_bandwidth(const std::vector<double>& series,
                                             double dt_s, double t_m_s) {
  return boxcar(series, dt_s, t_m_s);
}

std::vector<std::complex<double>> apply_detector_bandwidth(
    const std::vector<std::complex<double>>& series, double dt_s,
    double t_m_s) {
  return boxcar(series, dt_s, t_m_s);
}

DecayFit fit_decay(const ShotEnsemble& ensemble, double t_start_s,
                   double t_end_s, DecayMode mode, double noise_floor) {
  require(!ensemble.shots.empty() && ensemble.n_samples() >= 3,
          "fit_decay: ensemble too small");
  require(std::isfinite(t_start_s) && std::isfinite(t_end_s) &&
              t_end_s > t_start_s,
          "fit_decay: bad window");
  require(std::isfinite(noise_floor) && noise_floor >= 0.0,
          "fit_decay: noise floor must be >= 0");

  const std::size_t n = ensemble.n_samples();
  const std::size_t m = ensemble.shots.size();
  for (const auto& s : ensemble.shots)
    require(s.size() == n, "fit_decay: ragged ensemble");

  // averaged power series and its cross-shot standard error
  std::vector<double> y(n, 0.0), sig(n, 0.0);
  if (mode == DecayMode::power_average) {
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (std::size_t k = 0; k < m; ++k) mean += std::norm(ensemble.shots[k][i]);
      mean /= static_cast<double>(m);
      double var = 0.0;
      if (m > 1) {
        for (std::size_t k = 0; k < m; ++k) {
          const double d = std::norm(ensemble.shots[k][i]) - mean;
          var += d * d;
        }
        var /= static_cast<double>(m - 1) * static_cast<double>(m);
      }
      y[i] = mean;
      sig[i] = std::sqrt(var);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::complex<double> mean = 0.0;
      for (std::size_t k = 0; k < m; ++k) mean += ensemble.shots[k][i];
      mean /= static_cast<double>(m);
      double v_re = 0.0, v_im = 0.0;
      if (m > 1) {
        for (std::size_t k = 0; k < m; ++k) {
          const auto d = ensemble.shots[k][i] - mean;
          v_re += d.real() * d.real();
          v_im += d.imag() * d.imag();
        }
        const double norm = static_cast<double>(m - 1) * static_cast<double>(m);
        v_re /= norm;
        v_im /= norm;
      }
      y[i] = std::norm(mean);
      // first order in the component errors plus the gaussian floor term
      sig[i] = std::sqrt(4.0 * mean.real() * mean.real() * v_re +
                         4.0 * mean.imag() * mean.imag() * v_im +
                         2.0 * (v_re * v_re + v_im * v_im));
    }
  }
  y = boxcar(y, ensemble.dt_s, ensemble.t_m_s);
  sig = boxcar(sig, ensemble.dt_s, ensemble.t_m_s);

  std::vector<double> t_fit, y_fit, s_fit;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = ensemble.time(i);
    if (t < t_start_s || t > t_end_s) continue;
    if (noise_floor > 0.0 && y[i] <= 3.0 * noise_floor) continue;
    t_fit.push_back(t);
    y_fit.push_back(y[i]);
    s_fit.push_back(sig[i]);
  }
  if (t_fit.size() < 3)
    throw numeric_error("fit_decay: fewer than 3 usable samples in window");
  for (double v : y_fit)
    if (v <= 0.0)
      throw numeric_error(
          "fit_decay: non-positive averaged samples in window, insufficient "
          "SNR");

  // weights are inverse variances of ln(y)
  const std::size_t nf = t_fit.size();
  double s_min_pos = 0.0;
  bool any_scatter = false;
  for (double s : s_fit)
    if (s > 0.0) {
      s_min_pos = any_scatter ? std::min(s_min_pos, s) : s;
      any_scatter = true;
    }
  std::vector<double> w(nf, 1.0);
  const bool weighted = any_scatter;
  if (weighted) {
    for (std::size_t i = 0; i < nf; ++i) {
      const double s = s_fit[i] > 0.0 ? s_fit[i] : s_min_pos;
      const double r = y_fit[i] / s;
      w[i] = r * r;
    }
  }

  double sw = 0.0, swt = 0.0;
  for (std::size_t i = 0; i < nf; ++i) {
    sw += w[i];
    swt += w[i] * t_fit[i];
  }
  const double t_bar = swt / sw;
  double s_tt = 0.0, s_ty = 0.0, s_y = 0.0;
  for (std::size_t i = 0; i < nf; ++i) {
    const double tau = t_fit[i] - t_bar;
    const double ly = std::log(y_fit[i]);
    s_tt += w[i] * tau * tau;
    s_ty += w[i] * tau * ly;
    s_y += w[i] * ly;
  }
  if (s_tt <= 0.0)
    throw numeric_error("fit_decay: degenerate time window");
  const double slope = s_ty / s_tt;
  const double mean_ly = s_y / sw;

  double chi2 = 0.0;
  for (std::size_t i = 0; i < nf; ++i) {
    const double r = std::log(y_fit[i]) - (mean_ly + slope * (t_fit[i] - t_bar));
    chi2 += w[i] * r * r;
  }
  const double dof = static_cast<double>(nf) - 2.0;
  double var_slope;
  if (weighted) {
    var_slope = (1.0 / s_tt) * std::max(1.0, dof > 0 ? chi2 / dof : 1.0);
  } else {
    var_slope = (dof > 0 ? chi2 / dof : 0.0) / s_tt;
  }

  DecayFit fit;
  fit.mode = mode;
  fit.rate = -slope;
  fit.rate_stderr = std::sqrt(var_slope);
  fit.contrast = std::exp(mean_ly + slope * (t_start_s - t_bar));
  fit.window_start_s = t_start_s;
  fit.window_end_s = t_end_s;
  fit.n_used = nf;
  return fit;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

double extract_kappa_ext(double p_start, double p_ring, double kappa_tot,
                         double t_p_s, KappaExtMethod method) {
  require(std::isfinite(p_start) && p_start > 0.0,
          "extract_kappa_ext: P_start must be positive");
  require(std::isfinite(p_ring) && p_ring >= 0.0,
          "extract_kappa_ext: P_ring must be >= 0");
  require(std::isfinite(t_p_s) && t_p_s > 0.0,
          "extract_kappa_ext: t_p must be positive");
  const double ratio = std::sqrt(p_ring / p_start);
  if (method == KappaExtMethod::short_pulse) return ratio / t_p_s;
  require(std::isfinite(kappa_tot) && kappa_tot > 0.0,
          "extract_kappa_ext: exact method requires kappa_tot > 0");
  const double denom = 2.0 * (1.0 - std::exp(-0.5 * kappa_tot * t_p_s));
  return kappa_tot / denom * ratio;
}

double photon_number_from_output(double a_out_sq, double kappa_ext) {
  require(std::isfinite(a_out_sq) && a_out_sq >= 0.0,
          "photon_number: |a_out|^2 must be >= 0");
  require(std::isfinite(kappa_ext) && kappa_ext > 0.0,
          "photon_number: kappa_ext must be positive");
  return a_out_sq / kappa_ext;
}

double photon_number_from_input(double a0, double t_p_s, double kappa_ext,
                                double kappa_tot) {
  require(a0 >= 0.0 && t_p_s >= 0.0, "photon_number: a0, t_p must be >= 0");
  require(kappa_ext >= 0.0 && kappa_tot > 0.0,
          "photon_number: rates must be positive");
  const double u = std::exp(-0.5 * kappa_tot * t_p_s);
  const double g = (1.0 - u) * (1.0 - u);  // 1 - 2u + u^2
  return 4.0 * kappa_ext * a0 * a0 / (kappa_tot * kappa_tot) * g;
}

double photon_number_short_pulse(double a0, double t_p_s, double kappa_ext) {
  require(a0 >= 0.0 && t_p_s >= 0.0 && kappa_ext >= 0.0,
          "photon_number: arguments must be >= 0");
  return kappa_ext * a0 * a0 * t_p_s * t_p_s;
}

double photon_number_from_power(double p_in_W, double t_p_s, double q_ext) {
  require(std::isfinite(p_in_W) && p_in_W >= 0.0,
          "photon_number: input power must be >= 0");
  require(t_p_s >= 0.0, "photon_number: t_p must be >= 0");
  require(std::isfinite(q_ext) && q_ext > 0.0,
          "photon_number: Q_ext must be positive");
  return p_in_W * t_p_s * t_p_s / (kHbar * q_ext);
}

double spectral_weight_w0(double f_Hz, double t_s) {
  require(std::isfinite(f_Hz) && f_Hz >= 0.0, "w0: f must be >= 0");
  require(std::isfinite(t_s) && t_s >= 0.0, "w0: t must be >= 0");
  const double x = kPi * f_Hz * t_s;
  if (std::abs(x) < 1e-8) return t_s * t_s * (1.0 - x * x / 3.0);
  const double s = std::sin(x) / (kPi * f_Hz);
  return s * s;
}

double spectral_weight_w1(double omega, double t_m_s, double kappa_tot) {
  require(std::isfinite(omega), "w1: omega must be finite");
  require(std::isfinite(t_m_s) && t_m_s >= 0.0, "w1: t_m must be >= 0");
  require(std::isfinite(kappa_tot) && kappa_tot > 0.0,
          "w1: kappa_tot must be positive");
  const double u = 0.5 * omega * t_m_s;
  double sinc;
  if (std::abs(u) < 1e-8) {
    sinc = 1.0 - u * u / 6.0;
  } else {
    sinc = std::sin(u) / u;
  }
  const double half_k = 0.5 * kappa_tot;
  return (1.0 - sinc * sinc) / (half_k * half_k + omega * omega);
}

namespace {

double adaptive_simpson_rec(const std::function<double(double)>& f, double a,
                            double fa, double b, double fb, double m,
                            double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol,
                              depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol,
                              depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol) {
  if (b <= a) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

}  // namespace

FieldDecayPrediction predict_field_decay(const CavityModel& cavity,
                                         const std::vector<double>& t_s) {
  cavity.validate();
  require(!t_s.empty(), "predict_field_decay: empty time grid");
  for (double t : t_s)
    require(std::isfinite(t) && t >= 0.0,
            "predict_field_decay: times must be >= 0");

  const auto& jit = cavity.jitter;
  FieldDecayPrediction out;
  out.amplitude.resize(t_s.size());
  out.mean_square_phase.resize(t_s.size());

  for (std::size_t i = 0; i < t_s.size(); ++i) {
    const double t = t_s[i];
    double integral = 0.0;  // int S(f) w0(f, t) df
    switch (jit.kind) {
      case JitterKind::none:
        break;
      case JitterKind::discrete_lines:
        for (const auto& l : jit.lines)
          integral += l.weight * spectral_weight_w0(l.f_Hz, t);
        break;
      case JitterKind::lorentzian:
      case JitterKind::one_over_f: {
        const double lo =
            jit.kind == JitterKind::one_over_f ? jit.f_corner_Hz : 0.0;
        auto f = [&](double fr) { return jit.psd(fr) * spectral_weight_w0(fr, t); };
        const double scale = jit.mean_square() * t * t + 1e-300;
        integral = adaptive_simpson(f, lo, jit.f_max_Hz, 1e-10 * scale);
        break;
      }
    }
    const double theta_sq = cavity.omega0 * cavity.omega0 * integral;
    out.mean_square_phase[i] = theta_sq;
    out.amplitude[i] =
        std::exp(-0.5 * cavity.kappa_tot * t) * (1.0 - 0.5 * theta_sq);
    if (theta_sq > 0.5) out.expansion_valid = false;
  }
  return out;
}

}  // namespace cavloss
