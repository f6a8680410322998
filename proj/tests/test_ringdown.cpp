#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "cavloss/errors.hpp"
#include "cavloss/ringdown.hpp"

using namespace cavloss;

namespace {

CavityModel quiet_cavity(double kappa_tot, double kappa_ext,
                         double omega0 = 2.8588e10) {
  CavityModel c;
  c.omega0 = omega0;
  c.kappa_tot = kappa_tot;
  c.kappa_ext = kappa_ext;
  return c;
}

Pulse square_pulse(double a0, double t_p, double detuning = 0.0) {
  Pulse p;
  p.a0 = a0;
  p.t_p_s = t_p;
  p.detuning = detuning;
  return p;
}

// closed-form intracavity amplitude during a resonant square pulse
double driven_amplitude(double a0, double kappa_tot, double kappa_ext,
                        double t) {
  return 2.0 * a0 * std::sqrt(kappa_ext) / kappa_tot *
         (1.0 - std::exp(-kappa_tot * t / 2.0));
}

}  // namespace

TEST_CASE("critically coupled steady state reflects the full drive") {
  const double kappa = 1000.0, a0 = 3.0;
  const auto cavity = quiet_cavity(kappa, kappa);
  // kappa t_p / 2 = 40: transients are below double precision
  const auto out = simulate_shot(cavity, square_pulse(a0, 0.08), 5e-5, 0.1, 1);
  const std::size_t i = static_cast<std::size_t>(std::lround(0.079 / 5e-5));
  CHECK(out[i].real() == doctest::Approx(-a0).epsilon(1e-12));
  CHECK(std::abs(out[i].imag()) < 1e-12);
  CHECK(std::norm(out[i]) == doctest::Approx(a0 * a0).epsilon(1e-12));
}

TEST_CASE("driven rise and free decay match the closed forms exactly") {
  const double kappa = 1000.0, kext = 250.0, a0 = 3.0, t_p = 2e-3, dt = 1e-5;
  const auto cavity = quiet_cavity(kappa, kext);
  const auto out = simulate_shot(cavity, square_pulse(a0, t_p), dt, 6e-3, 9);

  // during the pulse: a_out = a0 - sqrt(kext) a(t)
  const std::size_t i_mid = 100;  // t = 1e-3
  const double a_mid = driven_amplitude(a0, kappa, kext, 1e-3);
  CHECK(out[i_mid].real() ==
        doctest::Approx(a0 - std::sqrt(kext) * a_mid).epsilon(1e-12));

  // after the pulse: |a_out|^2 = kext |a(t_p)|^2 exp(-kappa (t - t_p)),
  // P_ring value pinned from an independent evaluation
  const double a_tp = driven_amplitude(a0, kappa, kext, t_p);
  const double p_ring = kext * a_tp * a_tp;
  CHECK(p_ring == doctest::Approx(0.899046902010888).epsilon(1e-12));
  for (std::size_t m : {210, 250, 400}) {
    const double t = static_cast<double>(m) * dt;
    CHECK(std::norm(out[m]) ==
          doctest::Approx(p_ring * std::exp(-kappa * (t - t_p)))
              .epsilon(1e-11));
  }
}

TEST_CASE("detuned steady state follows the Lorentzian response") {
  const double kappa = 1000.0, kext = 400.0, a0 = 2.0, delta = 300.0;
  const auto cavity = quiet_cavity(kappa, kext);
  const auto out =
      simulate_shot(cavity, square_pulse(a0, 0.08, delta), 2e-5, 0.09, 4);
  const std::size_t i = static_cast<std::size_t>(std::lround(0.079 / 2e-5));
  // a_ss = sqrt(kext) a0 / (kappa/2 - i delta)
  const std::complex<double> a_ss =
      std::sqrt(kext) * a0 /
      std::complex<double>(kappa / 2.0, -delta);
  const std::complex<double> expected = a0 - std::sqrt(kext) * a_ss;
  CHECK(out[i].real() == doctest::Approx(expected.real()).epsilon(1e-10));
  CHECK(out[i].imag() == doctest::Approx(expected.imag()).epsilon(1e-10));
}

TEST_CASE("critically coupled pulse returns its entire energy") {
  const double kappa = 1000.0, a0 = 2.0, t_p = 0.01, dt = 1e-5;
  const auto cavity = quiet_cavity(kappa, kappa);
  const auto out = simulate_shot(cavity, square_pulse(a0, t_p), dt, 0.05, 2);
  double energy = 0.0;  // trapezoid over the full record
  for (std::size_t i = 1; i < out.size(); ++i)
    energy += 0.5 * (std::norm(out[i - 1]) + std::norm(out[i])) * dt;
  CHECK(energy == doctest::Approx(a0 * a0 * t_p).epsilon(1e-2));
}

TEST_CASE("step-size preconditions are enforced before integrating") {
  auto cavity = quiet_cavity(1000.0, 250.0);
  const auto pulse = square_pulse(1.0, 1e-3);
  // kappa_tot dt > 0.1 * 2 pi
  CHECK_THROWS_AS(simulate_shot(cavity, pulse, 7e-4, 0.01, 1),
                  std::domain_error);
  // |detuning| dt > 0.1 * 2 pi
  CHECK_THROWS_AS(
      simulate_shot(cavity, square_pulse(1.0, 1e-3, 7e4), 1e-5, 0.01, 1),
      std::domain_error);
  // jitter support too fast for the step
  cavity.jitter = JitterSpectrum::make_lorentzian(1e-14, 300.0, 2e4);
  CHECK_THROWS_AS(simulate_shot(cavity, pulse, 1e-5, 0.01, 1),
                  std::domain_error);
  CHECK_THROWS_AS(simulate_shot(quiet_cavity(1e3, 10.0), pulse, -1e-5, 0.01, 1),
                  std::invalid_argument);
}

TEST_CASE("jitter spectra integrate to their closed-form mean squares") {
  const auto lor = JitterSpectrum::make_lorentzian(2e-12, 300.0, 3000.0);
  CHECK(lor.mean_square() ==
        doctest::Approx(8.826766045822408e-10).epsilon(1e-12));
  CHECK(lor.max_frequency() == doctest::Approx(3000.0));
  CHECK(lor.psd(0.0) == doctest::Approx(2e-12));
  CHECK(lor.psd(300.0) == doctest::Approx(1e-12));
  CHECK(lor.psd(3001.0) == 0.0);

  const auto pink = JitterSpectrum::make_one_over_f(1e-13, 1.0, 1e4);
  CHECK(pink.mean_square() ==
        doctest::Approx(9.210340371976183e-13).epsilon(1e-12));

  const auto disc = JitterSpectrum::discrete({{100.0, 3e-12}, {500.0, 1e-12}});
  CHECK(disc.mean_square() == doctest::Approx(4e-12).epsilon(1e-14));
  CHECK(disc.max_frequency() == doctest::Approx(500.0));

  CHECK(JitterSpectrum::none_spectrum().mean_square() == 0.0);
}

TEST_CASE("rms-linewidth rescaling hits its target") {
  const double omega0 = 2.8588e10, kappa = 628.3;
  const auto lor = JitterSpectrum::make_lorentzian(2e-12, 300.0, 3000.0);
  // rms_linewidths = omega0 sqrt(<eps^2>) / kappa
  CHECK(lor.rms_linewidths(omega0, kappa) ==
        doctest::Approx(omega0 * std::sqrt(8.826766045822408e-10) / kappa)
            .epsilon(1e-12));
  const auto scaled = lor.scaled_to_rms_linewidths(100.0, omega0, kappa);
  CHECK(scaled.rms_linewidths(omega0, kappa) ==
        doctest::Approx(100.0).epsilon(1e-12));
  // shape is preserved: only the amplitude moves, quadratically in the rms
  CHECK(scaled.f_corner_Hz == lor.f_corner_Hz);
  const double r = 100.0 / lor.rms_linewidths(omega0, kappa);
  CHECK(scaled.amplitude ==
        doctest::Approx(lor.amplitude * r * r).epsilon(1e-12));
}

TEST_CASE("synthesized lines carry exactly the spectrum's power") {
  const auto lor = JitterSpectrum::make_lorentzian(5e-13, 300.0, 2500.0);
  const auto synth = make_jitter_synth(lor, 77);
  REQUIRE(synth.amp.size() == static_cast<std::size_t>(lor.synth_lines));
  double power = 0.0;  // sum of amp_k^2 / 2 over random phases
  for (double a : synth.amp) power += 0.5 * a * a;
  CHECK(power == doctest::Approx(lor.mean_square()).epsilon(1e-12));

  // same seed, same realization; different seed, different phases
  const auto again = make_jitter_synth(lor, 77);
  const auto other = make_jitter_synth(lor, 78);
  CHECK(synth.eval(1.234e-3) == again.eval(1.234e-3));
  CHECK(synth.eval(1.234e-3) != other.eval(1.234e-3));
}

TEST_CASE("shot seeds are deterministic and distinct") {
  CHECK(derive_shot_seed(42, 0) == derive_shot_seed(42, 0));
  CHECK(derive_shot_seed(42, 0) != derive_shot_seed(42, 1));
  CHECK(derive_shot_seed(42, 0) != derive_shot_seed(43, 0));
}

TEST_CASE("ensemble shots equal order-independent per-shot streams") {
  auto cavity = quiet_cavity(628.3, 628.3);
  cavity.jitter = JitterSpectrum::make_lorentzian(1e-13, 300.0, 3000.0);
  const auto pulse = square_pulse(1.0, 5e-4);
  const double dt = 5e-6, duration = 2e-3;
  const auto e = simulate_ensemble(cavity, pulse, dt, duration, 4, 42, dt);
  REQUIRE(e.shots.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto solo = simulate_shot(cavity, pulse, dt, duration,
                                    derive_shot_seed(42, k));
    CHECK(e.shots[k] == solo);
  }
  // bitwise reproducible end to end
  const auto e2 = simulate_ensemble(cavity, pulse, dt, duration, 4, 42, dt);
  CHECK(e.shots == e2.shots);
}

TEST_CASE("jitter dephases the mean field but not the mean power") {
  const double kappa = 628.3, omega0 = 2.8588e10;
  auto cavity = quiet_cavity(kappa, kappa, omega0);
  cavity.jitter = JitterSpectrum::make_lorentzian(1e-12, 300.0, 3000.0)
                      .scaled_to_rms_linewidths(30.0, omega0, kappa);
  const double t_p = 5e-4, dt = 5e-6;
  const double t0 = t_p + 2.0 * dt;
  const auto e = simulate_ensemble(cavity, square_pulse(1.0, t_p), dt, 5.2e-3,
                                   64, 7, dt);

  const auto power =
      fit_decay(e, t0, t_p + 2.5 / kappa, DecayMode::power_average);
  CHECK(power.rate == doctest::Approx(kappa).epsilon(0.01));

  const auto field = fit_decay(e, t0, t_p + 8e-5, DecayMode::field_average);
  CHECK(field.rate > 3.0 * kappa);
}

TEST_CASE("boxcar filter is the identity at the sample spacing") {
  const std::vector<double> s = {1.0, 2.0, 4.0, 8.0, 16.0};
  CHECK(apply_detector_bandwidth(s, 1e-5, 1e-5) == s);
  CHECK(apply_detector_bandwidth(s, 1e-5, 0.0) == s);
}

TEST_CASE("boxcar bias on an exponential matches the discrete sinh ratio") {
  const double kappa = 1000.0, dt = 5e-5;  // kappa dt = 0.05
  std::vector<double> s(400);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = std::exp(-kappa * static_cast<double>(i) * dt);
  const auto f = apply_detector_bandwidth(s, dt, 5.0 * dt);  // 5 taps
  // interior: sinh(5 k dt / 2) / (5 sinh(k dt / 2)), pinned independently
  for (std::size_t i : {10, 50, 200})
    CHECK(f[i] / s[i] == doctest::Approx(1.002501771397669).epsilon(1e-12));
  // shrunk symmetric window at the first sample: identity
  CHECK(f[0] == doctest::Approx(s[0]));
}

TEST_CASE("finite measurement bandwidth biases contrast, not rate") {
  const double kappa = 1000.0, kext = 1000.0, a0 = 2.0, t_p = 1e-3;
  const auto cavity = quiet_cavity(kappa, kext);
  for (double ktm : {0.5, 2.0}) {
    const double t_m = ktm / kappa;
    const double dt = t_m / 25.0;  // odd tap count, t_m exactly 25 dt
    const double t0 = t_p + t_m;
    const double t1 = t_p + 4e-3;
    const auto e = simulate_ensemble(cavity, square_pulse(a0, t_p), dt,
                                     t1 + 2.0 * t_m, 1, 1, t_m);
    const auto fit = fit_decay(e, t0, t1, DecayMode::power_average);
    CHECK(fit.rate == doctest::Approx(kappa).epsilon(1e-6));

    const double a_tp = driven_amplitude(a0, kappa, kext, t_p);
    const double p_true = kext * a_tp * a_tp *
                          std::exp(-kappa * (fit.window_start_s - t_p));
    const double kdt = kappa * dt;
    const double discrete =
        std::sinh(25.0 * kdt / 2.0) / (25.0 * std::sinh(kdt / 2.0));
    CHECK(fit.contrast / p_true == doctest::Approx(discrete).epsilon(1e-6));
    // and the discrete ratio is the continuous formula up to O((k dt)^2)
    CHECK(discrete ==
          doctest::Approx(std::sinh(ktm / 2.0) / (ktm / 2.0)).epsilon(2e-3));
  }
}

TEST_CASE("decay fit rejects unusable windows") {
  const auto cavity = quiet_cavity(1000.0, 250.0);
  const auto e = simulate_ensemble(cavity, square_pulse(1.0, 1e-3), 1e-5,
                                   6e-3, 2, 5, 1e-5);
  CHECK_THROWS_AS(fit_decay(e, 2e-3, 1e-3, DecayMode::power_average),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_decay(e, 5.985e-3, 100.0, DecayMode::power_average),
                  numeric_error);  // fewer than 3 samples inside
  // a noise floor above the signal empties the window
  CHECK_THROWS_AS(fit_decay(e, 2e-3, 5e-3, DecayMode::power_average, 1e6),
                  numeric_error);
}

TEST_CASE("coupling extraction inverts the ring-power relation") {
  const double kappa = 1000.0, t_p = 2e-3, a0 = 3.0;
  for (double kext : {1.0, 10.0, 100.0, 250.0, 500.0}) {
    const double a_tp = driven_amplitude(a0, kappa, kext, t_p);
    const double p_ring = kext * a_tp * a_tp;
    CHECK(extract_kappa_ext(a0 * a0, p_ring, kappa, t_p,
                            KappaExtMethod::exact) ==
          doctest::Approx(kext).epsilon(1e-12));
  }
  // short-pulse limit: the two estimators agree at kappa t_p = 1e-3
  const double t_short = 1e-6;
  const double a_s = driven_amplitude(a0, kappa, 250.0, t_short);
  const double p_s = 250.0 * a_s * a_s;
  const double exact =
      extract_kappa_ext(a0 * a0, p_s, kappa, t_short, KappaExtMethod::exact);
  const double shortp = extract_kappa_ext(a0 * a0, p_s, kappa, t_short,
                                          KappaExtMethod::short_pulse);
  CHECK(shortp == doctest::Approx(exact).epsilon(1e-3));
  CHECK_THROWS_AS(
      extract_kappa_ext(0.0, 1.0, kappa, t_p, KappaExtMethod::exact),
      std::invalid_argument);
}

TEST_CASE("photon-number estimators agree with the closed forms") {
  const double kappa = 1000.0, kext = 250.0, a0 = 3.0, t_p = 2e-3;
  // n(t_p) = |a(t_p)|^2, reachable from the output power or the input
  CHECK(photon_number_from_output(0.899046902010888, kext) ==
        doctest::Approx(0.003596187608043552).epsilon(1e-12));
  CHECK(photon_number_from_input(a0, t_p, kext, kappa) ==
        doctest::Approx(0.003596187608043552).epsilon(1e-12));
  CHECK(photon_number_short_pulse(a0, 2e-3, kext) ==
        doctest::Approx(0.009).epsilon(1e-12));
  // the short-pulse form is the t_p -> 0 limit of the full expression
  CHECK(photon_number_from_input(a0, 1e-7, kext, kappa) ==
        doctest::Approx(photon_number_short_pulse(a0, 1e-7, kext))
            .epsilon(1e-4));
  // n = P t_p^2 / (hbar Q_ext)
  CHECK(photon_number_from_power(1e-15, 1e-6, 1e6) ==
        doctest::Approx(1e-27 / (1.054571817e-34 * 1e6)).epsilon(1e-12));
}

TEST_CASE("dephasing spectral weights") {
  CHECK(spectral_weight_w0(120.0, 3.3e-3) ==
        doctest::Approx(6.311431619235698e-06).epsilon(1e-12));
  // f -> 0 limit is t^2
  CHECK(spectral_weight_w0(1e-9, 3.3e-3) ==
        doctest::Approx(3.3e-3 * 3.3e-3).epsilon(1e-9));
  CHECK(spectral_weight_w1(2.0 * 3.14159265358979323846 * 700.0, 2e-4,
                           900.0) ==
        doctest::Approx(3.214882105049196e-09).epsilon(1e-10));
  // omega -> 0 limit of w1 vanishes (the boxcar passes slow noise)
  CHECK(spectral_weight_w1(1e-8, 2e-4, 900.0) < 1e-15);
}

TEST_CASE("field-decay prediction matches a phase-randomized ensemble") {
  const double kappa = 628.3, omega0 = 2.8588e10, f_line = 50.0;
  // one slow line; weight chosen so <theta^2> reaches ~0.3 at 1 ms
  const double w0_at_1ms = spectral_weight_w0(f_line, 1e-3);
  const double weight = 0.3 / (omega0 * omega0 * w0_at_1ms);
  CavityModel cavity = quiet_cavity(kappa, kappa, omega0);
  cavity.jitter = JitterSpectrum::discrete({{f_line, weight}});

  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(2e-5 * i);
  const auto pred = predict_field_decay(cavity, grid);
  REQUIRE(pred.amplitude.size() == grid.size());
  CHECK(pred.expansion_valid);
  CHECK(pred.amplitude[0] == doctest::Approx(1.0));
  CHECK(pred.mean_square_phase.back() == doctest::Approx(0.3).epsilon(1e-10));

  // free decay from a prepared amplitude, averaged over random phases
  const Pulse none = square_pulse(0.0, 0.0);
  const std::size_t n_shots = 800;
  std::vector<std::complex<double>> mean(grid.size(), 0.0);
  for (std::size_t k = 0; k < n_shots; ++k) {
    const auto out = simulate_shot(cavity, none, 2e-5, 1.02e-3,
                                   derive_shot_seed(99, k), 1.0);
    for (std::size_t i = 0; i < grid.size(); ++i) mean[i] += out[i];
  }
  for (std::size_t i = 10; i < grid.size(); i += 10) {
    const double mc = std::abs(mean[i]) / std::abs(mean[0]);
    CHECK(mc == doctest::Approx(pred.amplitude[i]).epsilon(0.05));
  }

  // past the expansion's reach the flag drops
  cavity.jitter = JitterSpectrum::discrete({{f_line, 10.0 * weight}});
  CHECK_FALSE(predict_field_decay(cavity, grid).expansion_valid);
}
