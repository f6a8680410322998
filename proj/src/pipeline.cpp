#include "cavloss/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "cavloss/constants.hpp"
#include "cavloss/csv.hpp"
#include "cavloss/errors.hpp"

namespace cavloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_input_file(const std::string& path) {
  require(std::filesystem::exists(path), path + ": no such file");
}

std::string jstr(const ordered_json& j, const char* key,
                 const std::string& where) {
  const auto& v = json_key(j, key, where);
  require(v.is_string(),
          where + ": key '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

std::string jstr_or(const ordered_json& j, const char* key,
                    const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  return j[key].get<std::string>();
}

std::uint64_t jseed(const ordered_json& j, const std::string& where) {
  const auto& v = json_key(j, "seed", where);
  require(v.is_number_integer(), where + ": seed must be an integer");
  return v.get<std::uint64_t>();
}

Bounds bounds_from_json(const ordered_json& arr, const std::string& where) {
  require(arr.is_array() && arr.size() == 2,
          where + ": bounds must be [lower, upper]");
  Bounds b;
  b.lower = arr[0].get<double>();
  b.upper = arr[1].is_null() ? std::numeric_limits<double>::infinity()
                             : arr[1].get<double>();
  return b;
}

ConstraintLine line_from_json(const ordered_json& j, const std::string& where) {
  ConstraintLine l;
  l.label = jstr_or(j, "label", "");
  l.q_sub_inv = json_num(j, "q_sub_inv", where);
  l.sigma = json_num_or(j, "sigma", 0.0, where);
  l.ratio = json_num(j, "ratio", where);
  l.ratio_sigma = json_num_or(j, "ratio_sigma", 0.0, where);
  l.validate();
  return l;
}

}  // namespace

// ---------------------------------------------------------------------------
// ArtifactSink
// ---------------------------------------------------------------------------

void ArtifactSink::add(const std::string& relpath, std::string content) {
  for (const auto& [name, text] : files_) {
    (void)text;
    require(name != relpath, "duplicate artifact name: " + relpath);
  }
  files_.emplace_back(relpath, std::move(content));
}

void ArtifactSink::add_json(const std::string& relpath,
                            const ordered_json& doc) {
  add(relpath, doc.dump(2) + "\n");
}

void ArtifactSink::commit() {
  for (const auto& [name, text] : files_)
    atomic_write_text(dir_ + "/" + name, text);
}

std::vector<std::string> ArtifactSink::names() const {
  std::vector<std::string> out;
  for (const auto& [name, text] : files_) {
    (void)text;
    out.push_back(name);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Figure CSV builders
// ---------------------------------------------------------------------------

std::string fig3_points_csv(const std::vector<PowerPoint>& pts) {
  std::string out = "n_photons,q_inv,sigma\n";
  for (const auto& p : pts)
    out += join_csv_row({fmt_double(p.n_photons), fmt_double(p.q_inv),
                         fmt_double(p.sigma)});
  return out;
}

std::string fig3_model_csv(const TlsFit& fit, double n_min, double n_max,
                           int n_grid) {
  require(n_min > 0.0 && n_max > n_min, "fig3: bad photon-number range");
  require(n_grid >= 2, "fig3: need at least 2 grid points");
  std::string out = "n_photons,model,band\n";
  for (int i = 0; i < n_grid; ++i) {
    const double n = n_min * std::pow(n_max / n_min,
                                      static_cast<double>(i) / (n_grid - 1));
    const double m = tls_model(n, fit.q_hp_inv, fit.q_sat_inv, fit.n_c,
                               fit.alpha);
    double band = 0.0;
    if (fit.covariance.size() == 16) {
      const double u = std::pow(n / fit.n_c, fit.alpha);
      const double root = std::sqrt(1.0 + u);
      const double dm_du = -fit.q_sat_inv / (2.0 * root * root * root);
      const double g[4] = {1.0, 1.0 / root,
                           dm_du * (-fit.alpha * u / fit.n_c),
                           dm_du * u * std::log(n / fit.n_c)};
      double accum = 0.0;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          accum += g[r] * fit.covariance[static_cast<std::size_t>(4 * r + c)] *
                   g[c];
      band = std::sqrt(std::max(0.0, accum));
    }
    out += join_csv_row({fmt_double(n), fmt_double(m), fmt_double(band)});
  }
  return out;
}

std::string fig4a_csv(const LossSystem& system, const LossSolution& sol) {
  const Eigen::MatrixXd p = system.design();
  const Eigen::VectorXd pred = p * sol.q;
  const std::size_t s_count = system.samples.size();
  const std::size_t sub_base = (system.share_cond ? 1 : s_count) +
                               (system.share_MA ? 1 : s_count);
  std::string out =
      "sample_id,omega_rad_s,p_bulk,q_inv,sigma,predicted,background\n";
  long r = 0;
  for (std::size_t k = 0; k < s_count; ++k) {
    const auto& blk = system.samples[k];
    const long sub_col = static_cast<long>(sub_base + k);
    for (std::size_t i = 0; i < blk.table.rows.size(); ++i, ++r) {
      const auto& row = blk.table.rows[i];
      const double background = pred(r) - p(r, sub_col) * sol.q(sub_col);
      out += join_csv_row({blk.table.sample_id, fmt_double(row.omega),
                           fmt_double(row.p_bulk), fmt_double(blk.q_inv[i]),
                           fmt_double(blk.sigma[i]), fmt_double(pred(r)),
                           fmt_double(background)});
    }
  }
  return out;
}

std::string fig4b_csv(const std::vector<ConstraintLine>& lines,
                      const LossPair& point) {
  std::string out = "label,kind,q_bulk_inv,q_SA_inv\n";
  for (const auto& l : lines) {
    require(l.ratio > 0.0, "fig4b: lines need ratio > 0");
    out += join_csv_row(
        {l.label, "line", fmt_double(l.intercept_bulk()), fmt_double(0.0)});
    out += join_csv_row(
        {l.label, "line", fmt_double(0.0), fmt_double(l.intercept_sa())});
  }
  out += join_csv_row({"intersection", "point", fmt_double(point.q_bulk_inv),
                       fmt_double(point.q_sa_inv)});
  return out;
}

std::string fig5_csv(const std::vector<ordered_json>& bars) {
  std::string out =
      "label,participation,q_inv,f_Hz,quality_factor,t1_s\n";
  for (const auto& b : bars) {
    const std::string label = jstr(b, "label", "fig5 bar");
    const double p = json_num(b, "participation", "fig5 bar");
    const double q = json_num(b, "q_inv", "fig5 bar");
    const double f = json_num(b, "f_Hz", "fig5 bar");
    const CoherenceLimit lim = coherence_limit(p, q, f);
    out += join_csv_row(
        {label, fmt_double(p), fmt_double(q), fmt_double(f),
         lim.unbounded() ? "" : fmt_double(*lim.quality_factor),
         lim.unbounded() ? "" : fmt_double(*lim.t1_s)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

ordered_json cmd_simulate(const ordered_json& cfg, ArtifactSink& sink) {
  const std::string where = "simulate config";
  const std::uint64_t seed = jseed(cfg, where);
  const CavityModel cavity = cavity_from_json(json_key(cfg, "cavity", where));
  const Pulse pulse = pulse_from_json(json_key(cfg, "pulse", where));
  const double dt = json_num(cfg, "dt_s", where);
  const double duration = json_num(cfg, "duration_s", where);
  const double t_m = json_num_or(cfg, "t_m_s", dt, where);
  const auto n_shots = json_key(cfg, "n_shots", where).get<std::size_t>();
  require(n_shots >= 1, where + ": n_shots must be >= 1");
  const std::string prefix = jstr_or(cfg, "out_prefix", "ensemble");

  const ShotEnsemble e =
      simulate_ensemble(cavity, pulse, dt, duration, n_shots, seed, t_m);

  sink.add(prefix + ".csv", ensemble_csv(e));
  sink.add_json(prefix + ".json", ensemble_sidecar(e, cavity, pulse));

  ordered_json summary;
  summary["schema"] = 1;
  summary["command"] = "simulate";
  summary["seed"] = seed;
  summary["n_shots"] = e.shots.size();
  summary["n_samples"] = e.n_samples();
  summary["dt_s"] = e.dt_s;
  summary["rms_linewidths"] =
      cavity.jitter.rms_linewidths(cavity.omega0, cavity.kappa_tot);
  summary["artifacts"] = sink.names();
  return summary;
}

ordered_json cmd_fit_ringdown(const ordered_json& cfg, ArtifactSink& sink) {
  const std::string where = "fit-ringdown config";
  const std::string csv_path = jstr(cfg, "ensemble_csv", where);
  const std::string json_path = jstr(cfg, "ensemble_json", where);
  require_input_file(csv_path);
  require_input_file(json_path);
  const double t0 = json_num(cfg, "window_start_s", where);
  const double t1 = json_num(cfg, "window_end_s", where);
  const std::string mode_name = jstr_or(cfg, "mode", "power_average");
  DecayMode mode;
  if (mode_name == "power_average") {
    mode = DecayMode::power_average;
  } else if (mode_name == "field_average") {
    mode = DecayMode::field_average;
  } else {
    throw std::invalid_argument(where + ": unknown mode '" + mode_name + "'");
  }
  const double noise_floor = json_num_or(cfg, "noise_floor", 0.0, where);
  const std::string prefix = jstr_or(cfg, "out_prefix", "decay_fit");

  const ShotEnsemble e = read_ensemble(csv_path, json_path);
  const DecayFit fit = fit_decay(e, t0, t1, mode, noise_floor);

  ordered_json report = decay_fit_to_json(fit);
  report["schema"] = 1;
  sink.add_json(prefix + ".json", report);

  ordered_json summary = decay_fit_to_json(fit);
  summary["schema"] = 1;
  summary["command"] = "fit-ringdown";
  summary["artifacts"] = sink.names();
  return summary;
}

ordered_json cmd_fit_power(const ordered_json& cfg, ArtifactSink& sink) {
  const std::string where = "fit-power config";
  const std::string csv_path = jstr(cfg, "sweep_csv", where);
  require_input_file(csv_path);
  PowerSweep sweep;
  sweep.points = read_power_sweep_csv(csv_path);
  const std::string pos = jstr(cfg, "position", where);
  if (pos == "withdrawn") {
    sweep.position = SweepPosition::withdrawn;
  } else if (pos == "inserted") {
    sweep.position = SweepPosition::inserted;
  } else {
    throw std::invalid_argument(where + ": unknown position '" + pos + "'");
  }
  sweep.p_cond = json_num_or(cfg, "p_cond", 0.0, where);
  sweep.p_MA = json_num_or(cfg, "p_MA", 0.0, where);
  sweep.p_bulk = json_num_or(cfg, "p_bulk", 0.0, where);
  TlsFitOptions opt;
  opt.n_cutoff = json_num_or(cfg, "n_cutoff", opt.n_cutoff, where);
  const std::string prefix = jstr_or(cfg, "out_prefix", "tls_fit");

  const TlsFit fit = fit_tls(sweep, opt);

  ordered_json report = tls_fit_to_json(fit);
  report["schema"] = 1;
  if (sweep.position == SweepPosition::withdrawn && sweep.p_cond > 0.0 &&
      sweep.p_MA > 0.0) {
    report["cavity_bounds"] =
        cavity_bounds_to_json(cavity_bounds(sweep, &fit));
  }
  sink.add_json(prefix + ".json", report);
  sink.add("fig3_points.csv", fig3_points_csv(sweep.points));
  double n_min = sweep.points.front().n_photons;
  double n_max = sweep.points.back().n_photons;
  if (n_min <= 0.0) n_min = 1.0;
  sink.add("fig3_model.csv", fig3_model_csv(fit, n_min, n_max));

  ordered_json summary = report;
  summary["command"] = "fit-power";
  summary["artifacts"] = sink.names();
  return summary;
}

ordered_json cmd_invert(const ordered_json& cfg, ArtifactSink& sink) {
  const std::string where = "invert config";
  const std::string csv_path = jstr(cfg, "sweep_csv", where);
  require_input_file(csv_path);
  LossSystem system;
  for (auto& sweep : read_position_sweep_csv(csv_path)) {
    SampleBlock blk;
    blk.table = std::move(sweep.table);
    blk.q_inv = std::move(sweep.q_inv);
    blk.sigma = std::move(sweep.sigma);
    system.samples.push_back(std::move(blk));
  }
  system.omega_ref = json_num(cfg, "omega_ref_rad_s", where);
  if (cfg.contains("share_cond"))
    system.share_cond = cfg["share_cond"].get<bool>();
  if (cfg.contains("share_MA")) system.share_MA = cfg["share_MA"].get<bool>();
  if (cfg.contains("bounds")) {
    const auto& b = cfg["bounds"];
    if (b.contains("q_cond_inv"))
      system.cond_bounds = bounds_from_json(b["q_cond_inv"], where);
    if (b.contains("q_MA_inv"))
      system.ma_bounds = bounds_from_json(b["q_MA_inv"], where);
    if (b.contains("q_sub_inv")) {
      for (const auto& sb : b["q_sub_inv"])
        system.sub_bounds.push_back(bounds_from_json(sb, where));
    }
  }
  const std::string prefix = jstr_or(cfg, "out_prefix", "solution");

  const LossSolution sol = solve(system);

  ordered_json report = solution_to_json(sol);
  report["schema"] = 1;
  sink.add_json(prefix + ".json", report);
  sink.add("fig4a.csv", fig4a_csv(system, sol));

  ordered_json summary = report;
  summary["command"] = "invert";
  summary["artifacts"] = sink.names();
  return summary;
}

ordered_json cmd_sensitivity(const ordered_json& cfg, ArtifactSink& sink) {
  const std::string where = "sensitivity config";
  const std::string csv_path = jstr(cfg, "profile_csv", where);
  require_input_file(csv_path);
  auto tables = read_participation_csv(csv_path);
  SensitivityConfig sc;
  if (cfg.contains("sample_id")) {
    const std::string want = jstr(cfg, "sample_id", where);
    auto it = std::find_if(tables.begin(), tables.end(),
                           [&](const ParticipationTable& t) {
                             return t.sample_id == want;
                           });
    require(it != tables.end(),
            where + ": sample '" + want + "' not in " + csv_path);
    sc.profile = std::move(*it);
  } else {
    sc.profile = std::move(tables.front());
  }
  sc.p_SA_over_p_bulk = json_num(cfg, "p_SA_over_p_bulk", where);
  sc.q_cond_inv = json_num(cfg, "q_cond_inv", where);
  sc.q_MA_inv = json_num(cfg, "q_MA_inv", where);
  sc.omega_ref = json_num(cfg, "omega_ref_rad_s", where);
  sc.fractional_error =
      json_num_or(cfg, "fractional_error", sc.fractional_error, where);
  if (cfg.contains("grid")) {
    const auto& g = cfg["grid"];
    sc.grid.q_bulk_inv_min =
        json_num_or(g, "q_bulk_inv_min", sc.grid.q_bulk_inv_min, where);
    sc.grid.q_bulk_inv_max =
        json_num_or(g, "q_bulk_inv_max", sc.grid.q_bulk_inv_max, where);
    sc.grid.q_SA_inv_min =
        json_num_or(g, "q_SA_inv_min", sc.grid.q_SA_inv_min, where);
    sc.grid.q_SA_inv_max =
        json_num_or(g, "q_SA_inv_max", sc.grid.q_SA_inv_max, where);
    sc.grid.n_bulk = static_cast<int>(
        json_num_or(g, "n_bulk", sc.grid.n_bulk, where));
    sc.grid.n_SA =
        static_cast<int>(json_num_or(g, "n_SA", sc.grid.n_SA, where));
  }
  if (cfg.contains("contour_levels"))
    sc.contour_levels = cfg["contour_levels"].get<std::vector<double>>();
  const std::string prefix = jstr_or(cfg, "out_prefix", "sensitivity");

  const SensitivityMap map = sensitivity_map(sc);

  sink.add("fig2_map.csv", sensitivity_map_csv(map));
  sink.add("fig2_contours.csv", contours_csv(map));

  double ci_min = std::numeric_limits<double>::infinity();
  double ci_max = 0.0;
  for (long i = 0; i < map.ci.rows(); ++i)
    for (long j = 0; j < map.ci.cols(); ++j) {
      ci_min = std::min(ci_min, map.ci(i, j));
      ci_max = std::max(ci_max, map.ci(i, j));
    }
  ordered_json report;
  report["schema"] = 1;
  report["sample_id"] = sc.profile.sample_id;
  report["n_positions"] = sc.profile.rows.size();
  report["fractional_error"] = sc.fractional_error;
  report["ci_min"] = ci_min;
  report["ci_max"] = ci_max;
  report["n_contour_polylines"] = map.contours.size();
  sink.add_json(prefix + ".json", report);

  ordered_json summary = report;
  summary["command"] = "sensitivity";
  summary["artifacts"] = sink.names();
  return summary;
}

ordered_json cmd_separate(const ordered_json& cfg, ArtifactSink& sink) {
  const std::string where = "separate config";
  const auto& jlines = json_key(cfg, "lines", where);
  require(jlines.is_array() && !jlines.empty(),
          where + ": lines must be a non-empty array");
  std::vector<ConstraintLine> lines;
  for (const auto& lj : jlines) lines.push_back(line_from_json(lj, where));
  const std::string prefix = jstr_or(cfg, "out_prefix", "separation");

  ordered_json report;
  report["schema"] = 1;
  ordered_json jb = ordered_json::array();
  for (const auto& l : lines) {
    ordered_json entry;
    entry["label"] = l.label;
    entry["q_sub_inv"] = l.q_sub_inv;
    entry["sigma"] = l.sigma;
    entry["ratio"] = l.ratio;
    entry["bounds"] = substrate_bounds_to_json(single_sample_bounds(l));
    jb.push_back(std::move(entry));
  }
  report["lines"] = std::move(jb);

  bool have_point = false;
  LossPair point;
  if (lines.size() >= 2) {
    point = intersect(lines[0], lines[1]);
    have_point = true;
    report["intersection"] = loss_pair_to_json(point);
    if (cfg.contains("mc_check")) {
      const auto& mc = cfg["mc_check"];
      const std::uint64_t seed = jseed(mc, where + " mc_check");
      const int draws = static_cast<int>(
          json_num_or(mc, "n_draws", 20000, where));
      report["mc_check"] =
          loss_pair_to_json(intersect_sampled(lines[0], lines[1], draws,
                                              seed));
    }
  }

  if (cfg.contains("magnetic")) {
    const auto& m = cfg["magnetic"];
    ProbeConstraint probe;
    const auto& pj = json_key(m, "probe", where);
    probe.q_bulk_inv = json_num(pj, "q_bulk_inv", where);
    const auto& ratio = json_key(pj, "ratio", where);
    probe.ratio = ratio.is_string()
                      ? std::numeric_limits<double>::infinity()
                      : ratio.get<double>();
    StriplineConstraint strip;
    const auto& sj = json_key(m, "stripline", where);
    strip.q_total_inv = json_num(sj, "q_total_inv", where);
    strip.p_e = json_num(sj, "p_e", where);
    strip.p_h = json_num(sj, "p_h", where);
    report["magnetic"] = magnetic_bounds_to_json(magnetic_bounds(probe, strip));
  }

  std::vector<ordered_json> bars;
  if (cfg.contains("coherence")) {
    ordered_json jc = ordered_json::array();
    for (const auto& cj : cfg["coherence"]) {
      const CoherenceLimit lim = coherence_limit(
          json_num(cj, "participation", where), json_num(cj, "q_inv", where),
          json_num(cj, "f_Hz", where));
      ordered_json entry = coherence_to_json(lim);
      entry["label"] = jstr_or(cj, "label", "");
      jc.push_back(std::move(entry));
      bars.push_back(cj);
    }
    report["coherence"] = std::move(jc);
  }

  sink.add_json(prefix + ".json", report);
  if (have_point) sink.add("fig4b.csv", fig4b_csv(lines, point));
  if (!bars.empty()) sink.add("fig5_coherence.csv", fig5_csv(bars));

  ordered_json summary = report;
  summary["command"] = "separate";
  summary["artifacts"] = sink.names();
  return summary;
}

// ---------------------------------------------------------------------------
// Pipeline: forward-generated two-sample fixture, full chain
// ---------------------------------------------------------------------------

namespace {

struct FixtureSample {
  std::string id;
  double ratio;        // p_SA / p_bulk
  double p_bulk_min;
  double p_bulk_max;
};

// ground truth the fixture generates from; the chain has to recover
// q_bulk_inv without being told
struct FixtureTruth {
  double omega_ref = kTwoPi * 4.55e9;
  double q_cond_inv = 2e-5;
  double q_MA_inv = 33e-3;
  double q_bulk_inv = 63e-9;
  double q_SA_inv = 1.5e-3;
  double q_ext = 2e8;  // external quality factor, same for every position
};

ParticipationRow fixture_row(const FixtureSample& s, const FixtureTruth& tr,
                             int i, int n_positions) {
  ParticipationRow row;
  const double frac = n_positions > 1
                          ? static_cast<double>(i) / (n_positions - 1)
                          : 0.0;
  row.p_bulk = s.p_bulk_min * std::pow(s.p_bulk_max / s.p_bulk_min, frac);
  row.omega = tr.omega_ref * (1.0 - 0.5 * row.p_bulk);
  row.p_cond = 43.92e-6;
  row.p_MA = 249e-9 - 300e-9 * row.p_bulk + 15800e-9 * row.p_bulk * row.p_bulk;
  row.p_SA = s.ratio * row.p_bulk;
  return row;
}

}  // namespace

ordered_json cmd_pipeline(const ordered_json& cfg, ArtifactSink& sink) {
  const std::string where = "pipeline config";
  const std::uint64_t seed = jseed(cfg, where);
  const int n_positions =
      static_cast<int>(json_num_or(cfg, "n_positions", 8, where));
  const auto n_shots =
      static_cast<std::size_t>(json_num_or(cfg, "n_shots", 24, where));
  require(n_positions >= 3, where + ": n_positions must be >= 3");
  require(n_shots >= 4, where + ": n_shots must be >= 4");
  const std::string fixture = jstr_or(cfg, "fixture", "efg-pair");
  require(fixture == "efg-pair",
          where + ": unknown fixture '" + fixture + "'");

  const FixtureTruth tr;
  const std::vector<FixtureSample> samples = {
      {"efg-thin", 7.13e-5, 3.6e-5, 1.7e-2},
      {"efg-thick", 1.67e-5, 1.2e-4, 5.66e-2},
  };

  const double dt = 2e-5;
  const double t_p = 5e-6;
  const double a0 = 5.29e6;  // ~1e5 photons at the pulse end

  ordered_json fits_report = ordered_json::array();
  std::string sweep_csv =
      "sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA,Q_inv,sigma\n";

  LossSystem system;
  system.omega_ref = tr.omega_ref;
  std::uint64_t stream = 0;  // distinct master seed per ensemble

  for (const auto& s : samples) {
    SampleBlock blk;
    std::vector<ParticipationRow> rows;
    for (int i = 0; i < n_positions; ++i) {
      const ParticipationRow row = fixture_row(s, tr, i, n_positions);
      const double q_sub =
          composite_substrate_loss(row.p_bulk, row.p_SA, tr.q_bulk_inv,
                                   tr.q_SA_inv);
      MaterialLosses q;
      q.q_cond_inv = tr.q_cond_inv;
      q.omega_ref = tr.omega_ref;
      q.q_MA_inv = tr.q_MA_inv;
      q.q_bulk_inv = q_sub;  // composite folded onto the bulk column
      const double q_int_inv = predict_loss(row, q);

      CavityModel cavity;
      cavity.omega0 = row.omega;
      cavity.kappa_ext = row.omega / tr.q_ext;
      cavity.kappa_tot = row.omega * (q_int_inv + 1.0 / tr.q_ext);
      JitterSpectrum jit =
          JitterSpectrum::make_lorentzian(1e-12, 300.0, 2000.0);
      jit.synth_lines = 64;
      cavity.jitter = jit.scaled_to_rms_linewidths(10.0, cavity.omega0,
                                                   cavity.kappa_tot);

      Pulse pulse;
      pulse.a0 = a0;
      pulse.t_p_s = t_p;

      const double t0 = t_p + 2.0 * dt;
      const double t1 = t0 + 2.5 / cavity.kappa_tot;
      const double duration = t1 + 2.0 * dt;

      const ShotEnsemble e = simulate_ensemble(
          cavity, pulse, dt, duration, n_shots,
          derive_shot_seed(seed, stream++), dt);
      const DecayFit fit =
          fit_decay(e, t0, t1, DecayMode::power_average, 0.0);

      // output power right after the pulse, extrapolated from the window
      const double p_ring =
          fit.contrast * std::exp(fit.rate * (fit.window_start_s - t_p));
      const double kappa_ext_fit = extract_kappa_ext(
          a0 * a0, p_ring, fit.rate, t_p, KappaExtMethod::exact);
      const double q_int_meas = (fit.rate - kappa_ext_fit) / row.omega;
      const double sigma =
          std::max(fit.rate_stderr / row.omega, 0.01 * q_int_meas);

      rows.push_back(row);
      blk.q_inv.push_back(q_int_meas);
      blk.sigma.push_back(sigma);

      sweep_csv += join_csv_row(
          {s.id, "", fmt_double(row.omega), fmt_double(row.p_cond),
           fmt_double(row.p_MA), fmt_double(row.p_bulk),
           fmt_double(row.p_SA), fmt_double(q_int_meas), fmt_double(sigma)});

      ordered_json fj = decay_fit_to_json(fit);
      fj["sample_id"] = s.id;
      fj["p_bulk"] = row.p_bulk;
      fj["kappa_ext_rad_s"] = kappa_ext_fit;
      fj["q_int_inv"] = q_int_meas;
      fj["sigma"] = sigma;
      fits_report.push_back(std::move(fj));
    }
    blk.table = ParticipationTable::make(s.id, std::move(rows));
    system.samples.push_back(std::move(blk));
  }

  const LossSolution sol = solve(system);

  // constraint lines from the recovered substrate losses
  std::vector<ConstraintLine> lines;
  const auto labels = sol.labels;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const std::string want = "q_sub_inv:" + samples[k].id;
    const auto it = std::find(labels.begin(), labels.end(), want);
    require(it != labels.end(), "pipeline: missing solution column " + want);
    const long idx = it - labels.begin();
    ConstraintLine l;
    l.label = samples[k].id;
    l.q_sub_inv = sol.q(idx);
    l.sigma = std::sqrt(std::max(0.0, sol.covariance(idx, idx)));
    l.ratio = samples[k].ratio;
    lines.push_back(std::move(l));
  }
  const LossPair point = intersect(lines[0], lines[1]);

  const CoherenceLimit limit = coherence_limit(0.8, point.q_bulk_inv, 4e9);

  // artifacts
  ordered_json fits_doc;
  fits_doc["schema"] = 1;
  fits_doc["fits"] = std::move(fits_report);
  sink.add_json("pipeline_fits.json", fits_doc);
  sink.add("pipeline_sweep.csv", sweep_csv);
  ordered_json sol_doc = solution_to_json(sol);
  sol_doc["schema"] = 1;
  sink.add_json("solution.json", sol_doc);
  sink.add("fig4a.csv", fig4a_csv(system, sol));
  sink.add("fig4b.csv", fig4b_csv(lines, point));

  ordered_json sep;
  sep["schema"] = 1;
  ordered_json jlines = ordered_json::array();
  for (const auto& l : lines) {
    ordered_json e;
    e["label"] = l.label;
    e["q_sub_inv"] = l.q_sub_inv;
    e["sigma"] = l.sigma;
    e["ratio"] = l.ratio;
    e["bounds"] = substrate_bounds_to_json(single_sample_bounds(l));
    jlines.push_back(std::move(e));
  }
  sep["lines"] = std::move(jlines);
  sep["intersection"] = loss_pair_to_json(point);
  sep["coherence"] = coherence_to_json(limit);
  sink.add_json("separation.json", sep);

  std::vector<ordered_json> bars;
  ordered_json bar;
  bar["label"] = "bulk";
  bar["participation"] = 0.8;
  bar["q_inv"] = point.q_bulk_inv;
  bar["f_Hz"] = 4e9;
  bars.push_back(bar);
  sink.add("fig5_coherence.csv", fig5_csv(bars));

  ordered_json summary;
  summary["schema"] = 1;
  summary["command"] = "pipeline";
  summary["fixture"] = fixture;
  summary["seed"] = seed;
  summary["n_positions"] = n_positions;
  summary["n_shots"] = n_shots;
  summary["q_bulk_inv"] = point.q_bulk_inv;
  summary["q_bulk_inv_sigma"] = point.q_bulk_inv_sigma;
  summary["q_sa_inv"] = point.q_sa_inv;
  summary["q_sa_inv_sigma"] = point.q_sa_inv_sigma;
  summary["coherence"] = coherence_to_json(limit);
  summary["truth"] = {{"q_bulk_inv", tr.q_bulk_inv},
                      {"q_SA_inv", tr.q_SA_inv},
                      {"q_cond_inv", tr.q_cond_inv},
                      {"q_MA_inv", tr.q_MA_inv}};
  summary["artifacts"] = sink.names();
  sink.add_json("pipeline_summary.json", summary);
  return summary;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

int run(const RunConfig& config) {
  try {
    ordered_json cfg = ordered_json::object();
    if (!config.config_path.empty()) {
      require_input_file(config.config_path);
      cfg = read_json_file(config.config_path);
      require(cfg.is_object(), config.config_path + ": not a JSON object");
    }
    for (const auto& ov : config.overrides) apply_override(cfg, ov);

    std::string out_dir = config.out_dir;
    if (out_dir.empty()) {
      const char* env = std::getenv("CAVLOSS_OUT");
      out_dir = env && *env ? env : ".";
    }
    ArtifactSink sink(out_dir);

    ordered_json summary;
    if (config.command == "simulate") {
      summary = cmd_simulate(cfg, sink);
    } else if (config.command == "fit-ringdown") {
      summary = cmd_fit_ringdown(cfg, sink);
    } else if (config.command == "fit-power") {
      summary = cmd_fit_power(cfg, sink);
    } else if (config.command == "invert") {
      summary = cmd_invert(cfg, sink);
    } else if (config.command == "sensitivity") {
      summary = cmd_sensitivity(cfg, sink);
    } else if (config.command == "separate") {
      summary = cmd_separate(cfg, sink);
    } else if (config.command == "pipeline") {
      summary = cmd_pipeline(cfg, sink);
    } else {
      throw std::invalid_argument("unknown command '" + config.command + "'");
    }
    sink.commit();
    summary["out_dir"] = sink.dir();
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cavloss
