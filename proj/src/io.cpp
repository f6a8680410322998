#include "cavloss/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cavloss/csv.hpp"

namespace cavloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

int need_column(const CsvTable& t, const std::string& name,
                const std::string& origin) {
  const int c = t.column(name);
  require(c >= 0, origin + ": missing required column '" + name + "'");
  return c;
}

std::string row_tag(const std::string& origin, std::size_t row) {
  // +2: one for the header line, one for 1-based numbering
  return origin + ": row " + std::to_string(row + 2);
}

bool rows_equal(const ParticipationRow& a, const ParticipationRow& b) {
  return a.omega == b.omega && a.p_cond == b.p_cond && a.p_MA == b.p_MA &&
         a.p_bulk == b.p_bulk && a.p_SA == b.p_SA &&
         a.p_bulk_H == b.p_bulk_H && a.z.has_value() == b.z.has_value() &&
         (!a.z.has_value() || *a.z == *b.z);
}

struct SweepRecord {
  std::string sample_id;
  ParticipationRow row;
  double q_inv = 0.0;
  double sigma = 0.0;
};

ParticipationRow parse_participation_row(const CsvTable& t, std::size_t r,
                                         const std::string& origin, int c_z,
                                         int c_omega, int c_cond, int c_ma,
                                         int c_bulk, int c_sa, int c_bulk_h) {
  ParticipationRow row;
  const std::string& z_text = t.rows[r][static_cast<std::size_t>(c_z)];
  if (!z_text.empty()) row.z = csv_num(t, r, c_z, origin);
  row.omega = csv_num(t, r, c_omega, origin);
  row.p_cond = csv_num(t, r, c_cond, origin);
  row.p_MA = csv_num(t, r, c_ma, origin);
  row.p_bulk = csv_num(t, r, c_bulk, origin);
  row.p_SA = csv_num(t, r, c_sa, origin);
  row.p_bulk_H = c_bulk_h >= 0 ? csv_num(t, r, c_bulk_h, origin) : 0.0;
  try {
    row.validate();
  } catch (const std::exception& e) {
    throw std::invalid_argument(row_tag(origin, r) + ": " + e.what());
  }
  return row;
}

}  // namespace

const ordered_json& json_key(const ordered_json& j, const char* key,
                             const std::string& where) {
  auto it = j.find(key);
  require(it != j.end(), where + ": missing key '" + std::string(key) + "'");
  return *it;
}

double json_num(const ordered_json& j, const char* key,
                const std::string& where) {
  const auto& v = json_key(j, key, where);
  require(v.is_number(),
          where + ": key '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

double json_num_or(const ordered_json& j, const char* key, double fallback,
                   const std::string& where) {
  if (!j.contains(key)) return fallback;
  return json_num(j, key, where);
}

std::vector<ParticipationTable> read_participation_csv(
    const std::string& path) {
  const CsvTable t = read_csv_file(path);
  require(!t.rows.empty(), path + ": no data rows");
  const int c_id = need_column(t, "sample_id", path);
  const int c_z = need_column(t, "z_m", path);
  const int c_omega = need_column(t, "omega_rad_s", path);
  const int c_cond = need_column(t, "p_cond", path);
  const int c_ma = need_column(t, "p_MA", path);
  const int c_bulk = need_column(t, "p_bulk", path);
  const int c_sa = need_column(t, "p_SA", path);
  const int c_bulk_h = t.column("p_bulk_H");

  std::vector<std::string> order;
  std::vector<std::vector<ParticipationRow>> grouped;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& id = t.rows[r][static_cast<std::size_t>(c_id)];
    require(!id.empty(), row_tag(path, r) + ": empty sample_id");
    auto it = std::find(order.begin(), order.end(), id);
    std::size_t g;
    if (it == order.end()) {
      order.push_back(id);
      grouped.emplace_back();
      g = order.size() - 1;
    } else {
      g = static_cast<std::size_t>(it - order.begin());
    }
    grouped[g].push_back(parse_participation_row(
        t, r, path, c_z, c_omega, c_cond, c_ma, c_bulk, c_sa, c_bulk_h));
  }

  std::vector<ParticipationTable> out;
  for (std::size_t g = 0; g < order.size(); ++g)
    out.push_back(ParticipationTable::make(order[g], std::move(grouped[g])));
  return out;
}

std::vector<PositionSweep> read_position_sweep_csv(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  require(!t.rows.empty(), path + ": no data rows");
  const int c_id = need_column(t, "sample_id", path);
  const int c_z = need_column(t, "z_m", path);
  const int c_omega = need_column(t, "omega_rad_s", path);
  const int c_cond = need_column(t, "p_cond", path);
  const int c_ma = need_column(t, "p_MA", path);
  const int c_bulk = need_column(t, "p_bulk", path);
  const int c_sa = need_column(t, "p_SA", path);
  const int c_bulk_h = t.column("p_bulk_H");
  const int c_q = need_column(t, "Q_inv", path);
  const int c_sig = need_column(t, "sigma", path);

  std::vector<std::string> order;
  std::vector<std::vector<SweepRecord>> grouped;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SweepRecord rec;
    rec.sample_id = t.rows[r][static_cast<std::size_t>(c_id)];
    require(!rec.sample_id.empty(), row_tag(path, r) + ": empty sample_id");
    rec.row = parse_participation_row(t, r, path, c_z, c_omega, c_cond, c_ma,
                                      c_bulk, c_sa, c_bulk_h);
    rec.q_inv = csv_num(t, r, c_q, path);
    rec.sigma = csv_num(t, r, c_sig, path);
    require(rec.q_inv >= 0.0, row_tag(path, r) + ": negative Q_inv");
    require(rec.sigma > 0.0, row_tag(path, r) + ": sigma must be positive");
    auto it = std::find(order.begin(), order.end(), rec.sample_id);
    std::size_t g;
    if (it == order.end()) {
      order.push_back(rec.sample_id);
      grouped.emplace_back();
      g = order.size() - 1;
    } else {
      g = static_cast<std::size_t>(it - order.begin());
    }
    grouped[g].push_back(std::move(rec));
  }

  std::vector<PositionSweep> out;
  for (std::size_t g = 0; g < order.size(); ++g) {
    auto& recs = grouped[g];
    std::stable_sort(recs.begin(), recs.end(),
                     [](const SweepRecord& a, const SweepRecord& b) {
                       return a.row.p_bulk < b.row.p_bulk;
                     });
    // merge repeated positions by inverse variance
    std::vector<SweepRecord> merged;
    for (auto& rec : recs) {
      bool folded = false;
      for (auto it = merged.rbegin();
           it != merged.rend() && it->row.p_bulk == rec.row.p_bulk; ++it) {
        if (rows_equal(it->row, rec.row)) {
          const double w0 = 1.0 / (it->sigma * it->sigma);
          const double w1 = 1.0 / (rec.sigma * rec.sigma);
          it->q_inv = (w0 * it->q_inv + w1 * rec.q_inv) / (w0 + w1);
          it->sigma = 1.0 / std::sqrt(w0 + w1);
          folded = true;
          break;
        }
      }
      if (!folded) merged.push_back(std::move(rec));
    }
    PositionSweep sweep;
    std::vector<ParticipationRow> rows;
    for (auto& rec : merged) {
      rows.push_back(rec.row);
      sweep.q_inv.push_back(rec.q_inv);
      sweep.sigma.push_back(rec.sigma);
    }
    // rows enter already ordered by p_bulk, so the stable sort inside
    // make() keeps them aligned with q_inv/sigma
    sweep.table = ParticipationTable::make(order[g], std::move(rows));
    out.push_back(std::move(sweep));
  }
  return out;
}

std::vector<PowerPoint> read_power_sweep_csv(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  require(!t.rows.empty(), path + ": no data rows");
  const int c_n = need_column(t, "n_photons", path);
  const int c_q = need_column(t, "Q_inv", path);
  const int c_sig = need_column(t, "sigma", path);

  std::vector<PowerPoint> pts;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    PowerPoint p;
    p.n_photons = csv_num(t, r, c_n, path);
    p.q_inv = csv_num(t, r, c_q, path);
    p.sigma = csv_num(t, r, c_sig, path);
    require(p.n_photons >= 0.0, row_tag(path, r) + ": negative n_photons");
    require(p.q_inv >= 0.0, row_tag(path, r) + ": negative Q_inv");
    require(p.sigma > 0.0, row_tag(path, r) + ": sigma must be positive");
    pts.push_back(p);
  }
  std::stable_sort(pts.begin(), pts.end(),
                   [](const PowerPoint& a, const PowerPoint& b) {
                     return a.n_photons < b.n_photons;
                   });
  std::vector<PowerPoint> merged;
  for (const auto& p : pts) {
    if (!merged.empty() && merged.back().n_photons == p.n_photons) {
      auto& m = merged.back();
      const double w0 = 1.0 / (m.sigma * m.sigma);
      const double w1 = 1.0 / (p.sigma * p.sigma);
      m.q_inv = (w0 * m.q_inv + w1 * p.q_inv) / (w0 + w1);
      m.sigma = 1.0 / std::sqrt(w0 + w1);
    } else {
      merged.push_back(p);
    }
  }
  return merged;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

std::string ensemble_csv(const ShotEnsemble& e) {
  std::string out = "shot,t_s,re,im\n";
  for (std::size_t s = 0; s < e.shots.size(); ++s) {
    for (std::size_t i = 0; i < e.shots[s].size(); ++i) {
      out += join_csv_row({std::to_string(s), fmt_double(e.time(i)),
                           fmt_double(e.shots[s][i].real()),
                           fmt_double(e.shots[s][i].imag())});
    }
  }
  return out;
}

ordered_json ensemble_sidecar(const ShotEnsemble& e, const CavityModel& cavity,
                              const Pulse& pulse) {
  ordered_json j;
  j["schema"] = 1;
  j["dt_s"] = e.dt_s;
  j["t_m_s"] = e.t_m_s;
  j["seed"] = e.seed;
  j["t_p_s"] = e.t_p_s;
  j["n_shots"] = e.shots.size();
  j["n_samples"] = e.n_samples();
  j["cavity"] = cavity_to_json(cavity);
  j["pulse"] = pulse_to_json(pulse);
  return j;
}

ShotEnsemble read_ensemble(const std::string& csv_path,
                           const std::string& sidecar_path) {
  const ordered_json side = read_json_file(sidecar_path);
  ShotEnsemble e;
  e.dt_s = json_num(side, "dt_s", sidecar_path);
  e.t_m_s = json_num(side, "t_m_s", sidecar_path);
  e.seed = json_key(side, "seed", sidecar_path).get<std::uint64_t>();
  e.t_p_s = json_num(side, "t_p_s", sidecar_path);
  const auto n_shots =
      json_key(side, "n_shots", sidecar_path).get<std::size_t>();
  const auto n_samples =
      json_key(side, "n_samples", sidecar_path).get<std::size_t>();

  const CsvTable t = read_csv_file(csv_path);
  const int c_shot = need_column(t, "shot", csv_path);
  const int c_re = need_column(t, "re", csv_path);
  const int c_im = need_column(t, "im", csv_path);
  require(t.rows.size() == n_shots * n_samples,
          csv_path + ": expected " + std::to_string(n_shots * n_samples) +
              " samples, got " + std::to_string(t.rows.size()));
  e.shots.assign(n_shots, {});
  for (auto& s : e.shots) s.reserve(n_samples);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double shot_val = csv_num(t, r, c_shot, csv_path);
    const auto s = static_cast<std::size_t>(shot_val);
    require(shot_val == static_cast<double>(s) && s < n_shots,
            row_tag(csv_path, r) + ": bad shot index");
    e.shots[s].emplace_back(csv_num(t, r, c_re, csv_path),
                            csv_num(t, r, c_im, csv_path));
  }
  for (std::size_t s = 0; s < n_shots; ++s)
    require(e.shots[s].size() == n_samples,
            csv_path + ": shot " + std::to_string(s) + " has " +
                std::to_string(e.shots[s].size()) + " samples, expected " +
                std::to_string(n_samples));
  return e;
}

// ---------------------------------------------------------------------------
// Config round-trips
// ---------------------------------------------------------------------------

JitterSpectrum jitter_from_json(const ordered_json& j) {
  const std::string kind = json_key(j, "kind", "jitter").get<std::string>();
  JitterSpectrum s;
  if (kind == "none") {
    s = JitterSpectrum::none_spectrum();
  } else if (kind == "discrete_lines") {
    std::vector<JitterLine> lines;
    for (const auto& lj : json_key(j, "lines", "jitter")) {
      JitterLine l;
      l.f_Hz = json_num(lj, "f_Hz", "jitter line");
      l.weight = json_num(lj, "weight", "jitter line");
      lines.push_back(l);
    }
    s = JitterSpectrum::discrete(std::move(lines));
  } else if (kind == "lorentzian") {
    s = JitterSpectrum::make_lorentzian(json_num(j, "amplitude", "jitter"),
                                        json_num(j, "f_corner_Hz", "jitter"),
                                        json_num(j, "f_max_Hz", "jitter"));
  } else if (kind == "one_over_f") {
    s = JitterSpectrum::make_one_over_f(json_num(j, "amplitude", "jitter"),
                                        json_num(j, "f_corner_Hz", "jitter"),
                                        json_num(j, "f_max_Hz", "jitter"));
  } else {
    throw std::invalid_argument("jitter: unknown kind '" + kind + "'");
  }
  if (j.contains("synth_lines")) {
    s.synth_lines = json_key(j, "synth_lines", "jitter").get<int>();
    require(s.synth_lines > 0, "jitter: synth_lines must be > 0");
  }
  return s;
}

ordered_json jitter_to_json(const JitterSpectrum& s) {
  ordered_json j;
  switch (s.kind) {
    case JitterKind::none:
      j["kind"] = "none";
      break;
    case JitterKind::discrete_lines: {
      j["kind"] = "discrete_lines";
      ordered_json lines = ordered_json::array();
      for (const auto& l : s.lines)
        lines.push_back({{"f_Hz", l.f_Hz}, {"weight", l.weight}});
      j["lines"] = std::move(lines);
      break;
    }
    case JitterKind::lorentzian:
      j["kind"] = "lorentzian";
      j["amplitude"] = s.amplitude;
      j["f_corner_Hz"] = s.f_corner_Hz;
      j["f_max_Hz"] = s.f_max_Hz;
      break;
    case JitterKind::one_over_f:
      j["kind"] = "one_over_f";
      j["amplitude"] = s.amplitude;
      j["f_corner_Hz"] = s.f_corner_Hz;
      j["f_max_Hz"] = s.f_max_Hz;
      break;
  }
  if (s.kind != JitterKind::none) j["synth_lines"] = s.synth_lines;
  return j;
}

CavityModel cavity_from_json(const ordered_json& j) {
  CavityModel c;
  c.omega0 = json_num(j, "omega0_rad_s", "cavity");
  c.kappa_tot = json_num(j, "kappa_tot_rad_s", "cavity");
  c.kappa_ext = json_num(j, "kappa_ext_rad_s", "cavity");
  if (j.contains("jitter")) c.jitter = jitter_from_json(j["jitter"]);
  // convenience: scale the spectrum to a target rms excursion in units of
  // the linewidth once omega0 and kappa_tot are known
  if (j.contains("jitter") && j["jitter"].contains("rms_linewidths")) {
    const double target = json_num(j["jitter"], "rms_linewidths", "jitter");
    c.jitter = c.jitter.scaled_to_rms_linewidths(target, c.omega0,
                                                 c.kappa_tot);
  }
  c.validate();
  return c;
}

ordered_json cavity_to_json(const CavityModel& c) {
  ordered_json j;
  j["omega0_rad_s"] = c.omega0;
  j["kappa_tot_rad_s"] = c.kappa_tot;
  j["kappa_ext_rad_s"] = c.kappa_ext;
  j["jitter"] = jitter_to_json(c.jitter);
  return j;
}

Pulse pulse_from_json(const ordered_json& j) {
  Pulse p;
  p.a0 = json_num(j, "a0", "pulse");
  p.t_p_s = json_num(j, "t_p_s", "pulse");
  if (j.contains("detuning_rad_s"))
    p.detuning = json_num(j, "detuning_rad_s", "pulse");
  p.validate();
  return p;
}

ordered_json pulse_to_json(const Pulse& p) {
  ordered_json j;
  j["a0"] = p.a0;
  j["t_p_s"] = p.t_p_s;
  j["detuning_rad_s"] = p.detuning;
  return j;
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

ordered_json decay_fit_to_json(const DecayFit& f) {
  ordered_json j;
  j["mode"] = f.mode == DecayMode::power_average ? "power_average"
                                                 : "field_average";
  j["rate_rad_s"] = f.rate;
  j["rate_stderr_rad_s"] = f.rate_stderr;
  j["contrast"] = f.contrast;
  j["window_start_s"] = f.window_start_s;
  j["window_end_s"] = f.window_end_s;
  j["n_used"] = f.n_used;
  return j;
}

ordered_json tls_fit_to_json(const TlsFit& f) {
  ordered_json j;
  j["q_hp_inv"] = f.q_hp_inv;
  j["q_sat_inv"] = f.q_sat_inv;
  j["n_c"] = f.n_c;
  j["alpha"] = f.alpha;
  j["q_hp_inv_err"] = f.q_hp_inv_err;
  j["q_sat_inv_err"] = f.q_sat_inv_err;
  j["n_c_err"] = f.n_c_err;
  j["alpha_err"] = f.alpha_err;
  j["chi2"] = f.chi2;
  j["converged"] = f.converged;
  j["n_used"] = f.n_used;
  j["residuals"] = f.residuals;
  j["covariance"] = f.covariance;
  return j;
}

ordered_json cavity_bounds_to_json(const CavityBounds& b) {
  ordered_json j;
  j["q_cond_inv_upper"] = b.q_cond_inv_upper;
  j["q_MA_inv_lower"] = b.q_MA_inv_lower;
  j["q_MA_inv_upper"] = b.q_MA_inv_upper;
  return j;
}

ordered_json solution_to_json(const LossSolution& s) {
  ordered_json j;
  j["labels"] = s.labels;
  std::vector<double> q(s.q.data(), s.q.data() + s.q.size());
  j["q"] = q;
  std::vector<double> sig;
  for (long i = 0; i < s.covariance.rows(); ++i)
    sig.push_back(std::sqrt(std::max(0.0, s.covariance(i, i))));
  j["sigma"] = sig;
  ordered_json cov = ordered_json::array();
  for (long i = 0; i < s.covariance.rows(); ++i) {
    std::vector<double> row(s.covariance.cols());
    for (long k = 0; k < s.covariance.cols(); ++k) row[k] = s.covariance(i, k);
    cov.push_back(row);
  }
  j["covariance"] = std::move(cov);
  j["active_bounds"] = s.active_bounds;
  j["residuals"] = s.residuals;
  j["condition_number"] = s.condition_number;
  return j;
}

ordered_json loss_pair_to_json(const LossPair& p) {
  ordered_json j;
  j["q_bulk_inv"] = p.q_bulk_inv;
  j["q_bulk_inv_sigma"] = p.q_bulk_inv_sigma;
  j["q_sa_inv"] = p.q_sa_inv;
  j["q_sa_inv_sigma"] = p.q_sa_inv_sigma;
  j["clipped_bulk"] = p.clipped_bulk;
  j["clipped_sa"] = p.clipped_sa;
  return j;
}

ordered_json interval_to_json(const LossInterval& iv) {
  ordered_json j;
  j["lower"] = iv.lower;
  if (iv.unbounded) {
    j["upper"] = nullptr;
  } else {
    j["upper"] = iv.upper;
    j["upper_sigma"] = iv.upper_sigma;
  }
  j["unbounded"] = iv.unbounded;
  return j;
}

ordered_json substrate_bounds_to_json(const SubstrateBounds& b) {
  ordered_json j;
  j["bulk"] = interval_to_json(b.bulk);
  j["sa"] = interval_to_json(b.sa);
  return j;
}

ordered_json magnetic_bounds_to_json(const MagneticBounds& b) {
  ordered_json j;
  j["q_e_inv"] = interval_to_json(b.q_e_inv);
  j["q_h_inv"] = interval_to_json(b.q_h_inv);
  return j;
}

ordered_json coherence_to_json(const CoherenceLimit& c) {
  ordered_json j;
  if (c.unbounded()) {
    j["quality_factor"] = nullptr;
    j["t1_s"] = nullptr;
  } else {
    j["quality_factor"] = *c.quality_factor;
    j["t1_s"] = *c.t1_s;
  }
  j["unbounded"] = c.unbounded();
  return j;
}

std::string sensitivity_map_csv(const SensitivityMap& map) {
  std::string out = "q_bulk_inv,q_SA_inv,ci,frac_err\n";
  for (std::size_t i = 0; i < map.q_bulk_inv.size(); ++i)
    for (std::size_t k = 0; k < map.q_SA_inv.size(); ++k)
      out += join_csv_row(
          {fmt_double(map.q_bulk_inv[i]), fmt_double(map.q_SA_inv[k]),
           fmt_double(map.ci(static_cast<long>(i), static_cast<long>(k))),
           fmt_double(
               map.frac_err(static_cast<long>(i), static_cast<long>(k)))});
  return out;
}

std::string contours_csv(const SensitivityMap& map) {
  std::string out = "level,polyline,q_bulk_inv,q_SA_inv\n";
  for (std::size_t c = 0; c < map.contours.size(); ++c)
    for (const auto& pt : map.contours[c].points)
      out += join_csv_row({fmt_double(map.contours[c].level),
                           std::to_string(c), fmt_double(pt.first),
                           fmt_double(pt.second)});
  return out;
}

// ---------------------------------------------------------------------------
// Filesystem and overrides
// ---------------------------------------------------------------------------

void atomic_write_text(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + tmp.string());
    out << text;
    out.flush();
    require(static_cast<bool>(out), "write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), path + ": cannot open");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void apply_override(ordered_json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  require(eq != std::string::npos && eq > 0,
          "override '" + spec + "' is not of the form path=value");
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);

  ordered_json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), "override '" + spec + "' has an empty path part");
    if (dot == std::string::npos) {
      ordered_json parsed;
      try {
        parsed = ordered_json::parse(value);
      } catch (const nlohmann::json::exception&) {
        parsed = value;  // bare strings pass through
      }
      (*node)[key] = std::move(parsed);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace cavloss
