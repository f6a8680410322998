#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "cavloss/csv.hpp"
#include "cavloss/errors.hpp"
#include "cavloss/io.hpp"
#include "cavloss/pipeline.hpp"
#include "cavloss/ringdown.hpp"

using namespace cavloss;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "cavloss_io_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_file(const std::string& name, const std::string& text) {
  const auto p = scratch_dir() / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string thrown_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// run() writes the summary to stdout; capture it so test output stays clean
struct CoutCapture {
  std::ostringstream buf;
  std::streambuf* old;
  CoutCapture() : old(std::cout.rdbuf(buf.rdbuf())) {}
  ~CoutCapture() { std::cout.rdbuf(old); }
  std::string text() const { return buf.str(); }
};

ordered_json two_line_config() {
  ordered_json cfg;
  cfg["lines"] = ordered_json::array(
      {{{"label", "thin"}, {"q_sub_inv", 170e-9}, {"sigma", 13e-9},
        {"ratio", 7.13e-5}},
       {{"label", "thick"}, {"q_sub_inv", 88e-9}, {"sigma", 6e-9},
        {"ratio", 1.67e-5}}});
  return cfg;
}

}  // namespace

TEST_CASE("number formatting survives the round trip") {
  for (double v : {0.1, 1.0 / 3.0, 6.3e-8, -2.5e300, 0.0, 12345.0,
                   7.894590431145602e-4}) {
    CHECK(std::stod(fmt_double(v)) == v);
  }
  CHECK(fmt_double(1.0) == "1");
  CHECK(join_csv_row({"a", "b", "c"}) == "a,b,c\n");
}

TEST_CASE("strict csv parsing") {
  const auto t = read_csv_text("a, b\n1,2\n\n3, 4\n", "mem");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == "4");
  CHECK(t.column("b") == 1);
  CHECK(t.column("nope") == -1);

  const auto ragged = thrown_message(
      [] { read_csv_text("a,b\n1,2\n3\n", "mem"); });
  CHECK(contains(ragged, "mem:3"));
  CHECK(contains(ragged, "expected 2 fields, got 1"));

  CHECK_THROWS_AS(read_csv_text("\n\n", "mem"), std::invalid_argument);
  CHECK_THROWS_AS(read_csv_file("/nonexistent/f.csv"), std::invalid_argument);

  const auto bad = read_csv_text("x\noops\n", "mem");
  const auto msg = thrown_message([&] { csv_num(bad, 0, 0, "mem"); });
  CHECK(contains(msg, "row 2"));
  CHECK(contains(msg, "column 'x'"));
  CHECK(contains(msg, "oops"));
}

TEST_CASE("power sweep: sorting, merging, validation") {
  const std::string path = write_file("power.csv",
                                      "n_photons,Q_inv,sigma\n"
                                      "1e8,3e-9,1e-10\n"
                                      "1e6,6e-9,2e-9\n"
                                      "1e6,4e-9,2e-9\n");
  const auto pts = read_power_sweep_csv(path);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].n_photons == 1e6);
  CHECK(pts[1].n_photons == 1e8);
  // equal sigmas: plain mean, combined sigma falls by sqrt(2)
  CHECK(pts[0].q_inv == doctest::Approx(5e-9).epsilon(1e-12));
  CHECK(pts[0].sigma == doctest::Approx(2e-9 / std::sqrt(2.0)).epsilon(1e-12));

  const std::string empty =
      write_file("power_empty.csv", "n_photons,Q_inv,sigma\n");
  CHECK(contains(thrown_message([&] { read_power_sweep_csv(empty); }),
                 "no data rows"));

  const std::string neg = write_file(
      "power_neg.csv", "n_photons,Q_inv,sigma\n1e6,5e-9,1e-10\n1e7,-1e-9,1e-10\n");
  const auto msg = thrown_message([&] { read_power_sweep_csv(neg); });
  CHECK(contains(msg, "row 3"));
  CHECK(contains(msg, "negative Q_inv"));

  const std::string zsig =
      write_file("power_zsig.csv", "n_photons,Q_inv,sigma\n1e6,5e-9,0\n");
  CHECK(contains(thrown_message([&] { read_power_sweep_csv(zsig); }),
                 "sigma must be positive"));

  const std::string nocol =
      write_file("power_nocol.csv", "n_photons,Q_inv\n1e6,5e-9\n");
  CHECK(contains(thrown_message([&] { read_power_sweep_csv(nocol); }),
                 "missing required column 'sigma'"));
}

TEST_CASE("position sweep: grouping, alignment, duplicate merge") {
  // two samples interleaved, one exact duplicate position for sample b
  const std::string path = write_file(
      "sweep.csv",
      "sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA,Q_inv,sigma\n"
      "b,0.01,2.8e10,4e-5,2.5e-7,0.30,1e-5,2e-5,1e-7\n"
      "a,,2.9e10,4e-5,2.0e-7,0.10,2e-6,1e-5,1e-7\n"
      "b,0.02,2.7e10,4e-5,3.0e-7,0.50,2e-5,3e-5,1e-7\n"
      "b,0.01,2.8e10,4e-5,2.5e-7,0.30,1e-5,4e-5,1e-7\n");
  const auto sweeps = read_position_sweep_csv(path);
  REQUIRE(sweeps.size() == 2);
  // first-appearance order
  CHECK(sweeps[0].table.sample_id == "b");
  CHECK(sweeps[1].table.sample_id == "a");
  // duplicate (identical participation row) merged by inverse variance
  REQUIRE(sweeps[0].table.rows.size() == 2);
  CHECK(sweeps[0].q_inv.size() == 2);
  CHECK(sweeps[0].q_inv[0] == doctest::Approx(3e-5).epsilon(1e-12));
  CHECK(sweeps[0].sigma[0] == doctest::Approx(1e-7 / std::sqrt(2.0)).epsilon(1e-12));
  // rows sorted by p_bulk, q/sigma stay aligned
  CHECK(sweeps[0].table.rows[0].p_bulk == 0.30);
  CHECK(sweeps[0].table.rows[1].p_bulk == 0.50);
  CHECK(sweeps[0].q_inv[1] == 3e-5);
  // empty z_m leaves the position unset
  CHECK_FALSE(sweeps[1].table.rows[0].z.has_value());
  CHECK(sweeps[0].table.rows[0].z.has_value());

  // same p_bulk but different omega stays two separate rows
  const std::string distinct = write_file(
      "sweep2.csv",
      "sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA,Q_inv,sigma\n"
      "a,,2.8e10,4e-5,2.5e-7,0.30,1e-5,2e-5,1e-7\n"
      "a,,2.9e10,4e-5,2.5e-7,0.30,1e-5,4e-5,1e-7\n");
  CHECK(read_position_sweep_csv(distinct)[0].table.rows.size() == 2);

  // row-level validation failures name the offending file row
  const std::string bad = write_file(
      "sweep_bad.csv",
      "sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA,Q_inv,sigma\n"
      "a,,2.8e10,4e-5,2.5e-7,1.30,1e-5,2e-5,1e-7\n");
  CHECK(contains(thrown_message([&] { read_position_sweep_csv(bad); }),
                 "row 2"));
}

TEST_CASE("participation csv: optional magnetic column") {
  const std::string with_h = write_file(
      "part_h.csv",
      "sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA,p_bulk_H\n"
      "s,,2.8e10,4e-5,2.5e-7,0.30,1e-5,0.02\n");
  const auto tables = read_participation_csv(with_h);
  REQUIRE(tables.size() == 1);
  CHECK(tables[0].rows[0].p_bulk_H == 0.02);

  const std::string no_h = write_file(
      "part_noh.csv",
      "sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA\n"
      "s,,2.8e10,4e-5,2.5e-7,0.30,1e-5\n");
  CHECK(read_participation_csv(no_h)[0].rows[0].p_bulk_H == 0.0);

  const std::string anon = write_file(
      "part_anon.csv",
      "sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA\n"
      ",,2.8e10,4e-5,2.5e-7,0.30,1e-5\n");
  CHECK(contains(thrown_message([&] { read_participation_csv(anon); }),
                 "empty sample_id"));
}

TEST_CASE("ensemble csv plus sidecar reproduce the simulation bitwise") {
  CavityModel cavity;
  cavity.omega0 = 2.8588e10;
  cavity.kappa_tot = 1000.0;
  cavity.kappa_ext = 250.0;
  cavity.jitter = JitterSpectrum::make_lorentzian(1e-12, 300.0, 500.0);
  cavity.jitter.synth_lines = 8;
  Pulse pulse;
  pulse.a0 = 3.0;
  pulse.t_p_s = 1e-3;
  const ShotEnsemble e =
      simulate_ensemble(cavity, pulse, 1e-4, 4e-3, 3, 99, 1e-4);

  const std::string csv = ensemble_csv(e);
  const auto side = ensemble_sidecar(e, cavity, pulse);
  const std::string csv_path = write_file("ens.csv", csv);
  const std::string side_path = write_file("ens.json", side.dump(2) + "\n");

  const ShotEnsemble back = read_ensemble(csv_path, side_path);
  CHECK(back.dt_s == e.dt_s);
  CHECK(back.t_m_s == e.t_m_s);
  CHECK(back.seed == e.seed);
  CHECK(back.t_p_s == e.t_p_s);
  REQUIRE(back.shots.size() == e.shots.size());
  REQUIRE(back.n_samples() == e.n_samples());
  // %.17g columns make the rebuilt ensemble bit-identical
  CHECK(ensemble_csv(back) == csv);

  // sidecar that promises a different shape is rejected
  auto wrong = side;
  wrong["n_shots"] = 4;
  const std::string wrong_path =
      write_file("ens_wrong.json", wrong.dump(2) + "\n");
  CHECK(contains(
      thrown_message([&] { read_ensemble(csv_path, wrong_path); }),
      "expected"));

  // shot indices outside the promised range are named
  const std::string mangled = write_file(
      "ens_bad.csv", "shot,t_s,re,im\n7,0,1,0\n");
  auto tiny = side;
  tiny["n_shots"] = 1;
  tiny["n_samples"] = 1;
  const std::string tiny_path =
      write_file("ens_tiny.json", tiny.dump(2) + "\n");
  CHECK(contains(
      thrown_message([&] { read_ensemble(mangled, tiny_path); }),
      "bad shot index"));
}

TEST_CASE("jitter configs round-trip through json") {
  for (const auto* kind : {"none", "discrete_lines", "lorentzian",
                           "one_over_f"}) {
    JitterSpectrum s;
    if (std::string(kind) == "none") {
      s = JitterSpectrum::none_spectrum();
    } else if (std::string(kind) == "discrete_lines") {
      s = JitterSpectrum::discrete({{60.0, 1e-13}, {180.0, 5e-14}});
      s.synth_lines = 2;
    } else if (std::string(kind) == "lorentzian") {
      s = JitterSpectrum::make_lorentzian(2e-12, 300.0, 3000.0);
      s.synth_lines = 32;
    } else {
      s = JitterSpectrum::make_one_over_f(1e-13, 1.0, 1e4);
      s.synth_lines = 48;
    }
    const JitterSpectrum back = jitter_from_json(jitter_to_json(s));
    CHECK(back.kind == s.kind);
    CHECK(back.mean_square() == doctest::Approx(s.mean_square()).epsilon(1e-15));
    CHECK(back.synth_lines == s.synth_lines);
    CHECK(back.max_frequency() == s.max_frequency());
  }

  ordered_json bogus;
  bogus["kind"] = "brownian";
  CHECK_THROWS_AS(jitter_from_json(bogus), std::invalid_argument);

  ordered_json nolines;
  nolines["kind"] = "discrete_lines";
  CHECK_THROWS_AS(jitter_from_json(nolines), std::invalid_argument);
}

TEST_CASE("cavity and pulse json round trips") {
  ordered_json jc;
  jc["omega0_rad_s"] = 2.8588e10;
  jc["kappa_tot_rad_s"] = 628.3;
  jc["kappa_ext_rad_s"] = 628.3;
  jc["jitter"] = {{"kind", "lorentzian"}, {"amplitude", 1e-12},
                  {"f_corner_Hz", 300.0}, {"f_max_Hz", 2000.0},
                  {"synth_lines", 16}, {"rms_linewidths", 10.0}};
  const CavityModel c = cavity_from_json(jc);
  // convenience key rescales the spectrum to the requested rms excursion
  CHECK(c.jitter.rms_linewidths(c.omega0, c.kappa_tot) ==
        doctest::Approx(10.0).epsilon(1e-12));
  CHECK(c.jitter.synth_lines == 16);
  const CavityModel again = cavity_from_json(cavity_to_json(c));
  CHECK(again.jitter.amplitude == c.jitter.amplitude);
  CHECK(again.kappa_ext == c.kappa_ext);

  ordered_json jp;
  jp["a0"] = 5.29e6;
  jp["t_p_s"] = 5e-6;
  const Pulse p = pulse_from_json(jp);
  CHECK(p.detuning == 0.0);
  const Pulse p2 = pulse_from_json(pulse_to_json(p));
  CHECK(p2.a0 == p.a0);
  CHECK(p2.t_p_s == p.t_p_s);

  ordered_json missing;
  missing["a0"] = 1.0;
  CHECK(contains(thrown_message([&] { pulse_from_json(missing); }),
                 "missing key 't_p_s'"));
}

TEST_CASE("override strings patch nested config keys") {
  ordered_json doc = ordered_json::object();
  apply_override(doc, "cavity.kappa_tot_rad_s=628.3");
  apply_override(doc, "cavity.jitter.kind=lorentzian");
  apply_override(doc, "n_shots=200");
  apply_override(doc, "flags=[1,2,3]");
  apply_override(doc, "enabled=true");
  CHECK(doc["cavity"]["kappa_tot_rad_s"].get<double>() == 628.3);
  CHECK(doc["cavity"]["jitter"]["kind"] == "lorentzian");
  CHECK(doc["n_shots"].get<int>() == 200);
  CHECK(doc["flags"].size() == 3);
  CHECK(doc["enabled"].get<bool>() == true);
  // replacement of an existing scalar
  apply_override(doc, "n_shots=50");
  CHECK(doc["n_shots"].get<int>() == 50);

  CHECK_THROWS_AS(apply_override(doc, "novalue"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "=5"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "a..b=5"), std::invalid_argument);
}

TEST_CASE("atomic writes create parents and leave no temp files") {
  const auto target = scratch_dir() / "deep" / "nested" / "out.txt";
  atomic_write_text(target.string(), "payload\n");
  CHECK(slurp(target.string()) == "payload\n");
  CHECK_FALSE(fs::exists(target.string() + ".tmp"));

  atomic_write_text(target.string(), "replaced\n");
  CHECK(slurp(target.string()) == "replaced\n");
}

TEST_CASE("json file reading names the file in every failure") {
  CHECK(contains(
      thrown_message([] { read_json_file("/nonexistent/cfg.json"); }),
      "cannot open"));
  const std::string bad = write_file("bad.json", "{ not json");
  CHECK(contains(thrown_message([&] { read_json_file(bad); }), bad));
  const std::string good = write_file("good.json", "{\"k\": 3}\n");
  CHECK(read_json_file(good)["k"].get<int>() == 3);
}

TEST_CASE("artifact sink stages, rejects duplicates, commits atomically") {
  const auto dir = scratch_dir() / "sink";
  ArtifactSink sink(dir.string());
  sink.add("one.csv", "a,b\n1,2\n");
  ordered_json j;
  j["k"] = 1;
  sink.add_json("two.json", j);
  CHECK_THROWS_AS(sink.add("one.csv", "again"), std::invalid_argument);
  CHECK(sink.names() == std::vector<std::string>{"one.csv", "two.json"});
  // nothing on disk until commit
  CHECK_FALSE(fs::exists(dir / "one.csv"));
  sink.commit();
  CHECK(slurp((dir / "one.csv").string()) == "a,b\n1,2\n");
  const std::string two = slurp((dir / "two.json").string());
  CHECK(two == j.dump(2) + "\n");
}

TEST_CASE("result serializers encode open intervals as null") {
  LossInterval iv;
  iv.upper = 3.3e-7;
  iv.upper_sigma = 1e-8;
  const auto j = interval_to_json(iv);
  CHECK(j["upper"].get<double>() == 3.3e-7);
  CHECK(j["unbounded"].get<bool>() == false);

  LossInterval open;
  open.unbounded = true;
  const auto jo = interval_to_json(open);
  CHECK(jo["upper"].is_null());
  CHECK_FALSE(jo.contains("upper_sigma"));

  const auto jc = coherence_to_json(coherence_limit(0.0, 1e-9, 4e9));
  CHECK(jc["quality_factor"].is_null());
  CHECK(jc["unbounded"].get<bool>() == true);
  const auto jq = coherence_to_json(coherence_limit(0.8, 63e-9, 4e9));
  CHECK(jq["quality_factor"].get<double>() ==
        doctest::Approx(19841269.84126984));
}

TEST_CASE("figure csv builders") {
  std::vector<PowerPoint> pts(2);
  pts[0] = {1e6, 9e-9, 1e-10};
  pts[1] = {1e9, 8e-9, 1e-10};
  const std::string f3 = fig3_points_csv(pts);
  CHECK(contains(f3, "n_photons,q_inv,sigma\n"));
  CHECK(std::count(f3.begin(), f3.end(), '\n') == 3);

  ConstraintLine l1, l2;
  l1.label = "thin";
  l1.q_sub_inv = 170e-9;
  l1.ratio = 7.13e-5;
  l2.label = "thick";
  l2.q_sub_inv = 88e-9;
  l2.ratio = 1.67e-5;
  const LossPair pt = intersect(l1, l2);
  const std::string f4 = fig4b_csv({l1, l2}, pt);
  // header + two axis intercepts per line + the point
  CHECK(std::count(f4.begin(), f4.end(), '\n') == 6);
  CHECK(contains(f4, "intersection,point,"));
  CHECK(contains(f4, "thin,line,"));

  std::vector<ordered_json> bars;
  bars.push_back({{"label", "transmon"}, {"participation", 0.8},
                  {"q_inv", 63e-9}, {"f_Hz", 4e9}});
  bars.push_back({{"label", "open"}, {"participation", 0.0},
                  {"q_inv", 63e-9}, {"f_Hz", 4e9}});
  const std::string f5 = fig5_csv(bars);
  CHECK(contains(f5, "label,participation,q_inv,f_Hz,quality_factor,t1_s\n"));
  // unbounded rows leave the derived columns empty
  CHECK(contains(f5, "open,0,6.2999999999999995e-08,4000000000,,\n"));
}

TEST_CASE("separate command stages its artifacts deterministically") {
  auto cfg = two_line_config();
  cfg["mc_check"] = {{"seed", 11}, {"n_draws", 5000}};
  cfg["coherence"] = ordered_json::array(
      {{{"label", "transmon"}, {"participation", 0.8}, {"q_inv", 63e-9},
        {"f_Hz", 4e9}}});

  ArtifactSink sink1(( scratch_dir() / "sep1").string());
  const auto sum1 = cmd_separate(cfg, sink1);
  CHECK(sum1["command"] == "separate");
  CHECK(sum1["intersection"]["q_bulk_inv"].get<double>() ==
        doctest::Approx(6.291941391941392e-08).epsilon(1e-12));
  CHECK(sum1["mc_check"].contains("q_bulk_inv"));
  CHECK(sink1.names() == std::vector<std::string>{
                             "separation.json", "fig4b.csv",
                             "fig5_coherence.csv"});

  ArtifactSink sink2((scratch_dir() / "sep2").string());
  const auto sum2 = cmd_separate(cfg, sink2);
  REQUIRE(sink1.files().size() == sink2.files().size());
  for (std::size_t i = 0; i < sink1.files().size(); ++i) {
    CHECK(sink1.files()[i].first == sink2.files()[i].first);
    CHECK(sink1.files()[i].second == sink2.files()[i].second);
  }
}

TEST_CASE("simulate then fit-ringdown through files recovers the decay rate") {
  ordered_json sim;
  sim["seed"] = 4;
  sim["cavity"] = {{"omega0_rad_s", 2.8588e10}, {"kappa_tot_rad_s", 1000.0},
                   {"kappa_ext_rad_s", 250.0}};
  sim["pulse"] = {{"a0", 3.0}, {"t_p_s", 2e-3}};
  sim["dt_s"] = 1e-4;
  sim["duration_s"] = 6e-3;
  sim["n_shots"] = 2;

  const auto dir = scratch_dir() / "rt";
  ArtifactSink sink(dir.string());
  const auto sum = cmd_simulate(sim, sink);
  CHECK(sum["n_samples"].get<std::size_t>() == 61);
  CHECK(sum["rms_linewidths"].get<double>() == 0.0);
  sink.commit();

  ordered_json fit;
  fit["ensemble_csv"] = (dir / "ensemble.csv").string();
  fit["ensemble_json"] = (dir / "ensemble.json").string();
  fit["window_start_s"] = 2.2e-3;
  fit["window_end_s"] = 5.8e-3;
  ArtifactSink sink2(dir.string());
  const auto fsum = cmd_fit_ringdown(fit, sink2);
  // quiet cavity, boxcar at identity width: the power fit is exact
  CHECK(fsum["rate_rad_s"].get<double>() ==
        doctest::Approx(1000.0).epsilon(1e-9));
  CHECK(fsum["mode"] == "power_average");

  fit["mode"] = "nonsense";
  ArtifactSink sink3(dir.string());
  CHECK_THROWS_AS(cmd_fit_ringdown(fit, sink3), std::invalid_argument);
}

TEST_CASE("run maps outcomes onto the exit code contract") {
  const auto out = scratch_dir() / "runout";

  RunConfig ok;
  ok.command = "separate";
  ok.config_path = write_file("run_ok.json", two_line_config().dump(2) + "\n");
  ok.out_dir = out.string();
  {
    CoutCapture cap;
    CHECK(run(ok) == 0);
    CHECK(contains(cap.text(), "\"out_dir\""));
    CHECK(contains(cap.text(), "\"intersection\""));
  }
  CHECK(fs::exists(out / "separation.json"));

  // overrides reach the command through the same path the CLI uses
  RunConfig ov = ok;
  ov.overrides = {"out_prefix=renamed"};
  {
    CoutCapture cap;
    CHECK(run(ov) == 0);
  }
  CHECK(fs::exists(out / "renamed.json"));

  // missing config content: validation failure
  RunConfig invalid = ok;
  invalid.config_path = write_file("run_empty.json", "{}\n");
  {
    CoutCapture cap;
    CHECK(run(invalid) == 2);
  }

  // parallel constraint lines: numerical failure
  ordered_json par = two_line_config();
  par["lines"][1]["ratio"] = par["lines"][0]["ratio"];
  RunConfig numeric = ok;
  numeric.config_path = write_file("run_par.json", par.dump(2) + "\n");
  {
    CoutCapture cap;
    CHECK(run(numeric) == 3);
  }

  RunConfig unknown = ok;
  unknown.command = "frobnicate";
  {
    CoutCapture cap;
    CHECK(run(unknown) == 2);
  }

  // empty out_dir falls back to $CAVLOSS_OUT
  const auto envdir = scratch_dir() / "envout";
  setenv("CAVLOSS_OUT", envdir.string().c_str(), 1);
  RunConfig env = ok;
  env.out_dir.clear();
  {
    CoutCapture cap;
    CHECK(run(env) == 0);
  }
  unsetenv("CAVLOSS_OUT");
  CHECK(fs::exists(envdir / "separation.json"));
}
