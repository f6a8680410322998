#pragma once

// File formats and config plumbing: CSV ingestion for participation tables
// and measurement sweeps, ensemble persistence, JSON round-trips for the
// simulator configs, and JSON serialization of every result type the CLI
// emits. All doubles pass through fmt_double or nlohmann's round-trip
// encoder, so identical runs produce identical bytes.

#include <string>
#include <vector>

#include "json.hpp"

#include "cavloss/inversion.hpp"
#include "cavloss/participation.hpp"
#include "cavloss/ringdown.hpp"
#include "cavloss/separation.hpp"
#include "cavloss/tls.hpp"

namespace cavloss {

using ordered_json = nlohmann::ordered_json;

// Checked field access with contextual error messages; `where` names the
// document for the user (a path or config section).
const ordered_json& json_key(const ordered_json& j, const char* key,
                             const std::string& where);
double json_num(const ordered_json& j, const char* key,
                const std::string& where);
double json_num_or(const ordered_json& j, const char* key, double fallback,
                   const std::string& where);

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

// Header: sample_id,z_m,omega_rad_s,p_cond,p_MA,p_bulk,p_SA[,p_bulk_H].
// Missing p_bulk_H column means zero magnetic participation; an empty z_m
// cell leaves the position unset. Tables come back grouped by sample_id in
// first-appearance order, rows sorted by p_bulk.
std::vector<ParticipationTable> read_participation_csv(
    const std::string& path);

// Participation columns plus measured Q_inv,sigma. Duplicate positions
// (identical participation rows) merge by inverse-variance weighting.
struct PositionSweep {
  ParticipationTable table;
  std::vector<double> q_inv;   // aligned with table.rows
  std::vector<double> sigma;
};

std::vector<PositionSweep> read_position_sweep_csv(const std::string& path);

// Header: n_photons,Q_inv,sigma. Duplicate photon numbers merge by
// inverse-variance weighting. Points come back sorted by n_photons.
std::vector<PowerPoint> read_power_sweep_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Ensemble persistence: CSV of samples plus a JSON sidecar
// ---------------------------------------------------------------------------

// Columns shot,t_s,re,im, one row per retained sample, shots in order.
std::string ensemble_csv(const ShotEnsemble& e);

ordered_json ensemble_sidecar(const ShotEnsemble& e, const CavityModel& cavity,
                              const Pulse& pulse);

// Rebuilds the ensemble from the pair; the sidecar fixes dt, t_m, seed and
// t_p, the CSV provides the samples. Shape mismatches throw.
ShotEnsemble read_ensemble(const std::string& csv_path,
                           const std::string& sidecar_path);

// ---------------------------------------------------------------------------
// Config round-trips
// ---------------------------------------------------------------------------

JitterSpectrum jitter_from_json(const ordered_json& j);
ordered_json jitter_to_json(const JitterSpectrum& s);

CavityModel cavity_from_json(const ordered_json& j);
ordered_json cavity_to_json(const CavityModel& c);

Pulse pulse_from_json(const ordered_json& j);
ordered_json pulse_to_json(const Pulse& p);

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

ordered_json decay_fit_to_json(const DecayFit& f);
ordered_json tls_fit_to_json(const TlsFit& f);
ordered_json cavity_bounds_to_json(const CavityBounds& b);
ordered_json solution_to_json(const LossSolution& s);
ordered_json loss_pair_to_json(const LossPair& p);
ordered_json interval_to_json(const LossInterval& iv);
ordered_json substrate_bounds_to_json(const SubstrateBounds& b);
ordered_json magnetic_bounds_to_json(const MagneticBounds& b);
ordered_json coherence_to_json(const CoherenceLimit& c);

// Long-format grid: q_bulk_inv,q_SA_inv,ci,frac_err.
std::string sensitivity_map_csv(const SensitivityMap& map);
// level,polyline,q_bulk_inv,q_SA_inv with one polyline index per chain.
std::string contours_csv(const SensitivityMap& map);

// ---------------------------------------------------------------------------
// Filesystem and overrides
// ---------------------------------------------------------------------------

// Writes via a temporary in the same directory and renames into place, so
// readers never observe a half-written artifact.
void atomic_write_text(const std::string& path, const std::string& text);

// Parses a file as JSON with the path prefixed to any error.
ordered_json read_json_file(const std::string& path);

// Applies one "dotted.path=value" override onto a JSON document. Values
// parse as JSON when possible (numbers, bools, arrays) and fall back to
// strings.
void apply_override(ordered_json& doc, const std::string& spec);

}  // namespace cavloss
