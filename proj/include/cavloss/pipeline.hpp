#pragma once

// Command orchestration shared by the CLI binary and the tests. Each
// command takes a JSON config, stages its artifacts in an ArtifactSink and
// returns the summary document it would print. Nothing touches the
// filesystem until commit(), so a failing command leaves no artifacts.

#include <string>
#include <utility>
#include <vector>

#include "cavloss/io.hpp"

namespace cavloss {

class ArtifactSink {
 public:
  explicit ArtifactSink(std::string dir) : dir_(std::move(dir)) {}

  void add(const std::string& relpath, std::string content);
  void add_json(const std::string& relpath, const ordered_json& doc);

  // Writes every staged file atomically (temp then rename).
  void commit();

  const std::vector<std::pair<std::string, std::string>>& files() const {
    return files_;
  }
  std::vector<std::string> names() const;
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

ordered_json cmd_simulate(const ordered_json& cfg, ArtifactSink& sink);
ordered_json cmd_fit_ringdown(const ordered_json& cfg, ArtifactSink& sink);
ordered_json cmd_fit_power(const ordered_json& cfg, ArtifactSink& sink);
ordered_json cmd_invert(const ordered_json& cfg, ArtifactSink& sink);
ordered_json cmd_sensitivity(const ordered_json& cfg, ArtifactSink& sink);
ordered_json cmd_separate(const ordered_json& cfg, ArtifactSink& sink);
ordered_json cmd_pipeline(const ordered_json& cfg, ArtifactSink& sink);

struct RunConfig {
  std::string command;
  std::string config_path;             // optional; {} when empty
  std::vector<std::string> overrides;  // dotted.path=value
  std::string out_dir;                 // resolved by the caller
};

// Dispatches, prints the summary JSON to stdout and maps exceptions to the
// exit code contract: 0 success, 2 validation/input, 3 numerical failure.
int run(const RunConfig& config);

// Plot-ready CSV builders (also used by the commands themselves).
std::string fig3_points_csv(const std::vector<PowerPoint>& pts);
std::string fig3_model_csv(const TlsFit& fit, double n_min, double n_max,
                           int n_grid = 200);
std::string fig4a_csv(const LossSystem& system, const LossSolution& sol);
std::string fig4b_csv(const std::vector<ConstraintLine>& lines,
                      const LossPair& point);
std::string fig5_csv(const std::vector<ordered_json>& bars);

}  // namespace cavloss
