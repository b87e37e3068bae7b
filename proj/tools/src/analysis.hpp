#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "densedyn/dynamics.hpp"
#include "densedyn/lld.hpp"
#include "densedyn/trace_store.hpp"
#include "run_config.hpp"

namespace densedyn::cli {

struct AnalysisReport {
  std::vector<int> epochs;
  std::vector<double> accuracy;
  /// Empty when the curve is too short for even one component.
  std::vector<LldFit> fits;
  std::vector<double> bic;
  int best_k = 0;
  Crystallization crystallization;
  std::size_t classes_after_first = 0;
  /// Empty when fewer than two epochs were recorded.
  std::optional<PcTrajectory> trajectory;
  std::optional<int> pc1_peak_epoch;
  std::vector<double> asymptote_variance_fraction;
  double asymptote_separation = 0.0;
  std::string variance_maps;  // "written" or the reason they were skipped
};

/// Settings recorded with the run; empty when absent or no longer valid (reason in `why`).
std::optional<RunConfig> recorded_config(const TraceManifest& manifest, std::string* why = nullptr);

/// Reads a verified trace and writes every analysis table plus summary.txt to `out_dir`.
AnalysisReport run_analysis(const std::filesystem::path& trace_dir, const std::filesystem::path& out_dir,
                            std::ostream& log);

}  // namespace densedyn::cli
