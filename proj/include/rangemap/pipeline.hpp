#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rangemap/io.hpp"

namespace rangemap::pipeline {

namespace fs = std::filesystem;

/// generate: world + one session per season + the ground-truth sidecar
/// (the sidecar is evaluation-only; the pipeline never reads it).
struct GenerateResult {
  fs::path truth_file;
  std::vector<fs::path> session_dirs;
};
GenerateResult run_generate(const io::PipelineConfig& cfg, const fs::path& out_dir);

/// map: SeasonMap (plus the octree dump when the session carries scans).
struct MapResult {
  fs::path map_file;
  std::optional<fs::path> octree_file;
};
MapResult run_map(const io::PipelineConfig& cfg, const fs::path& session_dir,
                  const fs::path& out_dir);

/// associate: matches + persistence beliefs + the tabular match report.
struct AssociateResult {
  fs::path matches_file;
  fs::path beliefs_file;
  fs::path table_file;
  io::MatchArtifact matches;
  io::BeliefArtifact beliefs;
};
AssociateResult run_associate(const io::PipelineConfig& cfg, const fs::path& map_a_file,
                              const fs::path& map_b_file, assoc::MatchMethod method,
                              const fs::path& out_dir);

fs::path run_evaluate(const io::PipelineConfig& cfg, const fs::path& truth_file,
                      const fs::path& matches_file, const fs::path& map_a_file,
                      const fs::path& map_b_file, const fs::path& out_dir);

/// report: noise sweep (generate -> map -> associate -> evaluate per sigma
/// and seed, both match modes), CSV tables plus SVG plots.
struct ReportResult {
  fs::path csv_file;
  fs::path summary_csv_file;
  fs::path f1_svg_file;
  fs::path histogram_svg_file;
};
ReportResult run_report(const io::PipelineConfig& cfg, const fs::path& out_dir);

/// Copy of cfg with the master seed pushed into every module that keeps its
/// own seed field.
io::PipelineConfig normalized(io::PipelineConfig cfg);

/// Stable error code for the CLI's machine-readable error record.
std::string error_code_for(const std::exception& e);

}  // namespace rangemap::pipeline
