#pragma once

#include <map>
#include <string>
#include <vector>

#include "rangemap/simulator.hpp"

namespace rangemap::report {

struct SweepRow {
  double sigma = 0.0;
  int seed = 0;
  std::string method;
  sim::EvalResult result;
};

struct SweepData {
  std::vector<SweepRow> rows;
  /// Mahalanobis distances of accepted matches at the last sweep sigma.
  std::map<std::string, std::vector<double>> final_sigma_distances;
};

std::string sweep_csv(const SweepData& data);
/// Per-sigma mean F1 per method.
std::string summary_csv(const SweepData& data);
std::string f1_svg(const SweepData& data);
std::string histogram_svg(const SweepData& data);

}  // namespace rangemap::report
