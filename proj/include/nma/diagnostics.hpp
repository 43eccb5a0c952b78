#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nma/sampler.hpp"

namespace nma {

struct FitStatsRow {
  std::string label;
  bool has_b = false;
  double b_median = 0, b_lower = 0, b_upper = 0;
  double dres = 0;  // posterior mean total residual deviance
  double sd_median = 0, sd_lower = 0, sd_upper_ci = 0;
  double dic = 0;  // full-likelihood scale
  double dic_res = 0;
  double pd = 0;
};

struct CompareTable {
  std::vector<FitStatsRow> rows;  // sorted by DIC ascending
  std::vector<std::string> notes;
};

CompareTable compare_fits(const std::vector<const FitResult*>& fits,
                          const std::vector<std::string>& labels);
void write_fitstats_csv(const CompareTable& t, std::ostream& out);
void write_fitstats_text(const CompareTable& t, std::ostream& out);

struct ConvergenceReport {
  std::vector<std::pair<std::string, double>> rhat;  // sorted descending
  double threshold = 1.05;
  bool pass = false;
};

ConvergenceReport convergence_report(const FitResult& fit);
void write_convergence_text(const ConvergenceReport& r, std::ostream& out);

}  // namespace nma
