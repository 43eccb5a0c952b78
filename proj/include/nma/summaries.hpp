#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nma/sampler.hpp"

namespace nma {

struct LeagueCell {
  double median = 0, lower = 0, upper = 0;
  double p_col_better = 0;  // probability the column treatment beats the row treatment
  bool significant = false;
};

struct LeagueTable {
  std::vector<int> order;          // 0-based treatment indices, best first
  std::vector<std::string> names;  // ordered labels
  OutcomeKind outcome = OutcomeKind::binomial;
  bool convergence_warning = false;
  std::vector<LeagueCell> cells;  // nt*nt, row-major over ordered positions; diagonal unused

  int size() const { return static_cast<int>(order.size()); }
  const LeagueCell& cell(int row, int col) const {
    return cells[static_cast<std::size_t>(row * size() + col)];
  }
  // look up by treatment label instead of ordered position
  const LeagueCell& cell_by_name(const std::string& row, const std::string& col) const;
};

// Pairwise relative effects: cell(row, col) is the effect of the column
// treatment against the row treatment, exp(d_col - d_row) on the OR scale for
// binomial outcomes and d_col - d_row for continuous ones.
LeagueTable league_table(const FitResult& fit);

struct CoClusterMatrix {
  Eigen::MatrixXd prob;  // nt x nt, symmetric, unit diagonal
  std::vector<std::string> names;
};
CoClusterMatrix co_cluster_matrix(const FitResult& fit);

struct ModalPartition {
  std::vector<std::vector<int>> blocks;  // 1-based treatment IDs (reference excluded)
  double proportion = 0;
  std::string key;  // canonical encoding, e.g. "2,3,5|4"
};
ModalPartition modal_partition(const FitResult& fit);
std::string partition_to_string(const ModalPartition& part,
                                const std::vector<std::string>& names);

struct PriorClusterSummary {
  int median = 0, lower = 0, upper = 0;  // 2.5% / 97.5% of the count distribution
  std::vector<long long> histogram;      // histogram[k-1] = #sims with k occupied clusters
  long long n_sims = 0;
};
PriorClusterSummary prior_cluster_check(double alpha, int H, int n_treatments, long long n_sims,
                                        std::uint64_t seed);

struct EssRatio {
  int a = 0, b = 0;  // 1-based treatment IDs of the contrast d[a] - d[b]
  double ratio = 0;  // Var_standard / Var_lumped
  bool infinite = false;
};
std::vector<EssRatio> ess_ratio(const FitResult& fit_lumped, const FitResult& fit_standard,
                                const std::vector<std::pair<int, int>>& pairs);

// emission helpers used by the CLI and tests
void write_league_csv(const LeagueTable& t, std::ostream& out);
void write_league_text(const LeagueTable& t, std::ostream& out);
void write_cocluster_csv(const CoClusterMatrix& m, std::ostream& out);
void write_cocluster_svg(const CoClusterMatrix& m, std::ostream& out);

}  // namespace nma
