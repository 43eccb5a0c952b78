#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nma {

enum class OutcomeKind { binomial, continuous };

struct BinomialArm {
  long long events = 0;  // r
  long long size = 0;    // n
};

struct ContinuousArm {
  double mean = 0;  // y
  double se = 0;    // standard error of the arm mean
};

struct ArmRecord {
  int treatment = 0;  // 1-based treatment ID
  std::variant<BinomialArm, ContinuousArm> outcome;
};

struct StudyRow {
  std::string id;
  std::vector<ArmRecord> arms;  // sorted by treatment ID; arms[0] is the study baseline
};

// Ordered treatment labels; ID = position + 1, treatment 1 is the reference.
class TreatmentRegistry {
 public:
  TreatmentRegistry() = default;
  explicit TreatmentRegistry(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id - 1)); }
  const std::vector<std::string>& names() const { return names_; }
  int find(const std::string& label) const;  // 1-based ID, 0 if unknown
  int add(const std::string& label);         // returns existing or freshly assigned ID

 private:
  std::vector<std::string> names_;
};

struct Dataset {
  TreatmentRegistry registry;
  std::vector<StudyRow> studies;
  OutcomeKind outcome = OutcomeKind::binomial;
  double mx = 0;  // centering constant for baseline-risk regression

  int n_studies() const { return static_cast<int>(studies.size()); }
  int n_treatments() const { return registry.size(); }
  int n_arms() const;
  std::string content_hash() const;  // stable fingerprint used to match fits to data
};

struct LoadOptions {
  std::optional<double> mx;                 // overrides the computed default
  std::string registry_path;                // optional explicit ordering, one label per line
  std::vector<std::string> registry_names;  // same, given directly
  std::optional<OutcomeKind> expect;        // reject files whose header disagrees
};

Dataset load_dataset(const std::string& path, const LoadOptions& opts = {});
Dataset parse_dataset(std::istream& in, const std::string& source_name,
                      const LoadOptions& opts = {});
void write_dataset_csv(const Dataset& ds, std::ostream& out);

struct Connectivity {
  bool connected = false;
  std::vector<std::vector<int>> components;  // 1-based treatment IDs per component
};
Connectivity check_connectivity(const Dataset& ds);

struct NetworkStats {
  // node_weight[t-1]: total patients (binomial) or sum of inverse variances (continuous)
  Eigen::VectorXd node_weight;
  // pair_trials(a-1, b-1): number of studies containing both treatments
  Eigen::MatrixXi pair_trials;
};
NetworkStats network_stats(const Dataset& ds);
void write_network_stats_csv(const Dataset& ds, const NetworkStats& st, std::ostream& out);

}  // namespace nma
