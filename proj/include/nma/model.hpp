#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "nma/dataset.hpp"

namespace nma {

enum class Variant { standard, blr, dp, dp_blr };
enum class Benefit { higher_is_better, lower_is_better };

inline bool uses_blr(Variant v) { return v == Variant::blr || v == Variant::dp_blr; }
inline bool uses_dp(Variant v) { return v == Variant::dp || v == Variant::dp_blr; }
const char* variant_name(Variant v);
std::optional<Variant> variant_from_string(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::standard;
  int H = 1;                  // cluster truncation (DP variants)
  double alpha = 1.0;         // DP concentration
  double nu = 1.0;            // slab degrees of freedom
  double s2 = 1.0;            // slab scale^2
  double tau_hs_scale = 1.0;  // half-Cauchy scale of the global shrinkage
  double sd_upper = 2.0;      // upper bound of the uniform prior on the between-trial SD
  double mu_prec = 1e-4;      // baseline prior precision
  double d_prec = 1e-3;       // treatment-effect prior precision (non-DP variants)
  double b_prec = 1e-3;       // interaction prior precision
  Benefit benefit = Benefit::higher_is_better;

  void validate() const;  // throws std::invalid_argument
};

// Prior constants per variant as in the reference analyses: the plain binomial
// models use mu precision 1e-4, everything else 1e-3; the SD bound is 2 for
// binomial outcomes and 10 for continuous; H defaults to the treatment count.
ModelConfig default_config(Variant v, OutcomeKind kind, int n_treatments);

// One chain's full parameter vector. Treatments, studies and clusters are
// indexed 0-based here; slot 0 of d is the reference treatment and stays 0.
struct ChainState {
  Eigen::VectorXd mu;                  // per-study baseline
  std::vector<Eigen::VectorXd> delta;  // per study; delta[i][0] == 0
  Eigen::VectorXd d;                   // per treatment; d[0] == 0
  double sd = 0.5;                     // between-trial SD
  double B = 0;                        // shared interaction coefficient (BLR variants)
  // DP block (sized 0 outside DP variants)
  Eigen::VectorXi cluster;  // per treatment; cluster[k] in [0,H) for k >= 1, cluster[0] = -1
  Eigen::VectorXd theta;    // per-cluster effect
  Eigen::VectorXd lambda;   // per-cluster local scale
  double tau_hs = 1.0;      // global shrinkage scale
  double c2 = 1.0;          // slab width^2
  Eigen::VectorXd q;        // stick-break fractions, length H-1
};

struct StickWeights {
  Eigen::VectorXd p;  // length H, sums to 1
};

// p[0] = q[0]; p[j] = q[j] * prod_{l<j}(1-q[l]); p[H-1] = prod(1-q)
StickWeights stick_break(const Eigen::VectorXd& q);

// Effective prior variance of a cluster effect under the regularized
// horseshoe: tau^2 * c^2 lambda^2 / (c^2 + tau^2 lambda^2).
double reg_horseshoe_var(double lambda, double tau_hs, double c2);

// Parameter priors only (the trial-effect layer lives in Model, it needs the
// data layout). Returns -inf outside the support.
double log_prior(const ChainState& s, const ModelConfig& cfg);

// Binds a dataset and config; all density evaluations go through here.
// Study index i and arm index k below are 1-based, matching the data layout.
class Model {
 public:
  Model(const Dataset& ds, const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const Dataset& data() const { return *ds_; }
  int n_studies() const { return ns_; }
  int n_treatments() const { return nt_; }
  int n_arms(int i) const { return arm_count_[static_cast<std::size_t>(i - 1)]; }
  int total_arms() const { return total_arms_; }

  ChainState make_state() const;         // correctly sized, zero effects, in-support scales
  void sync_d(ChainState& s) const;      // DP variants: d[k] = theta[cluster[k]]
  bool d_synced(const ChainState& s) const;

  double linear_predictor(const ChainState& s, int i, int k) const;

  struct Moments {
    double md;    // mean of the trial-effect distribution, with multi-arm correction
    double taud;  // precision of the trial-effect distribution
  };
  Moments multiarm_moments(const ChainState& s, int i, int k) const;  // k >= 2

  double log_likelihood_arm(const ChainState& s, int i, int k) const;
  double deviance_contribution(const ChainState& s, int i, int k) const;

  double log_likelihood(const ChainState& s) const;
  double log_delta_density(const ChainState& s) const;  // random-effects layer
  double total_residual_deviance(const ChainState& s) const;
  Eigen::VectorXd arm_deviances(const ChainState& s) const;  // study-major flattening
  double log_posterior(const ChainState& s) const;

  // fitted value per arm: event probability (binomial) or arm mean (continuous)
  Eigen::VectorXd fitted_values(const ChainState& s) const;
  // deviance and log-likelihood evaluated at externally supplied fitted values
  double deviance_at_fitted(const Eigen::VectorXd& fitted) const;
  double log_likelihood_at_fitted(const Eigen::VectorXd& fitted) const;

  // flattened (study, arm) order used by arm_deviances
  const std::vector<std::pair<int, int>>& arm_index() const { return arm_flat_; }

 private:
  const Dataset* ds_;
  ModelConfig cfg_;
  int ns_ = 0, nt_ = 0, total_arms_ = 0;
  std::vector<int> arm_count_;
  // flat per-arm tables, study-major
  std::vector<std::pair<int, int>> arm_flat_;  // (i, k), 1-based
  std::vector<int> treat_;                     // 0-based treatment index per arm
  std::vector<double> r_, n_, log_choose_;     // binomial
  std::vector<double> y_, prec_, norm_const_;  // continuous
  std::vector<int> study_offset_;              // arm table offset per study
};

}  // namespace nma
