#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nma/model.hpp"
#include "nma/rng.hpp"
#include "nma/stats.hpp"

namespace nma {

struct SamplerSettings {
  int n_chains = 4;
  int n_adapt = 5000;
  int n_burnin = 20000;
  int n_iter = 50000;
  int thin = 10;
  std::uint64_t master_seed = 1;
  double target_accept = 0.44;
  int adapt_window = 50;
  int threads = 0;                  // 0: one thread per chain, 1: strictly sequential
  std::optional<double> fixed_sd;   // pin the between-trial SD (validation hook)

  void validate() const;
  int draws_per_chain() const { return n_iter / thin; }
};

// ---- generic adaptive random-walk machinery ----

enum class Support { real, positive, unit_interval, interval };

struct ScalarParam {
  Support support = Support::real;
  double lo = 0, hi = 1;  // interval bounds
  double step = 0.5;      // proposal SD on the unconstrained scale
  int window = 50;
  long long proposed = 0, accepted = 0;  // counted outside adaptation
  int win_prop = 0, win_acc = 0, batches = 0;

  double rate() const {
    return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

inline double to_unconstrained(double x, const ScalarParam& p) {
  switch (p.support) {
    case Support::real: return x;
    case Support::positive: return std::log(x);
    case Support::unit_interval: return logit(x);
    case Support::interval: return logit((x - p.lo) / (p.hi - p.lo));
  }
  return x;
}

inline double from_unconstrained(double z, const ScalarParam& p) {
  switch (p.support) {
    case Support::real: return z;
    case Support::positive: return std::exp(z);
    case Support::unit_interval: return inv_logit(z);
    case Support::interval: return p.lo + (p.hi - p.lo) * inv_logit(z);
  }
  return z;
}

// log |dx/dz| at x
inline double log_jacobian(double x, const ScalarParam& p) {
  switch (p.support) {
    case Support::real: return 0.0;
    case Support::positive: return std::log(x);
    case Support::unit_interval: return std::log(x) + std::log1p(-x);
    case Support::interval:
      return std::log(x - p.lo) + std::log(p.hi - x) - std::log(p.hi - p.lo);
  }
  return 0.0;
}

// One Metropolis step on the unconstrained scale. `apply` writes a candidate
// value into the state (including any derived quantities), `eval` returns the
// full log target of the current state. `lp` caches eval() of the entering
// state and is kept in sync. On rejection the old value is re-applied.
template <class Apply, class Eval>
bool rw_update(double cur, double& lp, Apply&& apply, Eval&& eval, ScalarParam& p, Rng& rng,
               double target_accept, bool adapting) {
  const double z = to_unconstrained(cur, p);
  const double zp = z + p.step * rng.gaussian();
  const double xp = from_unconstrained(zp, p);
  bool acc = false;
  if (std::isfinite(xp)) {
    apply(xp);
    const double lpp = eval();
    const double lr = lpp + log_jacobian(xp, p) - lp - log_jacobian(cur, p);
    if (std::isfinite(lpp) && (lr >= 0 || std::log(rng.uniform()) < lr)) {
      acc = true;
      lp = lpp;
    } else {
      apply(cur);
    }
  }
  if (adapting) {
    ++p.win_prop;
    p.win_acc += acc;
    if (p.win_prop >= p.window) {
      const double rate = static_cast<double>(p.win_acc) / static_cast<double>(p.win_prop);
      const double eta = std::min(0.33, 3.0 / std::sqrt(static_cast<double>(++p.batches)));
      p.step = std::clamp(p.step * std::exp(eta * (rate - target_accept)), 1e-8, 1e6);
      p.win_prop = p.win_acc = 0;
    }
  } else {
    ++p.proposed;
    p.accepted += acc;
  }
  return acc;
}

// Convenience wrapper for a free-standing scalar target.
template <class LogDens>
bool update_scalar_rw(double& x, double& lp, LogDens&& logdens, ScalarParam& p, Rng& rng,
                      double target_accept = 0.44, bool adapting = true) {
  return rw_update(
      x, lp, [&](double v) { x = v; }, [&] { return logdens(x); }, p, rng, target_accept,
      adapting);
}

// ---- fit results ----

struct ChainDraws {
  Eigen::MatrixXd d;        // ndraw x (nt-1), treatments 2..nt
  Eigen::VectorXd sd;       // ndraw
  Eigen::VectorXd B;        // ndraw (BLR variants, else empty)
  Eigen::MatrixXi cluster;  // ndraw x (nt-1), 1-based labels (DP variants, else empty)
  Eigen::MatrixXd theta;    // ndraw x H (DP variants, else empty)
  Eigen::VectorXd totresdev;
  Eigen::VectorXd loglik;
};

struct DicComponents {
  double dbar_res = 0, dbar_raw = 0;  // posterior mean deviance, residual / full scale
  // plug-in at the posterior means of the predictor inputs (mu, delta, B)
  double dhat_res = 0, dhat_raw = 0, pd_plugin = 0, dic_plugin_res = 0, dic_plugin_raw = 0;
  // plug-in at the posterior-mean fitted values (the leverage form used for
  // arm-level fit tables); this is the reported DIC
  double dhat_fit_res = 0, dhat_fit_raw = 0, pd = 0, dic_res = 0, dic_raw = 0;
  // moment estimator var(D)/2, diagnostic only
  double pd_var = 0, dic_var_raw = 0;
  bool pd_warning = false;
};

struct FitResult {
  ModelConfig config;
  SamplerSettings settings;
  std::string dataset_name;
  std::string dataset_hash;
  OutcomeKind outcome = OutcomeKind::binomial;
  double mx = 0;
  std::vector<std::string> treatments;
  int n_studies = 0;
  std::vector<ChainDraws> chains;
  Eigen::VectorXd devbar_arm;  // posterior mean deviance per arm, study-major
  std::map<std::string, double> accept_rates;
  std::vector<std::pair<std::string, double>> rhat;  // monitored scalar -> split-chain PSRF
  bool converged = false;
  DicComponents dic;

  int n_treatments() const { return static_cast<int>(treatments.size()); }
  int n_chains() const { return static_cast<int>(chains.size()); }
  int draws_per_chain() const {
    return chains.empty() ? 0 : static_cast<int>(chains[0].sd.size());
  }
  int total_draws() const {
    int n = 0;
    for (const auto& c : chains) n += static_cast<int>(c.sd.size());
    return n;
  }

  Eigen::MatrixXd pooled_d() const;        // total_draws x (nt-1)
  Eigen::MatrixXi pooled_cluster() const;  // total_draws x (nt-1)
  std::vector<double> pooled_sd() const;
  std::vector<double> pooled_B() const;
  std::vector<double> pooled_totresdev() const;
};

// Exact categorical Gibbs update of a treatment's cluster assignment (k is
// the 0-based treatment index, >= 1); sets d[k] = theta[new cluster] and
// refreshes the cached log posterior.
void update_cluster_gibbs(const Model& model, ChainState& s, double& lp, int k, Rng& rng);

// Split-chain potential scale reduction factor; +inf when the pooled
// within-chain variance is zero.
double gelman_rubin(const std::vector<Eigen::VectorXd>& chains);

FitResult run_fit(const Dataset& ds, const ModelConfig& cfg, const SamplerSettings& settings);

}  // namespace nma
