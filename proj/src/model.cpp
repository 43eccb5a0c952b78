#include "nma/model.hpp"

#include <cmath>
#include <stdexcept>

#include "nma/stats.hpp"

namespace nma {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::blr: return "blr";
    case Variant::dp: return "dp";
    case Variant::dp_blr: return "dp_blr";
  }
  return "?";
}

std::optional<Variant> variant_from_string(const std::string& s) {
  if (s == "standard") return Variant::standard;
  if (s == "blr") return Variant::blr;
  if (s == "dp") return Variant::dp;
  if (s == "dp_blr") return Variant::dp_blr;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (H < 1) throw std::invalid_argument("H must be >= 1");
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (!(nu > 0)) throw std::invalid_argument("nu must be positive");
  if (!(s2 > 0)) throw std::invalid_argument("s2 must be positive");
  if (!(tau_hs_scale > 0)) throw std::invalid_argument("tau_hs_scale must be positive");
  if (!(sd_upper > 0)) throw std::invalid_argument("sd_upper must be positive");
  if (!(mu_prec > 0) || !(d_prec > 0) || !(b_prec > 0))
    throw std::invalid_argument("prior precisions must be positive");
}

ModelConfig default_config(Variant v, OutcomeKind kind, int n_treatments) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.H = uses_dp(v) ? n_treatments : 1;
  cfg.sd_upper = kind == OutcomeKind::binomial ? 2.0 : 10.0;
  cfg.mu_prec = (kind == OutcomeKind::binomial && !uses_dp(v)) ? 1e-4 : 1e-3;
  cfg.benefit =
      kind == OutcomeKind::binomial ? Benefit::higher_is_better : Benefit::lower_is_better;
  return cfg;
}

StickWeights stick_break(const Eigen::VectorXd& q) {
  const int H = static_cast<int>(q.size()) + 1;
  StickWeights w;
  w.p.resize(H);
  double remaining = 1.0;
  for (int j = 0; j < H - 1; ++j) {
    if (!(q[j] > 0) || !(q[j] < 1))
      throw std::domain_error("stick-break fraction outside (0,1)");
    w.p[j] = q[j] * remaining;
    remaining *= 1.0 - q[j];
  }
  w.p[H - 1] = remaining;
  return w;
}

double reg_horseshoe_var(double lambda, double tau_hs, double c2) {
  if (!(lambda > 0) || !(tau_hs > 0) || !(c2 > 0))
    throw std::domain_error("reg_horseshoe_var needs positive inputs");
  const double t2 = tau_hs * tau_hs;
  const double l2 = lambda * lambda;
  return t2 * c2 * l2 / (c2 + t2 * l2);
}

double log_prior(const ChainState& s, const ModelConfig& cfg) {
  double lp = 0;

  for (int i = 0; i < s.mu.size(); ++i) lp += norm_logpdf_prec(s.mu[i], 0.0, cfg.mu_prec);

  if (!(s.sd > 0) || !(s.sd < cfg.sd_upper)) return kNegInf;
  lp += -std::log(cfg.sd_upper);

  if (uses_blr(cfg.variant)) lp += norm_logpdf_prec(s.B, 0.0, cfg.b_prec);

  if (!uses_dp(cfg.variant)) {
    for (int k = 1; k < s.d.size(); ++k) lp += norm_logpdf_prec(s.d[k], 0.0, cfg.d_prec);
    return lp;
  }

  // regularized horseshoe hierarchy
  if (!(s.tau_hs > 0) || !(s.c2 > 0)) return kNegInf;
  lp += half_cauchy_logpdf(s.tau_hs, cfg.tau_hs_scale);
  // c2 = 1/u with u ~ Gamma(nu/2, rate 2/(nu*s2)); includes the Jacobian u -> c2
  lp += gamma_logpdf(1.0 / s.c2, 0.5 * cfg.nu, 2.0 / (cfg.nu * cfg.s2)) - 2.0 * std::log(s.c2);
  for (int h = 0; h < cfg.H; ++h) {
    if (!(s.lambda[h] > 0)) return kNegInf;
    lp += half_cauchy_logpdf(s.lambda[h], 1.0);
    const double v = reg_horseshoe_var(s.lambda[h], s.tau_hs, s.c2);
    lp += norm_logpdf_prec(s.theta[h], 0.0, 1.0 / v);
  }

  for (int j = 0; j < s.q.size(); ++j) {
    if (!(s.q[j] > 0) || !(s.q[j] < 1)) return kNegInf;
    lp += beta_logpdf(s.q[j], 1.0, cfg.alpha);
  }
  const StickWeights w = stick_break(s.q);
  for (int k = 1; k < s.cluster.size(); ++k) lp += std::log(w.p[s.cluster[k]]);

  return lp;
}

Model::Model(const Dataset& ds, const ModelConfig& cfg) : ds_(&ds), cfg_(cfg) {
  cfg_.validate();
  ns_ = ds.n_studies();
  nt_ = ds.n_treatments();
  arm_count_.reserve(static_cast<std::size_t>(ns_));
  study_offset_.reserve(static_cast<std::size_t>(ns_));
  for (int i = 0; i < ns_; ++i) {
    const auto& st = ds.studies[static_cast<std::size_t>(i)];
    study_offset_.push_back(total_arms_);
    arm_count_.push_back(static_cast<int>(st.arms.size()));
    for (int k = 0; k < static_cast<int>(st.arms.size()); ++k) {
      const auto& arm = st.arms[static_cast<std::size_t>(k)];
      arm_flat_.emplace_back(i + 1, k + 1);
      treat_.push_back(arm.treatment - 1);
      if (ds.outcome == OutcomeKind::binomial) {
        const auto& b = std::get<BinomialArm>(arm.outcome);
        const double r = static_cast<double>(b.events);
        const double n = static_cast<double>(b.size);
        r_.push_back(r);
        n_.push_back(n);
        log_choose_.push_back(std::lgamma(n + 1) - std::lgamma(r + 1) - std::lgamma(n - r + 1));
      } else {
        const auto& c = std::get<ContinuousArm>(arm.outcome);
        const double prec = 1.0 / (c.se * c.se);
        y_.push_back(c.mean);
        prec_.push_back(prec);
        norm_const_.push_back(0.5 * (std::log(prec) - kLog2Pi));
      }
      ++total_arms_;
    }
  }
}

ChainState Model::make_state() const {
  ChainState s;
  s.mu = Eigen::VectorXd::Zero(ns_);
  s.delta.resize(static_cast<std::size_t>(ns_));
  for (int i = 0; i < ns_; ++i)
    s.delta[static_cast<std::size_t>(i)] =
        Eigen::VectorXd::Zero(arm_count_[static_cast<std::size_t>(i)]);
  s.d = Eigen::VectorXd::Zero(nt_);
  s.sd = 0.5 * cfg_.sd_upper;
  s.B = 0;
  if (uses_dp(cfg_.variant)) {
    s.cluster = Eigen::VectorXi::Zero(nt_);
    s.cluster[0] = -1;
    s.theta = Eigen::VectorXd::Zero(cfg_.H);
    s.lambda = Eigen::VectorXd::Ones(cfg_.H);
    s.q = Eigen::VectorXd::Constant(std::max(cfg_.H - 1, 0), 0.5);
    sync_d(s);
  }
  return s;
}

void Model::sync_d(ChainState& s) const {
  if (!uses_dp(cfg_.variant)) return;
  for (int k = 1; k < nt_; ++k) s.d[k] = s.theta[s.cluster[k]];
}

bool Model::d_synced(const ChainState& s) const {
  if (!uses_dp(cfg_.variant)) return true;
  for (int k = 1; k < nt_; ++k)
    if (s.d[k] != s.theta[s.cluster[k]]) return false;
  return s.d[0] == 0;
}

double Model::linear_predictor(const ChainState& s, int i, int k) const {
  const int idx = study_offset_[static_cast<std::size_t>(i - 1)] + (k - 1);
  const int i0 = i - 1;
  double lp = s.mu[i0] + s.delta[static_cast<std::size_t>(i0)][k - 1];
  if (uses_blr(cfg_.variant)) {
    const int t_arm = treat_[static_cast<std::size_t>(idx)];
    const int t_base = treat_[static_cast<std::size_t>(study_offset_[static_cast<std::size_t>(i0)])];
    // beta_t = 0 for the reference, B for every other treatment
    const double beta_diff = (t_arm > 0 ? s.B : 0.0) - (t_base > 0 ? s.B : 0.0);
    lp += beta_diff * (s.mu[i0] - ds_->mx);
  }
  return lp;
}

Model::Moments Model::multiarm_moments(const ChainState& s, int i, int k) const {
  const int i0 = i - 1;
  const std::size_t off = static_cast<std::size_t>(study_offset_[static_cast<std::size_t>(i0)]);
  const int t_base = treat_[off];
  const auto& del = s.delta[static_cast<std::size_t>(i0)];
  // w[j] = delta[j] - (d[t_j] - d[t_1]); w[1] = 0; sw_k = sum_{j<k} w[j] / (k-1)
  double wsum = 0;
  for (int j = 2; j < k; ++j) {
    const int tj = treat_[off + static_cast<std::size_t>(j - 1)];
    wsum += del[j - 1] - (s.d[tj] - s.d[t_base]);
  }
  const double sw = wsum / static_cast<double>(k - 1);
  const int tk = treat_[off + static_cast<std::size_t>(k - 1)];
  Moments m;
  m.md = s.d[tk] - s.d[t_base] + sw;
  m.taud = (1.0 / (s.sd * s.sd)) * 2.0 * static_cast<double>(k - 1) / static_cast<double>(k);
  return m;
}

double Model::log_likelihood_arm(const ChainState& s, int i, int k) const {
  const std::size_t idx =
      static_cast<std::size_t>(study_offset_[static_cast<std::size_t>(i - 1)] + (k - 1));
  const double eta = linear_predictor(s, i, k);
  if (ds_->outcome == OutcomeKind::binomial) {
    // r*log(p) + (n-r)*log(1-p), written through softplus for stability
    return log_choose_[idx] - r_[idx] * softplus(-eta) - (n_[idx] - r_[idx]) * softplus(eta);
  }
  const double z = y_[idx] - eta;
  return norm_const_[idx] - 0.5 * prec_[idx] * z * z;
}

double Model::deviance_contribution(const ChainState& s, int i, int k) const {
  const std::size_t idx =
      static_cast<std::size_t>(study_offset_[static_cast<std::size_t>(i - 1)] + (k - 1));
  const double eta = linear_predictor(s, i, k);
  if (ds_->outcome == OutcomeKind::binomial) {
    const double n = n_[idx], r = r_[idx];
    const double rhat = inv_logit(eta) * n;
    double dev = 0;
    if (r > 0) dev += r * (std::log(r) - std::log(rhat));
    if (r < n) dev += (n - r) * (std::log(n - r) - std::log(n - rhat));
    return 2.0 * dev;
  }
  const double z = y_[idx] - eta;
  return z * z * prec_[idx];
}

double Model::log_likelihood(const ChainState& s) const {
  double ll = 0;
  for (int i = 1; i <= ns_; ++i)
    for (int k = 1; k <= n_arms(i); ++k) ll += log_likelihood_arm(s, i, k);
  return ll;
}

double Model::log_delta_density(const ChainState& s) const {
  if (!(s.sd > 0)) return kNegInf;
  double ld = 0;
  for (int i = 1; i <= ns_; ++i) {
    const auto& del = s.delta[static_cast<std::size_t>(i - 1)];
    for (int k = 2; k <= n_arms(i); ++k) {
      const Moments m = multiarm_moments(s, i, k);
      ld += norm_logpdf_prec(del[k - 1], m.md, m.taud);
    }
  }
  return ld;
}

double Model::total_residual_deviance(const ChainState& s) const {
  double dev = 0;
  for (int i = 1; i <= ns_; ++i)
    for (int k = 1; k <= n_arms(i); ++k) dev += deviance_contribution(s, i, k);
  return dev;
}

Eigen::VectorXd Model::arm_deviances(const ChainState& s) const {
  Eigen::VectorXd out(total_arms_);
  int idx = 0;
  for (int i = 1; i <= ns_; ++i)
    for (int k = 1; k <= n_arms(i); ++k) out[idx++] = deviance_contribution(s, i, k);
  return out;
}

double Model::log_posterior(const ChainState& s) const {
  const double lp = log_prior(s, cfg_);
  if (!std::isfinite(lp)) return kNegInf;
  return lp + log_delta_density(s) + log_likelihood(s);
}

Eigen::VectorXd Model::fitted_values(const ChainState& s) const {
  Eigen::VectorXd out(total_arms_);
  int idx = 0;
  for (int i = 1; i <= ns_; ++i)
    for (int k = 1; k <= n_arms(i); ++k) {
      const double eta = linear_predictor(s, i, k);
      out[idx++] = ds_->outcome == OutcomeKind::binomial ? inv_logit(eta) : eta;
    }
  return out;
}

double Model::deviance_at_fitted(const Eigen::VectorXd& fitted) const {
  double dev = 0;
  for (int idx = 0; idx < total_arms_; ++idx) {
    if (ds_->outcome == OutcomeKind::binomial) {
      const double n = n_[static_cast<std::size_t>(idx)], r = r_[static_cast<std::size_t>(idx)];
      const double rhat = fitted[idx] * n;
      if (r > 0) dev += 2.0 * r * (std::log(r) - std::log(rhat));
      if (r < n) dev += 2.0 * (n - r) * (std::log(n - r) - std::log(n - rhat));
    } else {
      const double z = y_[static_cast<std::size_t>(idx)] - fitted[idx];
      dev += z * z * prec_[static_cast<std::size_t>(idx)];
    }
  }
  return dev;
}

double Model::log_likelihood_at_fitted(const Eigen::VectorXd& fitted) const {
  double ll = 0;
  for (int idx = 0; idx < total_arms_; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx);
    if (ds_->outcome == OutcomeKind::binomial) {
      ll += log_choose_[i] + r_[i] * std::log(fitted[idx]) +
            (n_[i] - r_[i]) * std::log1p(-fitted[idx]);
    } else {
      const double z = y_[i] - fitted[idx];
      ll += norm_const_[i] - 0.5 * prec_[i] * z * z;
    }
  }
  return ll;
}

}  // namespace nma
