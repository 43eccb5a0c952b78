#include "nma/sampler.hpp"

#include <algorithm>
#include <future>
#include <stdexcept>
#include <thread>

namespace nma {

void SamplerSettings::validate() const {
  if (n_chains < 1) throw std::invalid_argument("n_chains must be >= 1");
  if (n_adapt < 1 || n_burnin < 1 || n_iter < 1)
    throw std::invalid_argument("iteration counts must be positive");
  if (thin < 1) throw std::invalid_argument("thin must be >= 1");
  if (!(target_accept > 0) || !(target_accept < 1))
    throw std::invalid_argument("target_accept must be in (0,1)");
  if (adapt_window < 1) throw std::invalid_argument("adapt_window must be >= 1");
  if (n_iter / thin < 1) throw std::invalid_argument("thin exceeds n_iter");
}

namespace {

struct BlockCounts {
  long long proposed = 0, accepted = 0;
};

struct ChainResult {
  ChainDraws draws;
  Eigen::VectorXd sum_mu;
  std::vector<Eigen::VectorXd> sum_delta;
  double sum_B = 0;
  Eigen::VectorXd sum_dev;
  Eigen::VectorXd sum_fitted;
  double sum_totresdev = 0;
  double sum_deviance_raw = 0;   // sum of -2*loglik
  double sum_deviance_raw2 = 0;  // sum of squares, for the moment estimator
  long long count = 0;
  std::map<std::string, BlockCounts> accept;
};

double baseline_spread(const Dataset& ds) {
  if (ds.outcome == OutcomeKind::binomial) return 1.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : ds.studies) {
    const double y = std::get<ContinuousArm>(s.arms[0].outcome).mean;
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  return std::max(1.0, 0.05 * (hi - lo));
}

ChainState initial_state(const Model& model, const SamplerSettings& st, Rng& rng) {
  const Dataset& ds = model.data();
  const ModelConfig& cfg = model.config();
  const double spread = baseline_spread(ds);
  for (int attempt = 0; attempt < 100; ++attempt) {
    ChainState s = model.make_state();
    for (int i = 0; i < model.n_studies(); ++i) {
      const auto& arm0 = ds.studies[static_cast<std::size_t>(i)].arms[0];
      double emp;
      if (ds.outcome == OutcomeKind::binomial) {
        const auto& b = std::get<BinomialArm>(arm0.outcome);
        emp = logit((static_cast<double>(b.events) + 0.5) / (static_cast<double>(b.size) + 1.0));
      } else {
        emp = std::get<ContinuousArm>(arm0.outcome).mean;
      }
      s.mu[i] = emp + spread * rng.gaussian();
      auto& del = s.delta[static_cast<std::size_t>(i)];
      for (int k = 1; k < del.size(); ++k) del[k] = spread * rng.gaussian();
    }
    s.sd = st.fixed_sd ? *st.fixed_sd : cfg.sd_upper * (0.25 + 0.5 * rng.uniform());
    if (uses_blr(cfg.variant)) s.B = 0.25 * rng.gaussian();
    if (uses_dp(cfg.variant)) {
      // overdispersed but tail-trimmed hyper starts so early sweeps stay sane
      s.tau_hs = std::min(rng.half_cauchy(cfg.tau_hs_scale), 10.0);
      s.c2 = std::clamp(1.0 / rng.gamma(0.5 * cfg.nu, 2.0 / (cfg.nu * cfg.s2)), 0.01 * cfg.s2,
                        100.0 * cfg.s2);
      for (int h = 0; h < cfg.H; ++h) {
        s.lambda[h] = std::min(rng.half_cauchy(1.0), 10.0);
        s.theta[h] =
            std::sqrt(reg_horseshoe_var(s.lambda[h], s.tau_hs, s.c2)) * rng.gaussian();
      }
      for (int j = 0; j < s.q.size(); ++j) s.q[j] = rng.beta(1.0, cfg.alpha);
      for (int k = 1; k < model.n_treatments(); ++k) s.cluster[k] = rng.uniform_int(cfg.H);
      model.sync_d(s);
    } else {
      for (int k = 1; k < model.n_treatments(); ++k) s.d[k] = spread * rng.gaussian();
    }
    if (std::isfinite(model.log_posterior(s))) return s;
  }
  throw std::runtime_error("sampler initialization failed: no finite log-posterior in 100 draws");
}

struct ParamBlocks {
  std::vector<ScalarParam> mu, d, theta, lambda, q;
  std::vector<std::vector<ScalarParam>> delta;
  ScalarParam sd, B, tau_hs, c2;
};

ParamBlocks make_blocks(const Model& model, const SamplerSettings& st) {
  const ModelConfig& cfg = model.config();
  const double eff_step = model.data().outcome == OutcomeKind::binomial ? 0.5 : 2.0;
  ParamBlocks pb;
  auto real_param = [&](double step) {
    ScalarParam p;
    p.step = step;
    p.window = st.adapt_window;
    return p;
  };
  pb.mu.assign(static_cast<std::size_t>(model.n_studies()), real_param(eff_step));
  pb.delta.resize(static_cast<std::size_t>(model.n_studies()));
  for (int i = 0; i < model.n_studies(); ++i)
    pb.delta[static_cast<std::size_t>(i)].assign(
        static_cast<std::size_t>(model.n_arms(i + 1)), real_param(eff_step));
  pb.d.assign(static_cast<std::size_t>(model.n_treatments()), real_param(eff_step));
  pb.B = real_param(0.25);
  pb.sd = real_param(0.5);
  pb.sd.support = Support::interval;
  pb.sd.lo = 0;
  pb.sd.hi = cfg.sd_upper;
  if (uses_dp(cfg.variant)) {
    pb.theta.assign(static_cast<std::size_t>(cfg.H), real_param(eff_step));
    pb.lambda.assign(static_cast<std::size_t>(cfg.H), real_param(1.0));
    for (auto& p : pb.lambda) p.support = Support::positive;
    pb.tau_hs = real_param(1.0);
    pb.tau_hs.support = Support::positive;
    pb.c2 = real_param(1.0);
    pb.c2.support = Support::positive;
    pb.q.assign(static_cast<std::size_t>(std::max(cfg.H - 1, 0)), real_param(1.0));
    for (auto& p : pb.q) p.support = Support::unit_interval;
  }
  return pb;
}

ChainResult run_chain(const Model& model, const SamplerSettings& st, int chain_idx) {
  const ModelConfig& cfg = model.config();
  const int ns = model.n_studies();
  const int nt = model.n_treatments();
  const bool dp = uses_dp(cfg.variant);
  const bool blr = uses_blr(cfg.variant);
  const double target = st.target_accept;

  Rng rng(st.master_seed, static_cast<std::uint64_t>(chain_idx) + 1);
  ChainState s = initial_state(model, st, rng);
  ParamBlocks pb = make_blocks(model, st);
  double lp = model.log_posterior(s);

  const int ndraw = st.draws_per_chain();
  ChainResult out;
  out.draws.d.resize(ndraw, nt - 1);
  out.draws.sd.resize(ndraw);
  if (blr) out.draws.B.resize(ndraw);
  if (dp) {
    out.draws.cluster.resize(ndraw, nt - 1);
    out.draws.theta.resize(ndraw, cfg.H);
  }
  out.draws.totresdev.resize(ndraw);
  out.draws.loglik.resize(ndraw);
  out.sum_mu = Eigen::VectorXd::Zero(ns);
  out.sum_delta.resize(static_cast<std::size_t>(ns));
  for (int i = 0; i < ns; ++i)
    out.sum_delta[static_cast<std::size_t>(i)] =
        Eigen::VectorXd::Zero(model.n_arms(i + 1));
  out.sum_dev = Eigen::VectorXd::Zero(model.total_arms());
  out.sum_fitted = Eigen::VectorXd::Zero(model.total_arms());

  auto eval = [&] { return model.log_posterior(s); };

  const long long total_sweeps =
      static_cast<long long>(st.n_adapt) + st.n_burnin + st.n_iter;
  int stored = 0;
  for (long long sweep = 0; sweep < total_sweeps; ++sweep) {
    const bool adapting = sweep < st.n_adapt;

    for (int i = 0; i < ns; ++i)
      rw_update(
          s.mu[i], lp, [&](double v) { s.mu[i] = v; }, eval,
          pb.mu[static_cast<std::size_t>(i)], rng, target, adapting);

    for (int i = 0; i < ns; ++i) {
      auto& del = s.delta[static_cast<std::size_t>(i)];
      for (int k = 1; k < del.size(); ++k)
        rw_update(
            del[k], lp, [&](double v) { del[k] = v; }, eval,
            pb.delta[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)], rng, target,
            adapting);
    }

    if (!dp) {
      for (int k = 1; k < nt; ++k)
        rw_update(
            s.d[k], lp, [&](double v) { s.d[k] = v; }, eval,
            pb.d[static_cast<std::size_t>(k)], rng, target, adapting);
    } else {
      for (int k = 1; k < nt; ++k) update_cluster_gibbs(model, s, lp, k, rng);
      for (int h = 0; h < cfg.H; ++h)
        rw_update(
            s.theta[h], lp,
            [&](double v) {
              s.theta[h] = v;
              for (int k = 1; k < nt; ++k)
                if (s.cluster[k] == h) s.d[k] = v;
            },
            eval, pb.theta[static_cast<std::size_t>(h)], rng, target, adapting);
      for (int h = 0; h < cfg.H; ++h)
        rw_update(
            s.lambda[h], lp, [&](double v) { s.lambda[h] = v; }, eval,
            pb.lambda[static_cast<std::size_t>(h)], rng, target, adapting);
      rw_update(
          s.tau_hs, lp, [&](double v) { s.tau_hs = v; }, eval, pb.tau_hs, rng, target, adapting);
      rw_update(
          s.c2, lp, [&](double v) { s.c2 = v; }, eval, pb.c2, rng, target, adapting);
      for (int j = 0; j < s.q.size(); ++j)
        rw_update(
            s.q[j], lp, [&](double v) { s.q[j] = v; }, eval,
            pb.q[static_cast<std::size_t>(j)], rng, target, adapting);
    }

    if (blr)
      rw_update(
          s.B, lp, [&](double v) { s.B = v; }, eval, pb.B, rng, target, adapting);

    if (!st.fixed_sd)
      rw_update(
          s.sd, lp, [&](double v) { s.sd = v; }, eval, pb.sd, rng, target, adapting);

    const long long post = sweep - st.n_adapt - st.n_burnin + 1;
    if (post >= 1 && post % st.thin == 0 && stored < ndraw) {
      if (!std::isfinite(lp) || !model.d_synced(s))
        throw std::logic_error("retained draw violates sampler invariants");
      for (int k = 1; k < nt; ++k) out.draws.d(stored, k - 1) = s.d[k];
      out.draws.sd[stored] = s.sd;
      if (blr) out.draws.B[stored] = s.B;
      if (dp) {
        for (int k = 1; k < nt; ++k) out.draws.cluster(stored, k - 1) = s.cluster[k] + 1;
        out.draws.theta.row(stored) = s.theta.transpose();
      }
      const double totdev = model.total_residual_deviance(s);
      const double ll = model.log_likelihood(s);
      out.draws.totresdev[stored] = totdev;
      out.draws.loglik[stored] = ll;
      out.sum_mu += s.mu;
      for (int i = 0; i < ns; ++i) out.sum_delta[static_cast<std::size_t>(i)] += s.delta[static_cast<std::size_t>(i)];
      out.sum_B += s.B;
      out.sum_dev += model.arm_deviances(s);
      out.sum_fitted += model.fitted_values(s);
      out.sum_totresdev += totdev;
      out.sum_deviance_raw += -2.0 * ll;
      out.sum_deviance_raw2 += 4.0 * ll * ll;
      ++out.count;
      ++stored;
    }
  }

  auto harvest = [&](const std::string& name, const std::vector<ScalarParam>& ps) {
    BlockCounts c;
    for (const auto& p : ps) {
      c.proposed += p.proposed;
      c.accepted += p.accepted;
    }
    if (c.proposed) out.accept[name] = c;
  };
  harvest("mu", pb.mu);
  {
    BlockCounts c;
    for (const auto& row : pb.delta)
      for (const auto& p : row) {
        c.proposed += p.proposed;
        c.accepted += p.accepted;
      }
    if (c.proposed) out.accept["delta"] = c;
  }
  if (!dp) harvest("d", pb.d);
  if (dp) {
    harvest("theta", pb.theta);
    harvest("lambda", pb.lambda);
    harvest("q", pb.q);
    out.accept["tau_hs"] = {pb.tau_hs.proposed, pb.tau_hs.accepted};
    out.accept["c2"] = {pb.c2.proposed, pb.c2.accepted};
  }
  if (blr) out.accept["B"] = {pb.B.proposed, pb.B.accepted};
  if (!st.fixed_sd) out.accept["sd"] = {pb.sd.proposed, pb.sd.accepted};
  return out;
}

}  // namespace

void update_cluster_gibbs(const Model& model, ChainState& s, double& lp, int k, Rng& rng) {
  const int H = model.config().H;
  const StickWeights w = stick_break(s.q);
  std::vector<double> logw(static_cast<std::size_t>(H));
  for (int h = 0; h < H; ++h) {
    s.cluster[k] = h;
    s.d[k] = s.theta[h];
    // only the categorical prior and the trial-effect layer depend on d[k]
    logw[static_cast<std::size_t>(h)] = std::log(w.p[h]) + model.log_delta_density(s);
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double total = 0;
  for (auto& lw : logw) {
    lw = std::exp(lw - mx);
    total += lw;
  }
  const double u = rng.uniform() * total;
  double acc = 0;
  int pick = H - 1;
  for (int h = 0; h < H; ++h) {
    acc += logw[static_cast<std::size_t>(h)];
    if (u <= acc) {
      pick = h;
      break;
    }
  }
  s.cluster[k] = pick;
  s.d[k] = s.theta[pick];
  lp = model.log_posterior(s);
}

double gelman_rubin(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("gelman_rubin needs at least 2 chains");
  const auto len = chains[0].size();
  for (const auto& c : chains)
    if (c.size() != len) throw std::invalid_argument("gelman_rubin needs equal chain lengths");
  if (len < 10) throw std::invalid_argument("gelman_rubin needs chains of length >= 10");

  const Eigen::Index half = len / 2;
  std::vector<Eigen::VectorXd> seq;
  for (const auto& c : chains) {
    seq.push_back(c.head(half));
    seq.push_back(c.tail(half));
  }
  const double m = static_cast<double>(seq.size());
  const double n = static_cast<double>(half);
  double wsum = 0;
  std::vector<double> means;
  for (const auto& s : seq) {
    const double mu = s.mean();
    means.push_back(mu);
    wsum += (s.array() - mu).square().sum() / (n - 1.0);
  }
  const double W = wsum / m;
  double gmean = 0;
  for (double v : means) gmean += v;
  gmean /= m;
  double bvar = 0;
  for (double v : means) bvar += (v - gmean) * (v - gmean);
  const double B = n * bvar / (m - 1.0);
  if (W <= 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(((n - 1.0) / n * W + B / n) / W);
}

Eigen::MatrixXd FitResult::pooled_d() const {
  Eigen::Index total = 0;
  for (const auto& c : chains) total += c.d.rows();
  Eigen::MatrixXd out(total, n_treatments() - 1);
  Eigen::Index at = 0;
  for (const auto& c : chains) {
    out.middleRows(at, c.d.rows()) = c.d;
    at += c.d.rows();
  }
  return out;
}

Eigen::MatrixXi FitResult::pooled_cluster() const {
  Eigen::Index total = 0;
  for (const auto& c : chains) total += c.cluster.rows();
  Eigen::MatrixXi out(total, n_treatments() - 1);
  Eigen::Index at = 0;
  for (const auto& c : chains) {
    out.middleRows(at, c.cluster.rows()) = c.cluster;
    at += c.cluster.rows();
  }
  return out;
}

std::vector<double> FitResult::pooled_sd() const {
  std::vector<double> out;
  for (const auto& c : chains) out.insert(out.end(), c.sd.begin(), c.sd.end());
  return out;
}

std::vector<double> FitResult::pooled_B() const {
  std::vector<double> out;
  for (const auto& c : chains) out.insert(out.end(), c.B.begin(), c.B.end());
  return out;
}

std::vector<double> FitResult::pooled_totresdev() const {
  std::vector<double> out;
  for (const auto& c : chains) out.insert(out.end(), c.totresdev.begin(), c.totresdev.end());
  return out;
}

FitResult run_fit(const Dataset& ds, const ModelConfig& cfg, const SamplerSettings& settings) {
  cfg.validate();
  settings.validate();
  if (settings.fixed_sd && !(*settings.fixed_sd > 0 && *settings.fixed_sd < cfg.sd_upper))
    throw std::invalid_argument("fixed_sd outside (0, sd_upper)");
  const Connectivity conn = check_connectivity(ds);
  if (!conn.connected)
    throw std::runtime_error("evidence network is disconnected; cannot fit a joint model");

  const Model model(ds, cfg);

  std::vector<ChainResult> results(static_cast<std::size_t>(settings.n_chains));
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int threads =
      settings.threads == 0 ? static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(settings.n_chains)))
                            : settings.threads;
  if (threads <= 1) {
    for (int c = 0; c < settings.n_chains; ++c)
      results[static_cast<std::size_t>(c)] = run_chain(model, settings, c);
  } else {
    std::vector<std::future<ChainResult>> futs;
    futs.reserve(static_cast<std::size_t>(settings.n_chains));
    for (int c = 0; c < settings.n_chains; ++c)
      futs.push_back(std::async(std::launch::async,
                                [&model, &settings, c] { return run_chain(model, settings, c); }));
    for (int c = 0; c < settings.n_chains; ++c)
      results[static_cast<std::size_t>(c)] = futs[static_cast<std::size_t>(c)].get();
  }

  FitResult fit;
  fit.config = cfg;
  fit.settings = settings;
  fit.dataset_name = "";
  fit.dataset_hash = ds.content_hash();
  fit.outcome = ds.outcome;
  fit.mx = ds.mx;
  fit.treatments = ds.registry.names();
  fit.n_studies = ds.n_studies();
  for (auto& r : results) fit.chains.push_back(std::move(r.draws));

  // pooled acceptance rates
  std::map<std::string, BlockCounts> pooled;
  for (const auto& r : results)
    for (const auto& [name, c] : r.accept) {
      pooled[name].proposed += c.proposed;
      pooled[name].accepted += c.accepted;
    }
  for (const auto& [name, c] : pooled)
    fit.accept_rates[name] =
        c.proposed ? static_cast<double>(c.accepted) / static_cast<double>(c.proposed) : 0.0;

  // convergence diagnostics on the monitored scalars
  const int nt = ds.n_treatments();
  auto column = [&](auto&& get) {
    std::vector<Eigen::VectorXd> per_chain;
    for (const auto& c : fit.chains) per_chain.push_back(get(c));
    return gelman_rubin(per_chain);
  };
  for (int k = 1; k < nt; ++k)
    fit.rhat.emplace_back("d[" + std::to_string(k + 1) + "]",
                          column([&](const ChainDraws& c) { return Eigen::VectorXd(c.d.col(k - 1)); }));
  if (!settings.fixed_sd)
    fit.rhat.emplace_back("sd", column([](const ChainDraws& c) { return c.sd; }));
  if (uses_blr(cfg.variant))
    fit.rhat.emplace_back("B", column([](const ChainDraws& c) { return c.B; }));
  fit.rhat.emplace_back("totresdev", column([](const ChainDraws& c) { return c.totresdev; }));
  fit.converged = true;
  for (const auto& [name, r] : fit.rhat)
    if (!(r < 1.05)) fit.converged = false;

  // DIC: plug-in deviance at the posterior means of the predictor inputs
  long long count = 0;
  Eigen::VectorXd sum_mu = Eigen::VectorXd::Zero(ds.n_studies());
  std::vector<Eigen::VectorXd> sum_delta;
  sum_delta.reserve(results.size());
  double sum_B = 0, sum_totresdev = 0, sum_draw = 0, sum_draw2 = 0;
  Eigen::VectorXd sum_dev = Eigen::VectorXd::Zero(model.total_arms());
  Eigen::VectorXd sum_fitted = Eigen::VectorXd::Zero(model.total_arms());
  std::vector<Eigen::VectorXd> mean_delta(static_cast<std::size_t>(ds.n_studies()));
  for (int i = 0; i < ds.n_studies(); ++i)
    mean_delta[static_cast<std::size_t>(i)] = Eigen::VectorXd::Zero(model.n_arms(i + 1));
  for (const auto& r : results) {
    count += r.count;
    sum_mu += r.sum_mu;
    for (int i = 0; i < ds.n_studies(); ++i)
      mean_delta[static_cast<std::size_t>(i)] += r.sum_delta[static_cast<std::size_t>(i)];
    sum_B += r.sum_B;
    sum_dev += r.sum_dev;
    sum_fitted += r.sum_fitted;
    sum_totresdev += r.sum_totresdev;
    sum_draw += r.sum_deviance_raw;
    sum_draw2 += r.sum_deviance_raw2;
  }
  const double ncount = static_cast<double>(count);
  fit.devbar_arm = sum_dev / ncount;

  ChainState plug = model.make_state();
  plug.mu = sum_mu / ncount;
  for (int i = 0; i < ds.n_studies(); ++i)
    plug.delta[static_cast<std::size_t>(i)] = mean_delta[static_cast<std::size_t>(i)] / ncount;
  plug.B = sum_B / ncount;

  DicComponents dic;
  dic.dbar_res = sum_totresdev / ncount;
  dic.dbar_raw = sum_draw / ncount;

  dic.dhat_res = model.total_residual_deviance(plug);
  dic.dhat_raw = -2.0 * model.log_likelihood(plug);
  dic.pd_plugin = dic.dbar_res - dic.dhat_res;
  dic.dic_plugin_res = dic.dbar_res + dic.pd_plugin;
  dic.dic_plugin_raw = dic.dbar_raw + dic.pd_plugin;

  const Eigen::VectorXd fitted_bar = sum_fitted / ncount;
  dic.dhat_fit_res = model.deviance_at_fitted(fitted_bar);
  dic.dhat_fit_raw = -2.0 * model.log_likelihood_at_fitted(fitted_bar);
  dic.pd = dic.dbar_res - dic.dhat_fit_res;
  dic.dic_res = dic.dbar_res + dic.pd;
  dic.dic_raw = dic.dbar_raw + dic.pd;

  dic.pd_var = 0.5 * (sum_draw2 - ncount * dic.dbar_raw * dic.dbar_raw) / (ncount - 1.0);
  dic.dic_var_raw = dic.dbar_raw + dic.pd_var;
  dic.pd_warning = dic.pd < 0;
  fit.dic = dic;

  return fit;
}

}  // namespace nma
