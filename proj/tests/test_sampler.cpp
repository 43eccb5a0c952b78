#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "nma/fit_io.hpp"
#include "nma/sampler.hpp"
#include "test_util.hpp"

using namespace nma;

TEST_CASE("rw_update basics") {
  Rng rng(1);
  SUBCASE("a zero-width proposal is always accepted") {
    double x = 1.3;
    double lp = -0.5 * x * x;
    ScalarParam p;
    p.step = 0.0;
    for (int i = 0; i < 100; ++i)
      CHECK(update_scalar_rw(
          x, lp, [](double v) { return -0.5 * v * v; }, p, rng, 0.44, false));
    CHECK(x == 1.3);
  }
  SUBCASE("interval support cannot leave its bounds") {
    ScalarParam p;
    p.support = Support::interval;
    p.lo = 0.0;
    p.hi = 2.0;
    p.step = 5.0;
    double x = 1.0;
    double lp = 0.0;  // uniform target on (0,2)
    for (int i = 0; i < 5000; ++i) {
      update_scalar_rw(
          x, lp, [](double) { return 0.0; }, p, rng, 0.44, false);
      CHECK(x > 0.0);
      CHECK(x < 2.0);
    }
  }
}

TEST_CASE("adaptation reaches the target acceptance rate on a normal target") {
  Rng rng(42);
  double x = 0.0;
  auto logdens = [](double v) { return -0.5 * v * v; };
  double lp = logdens(x);
  ScalarParam p;
  p.step = 8.0;  // deliberately bad start
  p.window = 50;
  for (int i = 0; i < 5000; ++i) update_scalar_rw(x, lp, logdens, p, rng, 0.44, true);
  for (int i = 0; i < 20000; ++i) update_scalar_rw(x, lp, logdens, p, rng, 0.44, false);
  CHECK(p.rate() == doctest::Approx(0.44).epsilon(0.23));  // 0.44 +- ~0.1
}

TEST_CASE("two-parameter toy target matches quadrature") {
  // banana-shaped target: x ~ N(0,1), y | x ~ N(x^2/2, 1)
  auto logpi = [](double x, double y) {
    const double r = y - 0.5 * x * x;
    return -0.5 * x * x - 0.5 * r * r;
  };
  // quadrature moments
  double z = 0, ex = 0, ey = 0, exx = 0, eyy = 0;
  const int nx = 400, ny = 500;
  for (int i = 0; i < nx; ++i) {
    const double x = -5.0 + 10.0 * (i + 0.5) / nx;
    for (int j = 0; j < ny; ++j) {
      const double y = -5.0 + 20.0 * (j + 0.5) / ny;
      const double w = std::exp(logpi(x, y));
      z += w;
      ex += w * x;
      ey += w * y;
      exx += w * x * x;
      eyy += w * y * y;
    }
  }
  ex /= z; ey /= z; exx /= z; eyy /= z;
  const double var_y_quad = eyy - ey * ey;

  Rng rng(2024);
  double x = 0.1, y = 0.1;
  double lp = logpi(x, y);
  ScalarParam px, py;
  long long n = 0;
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  const int sweeps = 400000, adapt = 4000;
  for (int it = 0; it < sweeps; ++it) {
    const bool adapting = it < adapt;
    rw_update(
        x, lp, [&](double v) { x = v; }, [&] { return logpi(x, y); }, px, rng, 0.44, adapting);
    rw_update(
        y, lp, [&](double v) { y = v; }, [&] { return logpi(x, y); }, py, rng, 0.44, adapting);
    if (it >= adapt) {
      ++n;
      sx += x; sy += y; sxx += x * x; syy += y * y;
    }
  }
  const double mx = sx / n, my = sy / n;
  const double vy = syy / n - my * my;
  CHECK(mx == doctest::Approx(ex).scale(1).epsilon(0.02));
  CHECK(my == doctest::Approx(ey).epsilon(0.02));
  CHECK(sxx / n == doctest::Approx(exx).epsilon(0.02));
  CHECK(vy == doctest::Approx(var_y_quad).epsilon(0.02));
}

TEST_CASE("gelman_rubin") {
  SUBCASE("iid chains converge") {
    Rng rng(3);
    std::vector<Eigen::VectorXd> chains;
    for (int c = 0; c < 4; ++c) {
      Eigen::VectorXd v(10000);
      for (int i = 0; i < 10000; ++i) v[i] = rng.gaussian();
      chains.push_back(v);
    }
    CHECK(gelman_rubin(chains) < 1.01);
  }
  SUBCASE("separated chains are detected") {
    Rng rng(4);
    std::vector<Eigen::VectorXd> chains;
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd v(1000);
      for (int i = 0; i < 1000; ++i) v[i] = rng.gaussian() + (c ? 10.0 : 0.0);
      chains.push_back(v);
    }
    CHECK(gelman_rubin(chains) > 1.5);
  }
  SUBCASE("constant chains give the degenerate flag") {
    std::vector<Eigen::VectorXd> chains(3, Eigen::VectorXd::Constant(100, 2.5));
    CHECK(std::isinf(gelman_rubin(chains)));
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(gelman_rubin({Eigen::VectorXd::Zero(100)}), std::invalid_argument);
    std::vector<Eigen::VectorXd> tiny(2, Eigen::VectorXd::Zero(4));
    CHECK_THROWS_AS(gelman_rubin(tiny), std::invalid_argument);
  }
}

TEST_CASE("conjugate oracle: one-study continuous fit with fixed sd") {
  LoadOptions opts;
  opts.mx = 0.0;
  const Dataset ds =
      testutil::parse_csv("study,treatment,y,se\ns1,A,0.2,0.5\ns1,B,1.0,0.5\n", opts);
  ModelConfig cfg = default_config(Variant::standard, OutcomeKind::continuous, 2);
  cfg.mu_prec = 1e-3;
  cfg.d_prec = 1e-3;
  const double sd = 0.4;

  // jointly Gaussian in (mu, delta, d2): assemble the posterior precision
  const double p1 = 1.0 / 0.25, p2 = 1.0 / 0.25, psd = 1.0 / (sd * sd);
  Eigen::Matrix3d prec = Eigen::Matrix3d::Zero();
  prec(0, 0) = p1 + p2 + cfg.mu_prec;
  prec(0, 1) = prec(1, 0) = p2;
  prec(1, 1) = p2 + psd;
  prec(1, 2) = prec(2, 1) = -psd;
  prec(2, 2) = psd + cfg.d_prec;
  Eigen::Vector3d b(0.2 * p1 + 1.0 * p2, 1.0 * p2, 0.0);
  const Eigen::Matrix3d cov = prec.inverse();
  const Eigen::Vector3d mean = cov * b;

  SamplerSettings st;
  st.n_chains = 4;
  st.n_adapt = 2000;
  st.n_burnin = 2000;
  st.n_iter = 40000;
  st.thin = 4;
  st.master_seed = 99;
  st.fixed_sd = sd;
  const FitResult fit = run_fit(ds, cfg, st);

  const Eigen::MatrixXd d = fit.pooled_d();
  std::vector<double> draws(d.col(0).data(), d.col(0).data() + d.rows());
  double mhat = 0;
  for (double v : draws) mhat += v;
  mhat /= static_cast<double>(draws.size());
  const double mcse = testutil::mcse_mean(draws, 50);
  CHECK(std::abs(mhat - mean[2]) < 3.0 * mcse + 1e-12);

  std::vector<double> sq;
  for (double v : draws) sq.push_back((v - mhat) * (v - mhat));
  double vhat = 0;
  for (double v : sq) vhat += v;
  vhat /= static_cast<double>(sq.size() - 1);
  const double mcse_v = testutil::mcse_mean(sq, 50);
  CHECK(std::abs(vhat - cov(2, 2)) < 3.0 * mcse_v + 1e-12);
}

TEST_CASE("cluster Gibbs matches a grid-enumeration oracle on a symmetric toy") {
  // two treatments with identical data; H = 2
  LoadOptions opts;
  opts.mx = 0.0;
  const Dataset ds = testutil::parse_csv(
      "study,treatment,y,se\n"
      "s1,A,0.0,0.5\ns1,B,1.0,0.5\n"
      "s2,A,0.0,0.5\ns2,C,1.0,0.5\n",
      opts);
  ModelConfig cfg = default_config(Variant::dp, OutcomeKind::continuous, 3);
  cfg.H = 2;
  const Model model(ds, cfg);

  const double sd = 0.5, prec_delta = 1.0 / (sd * sd);
  const double q1 = 0.3;
  const double theta_var = 0.5;  // reg_horseshoe_var(1,1,1)
  const double obs = 1.0;        // both frozen trial effects

  // brute-force grid over (theta_1, theta_2) x 4 assignment combinations
  auto norm_pdf = [](double x, double mean, double prec) {
    return std::sqrt(prec / (2.0 * M_PI)) * std::exp(-0.5 * prec * (x - mean) * (x - mean));
  };
  const double pstick[2] = {q1, 1.0 - q1};
  const int npts = 451;
  double mass_eq = 0, mass_all = 0;
  for (int i = 0; i < npts; ++i) {
    const double t1 = -4.0 + 9.0 * i / (npts - 1.0);
    for (int j = 0; j < npts; ++j) {
      const double t2 = -4.0 + 9.0 * j / (npts - 1.0);
      const double prior = norm_pdf(t1, 0, 1.0 / theta_var) * norm_pdf(t2, 0, 1.0 / theta_var);
      const double th[2] = {t1, t2};
      for (int cB = 0; cB < 2; ++cB)
        for (int cC = 0; cC < 2; ++cC) {
          const double w = prior * pstick[cB] * pstick[cC] *
                           norm_pdf(obs, th[cB], prec_delta) * norm_pdf(obs, th[cC], prec_delta);
          mass_all += w;
          if (cB == cC) mass_eq += w;
        }
    }
  }
  const double p_co_oracle = mass_eq / mass_all;

  // sampler over the same free coordinates, everything else frozen
  ChainState s = model.make_state();
  s.mu << 0.0, 0.0;
  s.delta[0][1] = obs;
  s.delta[1][1] = obs;
  s.sd = sd;
  s.q << q1;
  s.lambda << 1.0, 1.0;
  s.tau_hs = 1.0;
  s.c2 = 1.0;
  s.cluster[1] = 0;
  s.cluster[2] = 1;
  s.theta << 0.5, 1.5;
  model.sync_d(s);

  Rng rng(314);
  double lp = model.log_posterior(s);
  ScalarParam pt[2];
  long long co = 0, total = 0;
  const int sweeps = 120000, adapt = 2000;
  for (int it = 0; it < sweeps; ++it) {
    const bool adapting = it < adapt;
    for (int h = 0; h < 2; ++h)
      rw_update(
          s.theta[h], lp,
          [&](double v) {
            s.theta[h] = v;
            for (int k = 1; k < 3; ++k)
              if (s.cluster[k] == h) s.d[k] = v;
          },
          [&] { return model.log_posterior(s); }, pt[h], rng, 0.44, adapting);
    for (int k = 1; k < 3; ++k) update_cluster_gibbs(model, s, lp, k, rng);
    if (it >= adapt) {
      ++total;
      co += (s.cluster[1] == s.cluster[2]);
    }
  }
  const double p_co_mcmc = static_cast<double>(co) / static_cast<double>(total);
  CHECK(std::abs(p_co_mcmc - p_co_oracle) < 0.02);

  SUBCASE("H = 1 pins every assignment") {
    ModelConfig one = cfg;
    one.H = 1;
    const Model m1(ds, one);
    ChainState s1 = m1.make_state();
    s1.mu << 0.0, 0.0;
    s1.delta[0][1] = obs;
    s1.delta[1][1] = obs;
    double lp1 = m1.log_posterior(s1);
    Rng r1(5);
    for (int it = 0; it < 50; ++it) {
      update_cluster_gibbs(m1, s1, lp1, 1, r1);
      CHECK(s1.cluster[1] == 0);
    }
  }

  SUBCASE("flat likelihood reduces the conditional to the stick weights") {
    // treatment C has no data in this one-study network
    LoadOptions o2;
    o2.mx = 0.0;
    o2.registry_names = {"A", "B", "C"};
    const Dataset ds2 =
        testutil::parse_csv("study,treatment,y,se\ns1,A,0.0,0.5\ns1,B,1.0,0.5\n", o2);
    const Model m2(ds2, cfg);
    ChainState s2 = m2.make_state();
    s2.mu << 0.0;
    s2.delta[0][1] = obs;
    s2.sd = sd;
    s2.q << 0.25;
    s2.theta << -0.3, 0.9;
    s2.cluster[1] = 0;
    s2.cluster[2] = 0;
    m2.sync_d(s2);
    double lp2 = m2.log_posterior(s2);
    Rng r2(17);
    long long in_first = 0;
    const int reps = 40000;
    for (int it = 0; it < reps; ++it) {
      update_cluster_gibbs(m2, s2, lp2, 2, r2);
      in_first += (s2.cluster[2] == 0);
    }
    CHECK(static_cast<double>(in_first) / reps == doctest::Approx(0.25).epsilon(0.05));
  }
}

TEST_CASE("determinism and chain-order invariance of run_fit") {
  const Dataset ds = testutil::load_certolizumab();
  ModelConfig cfg = default_config(Variant::dp_blr, OutcomeKind::binomial, 7);
  SamplerSettings st;
  st.n_chains = 2;
  st.n_adapt = 200;
  st.n_burnin = 200;
  st.n_iter = 600;
  st.thin = 3;
  st.master_seed = 2468;
  st.threads = 1;

  const FitResult a = run_fit(ds, cfg, st);
  const FitResult b = run_fit(ds, cfg, st);
  CHECK(fit_to_json(a) == fit_to_json(b));

  SamplerSettings par = st;
  par.threads = 2;
  const FitResult c = run_fit(ds, cfg, par);
  CHECK(fit_to_json(a) == fit_to_json(c));

  SUBCASE("different seeds differ") {
    SamplerSettings other = st;
    other.master_seed = 1357;
    CHECK(fit_to_json(run_fit(ds, cfg, other)) != fit_to_json(a));
  }

  SUBCASE("DP draws keep d equal to the assigned cluster effect") {
    for (const auto& ch : a.chains)
      for (int i = 0; i < ch.sd.size(); ++i)
        for (int k = 0; k < 6; ++k)
          CHECK(ch.d(i, k) == ch.theta(i, ch.cluster(i, k) - 1));
  }

  SUBCASE("DIC components are internally consistent") {
    CHECK(a.dic.pd == doctest::Approx(a.dic.dbar_res - a.dic.dhat_fit_res).epsilon(1e-12));
    CHECK(a.dic.dic_raw == doctest::Approx(a.dic.dbar_raw + a.dic.pd).epsilon(1e-12));
    CHECK(a.dic.dic_res == doctest::Approx(a.dic.dbar_res + a.dic.pd).epsilon(1e-12));
    CHECK(a.dic.dbar_raw - a.dic.dbar_res ==
          doctest::Approx(a.dic.dhat_raw - a.dic.dhat_res).epsilon(1e-9));
  }
}

TEST_CASE("a single 2-arm study yields a wide treatment-effect posterior") {
  const Dataset ds = testutil::parse_csv("study,treatment,r,n\ns1,A,1,10\ns1,B,5,10\n");
  ModelConfig cfg = default_config(Variant::standard, OutcomeKind::binomial, 2);
  SamplerSettings st;
  st.n_chains = 2;
  st.n_adapt = 500;
  st.n_burnin = 500;
  st.n_iter = 4000;
  st.thin = 2;
  st.master_seed = 5;
  const FitResult fit = run_fit(ds, cfg, st);
  const Eigen::MatrixXd d = fit.pooled_d();
  const double mean = d.col(0).mean();
  const double sd = std::sqrt((d.col(0).array() - mean).square().sum() / (d.rows() - 1.0));
  CHECK(sd > 0.7);
}

TEST_CASE("run_fit rejects bad inputs") {
  const Dataset disconnected =
      testutil::parse_csv("study,treatment,r,n\ns1,A,1,10\ns1,B,2,10\ns2,C,3,10\ns2,D,4,10\n");
  ModelConfig cfg = default_config(Variant::standard, OutcomeKind::binomial, 4);
  SamplerSettings st;
  st.master_seed = 1;
  CHECK_THROWS_WITH_AS(run_fit(disconnected, cfg, st), doctest::Contains("disconnected"),
                       std::runtime_error);

  const Dataset ok = testutil::parse_csv("study,treatment,r,n\ns1,A,1,10\ns1,B,2,10\n");
  ModelConfig cfg2 = default_config(Variant::standard, OutcomeKind::binomial, 2);
  SamplerSettings bad;
  bad.master_seed = 1;
  bad.fixed_sd = 5.0;  // outside (0, sd_upper = 2)
  CHECK_THROWS_AS(run_fit(ok, cfg2, bad), std::invalid_argument);
  SamplerSettings bad2;
  bad2.thin = 0;
  CHECK_THROWS_AS(run_fit(ok, cfg2, bad2), std::invalid_argument);
}
