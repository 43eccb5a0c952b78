#include <doctest.h>

#include <cmath>

#include "nma/fit_io.hpp"
#include "test_util.hpp"

using namespace nma;

namespace {

FitResult small_real_fit() {
  const Dataset ds = testutil::load_certolizumab();
  ModelConfig cfg = default_config(Variant::dp_blr, OutcomeKind::binomial, 7);
  SamplerSettings st;
  st.n_chains = 2;
  st.n_adapt = 100;
  st.n_burnin = 100;
  st.n_iter = 300;
  st.thin = 3;
  st.master_seed = 77;
  FitResult fit = run_fit(ds, cfg, st);
  fit.dataset_name = "certolizumab.csv";
  return fit;
}

}  // namespace

TEST_CASE("fit.json round-trips byte for byte") {
  const FitResult fit = small_real_fit();
  const std::string a = fit_to_json(fit);
  const FitResult back = fit_from_json(a);
  const std::string b = fit_to_json(back);
  CHECK(a == b);
  CHECK(back.treatments == fit.treatments);
  CHECK(back.config.H == fit.config.H);
  CHECK(back.settings.master_seed == fit.settings.master_seed);
  CHECK(back.dic.dic_raw == doctest::Approx(fit.dic.dic_raw).epsilon(1e-15));
  CHECK(back.chains.size() == fit.chains.size());
  CHECK(back.chains[0].d.isApprox(fit.chains[0].d));
  CHECK(back.chains[1].cluster == fit.chains[1].cluster);
}

TEST_CASE("unknown schema major versions are rejected") {
  const FitResult fit = small_real_fit();
  std::string text = fit_to_json(fit);
  const std::string key = "\"schema\":{\"major\":1";
  const auto at = text.find(key);
  REQUIRE(at != std::string::npos);
  text.replace(at, key.size(), "\"schema\":{\"major\":9");
  CHECK_THROWS_WITH_AS(fit_from_json(text), doctest::Contains("schema major version"),
                       std::runtime_error);
}

TEST_CASE("degenerate rhat values survive serialization") {
  FitResult fit = small_real_fit();
  fit.rhat.emplace_back("stuck", std::numeric_limits<double>::infinity());
  const FitResult back = fit_from_json(fit_to_json(fit));
  CHECK(std::isinf(back.rhat.back().second));
  CHECK(back.rhat.back().first == "stuck");
}
