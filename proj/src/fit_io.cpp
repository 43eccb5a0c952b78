#include "nma/fit_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace nma {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

template <class Mat>
json mat_to_json(const Mat& m) {
  json o;
  o["rows"] = m.rows();
  o["cols"] = m.cols();
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  o["data"] = std::move(data);
  return o;
}

template <class Mat>
Mat mat_from_json(const json& o) {
  Mat m(o.at("rows").get<Eigen::Index>(), o.at("cols").get<Eigen::Index>());
  const json& data = o.at("data");
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = data[i++].get<typename Mat::Scalar>();
  return m;
}

}  // namespace

std::string fit_to_json(const FitResult& fit) {
  json j;
  j["schema"] = {{"major", kFitSchemaMajor}, {"minor", kFitSchemaMinor}};
  j["dataset"] = {{"name", fit.dataset_name},
                  {"hash", fit.dataset_hash},
                  {"outcome", fit.outcome == OutcomeKind::binomial ? "binomial" : "continuous"},
                  {"mx", fit.mx},
                  {"treatments", fit.treatments},
                  {"n_studies", fit.n_studies}};
  const ModelConfig& c = fit.config;
  j["config"] = {{"variant", variant_name(c.variant)},
                 {"H", c.H},
                 {"alpha", c.alpha},
                 {"nu", c.nu},
                 {"s2", c.s2},
                 {"tau_hs_scale", c.tau_hs_scale},
                 {"sd_upper", c.sd_upper},
                 {"mu_prec", c.mu_prec},
                 {"d_prec", c.d_prec},
                 {"b_prec", c.b_prec},
                 {"benefit", c.benefit == Benefit::higher_is_better ? "higher" : "lower"}};
  const SamplerSettings& s = fit.settings;
  // threads is an execution hint, not part of the result, so it is not stored
  json js = {{"chains", s.n_chains},   {"adapt", s.n_adapt},
             {"burnin", s.n_burnin},   {"iters", s.n_iter},
             {"thin", s.thin},         {"seed", s.master_seed},
             {"target_accept", s.target_accept}, {"adapt_window", s.adapt_window}};
  if (s.fixed_sd) js["fixed_sd"] = *s.fixed_sd;
  j["settings"] = std::move(js);

  json chains = json::array();
  for (const auto& ch : fit.chains) {
    json jc;
    jc["d"] = mat_to_json(ch.d);
    jc["sd"] = vec_to_json(ch.sd);
    if (ch.B.size()) jc["B"] = vec_to_json(ch.B);
    if (ch.cluster.size()) jc["cluster"] = mat_to_json(ch.cluster);
    if (ch.theta.size()) jc["theta"] = mat_to_json(ch.theta);
    jc["totresdev"] = vec_to_json(ch.totresdev);
    jc["loglik"] = vec_to_json(ch.loglik);
    chains.push_back(std::move(jc));
  }
  j["chains"] = std::move(chains);
  j["devbar_arm"] = vec_to_json(fit.devbar_arm);
  j["accept_rates"] = fit.accept_rates;
  json rh = json::array();
  for (const auto& [name, v] : fit.rhat) {
    // JSON has no infinity; degenerate statistics are stored as null
    if (std::isfinite(v))
      rh.push_back(json::array({name, v}));
    else
      rh.push_back(json::array({name, nullptr}));
  }
  j["rhat"] = std::move(rh);
  j["converged"] = fit.converged;
  j["dic"] = {{"dbar_res", fit.dic.dbar_res},
              {"dbar_raw", fit.dic.dbar_raw},
              {"dhat_res", fit.dic.dhat_res},
              {"dhat_raw", fit.dic.dhat_raw},
              {"pd_plugin", fit.dic.pd_plugin},
              {"dic_plugin_res", fit.dic.dic_plugin_res},
              {"dic_plugin_raw", fit.dic.dic_plugin_raw},
              {"dhat_fit_res", fit.dic.dhat_fit_res},
              {"dhat_fit_raw", fit.dic.dhat_fit_raw},
              {"pd", fit.dic.pd},
              {"dic_res", fit.dic.dic_res},
              {"dic_raw", fit.dic.dic_raw},
              {"pd_var", fit.dic.pd_var},
              {"dic_var_raw", fit.dic.dic_var_raw},
              {"pd_warning", fit.dic.pd_warning}};
  return j.dump();
}

void save_fit_json(const FitResult& fit, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << fit_to_json(fit);
}

FitResult fit_from_json(const std::string& text) {
  json j = json::parse(text);
  const int major = j.at("schema").at("major").get<int>();
  if (major != kFitSchemaMajor)
    throw std::runtime_error("unsupported fit.json schema major version " +
                             std::to_string(major) + " (expected " +
                             std::to_string(kFitSchemaMajor) + ")");
  FitResult fit;
  const json& ds = j.at("dataset");
  fit.dataset_name = ds.at("name").get<std::string>();
  fit.dataset_hash = ds.at("hash").get<std::string>();
  fit.outcome = ds.at("outcome").get<std::string>() == "binomial" ? OutcomeKind::binomial
                                                                  : OutcomeKind::continuous;
  fit.mx = ds.at("mx").get<double>();
  fit.treatments = ds.at("treatments").get<std::vector<std::string>>();
  fit.n_studies = ds.at("n_studies").get<int>();

  const json& c = j.at("config");
  const auto var = variant_from_string(c.at("variant").get<std::string>());
  if (!var) throw std::runtime_error("unknown variant in fit.json");
  fit.config.variant = *var;
  fit.config.H = c.at("H").get<int>();
  fit.config.alpha = c.at("alpha").get<double>();
  fit.config.nu = c.at("nu").get<double>();
  fit.config.s2 = c.at("s2").get<double>();
  fit.config.tau_hs_scale = c.at("tau_hs_scale").get<double>();
  fit.config.sd_upper = c.at("sd_upper").get<double>();
  fit.config.mu_prec = c.at("mu_prec").get<double>();
  fit.config.d_prec = c.at("d_prec").get<double>();
  fit.config.b_prec = c.at("b_prec").get<double>();
  fit.config.benefit = c.at("benefit").get<std::string>() == "higher"
                           ? Benefit::higher_is_better
                           : Benefit::lower_is_better;

  const json& s = j.at("settings");
  fit.settings.n_chains = s.at("chains").get<int>();
  fit.settings.n_adapt = s.at("adapt").get<int>();
  fit.settings.n_burnin = s.at("burnin").get<int>();
  fit.settings.n_iter = s.at("iters").get<int>();
  fit.settings.thin = s.at("thin").get<int>();
  fit.settings.master_seed = s.at("seed").get<std::uint64_t>();
  fit.settings.target_accept = s.at("target_accept").get<double>();
  fit.settings.adapt_window = s.at("adapt_window").get<int>();
  if (s.contains("fixed_sd")) fit.settings.fixed_sd = s.at("fixed_sd").get<double>();

  for (const json& jc : j.at("chains")) {
    ChainDraws ch;
    ch.d = mat_from_json<Eigen::MatrixXd>(jc.at("d"));
    ch.sd = vec_from_json(jc.at("sd"));
    if (jc.contains("B")) ch.B = vec_from_json(jc.at("B"));
    if (jc.contains("cluster")) ch.cluster = mat_from_json<Eigen::MatrixXi>(jc.at("cluster"));
    if (jc.contains("theta")) ch.theta = mat_from_json<Eigen::MatrixXd>(jc.at("theta"));
    ch.totresdev = vec_from_json(jc.at("totresdev"));
    ch.loglik = vec_from_json(jc.at("loglik"));
    fit.chains.push_back(std::move(ch));
  }
  fit.devbar_arm = vec_from_json(j.at("devbar_arm"));
  fit.accept_rates = j.at("accept_rates").get<std::map<std::string, double>>();
  for (const json& r : j.at("rhat")) {
    const double v = r[1].is_null() ? std::numeric_limits<double>::infinity() : r[1].get<double>();
    fit.rhat.emplace_back(r[0].get<std::string>(), v);
  }
  fit.converged = j.at("converged").get<bool>();
  const json& d = j.at("dic");
  fit.dic.dbar_res = d.at("dbar_res").get<double>();
  fit.dic.dbar_raw = d.at("dbar_raw").get<double>();
  fit.dic.dhat_res = d.at("dhat_res").get<double>();
  fit.dic.dhat_raw = d.at("dhat_raw").get<double>();
  fit.dic.pd_plugin = d.at("pd_plugin").get<double>();
  fit.dic.dic_plugin_res = d.at("dic_plugin_res").get<double>();
  fit.dic.dic_plugin_raw = d.at("dic_plugin_raw").get<double>();
  fit.dic.dhat_fit_res = d.at("dhat_fit_res").get<double>();
  fit.dic.dhat_fit_raw = d.at("dhat_fit_raw").get<double>();
  fit.dic.pd = d.at("pd").get<double>();
  fit.dic.dic_res = d.at("dic_res").get<double>();
  fit.dic.dic_raw = d.at("dic_raw").get<double>();
  fit.dic.pd_var = d.at("pd_var").get<double>();
  fit.dic.dic_var_raw = d.at("dic_var_raw").get<double>();
  fit.dic.pd_warning = d.at("pd_warning").get<bool>();
  return fit;
}

FitResult load_fit_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open fit file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return fit_from_json(ss.str());
}

}  // namespace nma
