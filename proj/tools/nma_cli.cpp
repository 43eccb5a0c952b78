#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nma/dataset.hpp"
#include "nma/diagnostics.hpp"
#include "nma/fit_io.hpp"
#include "nma/model.hpp"
#include "nma/sampler.hpp"
#include "nma/summaries.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Flat key = value file with optional [section] headers (sections are
// decorative). Strings may be quoted; '#' starts a comment.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
      val = val.substr(1, val.size() - 2);
    if (key.empty() || val.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key or value");
    if (kv.count(key))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                               "'");
    kv[key] = val;
  }
  return kv;
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': cannot parse number '" + v + "'");
  }
}

long long to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': cannot parse integer '" + v + "'");
  }
}

std::string resolve_path(const std::string& p, const std::string& config_path) {
  fs::path fp(p);
  if (fp.is_absolute()) return p;
  return (fs::path(config_path).parent_path() / fp).string();
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

struct RunConfig {
  std::string dataset_path;
  nma::LoadOptions load;
  nma::ModelConfig model;
  nma::SamplerSettings sampler;
  std::string out_dir = "nma_out";
  bool seed_given = false;
};

const std::map<std::string, int> kKnownKeys = {
    {"dataset", 0},  {"outcome", 0},  {"registry", 0}, {"mx", 0},       {"variant", 0},
    {"H", 0},        {"alpha", 0},    {"nu", 0},       {"s2", 0},       {"tau_hs_scale", 0},
    {"sd_upper", 0}, {"mu_prec", 0},  {"d_prec", 0},   {"b_prec", 0},   {"benefit", 0},
    {"chains", 0},   {"adapt", 0},    {"burnin", 0},   {"iters", 0},    {"thin", 0},
    {"seed", 0},     {"threads", 0},  {"out", 0}};

RunConfig build_run_config(const std::string& config_path) {
  const auto kv = parse_config_file(config_path);
  for (const auto& [k, v] : kv)
    if (!kKnownKeys.count(k))
      throw std::runtime_error("config key '" + k + "' is not recognized");
  auto get = [&](const char* key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };

  RunConfig rc;
  const auto dataset = get("dataset");
  if (!dataset) throw std::runtime_error("config is missing 'dataset'");
  rc.dataset_path = resolve_path(*dataset, config_path);

  const auto outcome = get("outcome");
  if (!outcome) throw std::runtime_error("config is missing 'outcome'");
  nma::OutcomeKind kind;
  if (*outcome == "binomial")
    kind = nma::OutcomeKind::binomial;
  else if (*outcome == "continuous")
    kind = nma::OutcomeKind::continuous;
  else
    throw std::runtime_error("outcome must be 'binomial' or 'continuous'");
  rc.load.expect = kind;
  if (const auto reg = get("registry")) rc.load.registry_path = resolve_path(*reg, config_path);
  if (const auto mx = get("mx")) rc.load.mx = to_double(*mx, "mx");

  const auto variant_str = get("variant");
  if (!variant_str) throw std::runtime_error("config is missing 'variant'");
  const auto variant = nma::variant_from_string(*variant_str);
  if (!variant)
    throw std::runtime_error("variant must be one of standard, blr, dp, dp_blr");

  // count treatments up front so DP defaults can size H
  const nma::Dataset probe = nma::load_dataset(rc.dataset_path, rc.load);
  rc.model = nma::default_config(*variant, kind, probe.n_treatments());
  if (const auto v = get("H")) rc.model.H = static_cast<int>(to_int(*v, "H"));
  if (const auto v = get("alpha")) rc.model.alpha = to_double(*v, "alpha");
  if (const auto v = get("nu")) rc.model.nu = to_double(*v, "nu");
  if (const auto v = get("s2")) rc.model.s2 = to_double(*v, "s2");
  if (const auto v = get("tau_hs_scale")) rc.model.tau_hs_scale = to_double(*v, "tau_hs_scale");
  if (const auto v = get("sd_upper")) rc.model.sd_upper = to_double(*v, "sd_upper");
  if (const auto v = get("mu_prec")) rc.model.mu_prec = to_double(*v, "mu_prec");
  if (const auto v = get("d_prec")) rc.model.d_prec = to_double(*v, "d_prec");
  if (const auto v = get("b_prec")) rc.model.b_prec = to_double(*v, "b_prec");
  if (const auto v = get("benefit")) {
    if (*v == "higher")
      rc.model.benefit = nma::Benefit::higher_is_better;
    else if (*v == "lower")
      rc.model.benefit = nma::Benefit::lower_is_better;
    else
      throw std::runtime_error("benefit must be 'higher' or 'lower'");
  }

  if (const auto v = get("chains")) rc.sampler.n_chains = static_cast<int>(to_int(*v, "chains"));
  if (const auto v = get("adapt")) rc.sampler.n_adapt = static_cast<int>(to_int(*v, "adapt"));
  if (const auto v = get("burnin")) rc.sampler.n_burnin = static_cast<int>(to_int(*v, "burnin"));
  if (const auto v = get("iters")) rc.sampler.n_iter = static_cast<int>(to_int(*v, "iters"));
  if (const auto v = get("thin")) rc.sampler.thin = static_cast<int>(to_int(*v, "thin"));
  if (const auto v = get("threads")) rc.sampler.threads = static_cast<int>(to_int(*v, "threads"));
  if (const auto v = get("seed")) {
    rc.sampler.master_seed = static_cast<std::uint64_t>(to_int(*v, "seed"));
    rc.seed_given = true;
  }
  if (const auto v = get("out")) rc.out_dir = resolve_path(*v, config_path);
  return rc;
}

void write_draws_csv(const nma::FitResult& fit, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const int nt = fit.n_treatments();
  out << "chain,draw";
  for (int k = 2; k <= nt; ++k) out << ",d[" << k << "]";
  out << ",sd";
  if (nma::uses_blr(fit.config.variant)) out << ",B";
  if (nma::uses_dp(fit.config.variant)) {
    for (int k = 2; k <= nt; ++k) out << ",cluster[" << k << "]";
    for (int h = 1; h <= fit.config.H; ++h) out << ",theta[" << h << "]";
  }
  out << ",totresdev,loglik\n";
  out.precision(10);
  for (int c = 0; c < fit.n_chains(); ++c) {
    const auto& ch = fit.chains[static_cast<std::size_t>(c)];
    for (int i = 0; i < ch.sd.size(); ++i) {
      out << c + 1 << ',' << i + 1;
      for (int k = 0; k < nt - 1; ++k) out << ',' << ch.d(i, k);
      out << ',' << ch.sd[i];
      if (ch.B.size()) out << ',' << ch.B[i];
      if (ch.cluster.size()) {
        for (int k = 0; k < nt - 1; ++k) out << ',' << ch.cluster(i, k);
        for (int h = 0; h < ch.theta.cols(); ++h) out << ',' << ch.theta(i, h);
      }
      out << ',' << ch.totresdev[i] << ',' << ch.loglik[i] << '\n';
    }
  }
}

int cmd_fit(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
            std::optional<std::string> out_flag, std::optional<int> chains,
            std::optional<int> iters, std::optional<int> burnin, std::optional<int> thin,
            std::optional<int> threads, bool draws_csv) {
  RunConfig rc = build_run_config(config_path);
  if (seed_flag) {
    rc.sampler.master_seed = *seed_flag;
    rc.seed_given = true;
  }
  if (!rc.seed_given)
    throw std::runtime_error("a seed is required (config key 'seed' or --seed)");
  if (out_flag) rc.out_dir = *out_flag;
  if (chains) rc.sampler.n_chains = *chains;
  if (iters) rc.sampler.n_iter = *iters;
  if (burnin) rc.sampler.n_burnin = *burnin;
  if (thin) rc.sampler.thin = *thin;
  if (threads) rc.sampler.threads = *threads;

  const nma::Dataset ds = nma::load_dataset(rc.dataset_path, rc.load);
  const nma::Connectivity conn = nma::check_connectivity(ds);
  if (!conn.connected) {
    std::ostringstream msg;
    msg << "evidence network is disconnected; components:";
    for (const auto& comp : conn.components) {
      msg << " {";
      for (std::size_t i = 0; i < comp.size(); ++i)
        msg << (i ? "," : "") << ds.registry.name(comp[i]);
      msg << "}";
    }
    throw std::runtime_error(msg.str());
  }

  nma::FitResult fit = nma::run_fit(ds, rc.model, rc.sampler);
  fit.dataset_name = fs::path(rc.dataset_path).filename().string();

  fs::create_directories(rc.out_dir);
  nma::save_fit_json(fit, (fs::path(rc.out_dir) / "fit.json").string());
  {
    std::ofstream conv((fs::path(rc.out_dir) / "convergence.txt").string());
    nma::write_convergence_text(nma::convergence_report(fit), conv);
  }
  {
    json manifest;
    manifest["command"] = "fit";
    manifest["version"] = kVersion;
    manifest["schema"] = {{"major", nma::kFitSchemaMajor}, {"minor", nma::kFitSchemaMinor}};
    manifest["config_path"] = config_path;
    std::ostringstream h;
    h << std::hex << fnv1a_file(config_path);
    manifest["config_hash"] = h.str();
    manifest["dataset"] = rc.dataset_path;
    manifest["dataset_hash"] = fit.dataset_hash;
    manifest["seed"] = rc.sampler.master_seed;
    std::ofstream mf((fs::path(rc.out_dir) / "manifest.json").string());
    mf << manifest.dump(2) << '\n';
  }
  if (draws_csv) write_draws_csv(fit, (fs::path(rc.out_dir) / "draws.csv").string());

  std::cout << "variant: " << nma::variant_name(fit.config.variant) << '\n'
            << "total residual deviance (posterior mean): " << fit.dic.dbar_res << '\n'
            << "DIC: " << fit.dic.dic_raw << " (pD " << fit.dic.pd << ")\n"
            << "converged: " << (fit.converged ? "yes" : "NO") << '\n'
            << "outputs written to " << rc.out_dir << '\n';
  return fit.converged ? 0 : 2;
}

int cmd_report(const std::string& fit_path, const std::string& data_path,
               const std::string& out_dir) {
  const nma::FitResult fit = nma::load_fit_json(fit_path);
  nma::LoadOptions opts;
  opts.mx = fit.mx;
  opts.registry_names = fit.treatments;
  opts.expect = fit.outcome;
  const nma::Dataset ds = nma::load_dataset(data_path, opts);
  if (ds.content_hash() != fit.dataset_hash)
    throw std::runtime_error("dataset '" + data_path + "' does not match the fitted data");

  fs::create_directories(out_dir);
  const nma::LeagueTable lt = nma::league_table(fit);
  {
    std::ofstream f((fs::path(out_dir) / "league_table.csv").string());
    nma::write_league_csv(lt, f);
  }
  {
    std::ofstream f((fs::path(out_dir) / "league_table.txt").string());
    nma::write_league_text(lt, f);
  }
  {
    std::ofstream f((fs::path(out_dir) / "network_stats.csv").string());
    nma::write_network_stats_csv(ds, nma::network_stats(ds), f);
  }
  if (nma::uses_dp(fit.config.variant)) {
    const nma::CoClusterMatrix cc = nma::co_cluster_matrix(fit);
    {
      std::ofstream f((fs::path(out_dir) / "cocluster.csv").string());
      nma::write_cocluster_csv(cc, f);
    }
    {
      std::ofstream f((fs::path(out_dir) / "cocluster.svg").string());
      nma::write_cocluster_svg(cc, f);
    }
    const nma::ModalPartition mp = nma::modal_partition(fit);
    std::ofstream f((fs::path(out_dir) / "modal_partition.txt").string());
    f << "modal partition (reference '" << fit.treatments.front() << "' excluded): "
      << nma::partition_to_string(mp, fit.treatments) << '\n'
      << "proportion of draws: " << mp.proportion << '\n';
  } else {
    std::cout << "note: clustering summaries skipped (not a DP-variant fit)\n";
  }
  std::cout << "report written to " << out_dir << '\n';
  return 0;
}

int cmd_compare(const std::vector<std::string>& fit_paths, std::vector<std::string> labels,
                const std::string& out_dir) {
  std::vector<nma::FitResult> fits;
  for (const auto& p : fit_paths) fits.push_back(nma::load_fit_json(p));
  if (labels.empty())
    for (const auto& f : fits) labels.push_back(nma::variant_name(f.config.variant));
  if (labels.size() != fits.size())
    throw std::runtime_error("number of labels must match number of fits");
  std::vector<const nma::FitResult*> ptrs;
  for (const auto& f : fits) ptrs.push_back(&f);
  const nma::CompareTable table = nma::compare_fits(ptrs, labels);
  fs::create_directories(out_dir);
  {
    std::ofstream f((fs::path(out_dir) / "fitstats.csv").string());
    nma::write_fitstats_csv(table, f);
  }
  {
    std::ofstream f((fs::path(out_dir) / "fitstats.txt").string());
    nma::write_fitstats_text(table, f);
  }
  nma::write_fitstats_text(table, std::cout);
  return 0;
}

int cmd_prior_check(double alpha, int H, int n_treatments, long long sims, std::uint64_t seed) {
  const nma::PriorClusterSummary s =
      nma::prior_cluster_check(alpha, H, n_treatments, sims, seed);
  std::cout << "prior predictive number of occupied clusters (" << sims << " simulations)\n";
  std::cout << s.median << " (" << s.lower << " to " << s.upper << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian network meta-analysis with Dirichlet-process treatment clustering"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "fit a model described by a config file");
  std::string config_path;
  fit->add_option("--config", config_path, "run configuration file")->required();
  std::optional<std::uint64_t> seed_flag;
  std::optional<std::string> out_flag;
  std::optional<int> chains, iters, burnin, thin, threads;
  bool draws_csv = false;
  fit->add_option("--seed", seed_flag, "master RNG seed (overrides config)");
  fit->add_option("--out", out_flag, "output directory (overrides config)");
  fit->add_option("--chains", chains, "number of chains");
  fit->add_option("--iters", iters, "post-burn-in iterations");
  fit->add_option("--burnin", burnin, "burn-in iterations (after adaptation)");
  fit->add_option("--thin", thin, "thinning interval");
  fit->add_option("--threads", threads, "0 = one thread per chain, 1 = sequential");
  fit->add_flag("--draws-csv", draws_csv, "also write retained draws as CSV");

  // report
  auto* report = app.add_subcommand("report", "summaries and plots for a saved fit");
  std::string fit_path, data_path, report_out = "nma_report";
  report->add_option("--fit", fit_path, "fit.json produced by 'fit'")->required();
  report->add_option("--data", data_path, "dataset CSV the fit was run on")->required();
  report->add_option("--out", report_out, "output directory");

  // compare
  auto* compare = app.add_subcommand("compare", "model-fit statistics table across fits");
  std::vector<std::string> fit_paths, labels;
  std::string compare_out = "nma_compare";
  compare->add_option("--fits", fit_paths, "fit.json files")->required()->expected(-1);
  compare->add_option("--labels", labels, "row labels (default: variant names)");
  compare->add_option("--out", compare_out, "output directory");

  // prior-check
  auto* prior = app.add_subcommand("prior-check", "prior predictive on the number of clusters");
  double alpha = 1.0;
  int H = 0, n_treatments = 0;
  long long sims = 100000;
  std::uint64_t prior_seed = 1;
  prior->add_option("--alpha", alpha, "DP concentration");
  prior->add_option("--H", H, "cluster truncation")->required();
  prior->add_option("--treatments", n_treatments, "number of non-reference treatments")
      ->required();
  prior->add_option("--sims", sims, "number of simulations");
  prior->add_option("--seed", prior_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit)
      return cmd_fit(config_path, seed_flag, out_flag, chains, iters, burnin, thin, threads,
                     draws_csv);
    if (*report) return cmd_report(fit_path, data_path, report_out);
    if (*compare) return cmd_compare(fit_paths, labels, compare_out);
    if (*prior) return cmd_prior_check(alpha, H, n_treatments, sims, prior_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
