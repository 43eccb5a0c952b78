#include "nma/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nma {

namespace {

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

CompareTable compare_fits(const std::vector<const FitResult*>& fits,
                          const std::vector<std::string>& labels) {
  if (fits.empty()) throw std::invalid_argument("compare_fits needs at least one fit");
  if (labels.size() != fits.size())
    throw std::invalid_argument("compare_fits needs one label per fit");
  for (const auto* f : fits)
    if (f->dataset_hash != fits[0]->dataset_hash)
      throw std::runtime_error("compare_fits: fits come from different datasets");

  CompareTable t;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const FitResult& f = *fits[i];
    FitStatsRow row;
    row.label = labels[i];
    if (uses_blr(f.config.variant)) {
      row.has_b = true;
      auto b = f.pooled_B();
      std::sort(b.begin(), b.end());
      row.b_median = quantile_sorted(b, 0.5);
      row.b_lower = quantile_sorted(b, 0.025);
      row.b_upper = quantile_sorted(b, 0.975);
    }
    row.dres = f.dic.dbar_res;
    auto sd = f.pooled_sd();
    std::sort(sd.begin(), sd.end());
    row.sd_median = quantile_sorted(sd, 0.5);
    row.sd_lower = quantile_sorted(sd, 0.025);
    row.sd_upper_ci = quantile_sorted(sd, 0.975);
    row.dic = f.dic.dic_raw;
    row.dic_res = f.dic.dic_res;
    row.pd = f.dic.pd;
    t.rows.push_back(row);
  }
  std::stable_sort(t.rows.begin(), t.rows.end(),
                   [](const FitStatsRow& a, const FitStatsRow& b) { return a.dic < b.dic; });
  for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
    const double gap = t.rows[i + 1].dic - t.rows[i].dic;
    if (std::abs(gap) < 3.0)
      t.notes.push_back("DIC difference between '" + t.rows[i].label + "' and '" +
                        t.rows[i + 1].label + "' is " + fmt(gap) +
                        " (< 3): little evidence to prefer either");
  }
  return t;
}

void write_fitstats_csv(const CompareTable& t, std::ostream& out) {
  out << "model,B_median,B_lower,B_upper,total_residual_deviance,sd_median,sd_lower,sd_upper,"
         "DIC,pD\n";
  for (const auto& r : t.rows) {
    out << r.label << ',';
    if (r.has_b)
      out << fmt(r.b_median, 4) << ',' << fmt(r.b_lower, 4) << ',' << fmt(r.b_upper, 4);
    else
      out << ",,";
    out << ',' << fmt(r.dres, 4) << ',' << fmt(r.sd_median, 4) << ',' << fmt(r.sd_lower, 4) << ','
        << fmt(r.sd_upper_ci, 4) << ',' << fmt(r.dic, 2) << ',' << fmt(r.pd, 2) << '\n';
  }
}

void write_fitstats_text(const CompareTable& t, std::ostream& out) {
  out << std::left << std::setw(16) << "Model" << std::setw(26) << "B" << std::setw(12) << "Dres"
      << std::setw(22) << "Between-trial SD" << std::setw(8) << "DIC" << '\n';
  for (const auto& r : t.rows) {
    const std::string b =
        r.has_b ? fmt(r.b_median) + " (" + fmt(r.b_lower) + " to " + fmt(r.b_upper) + ")" : "";
    const std::string sd =
        fmt(r.sd_median) + " (" + fmt(r.sd_lower) + " to " + fmt(r.sd_upper_ci) + ")";
    out << std::left << std::setw(16) << r.label << std::setw(26) << b << std::setw(12)
        << fmt(r.dres) << std::setw(22) << sd << std::setw(8) << fmt(r.dic, 0) << '\n';
  }
  for (const auto& n : t.notes) out << "note: " << n << '\n';
}

ConvergenceReport convergence_report(const FitResult& fit) {
  ConvergenceReport rep;
  rep.rhat = fit.rhat;
  std::stable_sort(rep.rhat.begin(), rep.rhat.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  rep.pass = true;
  for (const auto& [name, r] : rep.rhat)
    if (!(r < rep.threshold)) rep.pass = false;
  return rep;
}

void write_convergence_text(const ConvergenceReport& r, std::ostream& out) {
  out << "Gelman-Rubin split-chain statistics (threshold " << fmt(r.threshold) << ")\n";
  for (const auto& [name, v] : r.rhat) {
    out << std::left << std::setw(14) << name;
    if (std::isfinite(v))
      out << fmt(v, 4);
    else
      out << "inf (degenerate: zero within-chain variance)";
    out << '\n';
  }
  out << "overall: " << (r.pass ? "PASS" : "FAIL") << '\n';
}

}  // namespace nma
