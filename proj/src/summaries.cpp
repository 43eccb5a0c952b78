#include "nma/summaries.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nma {

namespace {

Eigen::MatrixXd effect_draws(const FitResult& fit) {
  // columns for all treatments, reference pinned at 0
  const int nt = fit.n_treatments();
  Eigen::MatrixXd d(fit.total_draws(), nt);
  d.col(0).setZero();
  d.rightCols(nt - 1) = fit.pooled_d();
  return d;
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

const LeagueCell& LeagueTable::cell_by_name(const std::string& row, const std::string& col) const {
  int r = -1, c = -1;
  for (int i = 0; i < size(); ++i) {
    if (names[static_cast<std::size_t>(i)] == row) r = i;
    if (names[static_cast<std::size_t>(i)] == col) c = i;
  }
  if (r < 0 || c < 0) throw std::invalid_argument("unknown treatment label in league lookup");
  return cell(r, c);
}

LeagueTable league_table(const FitResult& fit) {
  const int nt = fit.n_treatments();
  const Eigen::MatrixXd d = effect_draws(fit);
  const bool higher = fit.config.benefit == Benefit::higher_is_better;
  const bool binom = fit.outcome == OutcomeKind::binomial;

  LeagueTable t;
  t.outcome = fit.outcome;
  t.convergence_warning = !fit.converged;
  t.order.resize(static_cast<std::size_t>(nt));
  std::iota(t.order.begin(), t.order.end(), 0);
  const Eigen::VectorXd means = d.colwise().mean();
  std::stable_sort(t.order.begin(), t.order.end(), [&](int a, int b) {
    return higher ? means[a] > means[b] : means[a] < means[b];
  });
  for (int i : t.order) t.names.push_back(fit.treatments[static_cast<std::size_t>(i)]);

  t.cells.assign(static_cast<std::size_t>(nt * nt), LeagueCell{});
  const int ndraw = static_cast<int>(d.rows());
  std::vector<double> rel(static_cast<std::size_t>(ndraw));
  for (int r = 0; r < nt; ++r) {
    for (int c = 0; c < nt; ++c) {
      if (r == c) continue;
      const int a = t.order[static_cast<std::size_t>(r)];
      const int b = t.order[static_cast<std::size_t>(c)];
      int better = 0;
      for (int j = 0; j < ndraw; ++j) {
        const double diff = d(j, b) - d(j, a);
        rel[static_cast<std::size_t>(j)] = binom ? std::exp(diff) : diff;
        better += higher ? (diff > 0) : (diff < 0);
      }
      std::sort(rel.begin(), rel.end());
      LeagueCell& cell = t.cells[static_cast<std::size_t>(r * nt + c)];
      cell.median = quantile_sorted(rel, 0.5);
      cell.lower = quantile_sorted(rel, 0.025);
      cell.upper = quantile_sorted(rel, 0.975);
      cell.p_col_better = static_cast<double>(better) / static_cast<double>(ndraw);
      cell.significant = cell.p_col_better >= 0.975;
    }
  }
  return t;
}

CoClusterMatrix co_cluster_matrix(const FitResult& fit) {
  if (!uses_dp(fit.config.variant))
    throw std::runtime_error("co-cluster summary requires a DP-variant fit");
  const int nt = fit.n_treatments();
  const Eigen::MatrixXi cl = fit.pooled_cluster();
  CoClusterMatrix m;
  m.names = fit.treatments;
  m.prob = Eigen::MatrixXd::Zero(nt, nt);
  m.prob.diagonal().setOnes();
  const double n = static_cast<double>(cl.rows());
  for (int a = 1; a < nt; ++a)
    for (int b = a + 1; b < nt; ++b) {
      const double p =
          static_cast<double>((cl.col(a - 1).array() == cl.col(b - 1).array()).count()) / n;
      m.prob(a, b) = p;
      m.prob(b, a) = p;
    }
  return m;
}

ModalPartition modal_partition(const FitResult& fit) {
  if (!uses_dp(fit.config.variant))
    throw std::runtime_error("modal partition requires a DP-variant fit");
  const int nt = fit.n_treatments();
  const Eigen::MatrixXi cl = fit.pooled_cluster();

  auto canonical = [&](int row) {
    // blocks keyed by first member, members ascending -> label-free form
    std::vector<std::vector<int>> blocks;
    std::map<int, std::size_t> seen;  // cluster label -> block index
    for (int k = 1; k < nt; ++k) {
      const int lab = cl(row, k - 1);
      const auto it = seen.find(lab);
      if (it == seen.end()) {
        seen[lab] = blocks.size();
        blocks.push_back({k + 1});
      } else {
        blocks[it->second].push_back(k + 1);
      }
    }
    std::sort(blocks.begin(), blocks.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });
    std::string key;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (b) key += '|';
      for (std::size_t j = 0; j < blocks[b].size(); ++j) {
        if (j) key += ',';
        key += std::to_string(blocks[b][j]);
      }
    }
    return std::make_pair(key, blocks);
  };

  std::map<std::string, std::pair<long long, std::vector<std::vector<int>>>> counts;
  for (int row = 0; row < cl.rows(); ++row) {
    auto [key, blocks] = canonical(row);
    auto& slot = counts[key];
    if (slot.first == 0) slot.second = std::move(blocks);
    ++slot.first;
  }
  ModalPartition part;
  long long best = 0;
  for (const auto& [key, val] : counts) {
    // map iterates keys in lexicographic order, which settles ties
    if (val.first > best) {
      best = val.first;
      part.key = key;
      part.blocks = val.second;
    }
  }
  part.proportion = static_cast<double>(best) / static_cast<double>(cl.rows());
  return part;
}

std::string partition_to_string(const ModalPartition& part,
                                const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t b = 0; b < part.blocks.size(); ++b) {
    if (b) out += " | ";
    out += '{';
    for (std::size_t j = 0; j < part.blocks[b].size(); ++j) {
      if (j) out += ", ";
      out += names[static_cast<std::size_t>(part.blocks[b][j] - 1)];
    }
    out += '}';
  }
  return out;
}

PriorClusterSummary prior_cluster_check(double alpha, int H, int n_treatments, long long n_sims,
                                        std::uint64_t seed) {
  if (H < 1 || n_treatments < 1 || n_sims < 1 || !(alpha > 0))
    throw std::invalid_argument("bad prior_cluster_check arguments");
  Rng rng(seed);
  PriorClusterSummary out;
  out.n_sims = n_sims;
  out.histogram.assign(static_cast<std::size_t>(std::min(H, n_treatments)), 0);
  std::vector<char> used(static_cast<std::size_t>(H));
  Eigen::VectorXd q(std::max(H - 1, 0));
  for (long long s = 0; s < n_sims; ++s) {
    for (int j = 0; j < q.size(); ++j) q[j] = rng.beta(1.0, alpha);
    const StickWeights w = stick_break(q);
    std::fill(used.begin(), used.end(), 0);
    int distinct = 0;
    for (int t = 0; t < n_treatments; ++t) {
      const double u = rng.uniform();
      double acc = 0;
      int pick = H - 1;
      for (int h = 0; h < H; ++h) {
        acc += w.p[h];
        if (u <= acc) {
          pick = h;
          break;
        }
      }
      if (!used[static_cast<std::size_t>(pick)]) {
        used[static_cast<std::size_t>(pick)] = 1;
        ++distinct;
      }
    }
    ++out.histogram[static_cast<std::size_t>(distinct - 1)];
  }
  // nearest-rank quantiles of the integer count distribution
  auto rank_value = [&](double qq) {
    const long long rank =
        std::max<long long>(1, static_cast<long long>(std::ceil(qq * static_cast<double>(n_sims))));
    long long cum = 0;
    for (std::size_t k = 0; k < out.histogram.size(); ++k) {
      cum += out.histogram[k];
      if (cum >= rank) return static_cast<int>(k) + 1;
    }
    return static_cast<int>(out.histogram.size());
  };
  out.lower = rank_value(0.025);
  out.median = rank_value(0.5);
  out.upper = rank_value(0.975);
  return out;
}

std::vector<EssRatio> ess_ratio(const FitResult& fit_lumped, const FitResult& fit_standard,
                                const std::vector<std::pair<int, int>>& pairs) {
  if (fit_lumped.dataset_hash != fit_standard.dataset_hash)
    throw std::runtime_error("ess_ratio requires fits of the same dataset");
  const Eigen::MatrixXd dl = effect_draws(fit_lumped);
  const Eigen::MatrixXd ds = effect_draws(fit_standard);
  auto contrast_var = [](const Eigen::MatrixXd& d, int a, int b) {
    const Eigen::ArrayXd con = d.col(a - 1).array() - d.col(b - 1).array();
    const double m = con.mean();
    return (con - m).square().sum() / static_cast<double>(con.size() - 1);
  };
  std::vector<EssRatio> out;
  for (const auto& [a, b] : pairs) {
    EssRatio r;
    r.a = a;
    r.b = b;
    const double vs = contrast_var(ds, a, b);
    const double vl = contrast_var(dl, a, b);
    if (vl == 0) {
      r.infinite = true;
      r.ratio = std::numeric_limits<double>::infinity();
    } else {
      r.ratio = vs / vl;
    }
    out.push_back(r);
  }
  return out;
}

void write_league_csv(const LeagueTable& t, std::ostream& out) {
  out << "row_treatment,col_treatment,median,lower,upper,p_col_better,significant\n";
  const int nt = t.size();
  for (int r = 0; r < nt; ++r)
    for (int c = 0; c < nt; ++c) {
      if (r == c) continue;
      const LeagueCell& cell = t.cell(r, c);
      out << t.names[static_cast<std::size_t>(r)] << ',' << t.names[static_cast<std::size_t>(c)]
          << ',' << fmt(cell.median, 6) << ',' << fmt(cell.lower, 6) << ',' << fmt(cell.upper, 6)
          << ',' << fmt(cell.p_col_better, 6) << ',' << (cell.significant ? 1 : 0) << '\n';
    }
}

void write_league_text(const LeagueTable& t, std::ostream& out) {
  if (t.convergence_warning)
    out << "WARNING: fit did not meet the convergence threshold; summaries may be unreliable\n";
  const int nt = t.size();
  std::vector<std::vector<std::string>> grid(static_cast<std::size_t>(nt));
  std::size_t width = 0;
  for (int r = 0; r < nt; ++r) {
    for (int c = 0; c < r; ++c) {
      const LeagueCell& cell = t.cell(r, c);
      grid[static_cast<std::size_t>(r)].push_back(fmt(cell.median) + " (" + fmt(cell.lower) +
                                                  " to " + fmt(cell.upper) + ")" +
                                                  (cell.significant ? " *" : ""));
      width = std::max(width, grid[static_cast<std::size_t>(r)].back().size());
    }
    grid[static_cast<std::size_t>(r)].push_back(t.names[static_cast<std::size_t>(r)]);
    width = std::max(width, t.names[static_cast<std::size_t>(r)].size());
  }
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << std::left << std::setw(static_cast<int>(width) + 2) << row[c];
    out << '\n';
  }
  out << "cell = effect of column treatment vs row treatment; * marks >= 97.5% probability that "
         "the column treatment is better\n";
}

void write_cocluster_csv(const CoClusterMatrix& m, std::ostream& out) {
  out << "treatment";
  for (const auto& n : m.names) out << ',' << n;
  out << '\n';
  for (int r = 0; r < m.prob.rows(); ++r) {
    out << m.names[static_cast<std::size_t>(r)];
    for (int c = 0; c < m.prob.cols(); ++c) out << ',' << fmt(m.prob(r, c), 6);
    out << '\n';
  }
}

void write_cocluster_svg(const CoClusterMatrix& m, std::ostream& out) {
  const int nt = static_cast<int>(m.prob.rows());
  const double size = 600, margin = 110;
  const double cell = (size - margin) / nt;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" "
         "viewBox=\"0 0 600 600\">\n";
  out << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  for (int r = 0; r < nt; ++r) {
    for (int c = 0; c < nt; ++c) {
      const double v = std::clamp(m.prob(r, c), 0.0, 1.0);
      // white -> dark blue ramp
      const int red = static_cast<int>(std::lround(255 + (8 - 255) * v));
      const int green = static_cast<int>(std::lround(255 + (48 - 255) * v));
      const int blue = static_cast<int>(std::lround(255 + (107 - 255) * v));
      const double x = margin + c * cell, y = margin + r * cell;
      out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(cell)
          << "\" height=\"" << fmt(cell) << "\" fill=\"rgb(" << red << ',' << green << ',' << blue
          << ")\" stroke=\"#999\"/>\n";
      out << "<text x=\"" << fmt(x + cell / 2) << "\" y=\"" << fmt(y + cell / 2 + 4)
          << "\" text-anchor=\"middle\" font-size=\"12\" fill=\""
          << (v > 0.6 ? "white" : "black") << "\">" << fmt(v) << "</text>\n";
    }
  }
  for (int i = 0; i < nt; ++i) {
    out << "<text x=\"" << fmt(margin + i * cell + cell / 2) << "\" y=\"" << fmt(margin - 8)
        << "\" text-anchor=\"middle\" font-size=\"12\">" << m.names[static_cast<std::size_t>(i)]
        << "</text>\n";
    out << "<text x=\"" << fmt(margin - 8) << "\" y=\"" << fmt(margin + i * cell + cell / 2 + 4)
        << "\" text-anchor=\"end\" font-size=\"12\">" << m.names[static_cast<std::size_t>(i)]
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace nma
