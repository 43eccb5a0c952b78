#include "nma/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nma/stats.hpp"

namespace nma {

namespace {

std::runtime_error load_error(const std::string& source, const std::string& msg) {
  return std::runtime_error(source + ": " + msg);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_num(const std::string& s, const std::string& source, int row,
                 const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw load_error(source, "row " + std::to_string(row) + ": cannot parse " + what +
                                 " value '" + s + "'");
  }
}

// FNV-1a over a canonical rendering; cheap and stable
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

TreatmentRegistry::TreatmentRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    for (std::size_t j = i + 1; j < names_.size(); ++j)
      if (names_[i] == names_[j])
        throw std::runtime_error("duplicate treatment label '" + names_[i] + "' in registry");
}

int TreatmentRegistry::find(const std::string& label) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == label) return static_cast<int>(i) + 1;
  return 0;
}

int TreatmentRegistry::add(const std::string& label) {
  const int id = find(label);
  if (id) return id;
  names_.push_back(label);
  return static_cast<int>(names_.size());
}

int Dataset::n_arms() const {
  int n = 0;
  for (const auto& s : studies) n += static_cast<int>(s.arms.size());
  return n;
}

std::string Dataset::content_hash() const {
  std::ostringstream os;
  write_dataset_csv(*this, os);
  os << "|mx=" << format_double(mx);
  std::ostringstream hex;
  hex << std::hex << fnv1a(os.str());
  return hex.str();
}

Dataset load_dataset(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");
  return parse_dataset(in, path, opts);
}

Dataset parse_dataset(std::istream& in, const std::string& source, const LoadOptions& opts) {
  std::string line;
  if (!std::getline(in, line)) throw load_error(source, "empty file");
  const auto header = split_csv_line(line);

  OutcomeKind kind;
  if (header == std::vector<std::string>{"study", "treatment", "r", "n"}) {
    kind = OutcomeKind::binomial;
  } else if (header == std::vector<std::string>{"study", "treatment", "y", "se"}) {
    kind = OutcomeKind::continuous;
  } else {
    throw load_error(source,
                     "header must be 'study,treatment,r,n' or 'study,treatment,y,se'");
  }
  if (opts.expect && *opts.expect != kind)
    throw load_error(source, "outcome kind in header does not match the configured outcome");

  Dataset ds;
  ds.outcome = kind;
  if (!opts.registry_names.empty()) {
    ds.registry = TreatmentRegistry(opts.registry_names);
  } else if (!opts.registry_path.empty()) {
    std::ifstream reg(opts.registry_path);
    if (!reg)
      throw std::runtime_error("cannot open treatment registry '" + opts.registry_path + "'");
    std::vector<std::string> names;
    std::string nm;
    while (std::getline(reg, nm)) {
      const auto b = nm.find_first_not_of(" \t\r");
      const auto e = nm.find_last_not_of(" \t\r");
      if (b == std::string::npos) continue;
      names.push_back(nm.substr(b, e - b + 1));
    }
    ds.registry = TreatmentRegistry(std::move(names));
  }
  const bool fixed_registry = ds.registry.size() > 0;

  int row = 1;
  StudyRow* current = nullptr;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4)
      throw load_error(source, "row " + std::to_string(row) + ": expected 4 fields, got " +
                                   std::to_string(f.size()));
    const std::string& study = f[0];
    const std::string& label = f[1];
    if (study.empty()) throw load_error(source, "row " + std::to_string(row) + ": empty study id");
    if (label.empty())
      throw load_error(source, "row " + std::to_string(row) + ": empty treatment label");

    int tid;
    if (fixed_registry) {
      tid = ds.registry.find(label);
      if (!tid)
        throw load_error(source, "row " + std::to_string(row) + ": unknown treatment label '" +
                                     label + "'");
    } else {
      tid = ds.registry.add(label);
    }

    ArmRecord arm;
    arm.treatment = tid;
    if (kind == OutcomeKind::binomial) {
      const double r = parse_num(f[2], source, row, "r");
      const double n = parse_num(f[3], source, row, "n");
      if (r != std::floor(r) || n != std::floor(n))
        throw load_error(source, "row " + std::to_string(row) + ": r and n must be integers");
      BinomialArm b{static_cast<long long>(r), static_cast<long long>(n)};
      if (b.size <= 0)
        throw load_error(source, "row " + std::to_string(row) + ": n must be positive");
      if (b.events < 0 || b.events > b.size)
        throw load_error(source, "row " + std::to_string(row) + ": need 0 <= r <= n");
      arm.outcome = b;
    } else {
      ContinuousArm c{parse_num(f[2], source, row, "y"), parse_num(f[3], source, row, "se")};
      if (!(c.se > 0))
        throw load_error(source, "row " + std::to_string(row) + ": se must be positive");
      if (!std::isfinite(c.mean))
        throw load_error(source, "row " + std::to_string(row) + ": y must be finite");
      arm.outcome = c;
    }

    if (!current || current->id != study) {
      // studies may appear in any order but rows of one study must be contiguous
      for (const auto& s : ds.studies)
        if (s.id == study)
          throw load_error(source, "row " + std::to_string(row) + ": study '" + study +
                                       "' appears in non-contiguous blocks");
      ds.studies.push_back(StudyRow{study, {}});
      current = &ds.studies.back();
    }
    current->arms.push_back(arm);
  }

  if (ds.studies.empty()) throw load_error(source, "no data rows");
  if (ds.n_treatments() < 2) throw load_error(source, "fewer than 2 treatments in the data");

  for (auto& s : ds.studies) {
    if (s.arms.size() < 2)
      throw load_error(source, "study '" + s.id + "' has fewer than 2 arms");
    std::sort(s.arms.begin(), s.arms.end(),
              [](const ArmRecord& a, const ArmRecord& b) { return a.treatment < b.treatment; });
    for (std::size_t k = 1; k < s.arms.size(); ++k)
      if (s.arms[k].treatment == s.arms[k - 1].treatment)
        throw load_error(source, "study '" + s.id + "' lists treatment '" +
                                     ds.registry.name(s.arms[k].treatment) + "' twice");
  }

  if (opts.mx) {
    ds.mx = *opts.mx;
  } else if (kind == OutcomeKind::binomial) {
    // mean baseline logit with a 0.5/1 continuity adjustment
    double acc = 0;
    for (const auto& s : ds.studies) {
      const auto& b = std::get<BinomialArm>(s.arms[0].outcome);
      acc += logit((static_cast<double>(b.events) + 0.5) / (static_cast<double>(b.size) + 1.0));
    }
    ds.mx = acc / static_cast<double>(ds.n_studies());
  } else {
    double acc = 0;
    for (const auto& s : ds.studies) acc += std::get<ContinuousArm>(s.arms[0].outcome).mean;
    ds.mx = acc / static_cast<double>(ds.n_studies());
  }
  if (!std::isfinite(ds.mx)) throw load_error(source, "centering constant mx is not finite");

  return ds;
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << (ds.outcome == OutcomeKind::binomial ? "study,treatment,r,n\n" : "study,treatment,y,se\n");
  for (const auto& s : ds.studies) {
    for (const auto& a : s.arms) {
      out << s.id << ',' << ds.registry.name(a.treatment) << ',';
      if (ds.outcome == OutcomeKind::binomial) {
        const auto& b = std::get<BinomialArm>(a.outcome);
        out << b.events << ',' << b.size << '\n';
      } else {
        const auto& c = std::get<ContinuousArm>(a.outcome);
        out << format_double(c.mean) << ',' << format_double(c.se) << '\n';
      }
    }
  }
}

Connectivity check_connectivity(const Dataset& ds) {
  const int nt = ds.n_treatments();
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(nt));
  for (const auto& s : ds.studies)
    for (std::size_t i = 0; i < s.arms.size(); ++i)
      for (std::size_t j = i + 1; j < s.arms.size(); ++j) {
        const int a = s.arms[i].treatment - 1;
        const int b = s.arms[j].treatment - 1;
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
      }

  Connectivity res;
  std::vector<int> comp(static_cast<std::size_t>(nt), -1);
  int ncomp = 0;
  for (int start = 0; start < nt; ++start) {
    if (comp[static_cast<std::size_t>(start)] >= 0) continue;
    std::vector<int> stack{start};
    comp[static_cast<std::size_t>(start)] = ncomp;
    res.components.emplace_back();
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      res.components.back().push_back(v + 1);
      for (int w : adj[static_cast<std::size_t>(v)])
        if (comp[static_cast<std::size_t>(w)] < 0) {
          comp[static_cast<std::size_t>(w)] = ncomp;
          stack.push_back(w);
        }
    }
    std::sort(res.components.back().begin(), res.components.back().end());
    ++ncomp;
  }
  res.connected = (ncomp == 1);
  return res;
}

NetworkStats network_stats(const Dataset& ds) {
  const int nt = ds.n_treatments();
  NetworkStats st;
  st.node_weight = Eigen::VectorXd::Zero(nt);
  st.pair_trials = Eigen::MatrixXi::Zero(nt, nt);
  for (const auto& s : ds.studies) {
    for (const auto& a : s.arms) {
      const int t = a.treatment - 1;
      if (ds.outcome == OutcomeKind::binomial) {
        st.node_weight[t] += static_cast<double>(std::get<BinomialArm>(a.outcome).size);
      } else {
        const double se = std::get<ContinuousArm>(a.outcome).se;
        st.node_weight[t] += 1.0 / (se * se);
      }
    }
    for (std::size_t i = 0; i < s.arms.size(); ++i)
      for (std::size_t j = i + 1; j < s.arms.size(); ++j) {
        const int a = s.arms[i].treatment - 1;
        const int b = s.arms[j].treatment - 1;
        st.pair_trials(a, b) += 1;
        st.pair_trials(b, a) += 1;
      }
  }
  return st;
}

void write_network_stats_csv(const Dataset& ds, const NetworkStats& st, std::ostream& out) {
  out << "record,treatment_a,treatment_b,value\n";
  for (int t = 0; t < ds.n_treatments(); ++t)
    out << "node," << ds.registry.name(t + 1) << ",," << format_double(st.node_weight[t]) << '\n';
  for (int a = 0; a < ds.n_treatments(); ++a)
    for (int b = a + 1; b < ds.n_treatments(); ++b)
      if (st.pair_trials(a, b) > 0)
        out << "edge," << ds.registry.name(a + 1) << ',' << ds.registry.name(b + 1) << ','
            << st.pair_trials(a, b) << '\n';
}

}  // namespace nma
