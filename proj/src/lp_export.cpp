#include "qrs/lp_export.hpp"

#include <cstdio>
#include <map>
#include <sstream>
#include <vector>

namespace qrs {

const char* to_string(LpVariant v) {
  switch (v) {
    case LpVariant::General:
      return "general";
    case LpVariant::Balanced:
      return "balanced";
    case LpVariant::ReversibleLocal:
      return "reversible_local";
  }
  return "?";
}

LpVariant lp_variant_from_string(const std::string& s) {
  if (s == "general") return LpVariant::General;
  if (s == "balanced") return LpVariant::Balanced;
  if (s == "reversible_local") return LpVariant::ReversibleLocal;
  throw SpecError("unknown LP variant '" + s + "'");
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Linear expression "+ c x - d y"; zero coefficients skipped.
struct Expr {
  std::vector<std::pair<double, std::string>> terms;

  void add(double c, const std::string& var) {
    if (c != 0.0) terms.emplace_back(c, var);
  }
  std::string str() const {
    if (terms.empty()) return "0 dummy";
    std::ostringstream os;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const double c = terms[k].first;
      if (k) os << (c < 0 ? " - " : " + ");
      else if (c < 0) os << "- ";
      const double a = c < 0 ? -c : c;
      if (a != 1.0) os << num(a) << ' ';
      os << terms[k].second;
    }
    return os.str();
  }
};

std::string macro_name(const Macrostate& x) {
  std::string s = "g";
  for (int c : x.counts) s += "_" + std::to_string(c);
  return s;
}

class LpWriter {
 public:
  explicit LpWriter(std::ostream& os) : os_(os) {}

  void objective(const Expr& e, const std::string& comment) {
    os_ << "\\ " << comment << "\nMaximize\n obj: " << e.str() << "\nSubject To\n";
  }
  void row(const std::string& name, const Expr& e, const char* sense, double rhs) {
    os_ << ' ' << name << ": " << e.str() << ' ' << sense << ' ' << num(rhs) << '\n';
    ++stats.rows;
  }
  void bounds(const std::vector<std::string>& upper_one, bool dummy) {
    os_ << "Bounds\n";
    for (const auto& v : upper_one) os_ << " 0 <= " << v << " <= 1\n";
    if (dummy) os_ << " dummy = 0\n";
    os_ << "End\n";
  }

  LpStats stats;

 private:
  std::ostream& os_;
};

LpStats export_flows(const AdmissionProblem& problem, bool symmetric, std::ostream& os) {
  const auto& sys = problem.sys;
  const auto& tr = sys.transitions();
  auto pi = [](std::size_t s) { return "pi_" + std::to_string(s); };
  auto eta = [](std::size_t s, std::size_t t) { return "eta_" + std::to_string(s) + "_" + std::to_string(t); };

  LpWriter w(os);
  Expr obj;
  for (std::size_t s = 0; s < sys.size(); ++s) obj.add(problem.rewards.rcont[s], pi(s));
  for (std::size_t k = 0; k < tr.size(); ++k) obj.add(problem.rewards.rdisc[k], eta(tr[k].from, tr[k].to));
  w.objective(obj, symmetric ? "admission control, local balance" : "admission control, flow balance");
  bool dummy = obj.terms.empty();

  if (symmetric) {
    std::map<std::pair<std::size_t, std::size_t>, bool> seen;
    for (const auto& t : tr) seen[{t.from, t.to}] = true;
    std::size_t r = 0;
    for (const auto& [key, unused] : seen) {
      (void)unused;
      const auto [a, b] = key;
      if (seen.count({b, a}) && b < a) continue;
      Expr e;
      e.add(1.0, eta(a, b));
      if (seen.count({b, a})) e.add(-1.0, eta(b, a));
      w.row("sym_" + std::to_string(r++), e, "=", 0.0);
    }
  } else {
    for (std::size_t s = 0; s < sys.size(); ++s) {
      Expr e;
      for (auto k : sys.out_edges(s)) e.add(1.0, eta(s, tr[k].to));
      for (auto k : sys.in_edges(s)) e.add(-1.0, eta(tr[k].from, s));
      dummy = dummy || e.terms.empty();
      w.row("bal_" + std::to_string(s), e, "=", 0.0);
    }
  }
  Expr norm;
  for (std::size_t s = 0; s < sys.size(); ++s) norm.add(1.0, pi(s));
  w.row("norm", norm, "=", 1.0);

  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto& t = tr[k];
    Expr e;
    e.add(1.0, eta(t.from, t.to));
    e.add(-t.rate, pi(t.from));
    const std::string name = "cap_" + std::to_string(t.from) + "_" + std::to_string(t.to);
    w.row(name, e, t.kind == TransitionKind::Arrival ? "<=" : "=", 0.0);
  }
  if (!symmetric) {
    // Arrivals of one class out of one microstate share a single admission
    // probability.
    for (std::size_t s = 0; s < sys.size(); ++s) {
      std::map<int, std::vector<std::size_t>> by_class;
      for (auto k : sys.out_edges(s))
        if (tr[k].kind == TransitionKind::Arrival && tr[k].rate > 0.0) by_class[tr[k].cls].push_back(k);
      for (const auto& [cls, ks] : by_class)
        for (std::size_t a = 1; a < ks.size(); ++a) {
          const auto& t0 = tr[ks[0]];
          const auto& t1 = tr[ks[a]];
          Expr e;
          e.add(t1.rate, eta(s, t0.to));
          e.add(-t0.rate, eta(s, t1.to));
          w.row("share_" + std::to_string(s) + "_" + std::to_string(cls + 1) + "_" + std::to_string(a), e, "=", 0.0);
        }
    }
  }
  std::vector<std::string> unit;
  for (std::size_t s = 0; s < sys.size(); ++s) unit.push_back(pi(s));
  w.bounds(unit, dummy);
  w.stats.variables = sys.size() + tr.size();
  return w.stats;
}

LpStats export_balanced(const AdmissionProblem& problem, std::ostream& os) {
  const auto o = BalancedObjective::build(problem);
  const auto& X = o.domain;
  LpWriter w(os);
  Expr obj;
  for (std::size_t k = 0; k < X.size(); ++k) {
    double c = o.occupation[k];
    for (int i = 0; i < X.dim(); ++i)
      if (X[k][i] > 0) c += o.arrival[*X.index_of(X[k].minus(i))][static_cast<std::size_t>(i)];
    obj.add(c, macro_name(X[k]));
  }
  w.objective(obj, "balanced admission control");
  for (std::size_t k = 0; k < X.size(); ++k)
    for (int i = 0; i < X.dim(); ++i) {
      const auto up = X[k].plus(i);
      if (!X.contains(up)) continue;
      Expr e;
      e.add(1.0, macro_name(X[k]));
      e.add(-1.0, macro_name(up));
      w.row("mono_" + macro_name(X[k]).substr(2) + "_" + std::to_string(i + 1), e, ">=", 0.0);
    }
  Expr norm;
  for (std::size_t k = 0; k < X.size(); ++k) norm.add(o.mass[k], macro_name(X[k]));
  w.row("norm", norm, "=", 1.0);
  w.bounds({}, obj.terms.empty());
  w.stats.variables = X.size();
  return w.stats;
}

}  // namespace

LpStats export_lp(const AdmissionProblem& problem, LpVariant variant, std::ostream& os) {
  problem.validate();
  switch (variant) {
    case LpVariant::General:
      return export_flows(problem, false, os);
    case LpVariant::ReversibleLocal:
      if (problem.sys.size() != problem.sys.macro_image().size())
        throw UnsupportedError("the local-balance LP needs an identity counting function");
      return export_flows(problem, true, os);
    case LpVariant::Balanced:
      return export_balanced(problem, os);
  }
  return {};
}

}  // namespace qrs
