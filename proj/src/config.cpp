#include "qrs/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace qrs {

using nlohmann::json;

namespace {

// Object reader that remembers which keys were consumed.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (auto v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  template <class Int>
  void integer(const char* key, Int& out, long long min) {
    if (auto v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < min) fail(key, "expected an integer >= " + std::to_string(min));
      out = static_cast<Int>(v->get<long long>());
    }
  }
  void string(const char* key, std::string& out) {
    if (auto v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void numbers(const char* key, std::vector<double>& out) {
    if (auto v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(key, "expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void strings(const char* key, std::vector<std::string>& out) {
    if (auto v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) fail(key, "expected an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + path_ + "." + item.key() + "'");
  }

  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(path_ + "." + key + ": " + what);
  }
  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool positive(const std::vector<double>& v) {
  for (double x : v)
    if (!(x > 0.0)) return false;
  return !v.empty();
}

void parse_model(const json& j, ModelBlock& m) {
  Obj o(j, "model");
  o.string("scenario", m.scenario);
  require(m.scenario == "adversarial" || m.scenario == "nonadversarial",
          "model.scenario must be 'adversarial' or 'nonadversarial'");
  m.spec = RedundancySpec::case_study(m.scenario == "adversarial");
  o.numbers("nu", m.spec.nu);
  o.numbers("zeta", m.spec.zeta);
  o.numbers("mu", m.spec.mu_srv);
  o.numbers("r", m.spec.r);
  if (auto b = o.find("B")) {
    require(b->is_array(), "model.B must be a matrix of 0/1 entries");
    m.spec.B.clear();
    for (const auto& row : *b) {
      require(row.is_array(), "model.B must be a matrix of 0/1 entries");
      std::vector<int> r;
      for (const auto& e : row) {
        require(e.is_number_integer() && (e == 0 || e == 1), "model.B must be a matrix of 0/1 entries");
        r.push_back(e.get<int>());
      }
      m.spec.B.push_back(std::move(r));
    }
  }
  o.finish();
  m.spec.n = static_cast<int>(m.spec.B.size());
  m.spec.m = m.spec.B.empty() ? 0 : static_cast<int>(m.spec.B.front().size());
  try {
    m.spec.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

void parse_algorithm(const json& j, AlgorithmBlock& a) {
  Obj o(j, "algorithm");
  o.string("name", a.name);
  o.string("family", a.family);
  Family fam;
  try {
    fam = family_from_string(a.family);
  } catch (const SpecError& e) {
    throw ConfigError(std::string("algorithm.family: ") + e.what());
  }
  a.theta_init = default_theta_init(fam);
  o.number("theta_init", a.theta_init);
  std::size_t batch = a.sage.batch;
  o.integer("batch", batch, 1);
  a.sage.batch = a.q.batch = batch;
  o.number("step", a.sage.step);
  o.number("step_theta", a.ac.step_theta);
  double rbar = a.ac.step_rbar;
  o.number("step_rbar", rbar);
  a.ac.step_rbar = a.q.step_rbar = rbar;
  o.number("step_v", a.ac.step_v);
  o.number("step_q", a.q.step_q);
  o.number("eps0", a.q.eps0);
  o.number("eps_decrement", a.q.eps_decrement);
  o.number("eps_floor", a.q.eps_floor);
  o.finish();
  a.sage.family = a.ac.family = fam;
  a.sage.theta_init = a.ac.theta_init = a.theta_init;
  require(a.name == "sage" || a.name == "ac" || a.name == "q", "algorithm.name must be one of sage, ac, q");
  try {
    if (a.name == "sage") a.sage.validate();
    if (a.name == "ac") a.ac.validate();
    if (a.name == "q") a.q.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("algorithm: ") + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Obj o(j, "config");
  if (auto v = o.find("schema_version")) {
    require(v->is_number_integer() && v->get<int>() == kSchemaVersion,
            "schema_version must be " + std::to_string(kSchemaVersion));
  } else {
    throw ConfigError("missing schema_version");
  }
  o.string("output_dir", c.output_dir);
  if (auto v = o.find("seeds")) {
    require(v->is_array() && !v->empty(), "seeds must be a nonempty array of nonnegative integers");
    c.seeds.clear();
    for (const auto& e : *v) {
      require(e.is_number_integer() && e.get<long long>() >= 0, "seeds must be a nonempty array of nonnegative integers");
      c.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  o.integer("steps", c.steps, 0);
  o.integer("jobs", c.jobs, 1);

  if (auto v = o.find("toys")) {
    Obj t(*v, "toys");
    t.strings("ids", c.toys.ids);
    t.numbers("nu", c.toys.nu);
    t.finish();
  }
  for (const auto& id : c.toys.ids) {
    try {
      toy_from_string(id);
    } catch (const SpecError& e) {
      throw ConfigError(std::string("toys.ids: ") + e.what());
    }
  }
  require(c.toys.nu.size() == 2 && positive(c.toys.nu), "toys.nu must hold two positive rates");

  if (auto v = o.find("sweep")) {
    Obj s(*v, "sweep");
    s.string("toy", c.sweep.toy);
    s.numbers("nu1", c.sweep.nu1);
    s.numbers("nu2", c.sweep.nu2);
    s.finish();
  }
  try {
    toy_from_string(c.sweep.toy);
  } catch (const SpecError& e) {
    throw ConfigError(std::string("sweep.toy: ") + e.what());
  }
  require(positive(c.sweep.nu1) && positive(c.sweep.nu2), "sweep grids must hold positive rates");

  if (auto v = o.find("model")) parse_model(*v, c.model);
  if (auto v = o.find("algorithm")) parse_algorithm(*v, c.algorithm);
  else parse_algorithm(json::object(), c.algorithm);

  if (auto v = o.find("lp")) {
    Obj l(*v, "lp");
    l.string("toy", c.lp.toy);
    l.numbers("nu", c.lp.nu);
    l.string("variant", c.lp.variant);
    l.finish();
  }
  try {
    toy_from_string(c.lp.toy);
    lp_variant_from_string(c.lp.variant);
  } catch (const SpecError& e) {
    throw ConfigError(std::string("lp: ") + e.what());
  }
  require(c.lp.nu.size() == 2 && positive(c.lp.nu), "lp.nu must hold two positive rates");

  if (auto v = o.find("verify")) {
    Obj s(*v, "verify");
    s.strings("suites", c.verify.suites);
    s.finish();
  }
  for (const auto& s : c.verify.suites)
    require(s == "core" || s == "balance" || s == "models" || s == "gradients", "verify.suites: unknown suite '" + s + "'");
  o.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  const auto& s = c.model.spec;
  const auto& a = c.algorithm;
  return json{
      {"schema_version", c.schema_version},
      {"output_dir", c.output_dir},
      {"seeds", c.seeds},
      {"steps", c.steps},
      {"jobs", c.jobs},
      {"toys", {{"ids", c.toys.ids}, {"nu", c.toys.nu}}},
      {"sweep", {{"toy", c.sweep.toy}, {"nu1", c.sweep.nu1}, {"nu2", c.sweep.nu2}}},
      {"model", {{"scenario", c.model.scenario}, {"nu", s.nu}, {"zeta", s.zeta}, {"mu", s.mu_srv}, {"r", s.r}, {"B", s.B}}},
      {"algorithm",
       {{"name", a.name},
        {"family", a.family},
        {"theta_init", a.theta_init},
        {"batch", a.sage.batch},
        {"step", a.sage.step},
        {"step_theta", a.ac.step_theta},
        {"step_rbar", a.ac.step_rbar},
        {"step_v", a.ac.step_v},
        {"step_q", a.q.step_q},
        {"eps0", a.q.eps0},
        {"eps_decrement", a.q.eps_decrement},
        {"eps_floor", a.q.eps_floor}}},
      {"lp", {{"toy", c.lp.toy}, {"nu", c.lp.nu}, {"variant", c.lp.variant}}},
      {"verify", {{"suites", c.verify.suites}}},
  };
}

json to_json(const BalanceFunction& g) {
  json domain = json::array();
  for (const auto& x : g.domain().members()) domain.push_back(x.counts);
  return json{{"domain", domain}, {"values", g.values()}};
}

BalanceFunction balance_function_from_json(const json& j) {
  Obj o(j, "balance_function");
  const json* d = o.find("domain");
  const json* v = o.find("values");
  o.finish();
  require(d && v && d->is_array() && v->is_array() && d->size() == v->size(),
          "balance function needs parallel 'domain' and 'values' arrays");
  std::vector<Macrostate> xs;
  std::vector<double> vals;
  for (std::size_t k = 0; k < d->size(); ++k) {
    xs.emplace_back((*d)[k].get<std::vector<int>>());
    vals.push_back((*v)[k].get<double>());
  }
  // FerrersSet sorts its members; reorder values to match.
  std::vector<std::size_t> order(xs.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<Macrostate> sorted;
  std::vector<double> sorted_vals;
  for (auto k : order) {
    sorted.push_back(xs[k]);
    sorted_vals.push_back(vals[k]);
  }
  try {
    return BalanceFunction(FerrersSet(sorted), sorted_vals);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("balance function: ") + e.what());
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      const auto dash = part.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        const auto lo = std::stoull(part.substr(0, dash));
        const auto hi = std::stoull(part.substr(dash + 1));
        if (hi < lo) throw ConfigError("bad seed range '" + part + "'");
        for (auto k = lo; k <= hi; ++k) out.push_back(k);
      }
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad seed list '" + s + "'");
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

}  // namespace qrs
