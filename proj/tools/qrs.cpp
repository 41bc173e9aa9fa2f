// Command-line runner: reproduce-toys, sweep, case-study, verify, export-lp.
//
// Exit codes: 0 success, 1 verification failure or runtime error, 2 bad
// configuration or command line.

#include "qrs/config.hpp"
#include "qrs/control.hpp"
#include "qrs/lp_export.hpp"
#include "qrs/rl.hpp"
#include "qrs/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitVerify = 1;
constexpr int kExitConfig = 2;

// Runs fn(0..count-1) on up to jobs threads; results are stored by index by
// the caller so output order never depends on scheduling.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(jobs), count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < count;) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v + 0.0);  // no "-0"
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw qrs::Error("cannot write " + path.string());
  return os;
}

void write_json(const fs::path& path, const json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

std::string loss_cell(const qrs::LossReport& r) { return r.defined ? num(r.loss_pct) : "undefined"; }

// Per-state admissions of the optimal and best balanced policies.
void write_masks(std::ostream& os, const std::string& toy, const qrs::AdmissionProblem& p, const qrs::LossReport& r) {
  const std::set<qrs::Macrostate> mask(r.balanced.mask.begin(), r.balanced.mask.end());
  for (std::size_t s = 0; s < p.sys.size(); ++s) {
    const auto& x = p.sys.counting(s);
    os << toy << ',' << x[0] << ',' << x[1];
    for (int i = 0; i < 2; ++i) os << ',' << (r.optimal.policy.probs[s][static_cast<std::size_t>(i)] > 0.5 ? 1 : 0);
    for (int i = 0; i < 2; ++i) os << ',' << (mask.count(x) && mask.count(x.plus(i)) ? 1 : 0);
    os << '\n';
  }
}

int cmd_reproduce_toys(const qrs::ExperimentConfig& cfg) {
  const fs::path out(cfg.output_dir);
  auto table = open_out(out / "toys.csv");
  auto masks = open_out(out / "toys_masks.csv");
  table << "toy,nu1,nu2,g_opt,g_balanced,g_worst,loss_pct\n";
  masks << "toy,x1,x2,opt_admit_1,opt_admit_2,balanced_admit_1,balanced_admit_2\n";
  std::printf("%-14s %14s %14s %14s %10s\n", "toy", "g_opt", "g_balanced", "g_worst", "loss_pct");
  for (const auto& id : cfg.toys.ids) {
    const auto problem = qrs::make_toy(qrs::toy_from_string(id), cfg.toys.nu[0], cfg.toys.nu[1]);
    const auto r = qrs::loss(problem, cfg.jobs);
    table << id << ',' << num(cfg.toys.nu[0]) << ',' << num(cfg.toys.nu[1]) << ',' << num(r.g_opt) << ','
          << num(r.g_balanced) << ',' << num(r.g_worst) << ',' << loss_cell(r) << '\n';
    write_masks(masks, id, problem, r);
    std::printf("%-14s %14.8g %14.8g %14.8g %10s\n", id.c_str(), r.g_opt, r.g_balanced, r.g_worst + 0.0,
                r.defined ? (num(r.loss_pct) + "%").c_str() : "undefined");
    std::printf("  best balanced mask:");
    for (const auto& x : r.balanced.mask) std::printf(" %s", x.str().c_str());
    std::printf("\n");
  }
  return 0;
}

int cmd_sweep(const qrs::ExperimentConfig& cfg) {
  const auto toy = qrs::toy_from_string(cfg.sweep.toy);
  const auto& g1 = cfg.sweep.nu1;
  const auto& g2 = cfg.sweep.nu2;
  std::vector<qrs::LossReport> cells(g1.size() * g2.size());
  // Cells run concurrently; masks inside a cell stay sequential.
  parallel_for(cells.size(), cfg.jobs, [&](std::size_t k) {
    cells[k] = qrs::loss(qrs::make_toy(toy, g1[k / g2.size()], g2[k % g2.size()]), 1);
  });
  auto os = open_out(fs::path(cfg.output_dir) / ("sweep_" + cfg.sweep.toy + ".csv"));
  os << "nu1,nu2,g_opt,g_balanced,g_worst,loss_pct\n";
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& r = cells[k];
    os << num(g1[k / g2.size()]) << ',' << num(g2[k % g2.size()]) << ',' << num(r.g_opt) << ',' << num(r.g_balanced)
       << ',' << num(r.g_worst) << ',' << loss_cell(r) << '\n';
  }
  std::printf("sweep %s: %zu cells written to %s\n", cfg.sweep.toy.c_str(), cells.size(),
              (fs::path(cfg.output_dir) / ("sweep_" + cfg.sweep.toy + ".csv")).c_str());
  return 0;
}

int cmd_case_study(const qrs::ExperimentConfig& cfg) {
  const auto& a = cfg.algorithm;
  const auto& spec = cfg.model.spec;
  std::vector<qrs::RunLog> logs(cfg.seeds.size());
  parallel_for(logs.size(), cfg.jobs, [&](std::size_t k) {
    const auto seed = cfg.seeds[k];
    if (a.name == "sage") logs[k] = qrs::run_sage(spec, a.sage, cfg.steps, seed);
    else if (a.name == "ac") logs[k] = qrs::run_ac(spec, a.ac, cfg.steps, seed);
    else logs[k] = qrs::run_q(spec, a.q, cfg.steps, seed);
  });

  const std::string stem = cfg.model.scenario + "_" + a.name + (a.name == "q" ? "" : "_" + a.family);
  const fs::path out(cfg.output_dir);
  json runs = json::array();
  for (const auto& log : logs) {
    auto os = open_out(out / (stem + "_seed" + std::to_string(log.seed) + ".csv"));
    qrs::write_run_csv(log, os);
    json r{{"seed", log.seed},
           {"records", log.records.size()},
           {"theta_digest", qrs::theta_digest(log.final_theta)},
           {"table_size", log.table_size}};
    r["final_mean_reward"] = log.records.empty() ? json(nullptr) : json(log.records.back().mean_reward);
    runs.push_back(r);
  }
  write_json(out / (stem + "_summary.json"),
             json{{"scenario", cfg.model.scenario},
                  {"algorithm", a.name},
                  {"family", a.family},
                  {"steps", cfg.steps},
                  {"runs", runs}});
  write_json(out / (stem + "_config.json"), qrs::to_json(cfg));
  std::printf("case study %s: %zu runs of %zu steps written to %s\n", stem.c_str(), logs.size(), cfg.steps,
              cfg.output_dir.c_str());
  return 0;
}

int cmd_verify(const qrs::ExperimentConfig& cfg) {
  bool ok = true;
  for (const auto& name : cfg.verify.suites) {
    const auto rep = qrs::run_suite(name, cfg.seeds.front());
    std::printf("[%s] %s\n", name.c_str(), rep.passed ? "passed" : "FAILED");
    for (const auto& l : rep.lines) std::printf("  %s\n", l.c_str());
    ok = ok && rep.passed;
  }
  return ok ? 0 : kExitVerify;
}

int cmd_export_lp(const qrs::ExperimentConfig& cfg) {
  const auto problem = qrs::make_toy(qrs::toy_from_string(cfg.lp.toy), cfg.lp.nu[0], cfg.lp.nu[1]);
  const auto path = fs::path(cfg.output_dir) / (cfg.lp.toy + "_" + cfg.lp.variant + ".lp");
  auto os = open_out(path);
  const auto stats = qrs::export_lp(problem, qrs::lp_variant_from_string(cfg.lp.variant), os);
  std::printf("%s: %zu variables, %zu rows\n", path.c_str(), stats.variables, stats.rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Balanced admission control for quasi-reversible queueing systems"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds, toy, variant, scenario, algorithm, family;
  std::size_t steps = 0;
  int jobs = 1;
  std::vector<std::string> suites;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment file (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seeds", seeds, "Seed list, e.g. 1,2,5-8");
    sub->add_option("--steps", steps, "Steps per run");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto* toys = app.add_subcommand("reproduce-toys", "Losses of the three toy problems");
  auto* sweep = app.add_subcommand("sweep", "Loss over a grid of arrival rates");
  auto* cs = app.add_subcommand("case-study", "Learning runs on the redundancy model");
  auto* ver = app.add_subcommand("verify", "Property suites");
  auto* lp = app.add_subcommand("export-lp", "Write an admission problem as an LP file");
  for (auto* sub : {toys, sweep, cs, ver, lp}) common(sub);
  sweep->add_option("--toy", toy, "path_reward, corner_reward or realistic");
  cs->add_option("--scenario", scenario, "adversarial or nonadversarial");
  cs->add_option("--algorithm", algorithm, "sage, ac or q");
  cs->add_option("--family", family, "static, semistatic, dynamic or imbalanced");
  ver->add_option("--suite", suites, "core, balance, models, gradients (repeatable)");
  lp->add_option("--toy", toy, "path_reward, corner_reward or realistic");
  lp->add_option("--variant", variant, "general, balanced or reversible_local");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  qrs::ExperimentConfig cfg;
  try {
    json j = config_path.empty() ? json{{"schema_version", qrs::kSchemaVersion}} : json::parse(std::ifstream(config_path));
    if (!out_dir.empty()) j["output_dir"] = out_dir;
    if (!seeds.empty()) j["seeds"] = qrs::parse_seed_list(seeds);
    const auto* active = app.get_subcommands().front();
    if (active->count("--steps")) j["steps"] = steps;
    if (active->count("--jobs")) j["jobs"] = jobs;
    if (!toy.empty()) (sweep->parsed() ? j["sweep"]["toy"] : j["lp"]["toy"]) = toy;
    if (!variant.empty()) j["lp"]["variant"] = variant;
    if (!scenario.empty()) j["model"]["scenario"] = scenario;
    if (!algorithm.empty()) j["algorithm"]["name"] = algorithm;
    if (!family.empty()) j["algorithm"]["family"] = family;
    if (!suites.empty()) j["verify"]["suites"] = suites;
    cfg = qrs::parse_config(j);
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const qrs::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }

  try {
    if (toys->parsed()) return cmd_reproduce_toys(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (cs->parsed()) return cmd_case_study(cfg);
    if (ver->parsed()) return cmd_verify(cfg);
    return cmd_export_lp(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitVerify;
  }
}
