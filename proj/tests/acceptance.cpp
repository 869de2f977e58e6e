// Acceptance runner: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sbf/config.hpp"
#include "sbf/harness.hpp"
#include "sbf/library.hpp"
#include "sbf/pdi.hpp"

using namespace sbf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << v;
  return ss.str();
}

fs::path g_work;

ExperimentConfig desk_config(const std::string& name, std::uint64_t seed, const std::string& run) {
  auto c = load_config(std::string(SBF_SOURCE_DIR) + "/configs/" + name);
  c.master_seed = seed;
  c.output_dir = (g_work / run).string();
  return c;
}

// Header-keyed CSV rows.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  std::string line;
  std::getline(in, line);
  const auto header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    const auto cells = split(line);
    std::map<std::string, std::string> row;
    for (size_t k = 0; k < header.size() && k < cells.size(); ++k) row[header[k]] = cells[k];
    rows.push_back(std::move(row));
  }
  return rows;
}

double num(const std::map<std::string, std::string>& row, const std::string& key) { return std::stod(row.at(key)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto rep = gradcheck::run(120, 7);
  bool kinds = true;
  for (int k : rep.kind_count) kinds = kinds && k > 0;
  const double t = seconds_since(t0);
  return {rep.max_error < 1e-4 && kinds && t < 60.0,
          std::to_string(rep.networks) + " networks, max rel error " + fmt(rep.max_error) +
              " (< 1e-4), all layer kinds covered: " + (kinds ? "yes" : "no") + ", " + fmt(t, 3) + " s (< 60 s)"};
}

Outcome channel_oracle() {
  double worst = 0.0;
  int paths = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    Rng rng(seed);
    Scene s;
    s.aperture.rows = s.aperture.cols = s.aperture.sub_rows = s.aperture.sub_cols = 2;
    s.aperture.subarray_rows = s.aperture.subarray_cols = 1;
    s.aperture.corner = {rng.uniform(0.5, 3.5), 0.0, rng.uniform(0.5, 2.5)};
    s.room.reflection_phase_seed = rng.next();
    s.channel.attenuation = rng.uniform(0.5, 2.0);
    s.dfp = {rng.uniform(0.2, 3.8), rng.uniform(0.2, 3.8), rng.uniform(0.2, 2.8)};
    paths = static_cast<int>(image_source_paths(s.aperture.corner, s.dfp, s.room).size());
    const auto h = channel_matrix(s, s.dfp);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const auto ref = oracle::channel_gain(s, i, j);
        worst = std::max(worst, std::abs(h(i, j) - ref) / std::abs(ref));
      }
  }
  return {worst <= 1e-12 && paths == 6,
          "200 random 2x2 scenes with " + std::to_string(paths) + " reflections, max rel error " + fmt(worst) + " (<= 1e-12)"};
}

Outcome similarity_oracle() {
  const auto t0 = Clock::now();
  Rng rng(3);
  double worst = 0.0;
  bool invariants = true;
  const auto rs = RotationSet::step_degrees(10.0);
  for (int t = 0; t < 200; ++t) {
    const int n = t < 100 ? 4 : 6;
    PhaseImage a(n, n), b(n, n);
    const double spread = rng.uniform(1.0, 2 * std::numbers::pi);
    for (double& v : a.data) v = std::fmod(rng.uniform(0.0, spread), 2 * std::numbers::pi);
    for (double& v : b.data) v = std::fmod(rng.uniform(0.0, spread), 2 * std::numbers::pi);
    const auto c = circular_pearson(a, b);
    const auto cr = oracle::pearson(a.data, b.data);
    worst = std::max(worst, std::abs(c.value - cr.value));
    const auto e = ecc(a, b, rs);
    const auto er = oracle::ecc(a.data, b.data, n, 10.0);
    worst = std::max(worst, std::abs(e.value - er.value));
    invariants = invariants && circular_pearson(a, a).value == 1.0;
    invariants = invariants && std::abs(c.value) <= 1.0;
    invariants = invariants && e.value >= c.value;
    PhaseImage shifted = b;
    for (double& v : shifted.data) v = std::fmod(v + 0.7, 2 * std::numbers::pi);
    invariants = invariants && std::abs(circular_pearson(a, shifted).value - c.value) <= 1e-12;
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && invariants && t < 60.0,
          "200 pairs (4x4, 6x6), max deviation from brute force " + fmt(worst) +
              " (<= 1e-12), invariants hold: " + (invariants ? "yes" : "no") + ", " + fmt(t, 3) + " s"};
}

Outcome single_subarray() {
  std::string detail;
  bool pass = true;
  double slowest = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t0 = Clock::now();
    const auto c = desk_config("desk.json", seed, "c4_seed" + std::to_string(seed));
    run_experiment(c);
    slowest = std::max(slowest, seconds_since(t0));
    for (const auto& row : read_csv(fs::path(c.output_dir) / "summary.csv")) {
      const double g = num(row, "normalized_greedy_power");
      pass = pass && g >= 0.6;
      detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + " " + fmt(g, 3);
    }
  }
  pass = pass && slowest <= 600.0;
  return {pass, "final greedy / oracle: " + detail + " (each >= 0.6), slowest seed " + fmt(slowest, 3) + " s (<= 600 s)"};
}

struct PpStats {
  std::vector<double> transfer, scratch, alternate;  // per transferred student
  std::vector<double> seed_transfer_mean, seed_alternate_mean;
  int seeds_with_transfer = 0;
  double seconds = 0.0;
  bool ran = false;
};

PpStats g_pp;

void run_propagation_flows() {
  if (g_pp.ran) return;
  g_pp.ran = true;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto c = desk_config("desk-pp.json", seed, "c5_seed" + std::to_string(seed));
    run_experiment(c);
    const auto file = fs::path(c.output_dir) / "comparison.csv";
    if (!fs::exists(file)) continue;
    const long budget = c.propagation.student_budget;
    auto iters = [&](const std::map<std::string, std::string>& row, const std::string& key) {
      const double v = num(row, key);
      return v < 0 ? static_cast<double>(budget) : v;  // not converged counts as the full budget
    };
    const auto rows = read_csv(file);
    if (rows.empty()) continue;
    ++g_pp.seeds_with_transfer;
    double st = 0.0, sa = 0.0;
    for (const auto& row : rows) {
      g_pp.transfer.push_back(iters(row, "transfer_convergence"));
      g_pp.scratch.push_back(iters(row, "scratch_convergence"));
      g_pp.alternate.push_back(iters(row, "alternate_convergence"));
      st += g_pp.transfer.back();
      sa += g_pp.alternate.back();
    }
    g_pp.seed_transfer_mean.push_back(st / static_cast<double>(rows.size()));
    g_pp.seed_alternate_mean.push_back(sa / static_cast<double>(rows.size()));
  }
  g_pp.seconds = seconds_since(t0);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Outcome propagation_speedup() {
  run_propagation_flows();
  const double t = mean(g_pp.transfer), s = mean(g_pp.scratch);
  const bool any = !g_pp.transfer.empty();
  const bool pass = any && t <= 0.5 * s && g_pp.seconds <= 1800.0;
  return {pass, std::to_string(g_pp.transfer.size()) + " QLL students over " + std::to_string(g_pp.seeds_with_transfer) +
                    " of 3 seeds passed the gate; mean convergence QLL " + fmt(t) + " vs scratch " + fmt(s) +
                    " (ratio " + fmt(any && s > 0 ? t / s : 0.0, 3) + ", <= 0.5), " + fmt(g_pp.seconds, 4) +
                    " s incl. the fine-tuning control (<= 1800 s)"};
}

Outcome qll_vs_hard_switch() {
  run_propagation_flows();
  const double q = mean(g_pp.transfer), h = mean(g_pp.alternate);
  int strictly = 0;
  std::string per;
  for (size_t k = 0; k < g_pp.seed_transfer_mean.size(); ++k) {
    strictly += g_pp.seed_transfer_mean[k] < g_pp.seed_alternate_mean[k] ? 1 : 0;
    per += (per.empty() ? "" : ", ") + fmt(g_pp.seed_transfer_mean[k]) + " vs " + fmt(g_pp.seed_alternate_mean[k]);
  }
  const bool pass = !g_pp.transfer.empty() && q <= h && strictly >= 2;
  return {pass, "mean convergence QLL " + fmt(q) + " vs hard switch " + fmt(h) + " (<= 1.0x); per seed [" + per +
                    "], QLL strictly lower on " + std::to_string(strictly) + " seeds (>= 2 of 3)"};
}

Outcome blending_speedup() {
  const auto t0 = Clock::now();
  const auto c = desk_config("desk-monte-carlo.json", 1, "c7");
  run_experiment(c);
  const double secs = seconds_since(t0);
  const long budget = c.blending.budget;
  std::vector<double> notl, k1, k3;
  for (const auto& row : read_csv(fs::path(c.output_dir) / "mc_blend.csv")) {
    // Blend flows pay for their probes.
    double v = num(row, "total_iterations");
    if (v < 0) v = static_cast<double>(budget) + num(row, "probe_iterations");
    if (row.at("flow") == "no-tl") notl.push_back(v);
    else if (row.at("components") == "1") k1.push_back(v);
    else if (row.at("components") == "3") k3.push_back(v);
  }
  const double a = mean(notl), b1 = mean(k1), b3 = mean(k3);
  const bool pass = notl.size() == 10 && k3.size() == 10 && b3 <= 0.5 * a && b3 <= b1 && secs <= 3600.0;
  return {pass, std::to_string(notl.size()) + " new DFPs; mean convergence No-TL " + fmt(a) + ", K=1 " + fmt(b1) + ", K=3 " +
                    fmt(b3) + " (K=3 <= 0.5x No-TL and <= K=1), " + fmt(secs, 4) + " s (<= 3600 s)"};
}

Outcome orthogonality() {
  const auto c = desk_config("desk-orthogonality.json", 1, "c8");
  run_experiment(c);
  std::vector<double> med;
  std::string detail;
  for (const auto& row : read_csv(fs::path(c.output_dir) / "orthogonality_summary.csv")) {
    med.push_back(num(row, "median"));
    detail += (detail.empty() ? "" : ", ") + std::string("N=") + row.at("elements") + " " + fmt(med.back());
  }
  bool pass = med.size() == 3;
  for (size_t k = 1; k < med.size(); ++k) pass = pass && med[k] < med[k - 1];
  return {pass, "median response correlation " + detail + " (strictly decreasing)"};
}

Outcome bfr_sanity() {
  bool pass = true, monotone = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = desk_config("desk-power-map.json", seed, "c9_seed" + std::to_string(seed));
    c.scene.room.reflection_phase_seed = seed;
    c.scene.channel.hardware_phase_seed = seed + 100;
    run_experiment(c);
    std::map<std::string, std::vector<std::pair<double, double>>> radii;
    for (const auto& row : read_csv(fs::path(c.output_dir) / "bfr.csv"))
      radii[row.at("matrix")].push_back({num(row, "eta"), num(row, "radius_m")});
    double full = 0.0, best_sub = std::numeric_limits<double>::infinity();
    for (auto& [name, list] : radii) {
      std::sort(list.begin(), list.end());
      for (size_t k = 1; k < list.size(); ++k) monotone = monotone && list[k].second >= list[k - 1].second;
      for (const auto& [eta, r] : list)
        if (eta == 0.9) (name == "oracle" ? full : best_sub) = name == "oracle" ? r : std::min(best_sub, r);
    }
    pass = pass && full < best_sub;
    detail += (detail.empty() ? "" : ", ") + fmt(full, 3) + " < " + fmt(best_sub, 3);
  }
  return {pass && monotone, "BFR(0.9) full vs smallest subarray per seed [" + detail + "] m; monotone in eta: " +
                                (monotone ? "yes" : "no")};
}

Outcome determinism() {
  bool same = true;
  int files = 0;
  auto compare_runs = [&](const std::string& config, const std::string& tag, auto&& tweak) {
    auto a = desk_config(config, 5, "c10_" + tag + "_a");
    auto b = desk_config(config, 5, "c10_" + tag + "_b");
    tweak(a);
    tweak(b);
    run_experiment(a);
    run_experiment(b);
    for (const auto& entry : fs::recursive_directory_iterator(a.output_dir)) {
      if (entry.path().extension() != ".csv") continue;
      const auto rel = fs::relative(entry.path(), a.output_dir);
      same = same && slurp(entry.path()) == slurp(fs::path(b.output_dir) / rel);
      ++files;
    }
  };
  compare_runs("desk-pp.json", "pp", [](ExperimentConfig& c) {
    c.propagation.seed_budget = c.propagation.student_budget = 600;
    c.propagation.probe_budget = 50;
    c.propagation.low_threshold = -0.9;
    c.propagation.high_threshold = -0.5;
  });
  compare_runs("desk-monte-carlo.json", "mc", [](ExperimentConfig& c) {
    c.monte_carlo.library_size = 3;
    c.monte_carlo.new_points = 1;
    c.monte_carlo.library_budget = 300;
    c.blending.budget = 300;
    c.blending.probe_budget = 50;
    c.blending.library_floor = 3;
  });

  // Library persistence at float32.
  auto c = desk_config("desk.json", 5, "c10_library");
  PolicyLibrary lib;
  for (int k = 0; k < 3; ++k) {
    Scene s = c.scene;
    s.dfp.z += 0.05 * k;
    lib.add(make_entry(s, train_all_scratch(s, c.agent, 200, 50 + k), 50 + k, 200));
  }
  const auto dir = g_work / "c10_library" / "lib";
  fs::remove_all(dir);
  library_save(lib, dir.string());
  const auto back = library_load(dir.string());
  bool exact = back.entries.size() == lib.entries.size();
  for (size_t e = 0; exact && e < lib.entries.size(); ++e) {
    const auto& x = lib.entries[e];
    const auto& y = back.entries[e];
    exact = x.dfp == y.dfp && x.pdis == y.pdis && x.achieved_power == y.achieved_power;
    for (size_t m = 0; exact && m < x.policies.size(); ++m)
      for (auto net : {&Policy::actor, &Policy::critic1, &Policy::critic2, &Policy::target_actor,
                       &Policy::target_critic1, &Policy::target_critic2})
        for (size_t l = 0; l < (x.policies[m].*net).params().size(); ++l) {
          const auto& p = (x.policies[m].*net).params()[l];
          const auto& q = (y.policies[m].*net).params()[l];
          exact = exact && p.weight == q.weight && p.bias == q.bias;
        }
    exact = exact && x.policies.size() == y.policies.size();
  }
  return {same && exact && files > 0, std::to_string(files) + " CSV files byte-identical across re-runs: " +
                                          (same ? "yes" : "no") + "; library round trip bit-exact: " +
                                          (exact ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Directory for run outputs");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"numerical core gradient checks", gradients},
      {"channel oracle equivalence", channel_oracle},
      {"similarity oracle equivalence", similarity_oracle},
      {"single-subarray learning", single_subarray},
      {"policy-propagation speedup", propagation_speedup},
      {"QLL vs hard-switch fine-tuning", qll_vs_hard_switch},
      {"blending speedup", blending_speedup},
      {"asymptotic orthogonality", orthogonality},
      {"BFR sanity", bfr_sanity},
      {"determinism and persistence", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[k].first << ": " << o.detail << " ["
              << fmt(seconds_since(t0), 4) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
