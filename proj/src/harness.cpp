#include "sbf/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>

#include "sbf/errors.hpp"
#include "sbf/library.hpp"

#ifndef SBF_VERSION
#define SBF_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace sbf {

double trace_plateau(std::span<const double> trace, int window) {
  if (trace.empty()) throw DomainError("plateau: empty trace");
  if (window < 1) throw DomainError("plateau: window must be positive");
  const size_t w = std::min(trace.size(), static_cast<size_t>(window));
  double sum = 0.0;
  for (size_t i = trace.size() - w; i < trace.size(); ++i) sum += trace[i];
  return sum / static_cast<double>(w);
}

long convergence_iteration(std::span<const double> trace, double fraction, int window, double reference) {
  if (trace.empty()) throw DomainError("convergence: empty trace");
  if (window < 1) throw DomainError("convergence: window must be positive");
  const double target = fraction * reference;
  const size_t w = static_cast<size_t>(window);
  if (trace.size() < w) return kNotConverged;
  double sum = 0.0;
  for (size_t i = 0; i < w; ++i) sum += trace[i];
  // Compare sum against target * w to avoid dividing on every step.
  const double goal = target * static_cast<double>(w);
  if (sum >= goal) return static_cast<long>(w);
  for (size_t n = w + 1; n <= trace.size(); ++n) {
    sum += trace[n - 1] - trace[n - 1 - w];
    if (sum >= goal) return static_cast<long>(n);
  }
  return kNotConverged;
}

long convergence_iteration(std::span<const double> trace, double fraction, int window) {
  return convergence_iteration(trace, fraction, window, trace_plateau(trace, window));
}

std::vector<double> mean_trace(const std::vector<std::vector<double>>& traces) {
  if (traces.empty()) return {};
  std::vector<double> out(traces.front().size(), 0.0);
  for (const auto& t : traces) {
    if (t.size() != out.size()) throw DomainError("mean_trace: traces differ in length");
    for (size_t i = 0; i < t.size(); ++i) out[i] += t[i];
  }
  for (double& v : out) v /= static_cast<double>(traces.size());
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Point3 sample_focal_point(const Scene& scene, double min_distance, double max_distance, Rng& rng, double margin) {
  const auto& ap = scene.aperture;
  const Point3 c = ap.center();
  const Point3 u = ap.col_axis();
  const Point3 v = ap.row_axis();
  // Normal pointing into the room.
  Point3 n{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
  const Point3 d = scene.room.dimensions;
  const Point3 mid{0.5 * d.x, 0.5 * d.y, 0.5 * d.z};
  const Point3 to_mid = mid - c;
  if (n.x * to_mid.x + n.y * to_mid.y + n.z * to_mid.z < 0.0) n = -1.0 * n;
  auto inside = [&](Point3 p) {
    return p.x >= margin && p.x <= d.x - margin && p.y >= margin && p.y <= d.y - margin && p.z >= margin &&
           p.z <= d.z - margin;
  };
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double r = rng.uniform(min_distance, max_distance);
    // Uniform direction on the front hemisphere.
    const double cos_t = rng.uniform();
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Point3 dir = (cos_t)*n + (sin_t * std::cos(phi)) * u + (sin_t * std::sin(phi)) * v;
    const Point3 p = c + r * dir;
    if (inside(p)) return p;
  }
  throw ConfigError("no focal point at the requested distance fits inside the room");
}

namespace {

std::string cell(double v) { return format_number(v); }
std::string cell(int v) { return std::to_string(v); }
std::string cell(long v) { return std::to_string(v); }
std::string cell(const std::string& v) { return v; }
std::string cell(const char* v) { return v; }

class Csv {
 public:
  Csv(const fs::path& path, const std::string& header) : out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
    out_ << header << '\n';
  }
  template <class... T>
  void row(const T&... values) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(values), first = false), ...);
    out_ << '\n';
  }
  ~Csv() { out_.flush(); }

 private:
  std::ofstream out_;
};

std::string pad3(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", k);
  return buf;
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Run {
 public:
  Run(const ExperimentConfig& cfg, const ProgressFn& progress) : cfg_(cfg), progress_(progress), root_(cfg.output_dir) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
  }

  fs::path path(const std::string& rel) {
    const fs::path p = root_ / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    files_.push_back(rel);
    return p;
  }

  void note(const std::string& s) const {
    if (progress_) progress_(s);
  }

  void seed(const std::string& label, std::uint64_t value) { seeds_.push_back({{"label", label}, {"seed", value}}); }

  void write_manifest() {
    const std::string dumped = dump_config(cfg_);
    json m;
    m["tool"] = "sbf";
    m["version"] = SBF_VERSION;
    m["experiment"] = experiment_kind_name(cfg_.kind);
    m["started_utc"] = utc_now();
    char fp[24];
    std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(fnv1a(dumped)));
    m["config_fingerprint"] = fp;
    m["dfp_zone"] = zone_name(validate_dfp(cfg_.scene.aperture, cfg_.scene.dfp));
    m["config"] = json::parse(dumped);
    m["seeds"] = seeds_;
    std::ofstream out(root_ / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + root_.string());
    out << m.dump(2) << '\n';
    started_ = std::chrono::steady_clock::now();
  }

  void write_status(const std::string& status, const std::string& error = {}) {
    json s;
    s["status"] = status;
    if (!error.empty()) s["error"] = error;
    s["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    s["finished_utc"] = utc_now();
    s["files"] = files_;
    std::ofstream out(root_ / "run_status.json");
    out << s.dump(2) << '\n';
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  const ExperimentConfig& cfg_;
  const ProgressFn& progress_;
  fs::path root_;
  std::vector<std::string> files_;
  json seeds_ = json::array();
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

void write_trace(Run& run, const std::string& rel, const TrainingTrace& trace, const AgentConfig& agent) {
  Csv csv(run.path(rel), "iteration,power,normalized_power,reward,noise_std");
  const auto norm = trace.normalized();
  for (size_t i = 0; i < trace.power.size(); ++i)
    csv.row(static_cast<long>(i + 1), trace.power[i], norm[i], trace.reward[i],
            agent.exploration_std(static_cast<long>(i)));
}

void write_mean_trace(Run& run, const std::string& rel, const std::vector<double>& mean, int window) {
  Csv csv(run.path(rel), "iteration,mean_normalized_power,moving_average");
  double sum = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    sum += mean[i];
    if (i >= static_cast<size_t>(window)) sum -= mean[i - window];
    const size_t n = std::min(i + 1, static_cast<size_t>(window));
    csv.row(static_cast<long>(i + 1), mean[i], sum / static_cast<double>(n));
  }
}

void write_pdi(Run& run, const std::string& stem, const BeamfocusingMatrix& w) {
  const PhaseImage img = to_phase_image(w);
  save_phase_csv(run.path(stem + ".csv").string(), img);
  save_pgm(run.path(stem + ".pgm").string(), img);
}

std::vector<double> normalized_greedy(const std::vector<TrainResult>& results) {
  std::vector<double> out;
  for (const auto& r : results) out.push_back(r.trace.oracle_power > 0.0 ? r.pdi_power / r.trace.oracle_power : 0.0);
  return out;
}

struct SubarrayRow {
  int index;
  std::string mode;
  const TrainResult* result;
};

void write_summary(Run& run, const std::string& rel, const std::vector<SubarrayRow>& rows) {
  const auto& conv = run.cfg().convergence;
  Csv csv(run.path(rel),
          "subarray,mode,oracle_power,greedy_power,normalized_greedy_power,plateau,convergence_iteration");
  for (const auto& r : rows) {
    const auto norm = r.result->trace.normalized();
    const double norm_greedy = r.result->trace.oracle_power > 0.0 ? r.result->pdi_power / r.result->trace.oracle_power : 0.0;
    const bool empty = norm.empty();
    csv.row(r.index, r.mode, r.result->trace.oracle_power, r.result->pdi_power, norm_greedy,
            empty ? 0.0 : trace_plateau(norm, conv.window),
            empty ? kNotConverged : convergence_iteration(norm, conv.fraction, conv.window));
  }
}

// Matrix whose only nonzero block is subarray m, amplitude 1/sqrt(N').
ComplexGrid isolated_weights(const ApertureConfig& ap, const BeamfocusingMatrix& sub, int m) {
  ComplexGrid w(ap.rows, ap.cols, {0.0, 0.0});
  const int r0 = (m / ap.subarray_cols) * ap.sub_rows;
  const int c0 = (m % ap.subarray_cols) * ap.sub_cols;
  const double amp = 1.0 / std::sqrt(static_cast<double>(sub.levels.size()));
  for (int i = 0; i < sub.rows(); ++i)
    for (int j = 0; j < sub.cols(); ++j) w(r0 + i, c0 + j) = std::polar(amp, sub.phase(i, j));
  return w;
}

std::vector<BeamfocusingMatrix> subarray_oracles(const Scene& scene) {
  const ChannelMatrix h = channel_matrix(scene, scene.dfp);
  std::vector<BeamfocusingMatrix> out;
  for (int m = 0; m < scene.aperture.subarray_count(); ++m)
    out.push_back(csi_oracle(h.block(scene.aperture, m), scene.aperture.phase_bits));
  return out;
}

BeamfocusingMatrix assemble(const Scene& scene, const std::vector<BeamfocusingMatrix>& blocks) {
  std::vector<BeamfocusingSubmatrix> subs;
  for (size_t m = 0; m < blocks.size(); ++m) subs.push_back({static_cast<int>(m), blocks[m]});
  return assemble_matrix(subs, scene.aperture.subarray_rows, scene.aperture.subarray_cols);
}

void write_bfr_rows(Csv& csv, const std::string& label, const PowerMap& map, const std::vector<double>& etas) {
  for (double eta : etas) csv.row(label, eta, bfr_from_map(map, eta), map.total());
}

void add_subarray_seeds(Run& run, std::uint64_t master, int count) {
  for (int m = 0; m < count; ++m) {
    run.seed("policy/" + pad3(m), subarray_policy_seed(master, m));
    run.seed("train/" + pad3(m), subarray_train_seed(master, m));
  }
}

void run_train_baseline(Run& run) {
  const auto& cfg = run.cfg();
  const auto& ap = cfg.scene.aperture;
  add_subarray_seeds(run, cfg.master_seed, ap.subarray_count());
  run.write_manifest();

  std::vector<int> which = cfg.subarrays;
  if (which.empty()) {
    which.resize(ap.subarray_count());
    std::iota(which.begin(), which.end(), 0);
  }
  const auto results = train_all_scratch(cfg.scene, cfg.agent, cfg.train_budget, cfg.master_seed, which,
                                         [&](const std::string& s) { run.note(s); });
  std::vector<SubarrayRow> rows;
  std::vector<std::vector<double>> norms;
  for (size_t k = 0; k < results.size(); ++k) {
    write_trace(run, "traces/subarray_" + pad3(which[k]) + ".csv", results[k].trace, cfg.agent);
    write_pdi(run, "pdis/subarray_" + pad3(which[k]), results[k].pdi);
    rows.push_back({which[k], "scratch", &results[k]});
    norms.push_back(results[k].trace.normalized());
  }
  write_summary(run, "summary.csv", rows);
  if (cfg.train_budget > 0) write_mean_trace(run, "mean_trace.csv", mean_trace(norms), cfg.convergence.window);

  if (static_cast<int>(which.size()) == ap.subarray_count()) {
    std::vector<BeamfocusingMatrix> blocks(results.size());
    for (size_t k = 0; k < results.size(); ++k) blocks[which[k]] = results[k].pdi;
    const auto full = assemble(cfg.scene, blocks);
    write_pdi(run, "pdis/full", full);
    Csv csv(run.path("bfr.csv"), "matrix,eta,radius_m,plane_power");
    write_bfr_rows(csv, "trained", power_density_map(full.weights(), cfg.scene.dfp, cfg.plane, cfg.scene),
                   cfg.power_map.eta);
    const auto oracle = assemble(cfg.scene, subarray_oracles(cfg.scene));
    write_bfr_rows(csv, "oracle", power_density_map(oracle.weights(), cfg.scene.dfp, cfg.plane, cfg.scene),
                   cfg.power_map.eta);
  }
}

void run_train_pp(Run& run) {
  const auto& cfg = run.cfg();
  const auto& ap = cfg.scene.aperture;
  add_subarray_seeds(run, cfg.master_seed, ap.subarray_count());
  run.write_manifest();

  const auto pp = policy_propagation(cfg.scene, cfg.agent, cfg.propagation, cfg.master_seed,
                                     [&](const std::string& s) { run.note(s); });
  {
    Csv assign(run.path("assignments.csv"), "student,teacher,ecc,rotation_deg,mode");
    Csv probes(run.path("probes.csv"), "student,teacher,ecc,rotation_deg");
    for (const auto& o : pp.outcomes) {
      assign.row(o.index, o.teacher, o.ecc, degrees(o.angle), training_mode_name(o.mode));
      for (const auto& p : o.probes) probes.row(o.index, p.teacher, p.ecc, degrees(p.angle));
    }
  }
  std::vector<SubarrayRow> rows;
  std::vector<std::vector<double>> norms(ap.subarray_count());
  std::vector<int> transferred;
  for (const auto& o : pp.outcomes) {
    write_trace(run, "traces/subarray_" + pad3(o.index) + ".csv", o.result.trace, cfg.agent);
    write_pdi(run, "pdis/subarray_" + pad3(o.index), o.result.pdi);
    rows.push_back({o.index, training_mode_name(o.mode), &o.result});
    if (o.mode == TrainingMode::transfer) transferred.push_back(o.index);
  }
  write_summary(run, "summary.csv", rows);
  write_pdi(run, "pdis/full", pp.matrix);
  {
    Csv csv(run.path("bfr.csv"), "matrix,eta,radius_m,plane_power");
    write_bfr_rows(csv, "trained", power_density_map(pp.matrix.weights(), cfg.scene.dfp, cfg.plane, cfg.scene),
                   cfg.power_map.eta);
  }
  const long budget = cfg.propagation.student_budget;
  if (budget > 0 && cfg.propagation.seed_budget == budget) {
    std::vector<std::vector<double>> all;
    for (const auto& o : pp.outcomes) all.push_back(o.result.trace.normalized());
    write_mean_trace(run, "mean_trace.csv", mean_trace(all), cfg.convergence.window);
  }

  if (!cfg.scratch_baseline || transferred.empty() || budget == 0) return;
  std::sort(transferred.begin(), transferred.end());
  const auto scratch = train_all_scratch(cfg.scene, cfg.agent, budget, cfg.master_seed, transferred,
                                         [&](const std::string& s) { run.note(s); });
  // Optional control: the same transferred start fine-tuned with the other rule.
  const FineTuneMode other = cfg.propagation.fine_tune == FineTuneMode::qll ? FineTuneMode::hard_switch : FineTuneMode::qll;
  const ChannelMatrix h = channel_matrix(cfg.scene, cfg.scene.dfp);
  std::string header = "subarray,teacher,ecc,transfer_convergence,scratch_convergence,scratch_plateau,transfer_plateau";
  if (cfg.fine_tune_baseline) header += ",alternate_mode,alternate_convergence,alternate_plateau";
  Csv csv(run.path("comparison.csv"), header);
  const auto& conv = cfg.convergence;
  for (size_t k = 0; k < transferred.size(); ++k) {
    const auto& o = pp.outcome(transferred[k]);
    write_trace(run, "traces/scratch_subarray_" + pad3(transferred[k]) + ".csv", scratch[k].trace, cfg.agent);
    const auto ns = scratch[k].trace.normalized();
    const auto nt = o.result.trace.normalized();
    const double ref = trace_plateau(ns, conv.window);
    const long ct = convergence_iteration(nt, conv.fraction, conv.window, ref);
    const long cs = convergence_iteration(ns, conv.fraction, conv.window, ref);
    if (!cfg.fine_tune_baseline) {
      csv.row(transferred[k], o.teacher, o.ecc, ct, cs, ref, trace_plateau(nt, conv.window));
      continue;
    }
    const Policy start = transfer_policy(pp.outcome(o.teacher).result.policy);
    const QllSchedule schedule = other == FineTuneMode::qll ? cfg.propagation.qll : cfg.propagation.qll.hard_switched();
    const TrainingRates rates = qll_training_rates(schedule, start);
    const auto alt = train_subarray(make_env(cfg.scene, h, o.index), cfg.agent, budget, start,
                                    subarray_train_seed(cfg.master_seed, o.index), &rates);
    const char* alt_name = other == FineTuneMode::qll ? "qll" : "hard-switch";
    run.note("student " + std::to_string(o.index) + " fine-tuned with " + alt_name);
    write_trace(run, std::string("traces/") + alt_name + "_subarray_" + pad3(o.index) + ".csv", alt.trace, cfg.agent);
    const auto na = alt.trace.normalized();
    csv.row(transferred[k], o.teacher, o.ecc, ct, cs, ref, trace_plateau(nt, conv.window), alt_name,
            convergence_iteration(na, conv.fraction, conv.window, ref), trace_plateau(na, conv.window));
  }
}

PolicyLibrary open_library(const std::string& path) {
  if (path.empty() || !fs::exists(fs::path(path) / "library.txt")) return {};
  return library_load(path);
}

void run_blend(Run& run) {
  const auto& cfg = run.cfg();
  const auto& ap = cfg.scene.aperture;
  add_subarray_seeds(run, cfg.master_seed, ap.subarray_count());
  run.write_manifest();

  PolicyLibrary library = open_library(cfg.library_path);
  run.note("library holds " + std::to_string(library.entries.size()) + " entries");
  const auto& bc = cfg.blending;
  const auto& conv = cfg.convergence;
  std::vector<std::vector<double>> blended_norms;
  std::vector<SubarrayRow> rows;

  if (static_cast<int>(library.entries.size()) < bc.library_floor) {
    // Library still filling: train without transfer and store the result.
    auto results = train_all_scratch(cfg.scene, cfg.agent, bc.budget, cfg.master_seed, {},
                                     [&](const std::string& s) { run.note(s); });
    for (size_t m = 0; m < results.size(); ++m) {
      write_trace(run, "traces/subarray_" + pad3(static_cast<int>(m)) + ".csv", results[m].trace, cfg.agent);
      write_pdi(run, "pdis/subarray_" + pad3(static_cast<int>(m)), results[m].pdi);
      rows.push_back({static_cast<int>(m), "scratch", &results[m]});
    }
    write_summary(run, "summary.csv", rows);
    library.add(make_entry(cfg.scene, results, cfg.master_seed, bc.budget));
  } else {
    const auto br = policy_blending(library, cfg.scene, bc, cfg.agent, cfg.master_seed,
                                    [&](const std::string& s) { run.note(s); });
    {
      Csv csv(run.path("blend.csv"), "component,dfp_x_m,dfp_y_m,dfp_z_m,distance_m,probe_power,weight");
      for (size_t k = 0; k < br.components.size(); ++k) {
        const auto& e = library.entries[br.components[k]];
        csv.row(br.components[k], e.dfp.x, e.dfp.y, e.dfp.z, distance(e.dfp, cfg.scene.dfp), br.probe_powers[k],
                br.weights.beta[k]);
      }
    }
    for (size_t m = 0; m < br.subarrays.size(); ++m) {
      write_trace(run, "traces/subarray_" + pad3(static_cast<int>(m)) + ".csv", br.subarrays[m].trace, cfg.agent);
      write_pdi(run, "pdis/subarray_" + pad3(static_cast<int>(m)), br.subarrays[m].pdi);
      rows.push_back({static_cast<int>(m), "blend", &br.subarrays[m]});
      blended_norms.push_back(br.subarrays[m].trace.normalized());
    }
    write_summary(run, "summary.csv", rows);

    if (cfg.scratch_baseline && bc.budget > 0) {
      const auto scratch = train_all_scratch(cfg.scene, cfg.agent, bc.budget, cfg.master_seed, {},
                                             [&](const std::string& s) { run.note(s); });
      std::vector<std::vector<double>> sn;
      for (const auto& r : scratch) sn.push_back(r.trace.normalized());
      const auto ms = mean_trace(sn);
      const auto mb = mean_trace(blended_norms);
      const double ref = trace_plateau(ms, conv.window);
      Csv csv(run.path("comparison.csv"), "flow,convergence_iteration,probe_iterations,plateau,reference");
      csv.row("no-tl", convergence_iteration(ms, conv.fraction, conv.window, ref), 0L, ref, ref);
      csv.row("blend", convergence_iteration(mb, conv.fraction, conv.window, ref), br.probe_iterations,
              trace_plateau(mb, conv.window), ref);
      write_mean_trace(run, "mean_trace_no_tl.csv", ms, conv.window);
      write_mean_trace(run, "mean_trace_blend.csv", mb, conv.window);
    }
  }
  if (!cfg.library_path.empty()) {
    library_save(library, cfg.library_path);
    run.note("library saved with " + std::to_string(library.entries.size()) + " entries");
  }
}

std::vector<BeamfocusingMatrix> similarity_pdis(Run& run) {
  const auto& cfg = run.cfg();
  if (!cfg.similarity.trained) return subarray_oracles(cfg.scene);
  const auto results = train_all_scratch(cfg.scene, cfg.agent, cfg.train_budget, cfg.master_seed, {},
                                         [&](const std::string& s) { run.note(s); });
  std::vector<BeamfocusingMatrix> out;
  for (const auto& r : results) out.push_back(r.pdi);
  return out;
}

void run_similarity_map(Run& run) {
  const auto& cfg = run.cfg();
  const auto& ap = cfg.scene.aperture;
  if (cfg.similarity.trained) add_subarray_seeds(run, cfg.master_seed, ap.subarray_count());
  run.write_manifest();

  const auto pdis = similarity_pdis(run);
  std::vector<PhaseImage> images;
  for (size_t m = 0; m < pdis.size(); ++m) {
    images.push_back(to_phase_image(pdis[m]));
    write_pdi(run, "pdis/subarray_" + pad3(static_cast<int>(m)), pdis[m]);
  }
  int ref = cfg.similarity.reference_subarray;
  if (ref < 0) ref = (ap.subarray_rows / 2) * ap.subarray_cols + ap.subarray_cols / 2;
  for (double theta : cfg.similarity.theta_deg) {
    const auto map = similarity_map(images[ref], images, ap.subarray_rows, ap.subarray_cols,
                                    theta * std::numbers::pi / 180.0);
    char name[64];
    std::snprintf(name, sizeof name, "similarity_theta_%03d.csv", static_cast<int>(std::lround(theta)));
    Csv csv(run.path(name), "row,col,subarray,correlation");
    for (int r = 0; r < map.rows; ++r)
      for (int c = 0; c < map.cols; ++c) csv.row(r, c, r * map.cols + c, map(r, c));
  }
  Csv csv(run.path("ecc.csv"), "reference,subarray,ecc,rotation_deg,degenerate");
  for (size_t m = 0; m < images.size(); ++m) {
    const auto e = ecc(images[ref], images[m], cfg.propagation.rotations);
    csv.row(ref, static_cast<int>(m), e.value, degrees(e.angle), e.degenerate ? 1 : 0);
  }
}

void run_power_map(Run& run) {
  const auto& cfg = run.cfg();
  const auto& ap = cfg.scene.aperture;
  run.write_manifest();

  const auto oracles = subarray_oracles(cfg.scene);
  BeamfocusingMatrix full;
  std::string label = "oracle";
  if (!cfg.power_map.pdi_path.empty()) {
    const PhaseImage img = load_phase_csv(cfg.power_map.pdi_path);
    if (img.rows != ap.rows || img.cols != ap.cols) throw ConfigError("power_map.pdi_path: shape does not match the aperture");
    full = BeamfocusingMatrix(ap.rows, ap.cols, ap.phase_bits);
    for (size_t i = 0; i < img.size(); ++i) full.levels.data[i] = quantize_phase(img.data[i], ap.phase_bits);
    label = "input";
  } else {
    full = assemble(cfg.scene, oracles);
  }
  write_pdi(run, "pdis/full", full);
  const PowerMap map = power_density_map(full.weights(), cfg.scene.dfp, cfg.plane, cfg.scene);
  {
    Csv csv(run.path("power_map.csv"), "row,col,x_m,y_m,z_m,power");
    for (int r = 0; r < map.power.rows; ++r)
      for (int c = 0; c < map.power.cols; ++c) {
        const Point3 p = map.node(r, c);
        csv.row(r, c, p.x, p.y, p.z, map.power(r, c));
      }
  }
  Csv csv(run.path("bfr.csv"), "matrix,eta,radius_m,plane_power");
  write_bfr_rows(csv, label, map, cfg.power_map.eta);
  for (int m = 0; m < ap.subarray_count(); ++m) {
    const PowerMap sub = power_density_map(isolated_weights(ap, oracles[m], m), cfg.scene.dfp, cfg.plane, cfg.scene);
    write_bfr_rows(csv, "subarray_" + pad3(m), sub, cfg.power_map.eta);
  }
}

void run_monte_carlo(Run& run) {
  const auto& cfg = run.cfg();
  const auto& mc = cfg.monte_carlo;
  const auto& conv = cfg.convergence;
  const std::uint64_t lib_dfp_seed = derive_seed(cfg.master_seed, "mc-library-dfp");
  const std::uint64_t new_dfp_seed = derive_seed(cfg.master_seed, "mc-new-dfp");
  run.seed("mc-library-dfp", lib_dfp_seed);
  run.seed("mc-new-dfp", new_dfp_seed);
  for (int j = 0; j < mc.library_size; ++j) run.seed("mc-library/" + pad3(j), derive_seed(cfg.master_seed, "mc-library", j));
  for (int p = 0; p < mc.new_points; ++p) run.seed("mc-point/" + pad3(p), derive_seed(cfg.master_seed, "mc-point", p));
  run.write_manifest();

  const Point3 center = cfg.scene.aperture.center();
  PolicyLibrary library;
  {
    Rng rng(lib_dfp_seed);
    Csv csv(run.path("mc_library.csv"), "entry,dfp_x_m,dfp_y_m,dfp_z_m,distance_m,achieved_power");
    for (int j = 0; j < mc.library_size; ++j) {
      Scene scene = cfg.scene;
      scene.dfp = sample_focal_point(cfg.scene, mc.min_distance_m, mc.max_distance_m, rng);
      const std::uint64_t seed = derive_seed(cfg.master_seed, "mc-library", j);
      auto results = train_all_scratch(scene, cfg.agent, mc.library_budget, seed);
      library.add(make_entry(scene, std::move(results), seed, mc.library_budget));
      const auto& e = library.entries.back();
      csv.row(j, e.dfp.x, e.dfp.y, e.dfp.z, distance(e.dfp, center), e.achieved_power);
      run.note("library entry " + std::to_string(j) + " trained");
    }
  }

  Rng rng(new_dfp_seed);
  Csv csv(run.path("mc_blend.csv"),
          "point,dfp_x_m,dfp_y_m,dfp_z_m,distance_m,flow,components,convergence_iteration,probe_iterations,"
          "total_iterations,plateau,reference,final_greedy_power");
  for (int p = 0; p < mc.new_points; ++p) {
    Scene scene = cfg.scene;
    scene.dfp = sample_focal_point(cfg.scene, mc.min_distance_m, mc.max_distance_m, rng);
    const std::uint64_t seed = derive_seed(cfg.master_seed, "mc-point", p);
    const double dist = distance(scene.dfp, center);

    auto summarize = [&](const std::vector<TrainResult>& results) {
      std::vector<std::vector<double>> n;
      for (const auto& r : results) n.push_back(r.trace.normalized());
      return mean_trace(n);
    };
    auto greedy = [](const std::vector<TrainResult>& results) {
      const auto g = normalized_greedy(results);
      return std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    };
    const auto scratch = train_all_scratch(scene, cfg.agent, cfg.blending.budget, seed);
    const auto ms = summarize(scratch);
    const double ref = trace_plateau(ms, conv.window);
    const long c0 = convergence_iteration(ms, conv.fraction, conv.window, ref);
    csv.row(p, scene.dfp.x, scene.dfp.y, scene.dfp.z, dist, "no-tl", 0, c0, 0L, c0, ref, ref, greedy(scratch));
    write_mean_trace(run, "traces/point_" + pad3(p) + "_no_tl.csv", ms, conv.window);

    for (int k : mc.component_counts) {
      BlendingConfig bc = cfg.blending;
      bc.components = k;
      PolicyLibrary copy = library;
      const auto br = policy_blending(copy, scene, bc, cfg.agent, seed);
      const auto mb = summarize(br.subarrays);
      const long c = convergence_iteration(mb, conv.fraction, conv.window, ref);
      csv.row(p, scene.dfp.x, scene.dfp.y, scene.dfp.z, dist, "blend", k, c, br.probe_iterations,
              c == kNotConverged ? kNotConverged : c + br.probe_iterations, trace_plateau(mb, conv.window), ref,
              greedy(br.subarrays));
      write_mean_trace(run, "traces/point_" + pad3(p) + "_blend_k" + std::to_string(k) + ".csv", mb, conv.window);
    }
    run.note("point " + std::to_string(p) + " done");
  }
}

void run_orthogonality(Run& run) {
  const auto& cfg = run.cfg();
  const auto& oc = cfg.orthogonality;
  const std::uint64_t seed = derive_seed(cfg.master_seed, "orthogonality");
  run.seed("orthogonality", seed);
  run.write_manifest();

  Rng rng(seed);
  Csv rows(run.path("orthogonality.csv"), "size,elements,trial,correlation");
  Csv summary(run.path("orthogonality_summary.csv"), "size,elements,median,mean,min,max");
  for (int n : oc.sizes) {
    Scene scene = cfg.scene;
    auto& ap = scene.aperture;
    const Point3 c = cfg.scene.aperture.center();
    ap.rows = ap.cols = n;
    ap.subarray_rows = ap.subarray_cols = 1;
    ap.sub_rows = ap.sub_cols = n;
    const double half = 0.5 * (n - 1) * ap.spacing();
    ap.corner = c - half * ap.col_axis() - half * ap.row_axis();
    const Point3 r1 = cfg.scene.dfp;
    const Point3 r2 = r1 + oc.separation_m * ap.col_axis();
    std::vector<double> vals;
    for (int t = 0; t < oc.trials; ++t) {
      BeamfocusingMatrix w(n, n, ap.phase_bits);
      for (int& v : w.levels.data) v = static_cast<int>(rng.index(static_cast<std::uint64_t>(phase_levels(ap.phase_bits))));
      const double corr = response_correlation(r1, r2, w.weights(), scene);
      rows.row(n, n * n, t, corr);
      vals.push_back(corr);
    }
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    const size_t k = sorted.size();
    const double median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
    summary.row(n, n * n, median, std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(k),
                sorted.front(), sorted.back());
  }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  Run run(config, progress);
  try {
    switch (config.kind) {
      case ExperimentKind::train_baseline: run_train_baseline(run); break;
      case ExperimentKind::train_pp: run_train_pp(run); break;
      case ExperimentKind::blend: run_blend(run); break;
      case ExperimentKind::similarity_map: run_similarity_map(run); break;
      case ExperimentKind::power_map: run_power_map(run); break;
      case ExperimentKind::monte_carlo_blend: run_monte_carlo(run); break;
      case ExperimentKind::orthogonality_probe: run_orthogonality(run); break;
    }
  } catch (const std::exception& e) {
    run.write_status("failed", e.what());
    throw;
  }
  run.write_status("ok");
  return {config.output_dir, run.files()};
}

}  // namespace sbf
