#include "sbf/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "sbf/errors.hpp"

namespace sbf {

using nlohmann::json;

const char* experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::train_baseline: return "train-baseline";
    case ExperimentKind::train_pp: return "train-pp";
    case ExperimentKind::blend: return "blend";
    case ExperimentKind::similarity_map: return "similarity-map";
    case ExperimentKind::power_map: return "power-map";
    case ExperimentKind::monte_carlo_blend: return "monte-carlo-blend";
    case ExperimentKind::orthogonality_probe: return "orthogonality-probe";
  }
  return "?";
}

namespace {

// Reads keys out of one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void point(const char* key, Point3& out) {
    std::vector<double> v;
    get(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != 3) throw ConfigError(where(key) + ": expected [x, y, z]");
    out = {v[0], v[1], v[2]};
  }

  template <class E>
  void choice(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> options) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + ": expected a string");
    const auto s = j_.at(key).get<std::string>();
    for (const auto& [name, value] : options)
      if (s == name) {
        out = value;
        return;
      }
    throw ConfigError(where(key) + ": unknown value '" + s + "'");
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json point_json(Point3 p) { return json::array({p.x, p.y, p.z}); }

const char* surface_key(int s) {
  static const char* names[] = {"wall_x0", "wall_x1", "wall_y0", "wall_y1", "floor", "ceiling"};
  return names[s];
}

void read_scene(const json& j, Scene& scene) {
  Section s(j, "scene");
  if (const json* a = s.child("aperture")) {
    Section sa(*a, "scene.aperture");
    auto& ap = scene.aperture;
    sa.get("rows", ap.rows);
    sa.get("cols", ap.cols);
    sa.get("spacing_m", ap.spacing_m);
    sa.point("corner_m", ap.corner);
    sa.choice("normal", ap.normal, {{"x", PlaneNormal::x}, {"y", PlaneNormal::y}, {"z", PlaneNormal::z}});
    sa.get("frequency_hz", ap.frequency_hz);
    sa.get("phase_bits", ap.phase_bits);
    sa.get("subarray_rows", ap.subarray_rows);
    sa.get("subarray_cols", ap.subarray_cols);
    sa.get("sub_rows", ap.sub_rows);
    sa.get("sub_cols", ap.sub_cols);
  }
  if (const json* r = s.child("room")) {
    Section sr(*r, "scene.room");
    auto& room = scene.room;
    sr.point("dimensions_m", room.dimensions);
    sr.get("reflection_coefficient", room.reflection_coefficient);
    sr.get("reflection_phase_seed", room.reflection_phase_seed);
    if (const json* sf = sr.child("surfaces")) {
      Section ss(*sf, "scene.room.surfaces");
      for (int k = 0; k < kSurfaceCount; ++k) ss.get(surface_key(k), room.enabled[k]);
    }
  }
  if (const json* c = s.child("channel")) {
    Section sc(*c, "scene.channel");
    auto& ch = scene.channel;
    sc.get("attenuation", ch.attenuation);
    sc.get("path_loss_exponent", ch.path_loss_exponent);
    sc.get("phase_mismatch_std_rad", ch.hardware_phase_mismatch_std);
    sc.get("hardware_phase_seed", ch.hardware_phase_seed);
  }
  s.point("dfp_m", scene.dfp);
}

void read_agent(const json& j, AgentConfig& a) {
  Section s(j, "agent");
  s.get("learning_rate", a.learning_rate);
  s.get("exploration_variance", a.exploration_variance);
  s.get("exploration_decay", a.exploration_decay);
  s.get("exploration_floor", a.exploration_floor);
  s.get("target_noise_variance", a.target_noise_variance);
  s.get("target_noise_decay", a.target_noise_decay);
  s.get("target_noise_clip", a.target_noise_clip);
  s.get("actor_period", a.actor_period);
  s.get("target_period", a.target_period);
  s.get("tau", a.tau);
  s.get("minibatch", a.minibatch);
  s.get("replay_capacity", a.replay_capacity);
  s.get("discount", a.discount);
  s.get("store_continuous_action", a.store_continuous_action);
}

void read_propagation(const json& j, PropagationConfig& p) {
  Section s(j, "propagation");
  s.get("seed_teachers", p.seed_teachers);
  s.get("candidate_teachers", p.candidate_teachers);
  s.get("low_threshold", p.low_threshold);
  s.get("high_threshold", p.high_threshold);
  s.choice("early_exit_threshold", p.early_exit_at_high, {{"low", false}, {"high", true}});
  s.get("seed_budget", p.seed_budget);
  s.get("student_budget", p.student_budget);
  s.get("probe_budget", p.probe_budget);
  s.get("probe_exploration_decay", p.probe_exploration_decay);
  s.get("probe_learning_rate", p.probe_learning_rate);
  s.choice("seed_placement", p.placement, {{"center", SeedPlacement::center}, {"random", SeedPlacement::random}});
  s.choice("fine_tune", p.fine_tune, {{"qll", FineTuneMode::qll}, {"hard-switch", FineTuneMode::hard_switch}});
  double step = 360.0 / static_cast<double>(p.rotations.angles.size());
  s.get("rotation_step_deg", step);
  p.rotations = RotationSet::step_degrees(step);
  if (const json* q = s.child("qll")) {
    Section sq(*q, "propagation.qll");
    sq.get("first_liquid", p.qll.first_liquid);
    sq.get("outer", p.qll.outer);
    sq.get("stride", p.qll.stride);
    sq.get("outer_rate", p.qll.outer_rate);
    sq.get("ramp_start", p.qll.ramp_start);
  }
}

void read_blending(const json& j, BlendingConfig& b) {
  Section s(j, "blending");
  s.get("components", b.components);
  s.get("library_floor", b.library_floor);
  s.choice("strategy", b.strategy, {{"nearest", ComponentStrategy::nearest}, {"latest", ComponentStrategy::latest}});
  if (const json* c = s.child("distance_ceiling_m")) {
    if (c->is_null()) {
      b.distance_ceiling_m = std::numeric_limits<double>::infinity();
    } else if (c->is_number()) {
      b.distance_ceiling_m = c->get<double>();
    } else {
      throw ConfigError("blending.distance_ceiling_m: expected a number or null");
    }
  }
  s.get("probe_budget", b.probe_budget);
  s.get("probe_learning_rate", b.probe_learning_rate);
  s.get("probe_exploration_variance", b.probe_exploration_variance);
  s.get("probe_exploration_decay", b.probe_exploration_decay);
  s.get("budget", b.budget);
}

}  // namespace

void ExperimentConfig::validate() const {
  scene.validate();
  agent.validate();
  propagation.validate(scene.aperture.subarray_count());
  blending.validate();
  plane.validate();
  if (train_budget < 0) throw ConfigError("train_budget must be nonnegative");
  if (fine_tune_baseline && !scratch_baseline) throw ConfigError("fine_tune_baseline needs scratch_baseline");
  for (int m : subarrays)
    if (m < 0 || m >= scene.aperture.subarray_count()) throw ConfigError("subarrays: index out of range");
  if (!(convergence.fraction > 0.0 && convergence.fraction <= 1.0))
    throw ConfigError("convergence.fraction must be in (0, 1]");
  if (convergence.window < 1) throw ConfigError("convergence.window must be positive");
  if (similarity.reference_subarray >= scene.aperture.subarray_count())
    throw ConfigError("similarity.reference_subarray out of range");
  for (double e : power_map.eta)
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError("power_map.eta values must be in (0, 1]");
  const auto& mc = monte_carlo;
  if (mc.library_size < 1 || mc.new_points < 1) throw ConfigError("monte_carlo: counts must be positive");
  if (!(mc.min_distance_m > 0.0 && mc.max_distance_m >= mc.min_distance_m))
    throw ConfigError("monte_carlo: distance range must satisfy 0 < min <= max");
  for (int k : mc.component_counts)
    if (k < 1) throw ConfigError("monte_carlo: component counts must be positive");
  if (mc.library_budget < 0) throw ConfigError("monte_carlo: library budget must be nonnegative");
  for (int n : orthogonality.sizes)
    if (n < 1) throw ConfigError("orthogonality: sizes must be positive");
  if (orthogonality.trials < 1) throw ConfigError("orthogonality: trials must be positive");
  if (!(orthogonality.separation_m > 0.0)) throw ConfigError("orthogonality: separation must be positive");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    Section s(j, "config");
    s.choice("experiment", c.kind,
             {{"train-baseline", ExperimentKind::train_baseline},
              {"train-pp", ExperimentKind::train_pp},
              {"blend", ExperimentKind::blend},
              {"similarity-map", ExperimentKind::similarity_map},
              {"power-map", ExperimentKind::power_map},
              {"monte-carlo-blend", ExperimentKind::monte_carlo_blend},
              {"orthogonality-probe", ExperimentKind::orthogonality_probe}});
    s.get("master_seed", c.master_seed);
    s.get("output_dir", c.output_dir);
    if (const json* x = s.child("scene")) read_scene(*x, c.scene);
    if (const json* x = s.child("agent")) read_agent(*x, c.agent);
    if (const json* x = s.child("propagation")) read_propagation(*x, c.propagation);
    if (const json* x = s.child("blending")) read_blending(*x, c.blending);
    s.get("train_budget", c.train_budget);
    s.get("subarrays", c.subarrays);
    s.get("scratch_baseline", c.scratch_baseline);
    s.get("fine_tune_baseline", c.fine_tune_baseline);
    s.get("library_path", c.library_path);
    if (const json* x = s.child("convergence")) {
      Section t(*x, "convergence");
      t.get("fraction", c.convergence.fraction);
      t.get("window", c.convergence.window);
    }
    if (const json* x = s.child("plane")) {
      Section t(*x, "plane");
      t.get("half_extent_m", c.plane.half_extent_m);
      t.get("resolution", c.plane.resolution);
    }
    if (const json* x = s.child("similarity")) {
      Section t(*x, "similarity");
      t.get("reference_subarray", c.similarity.reference_subarray);
      t.get("theta_deg", c.similarity.theta_deg);
      t.get("trained", c.similarity.trained);
    }
    if (const json* x = s.child("power_map")) {
      Section t(*x, "power_map");
      t.get("eta", c.power_map.eta);
      t.get("pdi_path", c.power_map.pdi_path);
    }
    if (const json* x = s.child("monte_carlo")) {
      Section t(*x, "monte_carlo");
      t.get("library_size", c.monte_carlo.library_size);
      t.get("new_points", c.monte_carlo.new_points);
      t.get("min_distance_m", c.monte_carlo.min_distance_m);
      t.get("max_distance_m", c.monte_carlo.max_distance_m);
      t.get("component_counts", c.monte_carlo.component_counts);
      t.get("library_budget", c.monte_carlo.library_budget);
    }
    if (const json* x = s.child("orthogonality")) {
      Section t(*x, "orthogonality");
      t.get("sizes", c.orthogonality.sizes);
      t.get("trials", c.orthogonality.trials);
      t.get("separation_m", c.orthogonality.separation_m);
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  const auto& ap = c.scene.aperture;
  const auto& room = c.scene.room;
  const auto& ch = c.scene.channel;
  json surfaces = json::object();
  for (int k = 0; k < kSurfaceCount; ++k) surfaces[surface_key(k)] = room.enabled[k];
  const char* normal = ap.normal == PlaneNormal::x ? "x" : ap.normal == PlaneNormal::y ? "y" : "z";

  json j;
  j["experiment"] = experiment_kind_name(c.kind);
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["scene"] = {
      {"aperture",
       {{"rows", ap.rows},
        {"cols", ap.cols},
        {"spacing_m", ap.spacing_m},
        {"corner_m", point_json(ap.corner)},
        {"normal", normal},
        {"frequency_hz", ap.frequency_hz},
        {"phase_bits", ap.phase_bits},
        {"subarray_rows", ap.subarray_rows},
        {"subarray_cols", ap.subarray_cols},
        {"sub_rows", ap.sub_rows},
        {"sub_cols", ap.sub_cols}}},
      {"room",
       {{"dimensions_m", point_json(room.dimensions)},
        {"reflection_coefficient", room.reflection_coefficient},
        {"reflection_phase_seed", room.reflection_phase_seed},
        {"surfaces", surfaces}}},
      {"channel",
       {{"attenuation", ch.attenuation},
        {"path_loss_exponent", ch.path_loss_exponent},
        {"phase_mismatch_std_rad", ch.hardware_phase_mismatch_std},
        {"hardware_phase_seed", ch.hardware_phase_seed}}},
      {"dfp_m", point_json(c.scene.dfp)}};
  const auto& a = c.agent;
  j["agent"] = {{"learning_rate", a.learning_rate},
                {"exploration_variance", a.exploration_variance},
                {"exploration_decay", a.exploration_decay},
                {"exploration_floor", a.exploration_floor},
                {"target_noise_variance", a.target_noise_variance},
                {"target_noise_decay", a.target_noise_decay},
                {"target_noise_clip", a.target_noise_clip},
                {"actor_period", a.actor_period},
                {"target_period", a.target_period},
                {"tau", a.tau},
                {"minibatch", a.minibatch},
                {"replay_capacity", a.replay_capacity},
                {"discount", a.discount},
                {"store_continuous_action", a.store_continuous_action}};
  const auto& p = c.propagation;
  j["propagation"] = {{"seed_teachers", p.seed_teachers},
                      {"candidate_teachers", p.candidate_teachers},
                      {"low_threshold", p.low_threshold},
                      {"high_threshold", p.high_threshold},
                      {"early_exit_threshold", p.early_exit_at_high ? "high" : "low"},
                      {"seed_budget", p.seed_budget},
                      {"student_budget", p.student_budget},
                      {"probe_budget", p.probe_budget},
                      {"probe_exploration_decay", p.probe_exploration_decay},
                      {"probe_learning_rate", p.probe_learning_rate},
                      {"seed_placement", p.placement == SeedPlacement::center ? "center" : "random"},
                      {"fine_tune", p.fine_tune == FineTuneMode::qll ? "qll" : "hard-switch"},
                      {"rotation_step_deg", 360.0 / static_cast<double>(p.rotations.angles.size())},
                      {"qll",
                       {{"first_liquid", p.qll.first_liquid},
                        {"outer", p.qll.outer},
                        {"stride", p.qll.stride},
                        {"outer_rate", p.qll.outer_rate},
                        {"ramp_start", p.qll.ramp_start}}}};
  const auto& b = c.blending;
  j["blending"] = {{"components", b.components},
                   {"library_floor", b.library_floor},
                   {"strategy", b.strategy == ComponentStrategy::nearest ? "nearest" : "latest"},
                   {"distance_ceiling_m", std::isfinite(b.distance_ceiling_m) ? json(b.distance_ceiling_m) : json()},
                   {"probe_budget", b.probe_budget},
                   {"probe_learning_rate", b.probe_learning_rate},
                   {"probe_exploration_variance", b.probe_exploration_variance},
                   {"probe_exploration_decay", b.probe_exploration_decay},
                   {"budget", b.budget}};
  j["train_budget"] = c.train_budget;
  j["subarrays"] = c.subarrays;
  j["scratch_baseline"] = c.scratch_baseline;
  j["fine_tune_baseline"] = c.fine_tune_baseline;
  j["library_path"] = c.library_path;
  j["convergence"] = {{"fraction", c.convergence.fraction}, {"window", c.convergence.window}};
  j["plane"] = {{"half_extent_m", c.plane.half_extent_m}, {"resolution", c.plane.resolution}};
  j["similarity"] = {{"reference_subarray", c.similarity.reference_subarray},
                     {"theta_deg", c.similarity.theta_deg},
                     {"trained", c.similarity.trained}};
  j["power_map"] = {{"eta", c.power_map.eta}, {"pdi_path", c.power_map.pdi_path}};
  const auto& mc = c.monte_carlo;
  j["monte_carlo"] = {{"library_size", mc.library_size},       {"new_points", mc.new_points},
                      {"min_distance_m", mc.min_distance_m},   {"max_distance_m", mc.max_distance_m},
                      {"component_counts", mc.component_counts}, {"library_budget", mc.library_budget}};
  j["orthogonality"] = {{"sizes", c.orthogonality.sizes},
                        {"trials", c.orthogonality.trials},
                        {"separation_m", c.orthogonality.separation_m}};
  return j.dump(2) + "\n";
}

}  // namespace sbf
