#include "sbf/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sbf/errors.hpp"

namespace sbf {

void QllSchedule::validate() const {
  if (first_liquid > outer) throw ConfigError("qll: n0 must not exceed n_t");
  if (stride < 1) throw ConfigError("qll: stride must be positive");
  if (!(outer_rate >= 0.0)) throw ConfigError("qll: outer rate must be nonnegative");
  if (!(ramp_start >= 0.0 && ramp_start <= 1.0)) throw ConfigError("qll: ramp start must be in [0, 1]");
}

double QllSchedule::rate_at(int n) const {
  if (n < first_liquid || n > outer) return 0.0;
  if (n == outer) return outer_rate;
  const double t = static_cast<double>(n - first_liquid) / (outer - first_liquid);
  return outer_rate * (ramp_start + (1.0 - ramp_start) * t);
}

LearningRateProfile qll_rates(const QllSchedule& schedule, int parameter_layers) {
  schedule.validate();
  if (parameter_layers < 1) throw ConfigError("qll: need at least one parameterized layer");
  LearningRateProfile out(parameter_layers);
  for (int k = 0; k < parameter_layers; ++k)
    out[k] = schedule.rate_at(schedule.outer - schedule.stride * (parameter_layers - 1 - k));
  return out;
}

TrainingRates qll_training_rates(const QllSchedule& schedule, const Policy& policy) {
  return {qll_rates(schedule, policy.actor.parameter_layer_count()),
          qll_rates(schedule, policy.critic1.parameter_layer_count())};
}

void PropagationConfig::validate(int subarray_count) const {
  if (seed_teachers < 1) throw ConfigError("propagation: K1 must be at least 1");
  if (seed_teachers > subarray_count) throw ConfigError("propagation: K1 exceeds the subarray count");
  if (candidate_teachers < 1) throw ConfigError("propagation: K2 must be at least 1");
  if (!(high_threshold > low_threshold)) throw ConfigError("propagation: C^th2 must exceed C^th1");
  if (seed_budget < 0 || student_budget < 0 || probe_budget < 0)
    throw ConfigError("propagation: budgets must be nonnegative");
  if (probe_exploration_decay < 0.0 || probe_learning_rate < 0.0)
    throw ConfigError("propagation: probe rates must be nonnegative");
  if (rotations.angles.empty()) throw ConfigError("propagation: empty rotation set");
  qll.validate();
}

std::uint64_t subarray_policy_seed(std::uint64_t master, int subarray) {
  return derive_seed(master, "policy", static_cast<std::uint64_t>(subarray));
}

std::uint64_t subarray_train_seed(std::uint64_t master, int subarray) {
  return derive_seed(master, "train", static_cast<std::uint64_t>(subarray));
}

ProbeResult probe_teacher(const SubarrayEnv& student, const Policy& teacher, const BeamfocusingMatrix& teacher_pdi,
                          const PropagationConfig& cfg, const AgentConfig& agent, std::uint64_t seed) {
  AgentConfig probe = agent;
  probe.exploration_decay = cfg.probe_exploration_decay;
  probe.learning_rate = cfg.probe_learning_rate;
  auto r = train_subarray(student, probe, cfg.probe_budget, teacher, seed);
  ProbeResult out;
  out.ecc = ecc(to_phase_image(r.pdi), to_phase_image(teacher_pdi), cfg.rotations);
  out.pdi = std::move(r.pdi);
  return out;
}

Policy transfer_policy(const Policy& teacher) {
  Policy p = teacher.fine_tune ? teacher : with_fine_tune_layers(teacher);
  for (NetworkF* n : {&p.actor, &p.critic1, &p.critic2}) n->reset_optimizer();
  p.target_actor = p.actor;
  p.target_critic1 = p.critic1;
  p.target_critic2 = p.critic2;
  return p;
}

const char* training_mode_name(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::seed: return "seed";
    case TrainingMode::transfer: return "transfer";
    case TrainingMode::scratch: return "scratch";
  }
  return "?";
}

const SubarrayOutcome& PropagationResult::outcome(int subarray) const {
  for (const auto& o : outcomes)
    if (o.index == subarray) return o;
  throw DomainError("propagation: no outcome for subarray " + std::to_string(subarray));
}

namespace {

struct BlockPos {
  int r, c;
};

BlockPos block_pos(const ApertureConfig& a, int m) { return {m / a.subarray_cols, m % a.subarray_cols}; }

double block_distance(const ApertureConfig& a, int m, int n) {
  const auto p = block_pos(a, m);
  const auto q = block_pos(a, n);
  return std::hypot(p.r - q.r, p.c - q.c);
}

}  // namespace

std::vector<int> seed_subarrays(const ApertureConfig& aperture, const PropagationConfig& cfg, std::uint64_t seed) {
  const int M = aperture.subarray_count();
  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);
  if (cfg.placement == SeedPlacement::random) {
    Rng rng(derive_seed(seed, "seed-placement"));
    for (int i = M - 1; i > 0; --i) std::swap(order[i], order[rng.index(static_cast<std::uint64_t>(i) + 1)]);
  } else {
    const double cr = 0.5 * (aperture.subarray_rows - 1);
    const double cc = 0.5 * (aperture.subarray_cols - 1);
    auto dist = [&](int m) {
      const auto p = block_pos(aperture, m);
      return std::hypot(p.r - cr, p.c - cc);
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist(a) < dist(b); });
  }
  order.resize(cfg.seed_teachers);
  return order;
}

PropagationResult policy_propagation(const Scene& scene, const AgentConfig& agent, const PropagationConfig& cfg,
                                     std::uint64_t seed, const ProgressFn& progress) {
  scene.validate();
  agent.validate();
  const auto& ap = scene.aperture;
  const int M = ap.subarray_count();
  cfg.validate(M);
  const ChannelMatrix h = channel_matrix(scene, scene.dfp);
  auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };

  PropagationResult out;
  std::vector<bool> is_teacher(M, false);
  std::vector<int> slot(M, -1);  // subarray -> index in outcomes

  for (int m : seed_subarrays(ap, cfg, seed)) {
    const SubarrayEnv env = make_env(scene, h, m);
    SubarrayOutcome o;
    o.index = m;
    o.mode = TrainingMode::seed;
    o.result = train_subarray(env, agent, cfg.seed_budget, make_policy(env.elements(), false, subarray_policy_seed(seed, m)),
                              subarray_train_seed(seed, m));
    note("seed subarray " + std::to_string(m) + " trained");
    is_teacher[m] = true;
    slot[m] = static_cast<int>(out.outcomes.size());
    out.outcomes.push_back(std::move(o));
  }

  const double exit_threshold = cfg.early_exit_at_high ? cfg.high_threshold : cfg.low_threshold;
  for (int remaining = M - cfg.seed_teachers; remaining > 0; --remaining) {
    // Lowest-index student with a teacher among its 4-neighbours.
    int student = -1;
    for (int m = 0; m < M && student < 0; ++m) {
      if (is_teacher[m]) continue;
      for (int n = 0; n < M; ++n)
        if (is_teacher[n] && block_distance(ap, m, n) == 1.0) {
          student = m;
          break;
        }
    }
    if (student < 0) throw DomainError("propagation: no student adjacent to the teacher set");

    std::vector<int> candidates;
    for (int n = 0; n < M; ++n)
      if (is_teacher[n]) candidates.push_back(n);
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
      return block_distance(ap, student, a) < block_distance(ap, student, b);
    });
    if (static_cast<int>(candidates.size()) > cfg.candidate_teachers) candidates.resize(cfg.candidate_teachers);

    const SubarrayEnv env = make_env(scene, h, student);
    SubarrayOutcome o;
    o.index = student;
    int best = -1;
    for (int t : candidates) {
      const auto& teacher = out.outcomes[slot[t]].result;
      ProbeRecord rec{t, 0.0, 0.0};
      try {
        const auto probe = probe_teacher(env, teacher.policy, teacher.pdi, cfg, agent,
                                         derive_seed(seed, "probe", static_cast<std::uint64_t>(student * M + t)));
        rec.ecc = probe.ecc.value;
        rec.angle = probe.ecc.angle;
      } catch (const TrainingError& e) {
        note(std::string("probe of teacher ") + std::to_string(t) + " failed: " + e.what());
        rec.ecc = -1.0;
      }
      o.probes.push_back(rec);
      if (best < 0 || rec.ecc > o.probes[best].ecc) best = static_cast<int>(o.probes.size()) - 1;
      if (rec.ecc > exit_threshold) {
        best = static_cast<int>(o.probes.size()) - 1;
        break;
      }
    }
    o.teacher = o.probes[best].teacher;
    o.ecc = o.probes[best].ecc;
    o.angle = o.probes[best].angle;

    if (o.ecc > cfg.high_threshold) {
      o.mode = TrainingMode::transfer;
      const Policy start = transfer_policy(out.outcomes[slot[o.teacher]].result.policy);
      const QllSchedule schedule = cfg.fine_tune == FineTuneMode::qll ? cfg.qll : cfg.qll.hard_switched();
      const TrainingRates rates = qll_training_rates(schedule, start);
      o.result = train_subarray(env, agent, cfg.student_budget, start, subarray_train_seed(seed, student), &rates);
    } else {
      o.mode = TrainingMode::scratch;
      o.result = train_subarray(env, agent, cfg.student_budget,
                                make_policy(env.elements(), false, subarray_policy_seed(seed, student)),
                                subarray_train_seed(seed, student));
    }
    note("student " + std::to_string(student) + " " + training_mode_name(o.mode) + " (teacher " +
         std::to_string(o.teacher) + ", ecc " + std::to_string(o.ecc) + ")");
    is_teacher[student] = true;
    slot[student] = static_cast<int>(out.outcomes.size());
    out.outcomes.push_back(std::move(o));
  }

  std::vector<BeamfocusingSubmatrix> subs;
  for (const auto& o : out.outcomes) subs.push_back({o.index, o.result.pdi});
  out.matrix = assemble_matrix(subs, ap.subarray_rows, ap.subarray_cols);
  return out;
}

std::vector<TrainResult> train_all_scratch(const Scene& scene, const AgentConfig& agent, long budget,
                                           std::uint64_t seed, const std::vector<int>& subarrays,
                                           const ProgressFn& progress) {
  scene.validate();
  agent.validate();
  const ChannelMatrix h = channel_matrix(scene, scene.dfp);
  std::vector<int> which = subarrays;
  if (which.empty()) {
    which.resize(scene.aperture.subarray_count());
    std::iota(which.begin(), which.end(), 0);
  }
  std::vector<TrainResult> out;
  for (int m : which) {
    const SubarrayEnv env = make_env(scene, h, m);
    out.push_back(train_subarray(env, agent, budget, make_policy(env.elements(), false, subarray_policy_seed(seed, m)),
                                 subarray_train_seed(seed, m)));
    if (progress) progress("subarray " + std::to_string(m) + " trained from scratch");
  }
  return out;
}

void BlendingConfig::validate() const {
  if (components < 1) throw ConfigError("blending: K must be at least 1");
  if (library_floor < 0) throw ConfigError("blending: library floor must be nonnegative");
  if (!(distance_ceiling_m > 0.0)) throw ConfigError("blending: distance ceiling must be positive");
  if (probe_budget < 0 || budget < 0) throw ConfigError("blending: budgets must be nonnegative");
  if (probe_learning_rate < 0.0 || probe_exploration_variance < 0.0 || probe_exploration_decay < 0.0)
    throw ConfigError("blending: probe rates must be nonnegative");
}

void PolicyLibrary::add(LibraryEntry entry) {
  if (contains(entry.dfp)) throw DomainError("library: an entry for this focal point already exists");
  entries.push_back(std::move(entry));
}

bool PolicyLibrary::contains(Point3 dfp) const {
  return std::any_of(entries.begin(), entries.end(), [&](const LibraryEntry& e) { return e.dfp == dfp; });
}

std::vector<int> select_components(const PolicyLibrary& library, Point3 dfp, const BlendingConfig& cfg) {
  if (library.entries.empty()) throw DomainError("select_components: empty library");
  const int n = static_cast<int>(library.entries.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (cfg.strategy == ComponentStrategy::latest) {
    std::reverse(idx.begin(), idx.end());
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return distance(library.entries[a].dfp, dfp) < distance(library.entries[b].dfp, dfp);
    });
  }
  std::vector<int> out;
  for (int i : idx) {
    if (static_cast<int>(out.size()) == cfg.components) break;
    if (distance(library.entries[i].dfp, dfp) <= cfg.distance_ceiling_m) out.push_back(i);
  }
  return out;
}

BlendWeights blend_weights(const std::vector<double>& probe_powers) {
  if (probe_powers.empty()) throw DomainError("blend_weights: no probe powers");
  double sum = 0.0;
  for (double p : probe_powers) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("blend_weights: powers must be finite and nonnegative");
    sum += p;
  }
  BlendWeights out;
  if (sum == 0.0) {
    out.beta.assign(probe_powers.size(), 1.0 / static_cast<double>(probe_powers.size()));
    out.uniform_fallback = true;
    return out;
  }
  for (double p : probe_powers) out.beta.push_back(p / sum);
  return out;
}

Policy blend_policies(const std::vector<const Policy*>& policies, const std::vector<double>& beta) {
  if (policies.empty() || policies.size() != beta.size()) throw DomainError("blend_policies: need one weight per policy");
  const bool any_ft = std::any_of(policies.begin(), policies.end(), [](const Policy* p) { return p->fine_tune; });
  std::vector<Policy> lifted;
  lifted.reserve(policies.size());
  for (const Policy* p : policies) lifted.push_back(any_ft && !p->fine_tune ? with_fine_tune_layers(*p) : *p);

  auto blend = [&](NetworkF Policy::*member) {
    std::vector<const NetworkF*> nets;
    for (const auto& p : lifted) nets.push_back(&(p.*member));
    return blend_params<float>(nets, beta);
  };
  Policy out;
  out.actor = blend(&Policy::actor);
  out.critic1 = blend(&Policy::critic1);
  out.critic2 = blend(&Policy::critic2);
  out.target_actor = out.actor;
  out.target_critic1 = out.critic1;
  out.target_critic2 = out.critic2;
  out.fine_tune = any_ft;
  // Phases do not average meaningfully; start from the heaviest component's state.
  const auto heaviest = std::max_element(beta.begin(), beta.end()) - beta.begin();
  out.state = lifted[heaviest].state;
  return out;
}

BlendResult policy_blending(PolicyLibrary& library, const Scene& scene, const BlendingConfig& cfg,
                            const AgentConfig& agent, std::uint64_t seed, const ProgressFn& progress) {
  scene.validate();
  agent.validate();
  cfg.validate();
  const int M = scene.aperture.subarray_count();
  for (const auto& e : library.entries)
    if (static_cast<int>(e.policies.size()) != M) throw DomainError("blending: library entry has the wrong subarray count");

  BlendResult out;
  out.components = select_components(library, scene.dfp, cfg);
  if (out.components.empty()) throw DomainError("blending: no library entry within the distance ceiling");
  const ChannelMatrix h = channel_matrix(scene, scene.dfp);
  std::vector<SubarrayEnv> envs;
  for (int m = 0; m < M; ++m) envs.push_back(make_env(scene, h, m));

  AgentConfig probe = agent;
  probe.learning_rate = cfg.probe_learning_rate;
  probe.exploration_variance = cfg.probe_exploration_variance;
  probe.exploration_decay = cfg.probe_exploration_decay;
  for (int c : out.components) {
    double total = 0.0;
    for (int m = 0; m < M; ++m) {
      const std::uint64_t s = derive_seed(seed, "blend-probe", static_cast<std::uint64_t>(c * M + m));
      try {
        const auto r = train_subarray(envs[m], probe, cfg.probe_budget, library.entries[c].policies[m], s);
        total += r.pdi_power;
      } catch (const TrainingError& e) {
        if (progress) progress(std::string("blend probe diverged: ") + e.what());
      }
    }
    out.probe_powers.push_back(total);
    out.probe_iterations += cfg.probe_budget;
    if (progress) progress("component " + std::to_string(c) + " probe power " + std::to_string(total));
  }
  out.weights = blend_weights(out.probe_powers);

  for (int m = 0; m < M; ++m) {
    std::vector<const Policy*> parts;
    for (int c : out.components) parts.push_back(&library.entries[c].policies[m]);
    Policy start = blend_policies(parts, out.weights.beta);
    out.subarrays.push_back(train_subarray(envs[m], agent, cfg.budget, std::move(start), subarray_train_seed(seed, m)));
    if (progress) progress("subarray " + std::to_string(m) + " trained from blended start");
  }

  std::vector<TrainResult> copy = out.subarrays;
  library.add(make_entry(scene, std::move(copy), seed, cfg.budget));
  return out;
}

LibraryEntry make_entry(const Scene& scene, std::vector<TrainResult> results, std::uint64_t seed, long budget) {
  if (static_cast<int>(results.size()) != scene.aperture.subarray_count())
    throw DomainError("library: one result per subarray is required");
  LibraryEntry e;
  e.dfp = scene.dfp;
  e.seed = seed;
  e.budget = budget;
  double sum = 0.0;
  for (auto& r : results) {
    sum += r.trace.oracle_power > 0.0 ? r.pdi_power / r.trace.oracle_power : 0.0;
    e.pdis.push_back(r.pdi);
    e.policies.push_back(std::move(r.policy));
  }
  e.achieved_power = sum / static_cast<double>(results.size());
  return e;
}

}  // namespace sbf
