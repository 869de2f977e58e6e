#pragma once

// Transfer learning across subarrays (policy propagation with teacher probing
// and quasi-liquid fine-tuning) and across focal points (policy blending).

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sbf/pdi.hpp"
#include "sbf/td3.hpp"

namespace sbf {

// Per-layer rates for fine-tuning. Parameterized layer k of P sits at
// position n = outer - stride * (P - 1 - k); positions below first_liquid are
// frozen, the rest get outer_rate * g(n) with g linear from ramp_start at
// first_liquid to 1 at outer.
struct QllSchedule {
  int first_liquid = 4;          // n0
  int outer = 8;                 // n_t
  int stride = 2;
  double outer_rate = 0.7e-4;    // l^r at n_t
  double ramp_start = 5.0 / 7.0; // g(n0)

  void validate() const;
  double rate_at(int n) const;
  // Only the outer layer learns.
  QllSchedule hard_switched() const {
    QllSchedule s = *this;
    s.first_liquid = s.outer;
    return s;
  }
};

LearningRateProfile qll_rates(const QllSchedule& schedule, int parameter_layers);
TrainingRates qll_training_rates(const QllSchedule& schedule, const Policy& policy);

enum class SeedPlacement { center, random };
enum class FineTuneMode { qll, hard_switch };

struct PropagationConfig {
  int seed_teachers = 1;           // K1
  int candidate_teachers = 4;      // K2
  double low_threshold = 0.5;      // C^th1, early exit while probing
  double high_threshold = 0.9;     // C^th2, gate for transfer
  bool early_exit_at_high = false; // probe early exit uses C^th2 instead of C^th1
  long seed_budget = 20000;
  long student_budget = 20000;
  long probe_budget = 1000;
  double probe_exploration_decay = 5e-4;  // alpha^{xp,t}
  double probe_learning_rate = 1e-2;      // l^{r,t}
  SeedPlacement placement = SeedPlacement::center;
  FineTuneMode fine_tune = FineTuneMode::qll;
  QllSchedule qll;
  RotationSet rotations = RotationSet::step_degrees(10.0);

  void validate(int subarray_count) const;
};

// Child seeds shared by every training flow, so a subarray trained from
// scratch sees the same initialization and noise stream in all of them.
std::uint64_t subarray_policy_seed(std::uint64_t master, int subarray);
std::uint64_t subarray_train_seed(std::uint64_t master, int subarray);

struct ProbeResult {
  BeamfocusingMatrix pdi;
  EccResult ecc;
};

// Trains a copy of the teacher on the student's environment for the probe
// budget with the probe rates and compares the result with the teacher PDI.
ProbeResult probe_teacher(const SubarrayEnv& student, const Policy& teacher, const BeamfocusingMatrix& teacher_pdi,
                          const PropagationConfig& cfg, const AgentConfig& agent, std::uint64_t seed);

// Student start from a teacher: fine-tune layers added (identity) unless
// present, optimizer state reset, targets re-cloned from the live networks.
Policy transfer_policy(const Policy& teacher);

enum class TrainingMode { seed, transfer, scratch };
const char* training_mode_name(TrainingMode mode);

struct ProbeRecord {
  int teacher = -1;
  double ecc = 0.0;
  double angle = 0.0;
};

struct SubarrayOutcome {
  int index = 0;
  TrainingMode mode = TrainingMode::scratch;
  int teacher = -1;  // chosen teacher, -1 for seeds
  double ecc = 0.0;
  double angle = 0.0;
  std::vector<ProbeRecord> probes;
  TrainResult result;
};

struct PropagationResult {
  BeamfocusingMatrix matrix;
  std::vector<SubarrayOutcome> outcomes;  // in training order
  const SubarrayOutcome& outcome(int subarray) const;
};

using ProgressFn = std::function<void(const std::string&)>;

std::vector<int> seed_subarrays(const ApertureConfig& aperture, const PropagationConfig& cfg, std::uint64_t seed);

PropagationResult policy_propagation(const Scene& scene, const AgentConfig& agent, const PropagationConfig& cfg,
                                     std::uint64_t seed, const ProgressFn& progress = {});

// Every subarray trained from scratch with the same per-subarray seeds.
std::vector<TrainResult> train_all_scratch(const Scene& scene, const AgentConfig& agent, long budget,
                                           std::uint64_t seed, const std::vector<int>& subarrays = {},
                                           const ProgressFn& progress = {});

enum class ComponentStrategy { nearest, latest };

struct BlendingConfig {
  int components = 3;                  // K
  int library_floor = 10;              // N^lib
  ComponentStrategy strategy = ComponentStrategy::nearest;
  double distance_ceiling_m = std::numeric_limits<double>::infinity();
  long probe_budget = 500;
  double probe_learning_rate = 1e-2;
  double probe_exploration_variance = 0.05;
  double probe_exploration_decay = 5e-4;
  long budget = 20000;

  void validate() const;
};

struct LibraryEntry {
  Point3 dfp;
  std::vector<Policy> policies;           // one per subarray
  std::vector<BeamfocusingMatrix> pdis;   // final greedy submatrices
  std::uint64_t seed = 0;
  long budget = 0;
  double achieved_power = 0.0;            // mean normalized greedy power
};

struct PolicyLibrary {
  std::vector<LibraryEntry> entries;

  // Entries are immutable and unique per focal point.
  void add(LibraryEntry entry);
  bool contains(Point3 dfp) const;
};

std::vector<int> select_components(const PolicyLibrary& library, Point3 dfp, const BlendingConfig& cfg);

struct BlendWeights {
  std::vector<double> beta;
  bool uniform_fallback = false;  // all probe powers were zero
};

BlendWeights blend_weights(const std::vector<double>& probe_powers);

// Blend of per-subarray policies; architectures are brought to a common
// (fine-tune) form first when they differ.
Policy blend_policies(const std::vector<const Policy*>& policies, const std::vector<double>& beta);

struct BlendResult {
  std::vector<int> components;
  std::vector<double> probe_powers;
  BlendWeights weights;
  std::vector<TrainResult> subarrays;  // main training from the blended start
  long probe_iterations = 0;           // per subarray, summed over components
};

BlendResult policy_blending(PolicyLibrary& library, const Scene& scene, const BlendingConfig& cfg,
                            const AgentConfig& agent, std::uint64_t seed, const ProgressFn& progress = {});

// Library entry from independently trained subarrays.
LibraryEntry make_entry(const Scene& scene, std::vector<TrainResult> results, std::uint64_t seed, long budget);

}  // namespace sbf
