#pragma once

// Per-subarray TD3 agents. The state is the previous phase action, the action
// is a quantized phase vector and the reward is +1 when the received power
// rose over the previous iteration and -1 otherwise.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sbf/beamfocus.hpp"
#include "sbf/dnn.hpp"

namespace sbf {

struct AgentConfig {
  double learning_rate = 1e-3;          // l^r
  double exploration_variance = 0.5;    // nu^a at iteration 0
  double exploration_decay = 1e-5;      // alpha^xp
  double exploration_floor = 1e-5;      // lower bound on the exploration std
  double target_noise_variance = 0.1;   // nu^t at iteration 0
  double target_noise_decay = 1e-4;     // alpha^t
  double target_noise_clip = 0.5;
  int actor_period = 1;                 // T1, in critic updates
  int target_period = 3;                // T2, in critic updates
  double tau = 0.005;
  int minibatch = 64;                   // K^mini
  int replay_capacity = 100000;
  double discount = 0.99;
  // Replay stores the noisy continuous action (wrapped) rather than its
  // quantized phases; the next state is always the quantized action.
  bool store_continuous_action = true;
  AdamHyper adam;

  void validate() const;
  // std of the exploration noise at iteration n: sqrt(nu^a) e^{-alpha n}, floored.
  double exploration_std(long n) const;
  double target_noise_std(long n) const;
};

struct Policy {
  NetworkF actor;
  NetworkF critic1;
  NetworkF critic2;
  NetworkF target_actor;
  NetworkF target_critic1;
  NetworkF target_critic2;
  std::vector<float> state;  // previous action, phases in [-pi, pi)
  long steps = 0;            // environment steps taken over the policy's life
  bool fine_tune = false;

  int elements() const { return actor.input_dim(); }
};

// Fresh policy: random actor and critics, targets equal to their sources,
// all-zero state.
Policy make_policy(int elements, bool fine_tune, std::uint64_t seed);

// Adds identity fine-tune layers to every network (after the second hidden
// ReLU of each actor, before the tanh of each critic). The greedy action and
// the critic values are unchanged.
Policy with_fine_tune_layers(const Policy& policy);

struct TrainingRates {
  LearningRateProfile actor;
  LearningRateProfile critic;
};

TrainingRates uniform_rates(const Policy& policy, double rate);

// Received power of a quantized subarray configuration, using a lookup table
// of conj(e^{j phi_k}) h_n / sqrt(N').
class SubarrayEnv {
 public:
  SubarrayEnv(const ComplexGrid& channel, int bits, double signal_variance = 1.0, double noise_variance = 0.0);

  int rows() const { return channel_.rows; }
  int cols() const { return channel_.cols; }
  int elements() const { return static_cast<int>(channel_.size()); }
  int bits() const { return bits_; }
  const ComplexGrid& channel() const { return channel_; }

  double power(std::span<const int> levels) const;
  double power(const BeamfocusingMatrix& w) const { return power(w.levels.data); }
  double oracle_power() const { return oracle_power_; }
  const BeamfocusingMatrix& oracle() const { return oracle_; }

 private:
  ComplexGrid channel_;
  int bits_;
  double signal_variance_;
  double noise_variance_;
  std::vector<std::complex<double>> table_;  // element-major, one entry per level
  BeamfocusingMatrix oracle_;
  double oracle_power_ = 0.0;
};

SubarrayEnv make_env(const Scene& scene, const ChannelMatrix& h, int subarray);

// Phase of a level, wrapped to [-pi, pi).
float level_to_state(int level, int bits);

// Level per element for a continuous action.
std::vector<int> quantize_action(std::span<const float> action, int bits);

inline int reward(double power_now, double power_prev) { return power_now > power_prev ? 1 : -1; }

// Actor output plus Gaussian noise of the given std.
std::vector<float> noisy_action(const NetworkF& actor, std::span<const float> state, double noise_std, Rng& rng);
// The same, quantized.
std::vector<int> select_action(const NetworkF& actor, std::span<const float> state, double noise_std, int bits,
                               Rng& rng);

// Noise-free action from the policy's current state.
BeamfocusingMatrix greedy_pdi(const Policy& policy, int rows, int cols, int bits);

// Uniform experience replay with FIFO eviction.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, int dim);

  void push(std::span<const float> state, std::span<const float> action, float reward,
            std::span<const float> next_state);
  int size() const { return size_; }
  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  // Rewards of the stored experiences, oldest first.
  std::vector<float> rewards_in_order() const;
  // Uniform sampling with replacement into dim x batch matrices.
  void sample(int batch, Rng& rng, NetworkF::Matrix& s, NetworkF::Matrix& a, NetworkF::Matrix& r,
              NetworkF::Matrix& s2) const;

 private:
  int capacity_;
  int dim_;
  int head_ = 0;
  int size_ = 0;
  NetworkF::Matrix states_;
  NetworkF::Matrix actions_;
  NetworkF::Matrix next_states_;
  std::vector<float> rewards_;
};

struct StepMetrics {
  long iteration = 0;
  double power = 0.0;
  int reward = 0;
  double exploration_std = 0.0;
  bool learned = false;
  double critic_loss = 0.0;
};

class Td3Trainer {
 public:
  Td3Trainer(Policy& policy, const SubarrayEnv& env, const AgentConfig& config, TrainingRates rates,
             std::uint64_t seed);

  StepMetrics step();
  long iteration() const { return iteration_; }
  double previous_power() const { return prev_power_; }
  const ReplayBuffer& buffer() const { return buffer_; }

 private:
  void learn();

  Policy& policy_;
  const SubarrayEnv& env_;
  AgentConfig config_;
  TrainingRates rates_;
  Rng rng_;
  ReplayBuffer buffer_;
  long iteration_ = 0;
  long updates_ = 0;
  double prev_power_ = 0.0;
  double last_critic_loss_ = 0.0;
  NetworkF::Matrix s_, a_, r_, s2_;
};

struct TrainingTrace {
  std::vector<double> power;
  std::vector<int> reward;
  double oracle_power = 0.0;

  std::vector<double> normalized() const;
};

struct TrainResult {
  Policy policy;
  TrainingTrace trace;
  BeamfocusingMatrix pdi;  // greedy configuration after training
  double pdi_power = 0.0;
};

// Runs `budget` iterations. Rates default to the configured learning rate on
// every layer.
TrainResult train_subarray(const SubarrayEnv& env, const AgentConfig& config, long budget, Policy initial,
                           std::uint64_t seed, const TrainingRates* rates = nullptr);

}  // namespace sbf
