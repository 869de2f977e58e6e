#include "sbf/td3.hpp"

#include <cmath>
#include <numbers>

#include "sbf/errors.hpp"

namespace sbf {

namespace {

constexpr double kPi = std::numbers::pi;

float wrap_signed(float x) {
  constexpr float two_pi = static_cast<float>(2.0 * kPi);
  constexpr float pi = static_cast<float>(kPi);
  float y = x - two_pi * std::floor((x + pi) / two_pi);
  if (y >= pi) y -= two_pi;
  if (y < -pi) y = -pi;
  return y;
}

NetworkF::Matrix column(std::span<const float> v) {
  NetworkF::Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

}  // namespace

void AgentConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "agent: learning rate must be nonnegative");
  require(exploration_variance >= 0.0 && exploration_decay >= 0.0 && exploration_floor >= 0.0,
          "agent: exploration parameters must be nonnegative");
  require(target_noise_variance >= 0.0 && target_noise_decay >= 0.0 && target_noise_clip >= 0.0,
          "agent: target noise parameters must be nonnegative");
  require(actor_period >= 1 && target_period > actor_period, "agent: periods must satisfy T2 > T1 >= 1");
  require(tau > 0.0 && tau <= 1.0, "agent: tau must be in (0, 1]");
  require(minibatch >= 1, "agent: minibatch must be positive");
  require(replay_capacity >= minibatch, "agent: replay capacity must hold at least one minibatch");
  require(discount >= 0.0 && discount < 1.0, "agent: discount must be in [0, 1)");
}

double AgentConfig::exploration_std(long n) const {
  return std::max(exploration_floor, std::sqrt(exploration_variance) * std::exp(-exploration_decay * n));
}

double AgentConfig::target_noise_std(long n) const {
  return std::sqrt(target_noise_variance) * std::exp(-target_noise_decay * n);
}

Policy make_policy(int elements, bool fine_tune, std::uint64_t seed) {
  Rng ra(derive_seed(seed, "actor"));
  Rng rc1(derive_seed(seed, "critic", 1));
  Rng rc2(derive_seed(seed, "critic", 2));
  Policy p;
  p.actor = build_actor<float>(elements, fine_tune, &ra);
  p.critic1 = build_critic<float>(elements, fine_tune, &rc1);
  p.critic2 = build_critic<float>(elements, fine_tune, &rc2);
  p.target_actor = p.actor;
  p.target_critic1 = p.critic1;
  p.target_critic2 = p.critic2;
  p.state.assign(elements, 0.0f);
  p.fine_tune = fine_tune;
  return p;
}

Policy with_fine_tune_layers(const Policy& policy) {
  if (policy.fine_tune) throw DomainError("policy already has fine-tune layers");
  Policy out = policy;
  for (NetworkF* a : {&out.actor, &out.target_actor}) a->insert_identity_layer(5, true);
  for (NetworkF* c : {&out.critic1, &out.critic2, &out.target_critic1, &out.target_critic2})
    c->insert_identity_layer(3, false);
  out.fine_tune = true;
  return out;
}

TrainingRates uniform_rates(const Policy& policy, double rate) {
  return {LearningRateProfile(policy.actor.parameter_layer_count(), rate),
          LearningRateProfile(policy.critic1.parameter_layer_count(), rate)};
}

SubarrayEnv::SubarrayEnv(const ComplexGrid& channel, int bits, double signal_variance, double noise_variance)
    : channel_(channel), bits_(bits), signal_variance_(signal_variance), noise_variance_(noise_variance) {
  if (channel_.size() == 0) throw DomainError("env: empty channel");
  if (bits < 1 || bits > 16) throw ConfigError("env: phase bits must be in [1, 16]");
  const int levels = phase_levels(bits);
  const double amp = 1.0 / std::sqrt(static_cast<double>(channel_.size()));
  table_.resize(channel_.size() * levels);
  for (size_t n = 0; n < channel_.size(); ++n)
    for (int k = 0; k < levels; ++k)
      table_[n * levels + k] = std::conj(std::polar(amp, level_phase(k, bits))) * channel_.data[n];
  oracle_ = csi_oracle(channel_, bits);
  oracle_power_ = power(oracle_);
}

double SubarrayEnv::power(std::span<const int> levels) const {
  if (levels.size() != channel_.size()) throw DomainError("env: action length mismatch");
  const int count = phase_levels(bits_);
  std::complex<double> acc = 0.0;
  for (size_t n = 0; n < levels.size(); ++n) {
    const int k = levels[n];
    if (k < 0 || k >= count) throw DomainError("env: phase level out of range");
    acc += table_[n * count + k];
  }
  return std::norm(acc) * signal_variance_ + noise_variance_;
}

SubarrayEnv make_env(const Scene& scene, const ChannelMatrix& h, int subarray) {
  if (subarray < 0 || subarray >= scene.aperture.subarray_count()) throw DomainError("env: subarray out of range");
  return SubarrayEnv(h.block(scene.aperture, subarray), scene.aperture.phase_bits);
}

float level_to_state(int level, int bits) {
  return wrap_signed(static_cast<float>(level_phase(level, bits)));
}

std::vector<int> quantize_action(std::span<const float> action, int bits) {
  std::vector<int> out(action.size());
  for (size_t i = 0; i < action.size(); ++i) out[i] = quantize_phase(static_cast<double>(action[i]), bits);
  return out;
}

std::vector<float> noisy_action(const NetworkF& actor, std::span<const float> state, double noise_std, Rng& rng) {
  NetworkF::Matrix out = actor.predict(column(state));
  std::vector<float> a(out.data(), out.data() + out.size());
  if (noise_std > 0.0)
    for (float& v : a) v += static_cast<float>(noise_std * rng.normal());
  return a;
}

std::vector<int> select_action(const NetworkF& actor, std::span<const float> state, double noise_std, int bits,
                               Rng& rng) {
  return quantize_action(noisy_action(actor, state, noise_std, rng), bits);
}

BeamfocusingMatrix greedy_pdi(const Policy& policy, int rows, int cols, int bits) {
  if (rows * cols != policy.elements()) throw DomainError("greedy_pdi: shape does not match the policy");
  NetworkF::Matrix out = policy.actor.predict(column(policy.state));
  BeamfocusingMatrix w(rows, cols, bits);
  w.levels.data = quantize_action(std::span<const float>(out.data(), out.size()), bits);
  return w;
}

ReplayBuffer::ReplayBuffer(int capacity, int dim)
    : capacity_(capacity),
      dim_(dim),
      states_(dim, capacity),
      actions_(dim, capacity),
      next_states_(dim, capacity),
      rewards_(capacity, 0.0f) {
  if (capacity < 1 || dim < 1) throw ConfigError("replay: capacity and dimension must be positive");
}

void ReplayBuffer::push(std::span<const float> state, std::span<const float> action, float reward,
                        std::span<const float> next_state) {
  if (static_cast<int>(state.size()) != dim_ || static_cast<int>(action.size()) != dim_ ||
      static_cast<int>(next_state.size()) != dim_)
    throw DomainError("replay: experience dimension mismatch");
  for (int i = 0; i < dim_; ++i) {
    states_(i, head_) = state[i];
    actions_(i, head_) = action[i];
    next_states_(i, head_) = next_state[i];
  }
  rewards_[head_] = reward;
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

std::vector<float> ReplayBuffer::rewards_in_order() const {
  std::vector<float> out;
  out.reserve(size_);
  const int start = size_ < capacity_ ? 0 : head_;
  for (int k = 0; k < size_; ++k) out.push_back(rewards_[(start + k) % capacity_]);
  return out;
}

void ReplayBuffer::sample(int batch, Rng& rng, NetworkF::Matrix& s, NetworkF::Matrix& a, NetworkF::Matrix& r,
                          NetworkF::Matrix& s2) const {
  if (size_ == 0) throw DomainError("replay: cannot sample an empty buffer");
  s.resize(dim_, batch);
  a.resize(dim_, batch);
  s2.resize(dim_, batch);
  r.resize(1, batch);
  for (int b = 0; b < batch; ++b) {
    const auto k = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(size_)));
    s.col(b) = states_.col(k);
    a.col(b) = actions_.col(k);
    s2.col(b) = next_states_.col(k);
    r(0, b) = rewards_[k];
  }
}

Td3Trainer::Td3Trainer(Policy& policy, const SubarrayEnv& env, const AgentConfig& config, TrainingRates rates,
                       std::uint64_t seed)
    : policy_(policy),
      env_(env),
      config_(config),
      rates_(std::move(rates)),
      rng_(seed),
      buffer_(config.replay_capacity, env.elements()) {
  config_.validate();
  if (policy_.elements() != env_.elements()) throw DomainError("trainer: policy and subarray sizes differ");
  if (static_cast<int>(rates_.actor.size()) != policy_.actor.parameter_layer_count() ||
      static_cast<int>(rates_.critic.size()) != policy_.critic1.parameter_layer_count())
    throw ConfigError("trainer: learning-rate profile does not match the networks");
  if (static_cast<int>(policy_.state.size()) != env_.elements()) policy_.state.assign(env_.elements(), 0.0f);
  prev_power_ = env_.power(quantize_action(policy_.state, env_.bits()));
}

StepMetrics Td3Trainer::step() {
  StepMetrics m;
  m.iteration = iteration_;
  m.exploration_std = config_.exploration_std(iteration_);
  std::vector<float> action = noisy_action(policy_.actor, policy_.state, m.exploration_std, rng_);
  const auto levels = quantize_action(action, env_.bits());
  m.power = env_.power(levels);
  m.reward = reward(m.power, prev_power_);

  std::vector<float> next(levels.size());
  for (size_t i = 0; i < levels.size(); ++i) next[i] = level_to_state(levels[i], env_.bits());
  if (config_.store_continuous_action) {
    for (float& v : action) v = wrap_signed(v);
  } else {
    action = next;
  }
  buffer_.push(policy_.state, action, static_cast<float>(m.reward), next);
  policy_.state = next;
  prev_power_ = m.power;

  if (buffer_.size() >= config_.minibatch) {
    learn();
    m.learned = true;
    m.critic_loss = last_critic_loss_;
  }
  ++iteration_;
  ++policy_.steps;
  return m;
}

void Td3Trainer::learn() {
  const int n = env_.elements();
  const int batch = config_.minibatch;
  buffer_.sample(batch, rng_, s_, a_, r_, s2_);

  NetworkF::Matrix a2 = policy_.target_actor.predict(s2_);
  const double sigma = config_.target_noise_std(iteration_);
  const double clip = config_.target_noise_clip;
  for (Eigen::Index i = 0; i < a2.size(); ++i) {
    double eps = sigma > 0.0 ? sigma * rng_.normal() : 0.0;
    eps = std::clamp(eps, -clip, clip);
    a2.data()[i] = wrap_signed(a2.data()[i] + static_cast<float>(eps));
  }
  NetworkF::Matrix x2(2 * n, batch);
  x2.topRows(n) = s2_;
  x2.bottomRows(n) = a2;
  const NetworkF::Matrix q1 = policy_.target_critic1.predict(x2);
  const NetworkF::Matrix q2 = policy_.target_critic2.predict(x2);
  const NetworkF::Matrix y = r_ + static_cast<float>(config_.discount) * q1.cwiseMin(q2);

  NetworkF::Matrix x(2 * n, batch);
  x.topRows(n) = s_;
  x.bottomRows(n) = a_;
  double loss = 0.0;
  for (NetworkF* c : {&policy_.critic1, &policy_.critic2}) {
    const NetworkF::Matrix diff = c->forward(x) - y;
    loss += diff.squaredNorm() / batch;
    auto grads = c->backward(diff * (2.0f / batch));
    c->adam_step(grads, rates_.critic, config_.adam);
  }
  if (!std::isfinite(loss)) throw TrainingError("trainer: critic loss is not finite");
  last_critic_loss_ = 0.5 * loss;
  ++updates_;

  if (updates_ % config_.actor_period == 0) {
    const NetworkF::Matrix& pi = policy_.actor.forward(s_);
    NetworkF::Matrix xp(2 * n, batch);
    xp.topRows(n) = s_;
    xp.bottomRows(n) = pi;
    policy_.critic1.forward(xp);
    const NetworkF::Matrix dq = NetworkF::Matrix::Constant(1, batch, -1.0f / batch);
    const auto through = policy_.critic1.backward(dq, false);
    const NetworkF::Matrix da = through.input.bottomRows(n);
    auto grads = policy_.actor.backward(da);
    policy_.actor.adam_step(grads, rates_.actor, config_.adam);
  }
  if (updates_ % config_.target_period == 0) {
    soft_update(policy_.target_actor, policy_.actor, config_.tau);
    soft_update(policy_.target_critic1, policy_.critic1, config_.tau);
    soft_update(policy_.target_critic2, policy_.critic2, config_.tau);
  }
}

std::vector<double> TrainingTrace::normalized() const {
  std::vector<double> out(power.size());
  for (size_t i = 0; i < power.size(); ++i) out[i] = oracle_power > 0.0 ? power[i] / oracle_power : 0.0;
  return out;
}

TrainResult train_subarray(const SubarrayEnv& env, const AgentConfig& config, long budget, Policy initial,
                           std::uint64_t seed, const TrainingRates* rates) {
  if (budget < 0) throw ConfigError("train: budget must be nonnegative");
  if (initial.elements() != env.elements()) throw DomainError("train: policy and subarray sizes differ");
  TrainResult out;
  out.policy = std::move(initial);
  out.trace.oracle_power = env.oracle_power();
  out.trace.power.reserve(budget);
  out.trace.reward.reserve(budget);
  {
    const TrainingRates r = rates ? *rates : uniform_rates(out.policy, config.learning_rate);
    Td3Trainer trainer(out.policy, env, config, r, seed);
    for (long i = 0; i < budget; ++i) {
      const auto m = trainer.step();
      out.trace.power.push_back(m.power);
      out.trace.reward.push_back(m.reward);
    }
  }
  out.pdi = greedy_pdi(out.policy, env.rows(), env.cols(), env.bits());
  out.pdi_power = env.power(out.pdi);
  return out;
}

}  // namespace sbf
