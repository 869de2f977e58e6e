#include <doctest.h>

#include "sbf/errors.hpp"
#include "sbf/td3.hpp"

using namespace sbf;

namespace {

SubarrayEnv small_env(int n, std::uint64_t seed, int bits = 3) {
  Rng rng(seed);
  ComplexGrid h(n, n);
  for (auto& v : h.data) v = std::polar(rng.uniform(0.5, 1.0), rng.uniform(0.0, 2 * std::numbers::pi));
  return SubarrayEnv(h, bits);
}

AgentConfig fast_config() {
  AgentConfig c;
  c.minibatch = 8;
  c.replay_capacity = 50;
  return c;
}

}  // namespace

TEST_CASE("reward compares powers strictly") {
  CHECK(reward(2.0, 1.0) == 1);
  CHECK(reward(1.0, 1.0) == -1);
  CHECK(reward(0.5, 1.0) == -1);
}

TEST_CASE("action quantization") {
  const std::vector<float> a{0.6f};
  CHECK(quantize_action(a, 2)[0] == 0);
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const int bits = 1 + static_cast<int>(rng.index(4));
    const float v = static_cast<float>(rng.uniform(-std::numbers::pi, std::numbers::pi));
    const std::vector<float> one{v};
    const int k = quantize_action(one, bits)[0];
    CHECK(k >= 0);
    CHECK(k < phase_levels(bits));
    CHECK(circular_distance(level_phase(k, bits), v) <= std::numbers::pi / phase_levels(bits) + 1e-6);
    // Exhaustive: no other level is strictly nearer.
    for (int j = 0; j < phase_levels(bits); ++j)
      CHECK(circular_distance(level_phase(j, bits), v) >= circular_distance(level_phase(k, bits), v) - 1e-6);
  }
  for (int bits = 1; bits <= 4; ++bits)
    for (int k = 0; k < phase_levels(bits); ++k) {
      const std::vector<float> s{level_to_state(k, bits)};
      CHECK(quantize_action(s, bits)[0] == k);
    }
}

TEST_CASE("exploration noise schedule") {
  AgentConfig c;
  c.exploration_variance = 0.5;
  c.exploration_decay = 1e-3;
  c.exploration_floor = 1e-5;
  for (long n : {0L, 10L, 1000L, 5000L})
    CHECK(c.exploration_std(n) == doctest::Approx(std::sqrt(0.5) * std::exp(-1e-3 * n)).epsilon(1e-14));
  CHECK(c.exploration_std(100000) == 1e-5);

  Rng rng(2);
  const auto p = make_policy(4, false, 3);
  const auto a = select_action(p.actor, p.state, 0.0, 3, rng);
  for (int t = 0; t < 5; ++t) CHECK(select_action(p.actor, p.state, 0.0, 3, rng) == a);
}

TEST_CASE("agent config validation") {
  AgentConfig c;
  CHECK_NOTHROW(c.validate());
  c.target_period = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.exploration_variance = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("replay buffer is FIFO and bounded") {
  ReplayBuffer buf(3, 1);
  for (int k = 0; k < 5; ++k) {
    const std::vector<float> s{static_cast<float>(k)};
    buf.push(s, s, static_cast<float>(k), s);
    CHECK(buf.size() <= buf.capacity());
  }
  CHECK(buf.rewards_in_order() == std::vector<float>{2.0f, 3.0f, 4.0f});
  Rng rng(4);
  NetworkF::Matrix s, a, r, s2;
  buf.sample(10, rng, s, a, r, s2);
  for (int b = 0; b < 10; ++b) {
    CHECK(r(0, b) >= 2.0f);
    CHECK(s(0, b) == r(0, b));
  }
  const std::vector<float> wrong{1.0f, 2.0f};
  CHECK_THROWS_AS(buf.push(wrong, wrong, 1.0f, wrong), DomainError);
}

TEST_CASE("training loop contracts") {
  const auto env = small_env(2, 5);
  auto cfg = fast_config();
  cfg.store_continuous_action = false;
  Policy p = make_policy(env.elements(), false, 7);
  Td3Trainer tr(p, env, cfg, uniform_rates(p, cfg.learning_rate), 11);
  const NetworkF actor0 = p.actor;
  for (int n = 0; n < cfg.minibatch - 1; ++n) CHECK_FALSE(tr.step().learned);
  CHECK(p.actor.params()[0].weight == actor0.params()[0].weight);
  for (int n = 0; n < 60; ++n) {
    const auto m = tr.step();
    CHECK(m.learned);
    CHECK((m.reward == 1 || m.reward == -1));
  }
  CHECK(tr.buffer().size() == cfg.replay_capacity);
  for (float r : tr.buffer().rewards_in_order()) CHECK((r == 1.0f || r == -1.0f));

  // The stored action equals the next state (quantized replay).
  NetworkF::Matrix s, a, r, s2;
  Rng rng(1);
  tr.buffer().sample(32, rng, s, a, r, s2);
  CHECK(a == s2);
}

TEST_CASE("training is deterministic under a seed") {
  const auto env = small_env(2, 6);
  const auto cfg = fast_config();
  const auto r1 = train_subarray(env, cfg, 200, make_policy(env.elements(), false, 1), 99);
  const auto r2 = train_subarray(env, cfg, 200, make_policy(env.elements(), false, 1), 99);
  CHECK(r1.trace.power == r2.trace.power);
  CHECK(r1.trace.reward == r2.trace.reward);
  CHECK(r1.pdi == r2.pdi);
  CHECK(r1.policy.actor.params()[2].weight == r2.policy.actor.params()[2].weight);
  const auto r3 = train_subarray(env, cfg, 200, make_policy(env.elements(), false, 1), 100);
  CHECK(r1.trace.power != r3.trace.power);
}

TEST_CASE("zero budget returns the initial policy") {
  const auto env = small_env(2, 7);
  const Policy p = make_policy(env.elements(), false, 2);
  const auto r = train_subarray(env, fast_config(), 0, p, 1);
  CHECK(r.trace.power.empty());
  CHECK(r.policy.actor.params()[0].weight == p.actor.params()[0].weight);
  CHECK(r.pdi == greedy_pdi(p, 2, 2, 3));
}

TEST_CASE("environment power matches the matrix power") {
  const auto env = small_env(3, 8);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    BeamfocusingMatrix w(3, 3, 3);
    for (int& v : w.levels.data) v = static_cast<int>(rng.index(8));
    CHECK(env.power(w) == doctest::Approx(received_power(w.weights(), env.channel()).power).epsilon(1e-12));
    CHECK(env.power(w) <= env.oracle_power() * (1 + 1e-12));
  }
}

TEST_CASE("fine-tune layers keep the greedy action and critic values") {
  Policy p = make_policy(4, false, 5);
  Rng rng(6);
  for (float& v : p.state) v = static_cast<float>(rng.uniform(-3.0, 3.0));
  const auto ft = with_fine_tune_layers(p);
  CHECK(ft.fine_tune);
  CHECK(greedy_pdi(ft, 2, 2, 3) == greedy_pdi(p, 2, 2, 3));
  NetworkF::Matrix x(8, 5);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
  CHECK(ft.critic1.predict(x) == p.critic1.predict(x));
  CHECK_THROWS_AS(with_fine_tune_layers(ft), DomainError);
}
