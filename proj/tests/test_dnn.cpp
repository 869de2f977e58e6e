#include <doctest.h>

#include <sstream>

#include "gradcheck.hpp"
#include "sbf/dnn.hpp"
#include "sbf/errors.hpp"

using namespace sbf;

namespace {

std::vector<int> fc_widths(const NetworkF& n) {
  std::vector<int> out;
  for (const auto& s : n.specs())
    if (s.kind == LayerKind::fully_connected) out.push_back(s.width);
  return out;
}

NetworkF::Matrix random_input(int rows, int cols, Rng& rng) {
  NetworkF::Matrix x(rows, cols);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
  return x;
}

}  // namespace

TEST_CASE("reverse pass matches central differences on random networks") {
  const auto rep = gradcheck::run(100, 2024);
  CHECK(rep.networks == 100);
  CHECK(rep.max_error < 1e-4);
  CHECK(rep.max_forward_error < 1e-12);
  for (int k = 0; k < 5; ++k) CHECK(rep.kind_count[k] > 0);
}

TEST_CASE("actor and critic architectures") {
  Rng rng(1);
  const auto actor = build_actor<float>(36, false, &rng);
  CHECK(actor.input_dim() == 36);
  CHECK(fc_widths(actor) == std::vector<int>{576, 576, 36});
  CHECK(actor.specs().front().kind == LayerKind::normalization);
  CHECK(actor.specs().back().kind == LayerKind::scale);
  const auto ft = build_actor<float>(36, true, &rng);
  CHECK(fc_widths(ft) == std::vector<int>{576, 576, 576, 36});

  const auto critic = build_critic<float>(36, false, &rng);
  CHECK(critic.input_dim() == 72);
  CHECK(fc_widths(critic) == std::vector<int>{1152, 576, 1});
  CHECK(fc_widths(build_critic<float>(36, true, &rng)) == std::vector<int>{1152, 576, 576, 1});

  // Outputs stay within the phase range.
  const auto y = actor.predict(random_input(36, 10, rng) * 100.0f);
  CHECK(y.maxCoeff() <= static_cast<float>(std::numbers::pi));
  CHECK(y.minCoeff() >= -static_cast<float>(std::numbers::pi));
}

TEST_CASE("identity-initialized scale layer and normalization map") {
  Network n(2, {LayerSpec::normalization(-1, 1), LayerSpec::scale(-1, 1)});
  Eigen::MatrixXd x(2, 1);
  x << 0.3, -0.7;
  CHECK((n.predict(x) - x).norm() == 0.0);
  Network m(1, {LayerSpec::normalization(-std::numbers::pi, std::numbers::pi)});
  Eigen::MatrixXd edge(1, 3);
  edge << -std::numbers::pi, 0.0, std::numbers::pi;
  const auto out = m.predict(edge);
  CHECK(out(0, 0) == doctest::Approx(-1.0));
  CHECK(out(0, 1) == doctest::Approx(0.0));
  CHECK(out(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("Adam respects per-layer rates") {
  Rng rng(9);
  NetworkF n(4, {LayerSpec::dense(5), LayerSpec::relu(), LayerSpec::dense(3)}, &rng);
  const NetworkF before = n;
  const auto x = random_input(4, 8, rng);
  for (int step = 0; step < 5; ++step) {
    n.forward(x);
    auto g = n.backward(NetworkF::Matrix::Ones(3, 8));
    n.adam_step(g, {0.0, 0.0});
  }
  CHECK(n.params()[0].weight == before.params()[0].weight);
  CHECK(n.params()[1].bias == before.params()[1].bias);

  for (int step = 0; step < 5; ++step) {
    n.forward(x);
    auto g = n.backward(NetworkF::Matrix::Ones(3, 8));
    n.adam_step(g, {0.0, 1e-2});
  }
  CHECK(n.params()[0].weight == before.params()[0].weight);
  CHECK(n.params()[0].bias == before.params()[0].bias);
  CHECK(n.params()[1].weight != before.params()[1].weight);

  n.forward(x);
  auto g = n.backward(NetworkF::Matrix::Ones(3, 8));
  g.layers[1].weight(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(n.adam_step(g, {1e-3, 1e-3}), TrainingError);
  NetworkF fresh(2, {LayerSpec::dense(1)}, &rng);
  CHECK_THROWS_AS(fresh.backward(NetworkF::Matrix::Ones(1, 1)), TrainingError);
}

TEST_CASE("soft update") {
  Network a(1, {LayerSpec::dense(2)});
  Network b = a;
  a.params()[0].weight << 2, 4;
  b.params()[0].weight << 0, 0;
  Network t = b;
  soft_update(t, a, 0.5);
  CHECK(t.params()[0].weight(0) == 1.0);
  CHECK(t.params()[0].weight(1) == 2.0);
  t = b;
  soft_update(t, a, 1.0);
  CHECK(t.params()[0].weight == a.params()[0].weight);
  t = b;
  soft_update(t, a, 0.0);
  CHECK(t.params()[0].weight == b.params()[0].weight);
  Network other(2, {LayerSpec::dense(2)});
  CHECK_THROWS(soft_update(t, other, 0.5));
}

TEST_CASE("parameter blending") {
  Network a(1, {LayerSpec::dense(1)});
  Network b = a;
  a.params()[0].weight << 0.0;
  b.params()[0].weight << 10.0;
  const std::vector<const Network*> two{&a, &b};
  const std::vector<double> w{0.3, 0.7};
  CHECK(blend_params<double>(two, w).params()[0].weight(0) == doctest::Approx(7.0).epsilon(1e-15));

  const std::vector<const Network*> one{&b};
  const std::vector<double> unit{1.0};
  CHECK(blend_params<double>(one, unit).params()[0].weight == b.params()[0].weight);

  const std::vector<const Network*> same{&b, &b};
  CHECK(blend_params<double>(same, w).params()[0].weight(0) == doctest::Approx(10.0).epsilon(1e-15));

  const std::vector<double> bad{0.3, 0.6};
  CHECK_THROWS(blend_params<double>(two, bad));
  Network c(2, {LayerSpec::dense(1)});
  const std::vector<const Network*> mixed{&a, &c};
  CHECK_THROWS(blend_params<double>(mixed, w));
}

TEST_CASE("serialization is bit exact at float32") {
  Rng rng(12);
  auto actor = build_actor<float>(4, true, &rng);
  std::stringstream ss;
  actor.serialize(ss);
  const auto back = NetworkF::deserialize(ss);
  CHECK(back.same_architecture(actor));
  for (size_t l = 0; l < actor.params().size(); ++l) {
    CHECK(back.params()[l].weight == actor.params()[l].weight);
    CHECK(back.params()[l].bias == actor.params()[l].bias);
  }

  std::stringstream bad("sbf-network 99\n");
  CHECK_THROWS(NetworkF::deserialize(bad));
  std::string text = ss.str();
  std::stringstream again;
  actor.serialize(again);
  std::string truncated = again.str();
  truncated.resize(truncated.size() - 10);
  std::stringstream tr(truncated);
  CHECK_THROWS_AS(NetworkF::deserialize(tr), IoError);
}

TEST_CASE("identity insertion keeps the function") {
  Rng rng(13);
  auto actor = build_actor<float>(6, false, &rng);
  auto critic = build_critic<float>(6, false, &rng);
  const auto xs = random_input(6, 16, rng);
  const auto xc = random_input(12, 16, rng);
  const auto ya = actor.predict(xs);
  const auto yc = critic.predict(xc);
  auto actor_ft = actor;
  actor_ft.insert_identity_layer(5, true);
  auto critic_ft = critic;
  critic_ft.insert_identity_layer(3, false);
  CHECK(actor_ft.same_architecture(build_actor<float>(6, true, &rng)));
  CHECK(critic_ft.same_architecture(build_critic<float>(6, true, &rng)));
  CHECK((actor_ft.predict(xs) - ya).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((critic_ft.predict(xc) - yc).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("precision casts preserve architecture") {
  Rng rng(14);
  const auto d = build_actor<double>(3, false, &rng);
  const auto f = d.cast<float>();
  CHECK(f.input_dim() == 3);
  CHECK(f.parameter_count() == d.parameter_count());
  CHECK(f.params()[0].weight(0, 0) == static_cast<float>(d.params()[0].weight(0, 0)));
}
