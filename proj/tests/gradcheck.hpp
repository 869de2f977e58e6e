#pragma once

// Central finite-difference check of the network reverse pass on random
// layer stacks.

#include <array>
#include <cmath>

#include "oracles.hpp"
#include "sbf/dnn.hpp"

namespace gradcheck {

struct Report {
  int networks = 0;
  double max_error = 0.0;          // worst per-tensor relative error
  double max_forward_error = 0.0;  // library forward vs plain evaluation
  std::array<int, 5> kind_count{}; // networks containing each layer kind
};

inline sbf::Network random_network(sbf::Rng& rng) {
  using sbf::LayerSpec;
  const int in = 1 + static_cast<int>(rng.index(5));
  std::vector<LayerSpec> specs;
  if (rng.uniform() < 0.5) specs.push_back(LayerSpec::normalization(-rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0)));
  const int blocks = 1 + static_cast<int>(rng.index(4));
  for (int b = 0; b < blocks; ++b) {
    specs.push_back(LayerSpec::dense(1 + static_cast<int>(rng.index(6))));
    const double u = rng.uniform();
    if (u < 0.4) specs.push_back(LayerSpec::relu());
    else if (u < 0.8) specs.push_back(LayerSpec::tanh());
  }
  if (rng.uniform() < 0.5) {
    if (specs.back().kind != sbf::LayerKind::tanh) specs.push_back(LayerSpec::tanh());
    specs.push_back(LayerSpec::scale(-rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0)));
  }
  sbf::Network net(in, specs, &rng);
  // Nonzero biases so that every parameter tensor is exercised.
  for (auto& p : net.params())
    for (int i = 0; i < p.bias.size(); ++i) p.bias(i) = rng.uniform(-0.5, 0.5);
  return net;
}

inline double tensor_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

inline Report run(int count, std::uint64_t seed, double step = 1e-5) {
  sbf::Rng rng(seed);
  Report rep;
  const int batch = 3;
  while (rep.networks < count) {
    sbf::Network net = random_network(rng);
    const int in = net.input_dim();
    // Inputs whose ReLU pre-activations all sit well away from the kink.
    Eigen::MatrixXd x(in, batch);
    bool ok = false;
    for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
      ok = true;
      for (int b = 0; b < batch; ++b) {
        std::vector<double> col(in);
        for (int i = 0; i < in; ++i) col[i] = x(i, b) = rng.uniform(-2.0, 2.0);
        double margin = 0;
        oracle::forward(net, col, &margin);
        ok = ok && margin > 1e-3;
      }
    }
    if (!ok) continue;

    const Eigen::MatrixXd y = net.forward(x);
    for (int b = 0; b < batch; ++b) {
      std::vector<double> col(in);
      for (int i = 0; i < in; ++i) col[i] = x(i, b);
      const auto ref = oracle::forward(net, col);
      for (int o = 0; o < y.rows(); ++o) rep.max_forward_error = std::max(rep.max_forward_error, std::abs(y(o, b) - ref[o]));
    }
    Eigen::MatrixXd c(y.rows(), batch);
    for (int i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1.0, 1.0);
    const auto g = net.backward(c);
    auto loss = [&]() { return (net.predict(x).array() * c.array()).sum(); };

    for (size_t l = 0; l < net.params().size(); ++l) {
      for (int which = 0; which < 2; ++which) {
        Eigen::MatrixXd analytic, numeric;
        if (which == 0) {
          auto& w = net.params()[l].weight;
          analytic = g.layers[l].weight;
          numeric.resize(w.rows(), w.cols());
          for (int i = 0; i < w.size(); ++i) {
            const double keep = w.data()[i];
            w.data()[i] = keep + step;
            const double up = loss();
            w.data()[i] = keep - step;
            const double down = loss();
            w.data()[i] = keep;
            numeric.data()[i] = (up - down) / (2 * step);
          }
        } else {
          auto& bvec = net.params()[l].bias;
          analytic = g.layers[l].bias;
          numeric.resize(bvec.size(), 1);
          for (int i = 0; i < bvec.size(); ++i) {
            const double keep = bvec(i);
            bvec(i) = keep + step;
            const double up = loss();
            bvec(i) = keep - step;
            const double down = loss();
            bvec(i) = keep;
            numeric(i) = (up - down) / (2 * step);
          }
        }
        rep.max_error = std::max(rep.max_error, tensor_error(analytic, numeric));
      }
    }
    Eigen::MatrixXd numeric_in(in, batch);
    for (int i = 0; i < x.size(); ++i) {
      const double keep = x.data()[i];
      x.data()[i] = keep + step;
      const double up = loss();
      x.data()[i] = keep - step;
      const double down = loss();
      x.data()[i] = keep;
      numeric_in.data()[i] = (up - down) / (2 * step);
    }
    rep.max_error = std::max(rep.max_error, tensor_error(g.input, numeric_in));

    std::array<bool, 5> seen{};
    for (const auto& s : net.specs()) seen[static_cast<int>(s.kind)] = true;
    for (int k = 0; k < 5; ++k) rep.kind_count[k] += seen[k] ? 1 : 0;
    ++rep.networks;
  }
  return rep;
}

}  // namespace gradcheck
