#pragma once

// Independent reference implementations. These are written directly from
// the model definitions and share no code with the library beyond plain data
// types and the seeded random stream.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "sbf/channel.hpp"
#include "sbf/dnn.hpp"
#include "sbf/pdi.hpp"
#include "sbf/rng.hpp"

namespace oracle {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

struct Vec {
  double x, y, z;
};

inline double dist(Vec a, Vec b) { return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z)); }

// Direct sum over the line-of-sight path and up to six wall images.
inline cd channel_gain(const sbf::Scene& s, int i, int j) {
  const auto& a = s.aperture;
  const double lambda = 299792458.0 / a.frequency_hz;
  const double d = a.spacing_m > 0 ? a.spacing_m : lambda / 2;
  Vec e{a.corner.x, a.corner.y, a.corner.z};
  // Columns run along the first in-plane axis, rows along the second.
  switch (a.normal) {
    case sbf::PlaneNormal::x: e.y += j * d; e.z += i * d; break;
    case sbf::PlaneNormal::y: e.x += j * d; e.z += i * d; break;
    case sbf::PlaneNormal::z: e.x += j * d; e.y += i * d; break;
  }
  const Vec r{s.dfp.x, s.dfp.y, s.dfp.z};
  const double k = 2 * kPi / lambda;
  const double al = s.channel.path_loss_exponent;
  auto term = [&](double amp, double len, double shift) {
    return amp * std::pow(len, -al / 2) * std::exp(cd(0, -(k * len + shift)));
  };
  cd h = term(1.0, dist(e, r), 0.0);
  sbf::Rng rng(s.room.reflection_phase_seed);
  const auto& D = s.room.dimensions;
  const Vec images[6] = {{-r.x, r.y, r.z},           {2 * D.x - r.x, r.y, r.z}, {r.x, -r.y, r.z},
                         {r.x, 2 * D.y - r.y, r.z}, {r.x, r.y, -r.z},           {r.x, r.y, 2 * D.z - r.z}};
  for (int w = 0; w < 6; ++w) {
    const double phase = 2 * kPi * rng.uniform();
    if (s.room.enabled[w]) h += term(s.room.reflection_coefficient, dist(e, images[w]), phase);
  }
  return s.channel.attenuation * h;
}

// |sum conj(w) h|^2 with w = e^{j phi} / sqrt(N).
inline double power(const std::vector<double>& phases, const std::vector<cd>& h) {
  cd acc = 0;
  for (size_t n = 0; n < h.size(); ++n) acc += std::conj(std::polar(1.0 / std::sqrt(double(h.size())), phases[n])) * h[n];
  return std::norm(acc);
}

struct Pearson {
  double value;
  bool degenerate;
};

// Circular correlation with means taken from the resultant direction.
inline Pearson pearson(const std::vector<double>& a, const std::vector<double>& b) {
  auto mean = [](const std::vector<double>& t, bool& bad) {
    double c = 0, s = 0;
    for (double v : t) {
      c += std::cos(v);
      s += std::sin(v);
    }
    bad = std::sqrt(c * c + s * s) / double(t.size()) < 1e-9;
    return std::atan2(s, c);
  };
  bool bad_a = false, bad_b = false;
  const double ma = mean(a, bad_a);
  const double mb = mean(b, bad_b);
  if (bad_a || bad_b) return {0.0, true};
  double num = 0, da = 0, db = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    const double x = std::sin(a[k] - ma), y = std::sin(b[k] - mb);
    num += x * y;
    da += x * x;
    db += y * y;
  }
  if (da <= 1e-20 * double(a.size()) || db <= 1e-20 * double(a.size())) return {0.0, true};
  return {std::clamp(num / std::sqrt(da * db), -1.0, 1.0), false};
}

// Counter-clockwise rotation of an n x n phase image about its center. The
// output pixel (i, j) samples the source at the pixel rotated back by theta,
// interpolating cos and sin bilinearly and clamping to the border.
inline std::vector<double> rotate(const std::vector<double>& img, int n, double theta) {
  const double c = (n - 1) / 2.0;
  const double q = theta / (kPi / 2);
  if (std::abs(q - std::round(q)) <= 1e-9) {
    const int turns = ((int(std::llround(q)) % 4) + 4) % 4;
    std::vector<double> out(img.size());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        int si = i, sj = j;
        for (int t = 0; t < turns; ++t) {
          // One quarter turn: destination (i, j) reads source (n-1-j, i).
          const int ni = n - 1 - sj, nj = si;
          si = ni;
          sj = nj;
        }
        out[i * n + j] = img[si * n + sj];
      }
    return out;
  }
  auto at = [&](int i, int j, bool sine) { return sine ? std::sin(img[i * n + j]) : std::cos(img[i * n + j]); };
  auto bilinear = [&](double y, double x, bool sine) {
    y = std::min(std::max(y, 0.0), n - 1.0);
    x = std::min(std::max(x, 0.0), n - 1.0);
    const int i0 = std::min(int(std::floor(y)), n - 1), j0 = std::min(int(std::floor(x)), n - 1);
    const int i1 = std::min(i0 + 1, n - 1), j1 = std::min(j0 + 1, n - 1);
    const double fy = y - i0, fx = x - j0;
    return (1 - fy) * ((1 - fx) * at(i0, j0, sine) + fx * at(i0, j1, sine)) +
           fy * ((1 - fx) * at(i1, j0, sine) + fx * at(i1, j1, sine));
  };
  std::vector<double> out(img.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = j - c, y = i - c;
      const double sx = std::cos(theta) * x + std::sin(theta) * y;
      const double sy = -std::sin(theta) * x + std::cos(theta) * y;
      double v = std::atan2(bilinear(sy + c, sx + c, true), bilinear(sy + c, sx + c, false));
      if (v < 0) v += 2 * kPi;
      if (v >= 2 * kPi) v -= 2 * kPi;
      out[i * n + j] = v;
    }
  return out;
}

struct Ecc {
  double value;
  double angle;
};

// Exhaustive search over the rotation grid; ties keep the first angle.
inline Ecc ecc(const std::vector<double>& a, const std::vector<double>& b, int n, double step_deg) {
  Ecc best{-std::numeric_limits<double>::infinity(), 0.0};
  const int count = int(std::lround(360.0 / step_deg));
  for (int k = 0; k < count; ++k) {
    const double theta = 2 * kPi * k / count;
    const auto p = pearson(a, rotate(b, n, theta));
    if (p.value > best.value) best = {p.value, theta};
  }
  return best;
}

// Plain evaluation of a layer stack, one sample at a time. min_relu_input
// receives the smallest |pre-activation| seen at any ReLU.
inline std::vector<double> forward(const sbf::Network& net, std::vector<double> x, double* min_relu_input = nullptr) {
  double min_abs = std::numeric_limits<double>::infinity();
  int p = 0;
  for (const auto& s : net.specs()) {
    switch (s.kind) {
      case sbf::LayerKind::normalization:
        for (double& v : x) v = 2 * (v - s.lo) / (s.hi - s.lo) - 1;
        break;
      case sbf::LayerKind::fully_connected: {
        const auto& L = net.params()[p++];
        std::vector<double> y(L.weight.rows());
        for (int o = 0; o < L.weight.rows(); ++o) {
          double acc = L.bias(o);
          for (int in = 0; in < L.weight.cols(); ++in) acc += L.weight(o, in) * x[in];
          y[o] = acc;
        }
        x = y;
        break;
      }
      case sbf::LayerKind::relu:
        for (double& v : x) {
          min_abs = std::min(min_abs, std::abs(v));
          v = v > 0 ? v : 0;
        }
        break;
      case sbf::LayerKind::tanh:
        for (double& v : x) v = std::tanh(v);
        break;
      case sbf::LayerKind::scale:
        for (double& v : x) v = s.lo + (v + 1) * (s.hi - s.lo) / 2;
        break;
    }
  }
  if (min_relu_input) *min_relu_input = min_abs;
  return x;
}

}  // namespace oracle
