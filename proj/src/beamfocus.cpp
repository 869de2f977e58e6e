#include "sbf/beamfocus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "sbf/errors.hpp"

namespace sbf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

double wrap_phase(double phase) {
  double r = std::fmod(phase, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double circular_distance(double a, double b) {
  const double d = wrap_phase(a - b);
  return std::min(d, kTwoPi - d);
}

double level_phase(int level, int bits) { return kTwoPi * level / phase_levels(bits); }

int quantize_phase(double phase, int bits) {
  const int count = phase_levels(bits);
  const double t = wrap_phase(phase) / (kTwoPi / count);
  int k = static_cast<int>(std::floor(t));
  if (t - k > 0.5) ++k;
  return ((k % count) + count) % count;
}

Grid<double> BeamfocusingMatrix::phases() const {
  Grid<double> out(rows(), cols());
  for (size_t n = 0; n < levels.size(); ++n) out.data[n] = level_phase(levels.data[n], bits);
  return out;
}

ComplexGrid BeamfocusingMatrix::weights() const {
  ComplexGrid out(rows(), cols());
  const double amp = 1.0 / std::sqrt(static_cast<double>(levels.size()));
  for (size_t n = 0; n < levels.size(); ++n) out.data[n] = std::polar(amp, level_phase(levels.data[n], bits));
  return out;
}

void BeamfocusingMatrix::validate() const {
  if (bits < 1 || bits > 16) throw DomainError("beamfocusing matrix: bits out of range");
  const int count = phase_levels(bits);
  for (int v : levels.data)
    if (v < 0 || v >= count) throw DomainError("beamfocusing matrix: level index out of range");
}

PowerMeasurement received_power(const ComplexGrid& w, const ComplexGrid& h, double signal_variance,
                                double noise_variance) {
  if (w.rows != h.rows || w.cols != h.cols) throw DomainError("received_power: dimension mismatch");
  std::complex<double> x{};
  for (size_t n = 0; n < w.size(); ++n) x += std::conj(w.data[n]) * h.data[n];
  return {std::norm(x) * signal_variance + noise_variance, signal_variance, noise_variance};
}

PowerMeasurement received_power(const BeamfocusingMatrix& w, const ChannelMatrix& h, double signal_variance,
                                double noise_variance) {
  return received_power(w.weights(), h.gains, signal_variance, noise_variance);
}

BeamfocusingMatrix assemble_matrix(std::span<const BeamfocusingSubmatrix> subs, int subarray_rows,
                                   int subarray_cols) {
  const int count = subarray_rows * subarray_cols;
  if (count < 1 || static_cast<int>(subs.size()) != count)
    throw DomainError("assemble_matrix: expected " + std::to_string(count) + " submatrices");
  std::vector<const BeamfocusingSubmatrix*> by_index(count, nullptr);
  for (const auto& s : subs) {
    if (s.index < 0 || s.index >= count) throw DomainError("assemble_matrix: subarray index out of range");
    if (by_index[s.index]) throw DomainError("assemble_matrix: duplicate subarray index");
    by_index[s.index] = &s;
  }
  const int sr = subs[0].matrix.rows();
  const int sc = subs[0].matrix.cols();
  const int bits = subs[0].matrix.bits;
  BeamfocusingMatrix out(subarray_rows * sr, subarray_cols * sc, bits);
  for (int m = 0; m < count; ++m) {
    const auto& sub = by_index[m]->matrix;
    if (sub.rows() != sr || sub.cols() != sc || sub.bits != bits)
      throw DomainError("assemble_matrix: inconsistent submatrix shape or bits");
    const int br = m / subarray_cols;
    const int bc = m % subarray_cols;
    for (int i = 0; i < sr; ++i)
      for (int j = 0; j < sc; ++j) out.levels(br * sr + i, bc * sc + j) = sub.levels(i, j);
  }
  return out;
}

std::vector<BeamfocusingSubmatrix> disassemble_matrix(const BeamfocusingMatrix& w, int subarray_rows,
                                                      int subarray_cols) {
  if (subarray_rows < 1 || subarray_cols < 1 || w.rows() % subarray_rows != 0 || w.cols() % subarray_cols != 0)
    throw DomainError("disassemble_matrix: layout does not tile the matrix");
  const int sr = w.rows() / subarray_rows;
  const int sc = w.cols() / subarray_cols;
  std::vector<BeamfocusingSubmatrix> out;
  for (int m = 0; m < subarray_rows * subarray_cols; ++m) {
    BeamfocusingSubmatrix s{m, BeamfocusingMatrix(sr, sc, w.bits)};
    const int br = m / subarray_cols;
    const int bc = m % subarray_cols;
    for (int i = 0; i < sr; ++i)
      for (int j = 0; j < sc; ++j) s.matrix.levels(i, j) = w.levels(br * sr + i, bc * sc + j);
    out.push_back(std::move(s));
  }
  return out;
}

Grid<double> oracle_phases(const ComplexGrid& h) {
  Grid<double> out(h.rows, h.cols);
  for (size_t n = 0; n < h.size(); ++n) out.data[n] = wrap_phase(std::arg(h.data[n]));
  return out;
}

double continuous_oracle_power(const ComplexGrid& h) {
  double s = 0.0;
  for (const auto& v : h.data) s += std::abs(v);
  return s * s / static_cast<double>(h.size());
}

BeamfocusingMatrix csi_oracle(const ComplexGrid& h, int bits) {
  if (bits < 1 || bits > 16) throw DomainError("csi_oracle: bits out of range");
  const int count = phase_levels(bits);
  const double step = kTwoPi / count;
  BeamfocusingMatrix out(h.rows, h.cols, bits);
  for (size_t n = 0; n < h.size(); ++n) out.levels.data[n] = quantize_phase(std::arg(h.data[n]), bits);

  // Raising the common offset psi across [0, step) moves element n down one
  // level at its breakpoint; the sum is updated incrementally along the sweep.
  auto term = [&](size_t n, int level) {
    return std::abs(h.data[n]) * std::polar(1.0, std::arg(h.data[n]) - level_phase(level, bits));
  };
  struct Crossing {
    double at;
    size_t element;
  };
  std::vector<Crossing> crossings;
  std::complex<double> sum{};
  for (size_t n = 0; n < h.size(); ++n) {
    sum += term(n, out.levels.data[n]);
    if (h.data[n] == std::complex<double>{}) continue;
    const double b = std::fmod(wrap_phase(std::arg(h.data[n]) - 0.5 * step), step);
    if (b > 0.0) crossings.push_back({b, n});
  }
  std::stable_sort(crossings.begin(), crossings.end(), [](const Crossing& a, const Crossing& b) { return a.at < b.at; });

  std::vector<int> levels = out.levels.data;
  double best = std::norm(sum);
  size_t best_prefix = 0;
  for (size_t c = 0; c < crossings.size(); ++c) {
    const size_t n = crossings[c].element;
    const int next = (levels[n] + count - 1) % count;
    sum += term(n, next) - term(n, levels[n]);
    levels[n] = next;
    const double p = std::norm(sum);
    if (p > best) {
      best = p;
      best_prefix = c + 1;
    }
  }
  if (best_prefix == 0) return out;

  BeamfocusingMatrix candidate = out;
  for (size_t c = 0; c < best_prefix; ++c) {
    int& v = candidate.levels.data[crossings[c].element];
    v = (v + count - 1) % count;
  }
  const double base = received_power(out.weights(), h).power;
  const double alt = received_power(candidate.weights(), h).power;
  return alt > base * (1.0 + 1e-12) ? candidate : out;
}

void ReferencePlane::validate() const {
  if (!(half_extent_m > 0.0) || !std::isfinite(half_extent_m))
    throw DomainError("reference plane: half extent must be positive");
  if (resolution < 3 || resolution % 2 == 0) throw DomainError("reference plane: resolution must be odd and >= 3");
}

Point3 PowerMap::node(int row, int col) const {
  const double s = plane.spacing();
  return center + ((col - plane.half()) * s) * col_axis + ((row - plane.half()) * s) * row_axis;
}

double PowerMap::total() const {
  double t = 0.0;
  for (double v : power.data) t += v;
  return t;
}

PowerMap power_density_map(const ComplexGrid& w, Point3 dfp, const ReferencePlane& plane, const Scene& scene) {
  plane.validate();
  PowerMap map;
  map.plane = plane;
  map.center = dfp;
  map.col_axis = scene.aperture.col_axis();
  map.row_axis = scene.aperture.row_axis();
  map.power = Grid<double>(plane.resolution, plane.resolution);
  for (int r = 0; r < plane.resolution; ++r) {
    for (int c = 0; c < plane.resolution; ++c) {
      const auto h = channel_matrix(scene, map.node(r, c));
      map.power(r, c) = received_power(w, h.gains, 1.0, 0.0).power;
    }
  }
  return map;
}

namespace {

// Map power grouped into shells of equal integer squared grid radius.
std::map<long, double> shells(const PowerMap& map) {
  std::map<long, double> out;
  const int h = map.plane.half();
  for (int r = 0; r < map.plane.resolution; ++r)
    for (int c = 0; c < map.plane.resolution; ++c) {
      const long d2 = static_cast<long>(r - h) * (r - h) + static_cast<long>(c - h) * (c - h);
      out[d2] += map.power(r, c);
    }
  return out;
}

}  // namespace

double bfr_from_map(const PowerMap& map, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("beamfocusing_radius: eta must be in (0, 1]");
  const auto sh = shells(map);
  double total = 0.0;
  for (const auto& [d2, p] : sh) total += p;
  const double s = map.plane.spacing();
  double cum = 0.0;
  for (const auto& [d2, p] : sh) {
    cum += p;
    if (cum >= eta * total) return std::sqrt(static_cast<double>(d2)) * s;
  }
  return std::sqrt(static_cast<double>(sh.rbegin()->first)) * s;
}

double fraction_within(const PowerMap& map, double radius) {
  const auto sh = shells(map);
  const double s = map.plane.spacing();
  double total = 0.0;
  double inside = 0.0;
  for (const auto& [d2, p] : sh) {
    total += p;
    if (std::sqrt(static_cast<double>(d2)) * s <= radius * (1.0 + 1e-12)) inside += p;
  }
  return total > 0.0 ? inside / total : 0.0;
}

double beamfocusing_radius(const ComplexGrid& w, Point3 dfp, double eta, const ReferencePlane& plane,
                           const Scene& scene) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("beamfocusing_radius: eta must be in (0, 1]");
  return bfr_from_map(power_density_map(w, dfp, plane, scene), eta);
}

double normalized_correlation(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b) {
  if (a.size() != b.size()) throw DomainError("normalized_correlation: length mismatch");
  std::complex<double> dot{};
  double na = 0.0;
  double nb = 0.0;
  for (size_t n = 0; n < a.size(); ++n) {
    dot += std::conj(a[n]) * b[n];
    na += std::norm(a[n]);
    nb += std::norm(b[n]);
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("response_correlation: zero-norm response");
  if (std::equal(a.begin(), a.end(), b.begin())) return 1.0;
  return std::min(1.0, std::abs(dot) / std::sqrt(na * nb));
}

double response_correlation(Point3 r1, Point3 r2, const ComplexGrid& w, const Scene& scene) {
  const auto h1 = channel_matrix(scene, r1);
  const auto h2 = channel_matrix(scene, r2);
  if (w.rows != h1.rows() || w.cols != h1.cols()) throw DomainError("response_correlation: dimension mismatch");
  std::vector<std::complex<double>> a1(w.size());
  std::vector<std::complex<double>> a2(w.size());
  for (size_t n = 0; n < w.size(); ++n) {
    a1[n] = std::conj(w.data[n]) * h1.gains.data[n];
    a2[n] = std::conj(w.data[n]) * h2.gains.data[n];
  }
  return normalized_correlation(a1, a2);
}

}  // namespace sbf
