#pragma once

// Beamfocusing matrices, received power, the exact-CSI oracle, power maps on
// a reference plane and the beamfocusing radius.

#include <complex>
#include <span>
#include <vector>

#include "sbf/channel.hpp"
#include "sbf/grid.hpp"

namespace sbf {

using ComplexGrid = Grid<std::complex<double>>;

inline int phase_levels(int bits) { return 1 << bits; }

// Phase of quantization level k, in [0, 2pi).
double level_phase(int level, int bits);

// Nearest level to a phase after wrapping to [0, 2pi). An exact tie resolves
// to the lower of the two neighbouring levels.
int quantize_phase(double phase, int bits);

// Shortest angular distance between two phases, in [0, pi].
double circular_distance(double a, double b);

// Wrap to [0, 2pi).
double wrap_phase(double phase);

// Quantized phase grid; w_ij = e^{j phi_ij} / sqrt(N) with N the grid size.
struct BeamfocusingMatrix {
  int bits = 1;
  Grid<int> levels;

  BeamfocusingMatrix() = default;
  BeamfocusingMatrix(int rows, int cols, int q) : bits(q), levels(rows, cols, 0) {}

  int rows() const { return levels.rows; }
  int cols() const { return levels.cols; }
  double phase(int i, int j) const { return level_phase(levels(i, j), bits); }
  Grid<double> phases() const;
  ComplexGrid weights() const;
  void validate() const;

  friend bool operator==(const BeamfocusingMatrix&, const BeamfocusingMatrix&) = default;
};

// A block of the full matrix; index is the 0-based row-major block number.
struct BeamfocusingSubmatrix {
  int index = 0;
  BeamfocusingMatrix matrix;

  friend bool operator==(const BeamfocusingSubmatrix&, const BeamfocusingSubmatrix&) = default;
};

struct PowerMeasurement {
  double power = 0.0;
  double signal_variance = 1.0;
  double noise_variance = 0.0;
};

// |sum conj(w) h|^2 sigma_s^2 + sigma_n^2.
PowerMeasurement received_power(const ComplexGrid& w, const ComplexGrid& h, double signal_variance = 1.0,
                                double noise_variance = 0.0);
PowerMeasurement received_power(const BeamfocusingMatrix& w, const ChannelMatrix& h, double signal_variance = 1.0,
                                double noise_variance = 0.0);

BeamfocusingMatrix assemble_matrix(std::span<const BeamfocusingSubmatrix> subs, int subarray_rows, int subarray_cols);
std::vector<BeamfocusingSubmatrix> disassemble_matrix(const BeamfocusingMatrix& w, int subarray_rows, int subarray_cols);

// Continuous-phase matching: phi_ij = arg h_ij.
Grid<double> oracle_phases(const ComplexGrid& h);
// (sum |h_ij|)^2 / N, the unquantized optimum.
double continuous_oracle_power(const ComplexGrid& h);

// Exact-CSI quantized matrix that brings all element signals in phase at the
// focal point. Every element takes the level nearest to arg(h_ij) - psi for a
// common offset psi; psi = 0 (plain rounding) unless another offset yields
// strictly more power. Sweeping psi over its breakpoints makes the result the
// maximum-power quantized matrix for this channel.
BeamfocusingMatrix csi_oracle(const ComplexGrid& h, int bits);
inline BeamfocusingMatrix csi_oracle(const ChannelMatrix& h, int bits) { return csi_oracle(h.gains, bits); }

// Square grid through the focal point, parallel to the aperture.
struct ReferencePlane {
  double half_extent_m = 0.5;
  int resolution = 101;

  void validate() const;
  double spacing() const { return 2.0 * half_extent_m / (resolution - 1); }
  int half() const { return (resolution - 1) / 2; }
};

struct PowerMap {
  ReferencePlane plane;
  Point3 center;
  Point3 col_axis;
  Point3 row_axis;
  Grid<double> power;  // row b, column a: center + a*du + b*dv, offset by half()

  Point3 node(int row, int col) const;
  double total() const;
};

PowerMap power_density_map(const ComplexGrid& w, Point3 dfp, const ReferencePlane& plane, const Scene& scene);

// Smallest node radius whose disc holds at least eta of the map power.
double bfr_from_map(const PowerMap& map, double eta);
// Fraction of map power on nodes no farther than radius from the center.
double fraction_within(const PowerMap& map, double radius);

double beamfocusing_radius(const ComplexGrid& w, Point3 dfp, double eta, const ReferencePlane& plane,
                           const Scene& scene);

// |a^H b| / (|a| |b|).
double normalized_correlation(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b);

// Normalized correlation of the array responses vec(conj(w) * h(r)) at r1, r2.
double response_correlation(Point3 r1, Point3 r2, const ComplexGrid& w, const Scene& scene);

}  // namespace sbf
