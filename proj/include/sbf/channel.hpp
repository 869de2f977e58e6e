#pragma once

// Aperture geometry and the near-field multipath channel between a planar
// programmable metasurface and a focal point.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "sbf/grid.hpp"

namespace sbf {

inline constexpr double kSpeedOfLight = 299792458.0;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Point3 operator+(Point3 a, Point3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Point3 operator-(Point3 a, Point3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Point3 operator*(double s, Point3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Point3&, const Point3&) = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(Point3 a, Point3 b) { return (a - b).norm(); }

// Axis-aligned normal of the aperture plane. Columns run along the first
// in-plane axis, rows along the second:
//   X normal: (y, z)   Y normal: (x, z)   Z normal: (x, y)
enum class PlaneNormal { x, y, z };

struct ApertureConfig {
  int rows = 60;                      // N_r
  int cols = 60;                      // N_c
  double spacing_m = 0.0;             // 0 selects half a wavelength
  Point3 corner{1.0, 0.0, 1.5};       // element (0, 0)
  PlaneNormal normal = PlaneNormal::y;
  double frequency_hz = 28e9;
  int phase_bits = 3;                 // q
  int subarray_rows = 10;             // M_r
  int subarray_cols = 10;             // M_c
  int sub_rows = 6;                   // N'_r
  int sub_cols = 6;                   // N'_c

  // Throws ConfigError when the block layout or physical constants are invalid.
  void validate() const;

  double wavelength() const { return kSpeedOfLight / frequency_hz; }
  double spacing() const { return spacing_m > 0.0 ? spacing_m : 0.5 * wavelength(); }
  int element_count() const { return rows * cols; }
  int subarray_count() const { return subarray_rows * subarray_cols; }
  int sub_element_count() const { return sub_rows * sub_cols; }

  // Unit vectors along columns (u) and rows (v).
  Point3 col_axis() const;
  Point3 row_axis() const;
  Point3 element(int i, int j) const { return corner + (j * spacing()) * col_axis() + (i * spacing()) * row_axis(); }
  Point3 center() const;
  // Corner-to-corner element extent, the D of the Fresnel bounds.
  double diagonal() const;
};

enum RoomSurface : int { kWallX0 = 0, kWallX1, kWallY0, kWallY1, kFloor, kCeiling, kSurfaceCount };

struct RoomConfig {
  Point3 dimensions{4.0, 4.0, 3.0};   // room spans [0, dx] x [0, dy] x [0, dz]
  double reflection_coefficient = 0.1;
  std::uint64_t reflection_phase_seed = 1;
  std::array<bool, kSurfaceCount> enabled{true, true, true, true, true, true};

  void validate() const;
  int reflection_count() const;
};

struct ChannelConfig {
  double attenuation = 1.0;           // gamma
  double path_loss_exponent = 2.7;    // alpha
  double hardware_phase_mismatch_std = 0.0;
  std::uint64_t hardware_phase_seed = 2;

  void validate() const;
};

struct Scene {
  ApertureConfig aperture;
  RoomConfig room;
  ChannelConfig channel;
  Point3 dfp{1.0, 1.5, 1.4};

  void validate() const;
};

// Complex gain h_ij per element toward one point. Element and receiver gains
// are taken as unity, so h is the propagation term alone.
struct ChannelMatrix {
  Grid<std::complex<double>> gains;
  Point3 dfp;
  std::uint64_t aperture_hash = 0;
  std::uint64_t seed = 0;

  int rows() const { return gains.rows; }
  int cols() const { return gains.cols; }
  std::complex<double> operator()(int i, int j) const { return gains(i, j); }
  // Gains of one subarray block (0-based m, row-major block order).
  Grid<std::complex<double>> block(const ApertureConfig& aperture, int m) const;
};

struct ImagePath {
  double length = 0.0;       // d_l
  double attenuation = 0.0;  // beta_l
  double phase_shift = 0.0;  // delta theta_l
  RoomSurface surface = kWallX0;
};

Grid<Point3> element_positions(const ApertureConfig& aperture);

// Mirror image of p across one room surface.
Point3 mirror_image(Point3 p, RoomSurface surface, const RoomConfig& room);

// One random phase per surface, drawn from U(0, 2pi) under the room seed.
std::array<double, kSurfaceCount> reflection_phases(const RoomConfig& room);

// First-order image-source paths, one per enabled surface.
std::vector<ImagePath> image_source_paths(Point3 element, Point3 dfp, const RoomConfig& room);

ChannelMatrix channel_matrix(const ApertureConfig& aperture, Point3 dfp, const ChannelConfig& chan,
                             const RoomConfig& room);
inline ChannelMatrix channel_matrix(const Scene& scene, Point3 point) {
  return channel_matrix(scene.aperture, point, scene.channel, scene.room);
}

struct FresnelBounds {
  double lower = 0.0;  // 0.62 sqrt(D^3 / lambda)
  double upper = 0.0;  // 2 D^2 / lambda
};

FresnelBounds fresnel_bounds(const ApertureConfig& aperture);
FresnelBounds fresnel_bounds(double diagonal, double wavelength);

enum class Zone { reactive, fresnel, far_field };

const char* zone_name(Zone z);

// Classification by the distance from the aperture center. A non-Fresnel
// result is advisory; callers decide whether to warn.
Zone validate_dfp(const ApertureConfig& aperture, Point3 dfp);

std::uint64_t aperture_hash(const ApertureConfig& aperture);

}  // namespace sbf
