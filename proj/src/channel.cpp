#include "sbf/channel.hpp"

#include <cstdio>
#include <numbers>
#include <string>

#include "sbf/errors.hpp"
#include "sbf/rng.hpp"

namespace sbf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ApertureConfig::validate() const {
  require(rows >= 1 && cols >= 1, "aperture: rows and cols must be positive");
  require(subarray_rows >= 1 && subarray_cols >= 1 && sub_rows >= 1 && sub_cols >= 1,
          "aperture: subarray counts must be positive");
  require(rows == subarray_rows * sub_rows, "aperture: rows must equal subarray_rows * sub_rows");
  require(cols == subarray_cols * sub_cols, "aperture: cols must equal subarray_cols * sub_cols");
  require(phase_bits >= 1 && phase_bits <= 16, "aperture: phase_bits must be in [1, 16]");
  require(std::isfinite(frequency_hz) && frequency_hz > 0.0, "aperture: frequency must be positive");
  require(std::isfinite(spacing_m) && spacing_m >= 0.0, "aperture: spacing must be positive (0 = lambda/2)");
  require(corner.finite(), "aperture: corner must be finite");
}

Point3 ApertureConfig::col_axis() const {
  switch (normal) {
    case PlaneNormal::x: return {0.0, 1.0, 0.0};
    case PlaneNormal::y: return {1.0, 0.0, 0.0};
    case PlaneNormal::z: return {1.0, 0.0, 0.0};
  }
  return {};
}

Point3 ApertureConfig::row_axis() const {
  switch (normal) {
    case PlaneNormal::x: return {0.0, 0.0, 1.0};
    case PlaneNormal::y: return {0.0, 0.0, 1.0};
    case PlaneNormal::z: return {0.0, 1.0, 0.0};
  }
  return {};
}

Point3 ApertureConfig::center() const {
  const double s = spacing();
  return corner + (0.5 * (cols - 1) * s) * col_axis() + (0.5 * (rows - 1) * s) * row_axis();
}

double ApertureConfig::diagonal() const {
  const double s = spacing();
  return std::hypot((cols - 1) * s, (rows - 1) * s);
}

void RoomConfig::validate() const {
  require(std::isfinite(dimensions.x) && std::isfinite(dimensions.y) && std::isfinite(dimensions.z),
          "room: dimensions must be finite");
  require(dimensions.x > 0.0 && dimensions.y > 0.0 && dimensions.z > 0.0, "room: dimensions must be positive");
  require(reflection_coefficient >= 0.0 && reflection_coefficient <= 1.0,
          "room: reflection coefficient must be in [0, 1]");
}

int RoomConfig::reflection_count() const {
  int n = 0;
  for (bool e : enabled) n += e ? 1 : 0;
  return n;
}

void ChannelConfig::validate() const {
  require(std::isfinite(attenuation) && attenuation > 0.0, "channel: attenuation must be positive");
  require(std::isfinite(path_loss_exponent) && path_loss_exponent > 0.0, "channel: path-loss exponent must be positive");
  require(hardware_phase_mismatch_std >= 0.0, "channel: phase mismatch std must be nonnegative");
}

void Scene::validate() const {
  aperture.validate();
  room.validate();
  channel.validate();
  require(dfp.finite(), "scene: dfp must be finite");
}

Grid<std::complex<double>> ChannelMatrix::block(const ApertureConfig& aperture, int m) const {
  const int br = m / aperture.subarray_cols;
  const int bc = m % aperture.subarray_cols;
  Grid<std::complex<double>> out(aperture.sub_rows, aperture.sub_cols);
  for (int i = 0; i < aperture.sub_rows; ++i)
    for (int j = 0; j < aperture.sub_cols; ++j)
      out(i, j) = gains(br * aperture.sub_rows + i, bc * aperture.sub_cols + j);
  return out;
}

Grid<Point3> element_positions(const ApertureConfig& aperture) {
  Grid<Point3> out(aperture.rows, aperture.cols);
  for (int i = 0; i < aperture.rows; ++i)
    for (int j = 0; j < aperture.cols; ++j) out(i, j) = aperture.element(i, j);
  return out;
}

Point3 mirror_image(Point3 p, RoomSurface surface, const RoomConfig& room) {
  switch (surface) {
    case kWallX0: return {-p.x, p.y, p.z};
    case kWallX1: return {2.0 * room.dimensions.x - p.x, p.y, p.z};
    case kWallY0: return {p.x, -p.y, p.z};
    case kWallY1: return {p.x, 2.0 * room.dimensions.y - p.y, p.z};
    case kFloor: return {p.x, p.y, -p.z};
    case kCeiling: return {p.x, p.y, 2.0 * room.dimensions.z - p.z};
    case kSurfaceCount: break;
  }
  return p;
}

std::array<double, kSurfaceCount> reflection_phases(const RoomConfig& room) {
  Rng rng(room.reflection_phase_seed);
  std::array<double, kSurfaceCount> out{};
  for (double& v : out) v = rng.uniform(0.0, kTwoPi);
  return out;
}

std::vector<ImagePath> image_source_paths(Point3 element, Point3 dfp, const RoomConfig& room) {
  room.validate();
  const auto phases = reflection_phases(room);
  std::vector<ImagePath> out;
  out.reserve(kSurfaceCount);
  for (int s = 0; s < kSurfaceCount; ++s) {
    if (!room.enabled[s]) continue;
    const auto surface = static_cast<RoomSurface>(s);
    out.push_back({distance(element, mirror_image(dfp, surface, room)), room.reflection_coefficient, phases[s], surface});
  }
  return out;
}

ChannelMatrix channel_matrix(const ApertureConfig& aperture, Point3 dfp, const ChannelConfig& chan,
                             const RoomConfig& room) {
  aperture.validate();
  room.validate();
  chan.validate();
  if (!dfp.finite()) throw DomainError("channel_matrix: focal point is not finite");

  const double k = kTwoPi / aperture.wavelength();
  const double half_alpha = 0.5 * chan.path_loss_exponent;
  const auto phases = reflection_phases(room);

  std::array<Point3, kSurfaceCount> images{};
  for (int s = 0; s < kSurfaceCount; ++s) images[s] = mirror_image(dfp, static_cast<RoomSurface>(s), room);

  Rng hw(chan.hardware_phase_seed);
  ChannelMatrix out;
  out.gains = Grid<std::complex<double>>(aperture.rows, aperture.cols);
  out.dfp = dfp;
  out.aperture_hash = aperture_hash(aperture);
  out.seed = room.reflection_phase_seed;

  for (int i = 0; i < aperture.rows; ++i) {
    for (int j = 0; j < aperture.cols; ++j) {
      const Point3 e = aperture.element(i, j);
      const double d0 = distance(e, dfp);
      if (!(d0 > 1e-12)) throw DomainError("channel_matrix: focal point coincides with an element");
      const double mismatch = chan.hardware_phase_mismatch_std > 0.0 ? chan.hardware_phase_mismatch_std * hw.normal() : 0.0;
      std::complex<double> h = std::pow(d0, -half_alpha) * std::polar(1.0, -(k * d0 + mismatch));
      for (int s = 0; s < kSurfaceCount; ++s) {
        if (!room.enabled[s]) continue;
        const double dl = distance(e, images[s]);
        h += room.reflection_coefficient * std::pow(dl, -half_alpha) * std::polar(1.0, -(k * dl + phases[s]));
      }
      out.gains(i, j) = chan.attenuation * h;
    }
  }
  return out;
}

FresnelBounds fresnel_bounds(double diagonal, double wavelength) {
  return {0.62 * std::sqrt(diagonal * diagonal * diagonal / wavelength), 2.0 * diagonal * diagonal / wavelength};
}

FresnelBounds fresnel_bounds(const ApertureConfig& aperture) {
  return fresnel_bounds(aperture.diagonal(), aperture.wavelength());
}

const char* zone_name(Zone z) {
  switch (z) {
    case Zone::reactive: return "reactive";
    case Zone::fresnel: return "fresnel";
    case Zone::far_field: return "far-field";
  }
  return "?";
}

Zone validate_dfp(const ApertureConfig& aperture, Point3 dfp) {
  const auto b = fresnel_bounds(aperture);
  const double r = distance(aperture.center(), dfp);
  if (r < b.lower) return Zone::reactive;
  if (r > b.upper) return Zone::far_field;
  return Zone::fresnel;
}

std::uint64_t aperture_hash(const ApertureConfig& a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d %d %.17g %.17g %.17g %.17g %d %.17g %d %d %d %d %d", a.rows, a.cols, a.spacing(),
                a.corner.x, a.corner.y, a.corner.z, static_cast<int>(a.normal), a.frequency_hz, a.phase_bits,
                a.subarray_rows, a.subarray_cols, a.sub_rows, a.sub_cols);
  return fnv1a(buf);
}

}  // namespace sbf
