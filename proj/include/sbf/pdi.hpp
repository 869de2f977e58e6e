#pragma once

// Phase distribution images (PDIs): circular statistics, rotation and the
// rotation-maximized correlation used to compare learned configurations.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sbf/beamfocus.hpp"
#include "sbf/grid.hpp"

namespace sbf {

// Per-element phases in radians.
using PhaseImage = Grid<double>;

PhaseImage to_phase_image(const BeamfocusingMatrix& w);

struct CircularMean {
  double mean = 0.0;       // arg of the resultant, in (-pi, pi]
  double resultant = 0.0;  // |sum e^{j theta}| / count
  bool degenerate = false; // resultant too small for the mean to be defined
};

CircularMean circular_mean(const PhaseImage& image);

struct Correlation {
  double value = 0.0;
  bool degenerate = false;  // undefined mean or zero spread; value is 0
};

// Circular Pearson correlation of two same-shape images.
Correlation circular_pearson(const PhaseImage& a, const PhaseImage& b);

// Counter-clockwise rotation about the image center. Multiples of 90 degrees
// are exact permutations (and may change the shape of non-square images);
// other angles need a square image and interpolate bilinearly on cos and sin,
// clamping samples that fall outside to the nearest border element.
PhaseImage rotate(const PhaseImage& image, double theta);

struct RotationSet {
  std::vector<double> angles;  // radians

  // count angles evenly spaced over [0, 2pi), starting at 0.
  static RotationSet uniform(int count);
  static RotationSet step_degrees(double step);
};

struct EccResult {
  double value = 0.0;
  double angle = 0.0;  // first maximizing rotation applied to the second image
  bool degenerate = false;
};

// max over theta of circular_pearson(a, rotate(b, theta)).
EccResult ecc(const PhaseImage& a, const PhaseImage& b, const RotationSet& rotations);

// Correlation between a reference and every subarray PDI rotated by theta,
// laid out on the subarray grid.
Grid<double> similarity_map(const PhaseImage& reference, std::span<const PhaseImage> pdis, int grid_rows,
                            int grid_cols, double theta);

// CSV with header row,col,phase_rad.
void write_phase_csv(std::ostream& out, const PhaseImage& image);
PhaseImage read_phase_csv(std::istream& in);
void save_phase_csv(const std::string& path, const PhaseImage& image);
PhaseImage load_phase_csv(const std::string& path);

// 8-bit grayscale PGM, level = round(256 phi / 2pi) mod 256.
void write_pgm(std::ostream& out, const PhaseImage& image);
void save_pgm(const std::string& path, const PhaseImage& image);

}  // namespace sbf
