#include "sbf/pdi.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "sbf/errors.hpp"

namespace sbf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Quarter turns when theta is a multiple of 90 degrees, otherwise -1.
int quarter_turns(double theta) {
  const double q = theta / (0.5 * std::numbers::pi);
  const double r = std::round(q);
  if (std::abs(q - r) > 1e-9) return -1;
  return static_cast<int>(((static_cast<long long>(r) % 4) + 4) % 4);
}

}  // namespace

PhaseImage to_phase_image(const BeamfocusingMatrix& w) { return w.phases(); }

CircularMean circular_mean(const PhaseImage& image) {
  if (image.size() == 0) throw DomainError("circular_mean: empty image");
  double c = 0.0, s = 0.0;
  for (double t : image.data) {
    c += std::cos(t);
    s += std::sin(t);
  }
  CircularMean out;
  const double n = static_cast<double>(image.size());
  out.resultant = std::hypot(c, s) / n;
  out.degenerate = out.resultant < 1e-9;
  out.mean = out.degenerate ? 0.0 : std::atan2(s, c);
  return out;
}

Correlation circular_pearson(const PhaseImage& a, const PhaseImage& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw DomainError("circular_pearson: shape mismatch");
  const auto ma = circular_mean(a);
  const auto mb = circular_mean(b);
  if (ma.degenerate || mb.degenerate) return {0.0, true};
  double num = 0.0, sa = 0.0, sb = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    const double x = std::sin(a.data[k] - ma.mean);
    const double y = std::sin(b.data[k] - mb.mean);
    num += x * y;
    sa += x * x;
    sb += y * y;
  }
  const double floor = 1e-20 * static_cast<double>(a.size());
  if (sa <= floor || sb <= floor) return {0.0, true};
  // sqrt(sa * sb) rather than sqrt(sa) * sqrt(sb): the former is exactly sa
  // when the two images are identical.
  const double value = num / std::sqrt(sa * sb);
  return {std::clamp(value, -1.0, 1.0), false};
}

PhaseImage rotate(const PhaseImage& image, double theta) {
  if (!std::isfinite(theta)) throw DomainError("rotate: angle must be finite");
  const int R = image.rows;
  const int C = image.cols;
  switch (quarter_turns(theta)) {
    case 0: return image;
    case 1: {
      PhaseImage out(C, R);
      for (int i = 0; i < C; ++i)
        for (int j = 0; j < R; ++j) out(i, j) = image(R - 1 - j, i);
      return out;
    }
    case 2: {
      PhaseImage out(R, C);
      for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) out(i, j) = image(R - 1 - i, C - 1 - j);
      return out;
    }
    case 3: {
      PhaseImage out(C, R);
      for (int i = 0; i < C; ++i)
        for (int j = 0; j < R; ++j) out(i, j) = image(j, C - 1 - i);
      return out;
    }
    default: break;
  }
  if (R != C) throw DomainError("rotate: arbitrary angles need a square image");

  const int n = R;
  const double center = 0.5 * (n - 1);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  PhaseImage cs(n, n), sn(n, n);
  for (size_t k = 0; k < image.size(); ++k) {
    cs.data[k] = std::cos(image.data[k]);
    sn.data[k] = std::sin(image.data[k]);
  }
  auto sample = [&](const PhaseImage& f, double si, double sj) {
    si = std::clamp(si, 0.0, n - 1.0);
    sj = std::clamp(sj, 0.0, n - 1.0);
    const int i0 = std::min(static_cast<int>(std::floor(si)), n - 1);
    const int j0 = std::min(static_cast<int>(std::floor(sj)), n - 1);
    const int i1 = std::min(i0 + 1, n - 1);
    const int j1 = std::min(j0 + 1, n - 1);
    const double fi = si - i0;
    const double fj = sj - j0;
    return (1 - fi) * ((1 - fj) * f(i0, j0) + fj * f(i0, j1)) + fi * ((1 - fj) * f(i1, j0) + fj * f(i1, j1));
  };
  PhaseImage out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      // Source position: the output pixel rotated back by theta.
      const double x = j - center;
      const double y = i - center;
      const double sx = x * ct + y * st;
      const double sy = -x * st + y * ct;
      const double c = sample(cs, sy + center, sx + center);
      const double s = sample(sn, sy + center, sx + center);
      out(i, j) = wrap_phase(std::atan2(s, c));
    }
  }
  return out;
}

RotationSet RotationSet::uniform(int count) {
  if (count < 1) throw ConfigError("rotation set: count must be positive");
  RotationSet out;
  for (int k = 0; k < count; ++k) out.angles.push_back(kTwoPi * k / count);
  return out;
}

RotationSet RotationSet::step_degrees(double step) {
  if (!(step > 0.0) || step > 360.0) throw ConfigError("rotation set: step must be in (0, 360] degrees");
  const double turns = 360.0 / step;
  const int count = static_cast<int>(std::round(turns));
  if (std::abs(turns - count) > 1e-9) throw ConfigError("rotation set: step must divide 360 degrees");
  return uniform(count);
}

EccResult ecc(const PhaseImage& a, const PhaseImage& b, const RotationSet& rotations) {
  if (rotations.angles.empty()) throw ConfigError("ecc: empty rotation set");
  EccResult best;
  bool have = false;
  bool all_degenerate = true;
  for (double theta : rotations.angles) {
    const PhaseImage rb = rotate(b, theta);
    if (rb.rows != a.rows || rb.cols != a.cols) continue;
    const auto c = circular_pearson(a, rb);
    all_degenerate = all_degenerate && c.degenerate;
    if (!have || c.value > best.value) {
      best.value = c.value;
      best.angle = theta;
      have = true;
    }
  }
  if (!have) throw DomainError("ecc: no rotation yields a matching shape");
  best.degenerate = all_degenerate;
  return best;
}

Grid<double> similarity_map(const PhaseImage& reference, std::span<const PhaseImage> pdis, int grid_rows,
                            int grid_cols, double theta) {
  if (grid_rows * grid_cols != static_cast<int>(pdis.size()))
    throw DomainError("similarity_map: PDI count does not match the grid");
  Grid<double> out(grid_rows, grid_cols);
  for (size_t m = 0; m < pdis.size(); ++m) out.data[m] = circular_pearson(reference, rotate(pdis[m], theta)).value;
  return out;
}

void write_phase_csv(std::ostream& out, const PhaseImage& image) {
  out << "row,col,phase_rad\n";
  out << std::setprecision(17);
  for (int i = 0; i < image.rows; ++i)
    for (int j = 0; j < image.cols; ++j) out << i << ',' << j << ',' << image(i, j) << '\n';
}

PhaseImage read_phase_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("row,col,phase_rad", 0) != 0)
    throw IoError("phase csv: missing 'row,col,phase_rad' header");
  struct Cell {
    int i, j;
    double v;
  };
  std::vector<Cell> cells;
  int rows = 0, cols = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream s(line);
    Cell c{};
    char c1 = 0, c2 = 0;
    if (!(s >> c.i >> c1 >> c.j >> c2 >> c.v) || c1 != ',' || c2 != ',' || c.i < 0 || c.j < 0)
      throw IoError("phase csv: bad line '" + line + "'");
    rows = std::max(rows, c.i + 1);
    cols = std::max(cols, c.j + 1);
    cells.push_back(c);
  }
  if (cells.size() != static_cast<size_t>(rows) * cols) throw IoError("phase csv: grid is incomplete");
  PhaseImage out(rows, cols, std::nan(""));
  for (const auto& c : cells) {
    if (!std::isnan(out(c.i, c.j))) throw IoError("phase csv: duplicate cell");
    out(c.i, c.j) = c.v;
  }
  return out;
}

void save_phase_csv(const std::string& path, const PhaseImage& image) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  write_phase_csv(f, image);
}

PhaseImage load_phase_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  return read_phase_csv(f);
}

void write_pgm(std::ostream& out, const PhaseImage& image) {
  out << "P5\n" << image.cols << ' ' << image.rows << "\n255\n";
  for (double t : image.data) {
    const long level = std::lround(256.0 * wrap_phase(t) / kTwoPi) % 256;
    out.put(static_cast<char>(level));
  }
}

void save_pgm(const std::string& path, const PhaseImage& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  write_pgm(f, image);
}

}  // namespace sbf
