#pragma once

// Experiment orchestration: convergence measurement, trace emission and one
// runner per experiment kind. Every run writes manifest.json before any
// result and run_status.json when it ends.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbf/config.hpp"

namespace sbf {

inline constexpr long kNotConverged = -1;

// Mean of the last `window` samples (all samples when the trace is shorter).
double trace_plateau(std::span<const double> trace, int window);

// First iteration count n (n >= window) whose trailing mean over samples
// [n - window, n) reaches fraction * reference; kNotConverged otherwise.
long convergence_iteration(std::span<const double> trace, double fraction, int window, double reference);
// Reference = the trace's own plateau.
long convergence_iteration(std::span<const double> trace, double fraction, int window);

// Element-wise mean of equal-length traces.
std::vector<double> mean_trace(const std::vector<std::vector<double>>& traces);

// Shortest round-trip decimal form, used for every number written to CSV.
std::string format_number(double v);

// Random focal point at a distance in [min, max] from the aperture center,
// in front of the aperture and at least `margin` inside the room.
Point3 sample_focal_point(const Scene& scene, double min_distance, double max_distance, Rng& rng,
                          double margin = 0.1);

struct RunReport {
  std::string output_dir;
  std::vector<std::string> files;  // relative to output_dir
};

// Runs the configured experiment into config.output_dir. A failure leaves
// the outputs written so far, records the error in run_status.json and
// rethrows.
RunReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

}  // namespace sbf
