#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <numbers>

#include "sbf/config.hpp"
#include "sbf/errors.hpp"
#include "sbf/harness.hpp"
#include "sbf/library.hpp"

using namespace sbf;

namespace {

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

BeamfocusingMatrix load_matrix(const std::string& path, const ApertureConfig& ap) {
  const PhaseImage img = load_phase_csv(path);
  if (img.rows != ap.rows || img.cols != ap.cols)
    throw ConfigError(path + ": " + std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                      " phases do not match the " + std::to_string(ap.rows) + "x" + std::to_string(ap.cols) +
                      " aperture");
  BeamfocusingMatrix w(ap.rows, ap.cols, ap.phase_bits);
  for (size_t i = 0; i < img.size(); ++i) w.levels.data[i] = quantize_phase(img.data[i], ap.phase_bits);
  return w;
}

int run_verb(const std::string& path, bool quiet) {
  const auto cfg = load_config(path);
  const auto zone = validate_dfp(cfg.scene.aperture, cfg.scene.dfp);
  if (zone != Zone::fresnel) std::cerr << "warning: focal point lies in the " << zone_name(zone) << " region\n";
  const auto report = run_experiment(cfg, [&](const std::string& s) {
    if (!quiet) std::cerr << s << '\n';
  });
  std::cout << report.output_dir << '\n';
  return 0;
}

int similarity_verb(const std::string& a, const std::string& b, double step) {
  const PhaseImage ia = load_phase_csv(a);
  const PhaseImage ib = load_phase_csv(b);
  const auto c0 = circular_pearson(ia, ib);
  const auto e = ecc(ia, ib, RotationSet::step_degrees(step));
  std::cout << "pearson," << format_number(c0.value) << '\n';
  std::cout << "ecc," << format_number(e.value) << '\n';
  std::cout << "rotation_deg," << format_number(degrees(e.angle)) << '\n';
  if (e.degenerate) std::cout << "degenerate,1\n";
  return 0;
}

int power_map_verb(const std::string& policy, const std::string& scene_path, const std::string& out) {
  const auto cfg = load_config(scene_path);
  const auto w = load_matrix(policy, cfg.scene.aperture);
  const auto map = power_density_map(w.weights(), cfg.scene.dfp, cfg.plane, cfg.scene);
  std::FILE* f = out.empty() ? stdout : std::fopen(out.c_str(), "w");
  if (!f) throw IoError("cannot write " + out);
  std::fprintf(f, "row,col,x_m,y_m,z_m,power\n");
  for (int r = 0; r < map.power.rows; ++r)
    for (int c = 0; c < map.power.cols; ++c) {
      const Point3 p = map.node(r, c);
      std::fprintf(f, "%d,%d,%s,%s,%s,%s\n", r, c, format_number(p.x).c_str(), format_number(p.y).c_str(),
                   format_number(p.z).c_str(), format_number(map.power(r, c)).c_str());
    }
  if (f != stdout) std::fclose(f);
  return 0;
}

int bfr_verb(const std::string& policy, const std::string& scene_path, const std::vector<double>& etas) {
  const auto cfg = load_config(scene_path);
  const auto w = load_matrix(policy, cfg.scene.aperture);
  const auto map = power_density_map(w.weights(), cfg.scene.dfp, cfg.plane, cfg.scene);
  std::cout << "eta,radius_m\n";
  for (double eta : etas) {
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must be in (0, 1]");
    std::cout << format_number(eta) << ',' << format_number(bfr_from_map(map, eta)) << '\n';
  }
  return 0;
}

int library_ls(const std::string& path) {
  const auto lib = library_load(path);
  std::cout << "entry,dfp_x_m,dfp_y_m,dfp_z_m,subarrays,budget,seed,achieved_power\n";
  for (size_t k = 0; k < lib.entries.size(); ++k) {
    const auto& e = lib.entries[k];
    std::cout << k << ',' << format_number(e.dfp.x) << ',' << format_number(e.dfp.y) << ',' << format_number(e.dfp.z)
              << ',' << e.policies.size() << ',' << e.budget << ',' << e.seed << ','
              << format_number(e.achieved_power) << '\n';
  }
  return 0;
}

int library_inspect(const std::string& path, int entry) {
  const auto summary = library_summary(path);
  std::cout << "version " << summary.version << "\nentries " << summary.entries << '\n';
  const auto lib = library_load(path);
  for (size_t k = 0; k < lib.entries.size(); ++k) {
    if (entry >= 0 && static_cast<int>(k) != entry) continue;
    const auto& e = lib.entries[k];
    std::cout << "entry " << k << " dfp_m (" << format_number(e.dfp.x) << ", " << format_number(e.dfp.y) << ", "
              << format_number(e.dfp.z) << ") achieved_power " << format_number(e.achieved_power) << '\n';
    for (size_t m = 0; m < e.policies.size(); ++m) {
      const auto& p = e.policies[m];
      std::cout << "  subarray " << m << ": " << p.elements() << " elements, " << p.steps << " steps, "
                << (p.fine_tune ? "fine-tune" : "base") << ", actor " << p.actor.parameter_count()
                << " parameters, critic " << p.critic1.parameter_count() << " parameters\n";
    }
  }
  if (entry >= static_cast<int>(lib.entries.size())) throw ConfigError("no entry " + std::to_string(entry));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-field spot beamfocusing lab"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_flag("-q,--quiet", quiet, "Suppress progress messages");

  std::string pdi_a, pdi_b;
  double theta_step = 10.0;
  auto* sim = app.add_subcommand("similarity", "ECC between two phase-distribution images (CSV)");
  sim->add_option("pdi-a", pdi_a)->required();
  sim->add_option("pdi-b", pdi_b)->required();
  sim->add_option("--theta-step", theta_step, "Rotation grid step in degrees")->capture_default_str();

  std::string policy, scene, out;
  auto* pm = app.add_subcommand("power-map", "Power on the reference plane for a full-aperture phase CSV");
  pm->add_option("policy", policy, "Full-aperture phase CSV")->required();
  pm->add_option("scene", scene, "Config file providing the scene and plane")->required();
  pm->add_option("-o,--out", out, "Output CSV (stdout by default)");

  std::vector<double> etas{0.9};
  auto* bfr = app.add_subcommand("bfr", "Beamfocusing radius for a full-aperture phase CSV");
  bfr->add_option("policy", policy, "Full-aperture phase CSV")->required();
  bfr->add_option("scene", scene, "Config file providing the scene and plane")->required();
  bfr->add_option("--eta", etas, "Power fractions")->capture_default_str();

  auto* defaults = app.add_subcommand("defaults", "Print the default config");

  std::string lib_path;
  int entry = -1;
  auto* lib = app.add_subcommand("library", "Inspect a policy library");
  lib->require_subcommand(1);
  auto* ls = lib->add_subcommand("ls", "List entries");
  ls->add_option("path", lib_path)->required();
  auto* inspect = lib->add_subcommand("inspect", "Show entries in detail");
  inspect->add_option("path", lib_path)->required();
  inspect->add_option("--entry", entry, "Only this entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return run_verb(config_path, quiet);
    if (*sim) return similarity_verb(pdi_a, pdi_b, theta_step);
    if (*pm) return power_map_verb(policy, scene, out);
    if (*bfr) return bfr_verb(policy, scene, etas);
    if (*defaults) {
      std::cout << dump_config(ExperimentConfig{});
      return 0;
    }
    if (*ls) return library_ls(lib_path);
    if (*inspect) return library_inspect(lib_path, entry);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
