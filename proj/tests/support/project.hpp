// SPDX-License-Identifier: Apache-2.0
// Small on-disk pipeline project for CLI-level tests.
#pragma once

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lidarsim/json_io.hpp"
#include "lidarsim/pipeline.hpp"
#include "lidarsim/scenegen.hpp"
#include "lidarsim/synth.hpp"

namespace project {

namespace fs = std::filesystem;
using lidarsim::Json;

inline lidarsim::scenegen::DemoSpec small_spec() {
  lidarsim::scenegen::DemoSpec spec;
  spec.azimuth_resolution = lidarsim::deg2rad(0.8);
  spec.range_noise_sd = 0.02;
  spec.apply_drop_law = true;
  spec.seed = 5;
  return spec;
}

/// Writes sequence/, sensor_same.json, sensor_half.json and config.json under
/// `dir`; returns the config path. Stage outputs go to dir/out.
inline fs::path write_demo_project(const fs::path& dir, const lidarsim::scenegen::DemoSpec& spec = small_spec(),
                                   const std::string& format = "binary") {
  using namespace lidarsim;
  fs::create_directories(dir);
  const SequenceDataset seq = scenegen::make_demo_sequence(spec);
  write_sequence(seq, dir / "sequence", parse_cloud_format(format));

  NewSensorSpec same;
  same.name = "same";
  const double es = (spec.elevation_max - spec.elevation_min) / (spec.beams - 1);
  for (int b = 0; b < spec.beams; ++b) same.elevations.push_back(spec.elevation_min + b * es);
  same.azimuth_resolution = spec.azimuth_resolution;
  same.azimuth_start = -kPi + spec.azimuth_resolution / 2;
  same.azimuth_end = kPi + spec.azimuth_resolution / 2 - 1e-9;
  same.max_range = spec.max_range;
  write_json_file(dir / "sensor_same.json", to_json(same));
  NewSensorSpec half = same;
  half.name = "half";
  half.elevations.clear();
  for (int b = 0; b < spec.beams; b += 2) {
    half.elevations.push_back(same.elevations[static_cast<std::size_t>(b)]);
    half.beam_ids.push_back(b);
  }
  write_json_file(dir / "sensor_half.json", to_json(half));
  save_beam_table(scenegen::lattice_beams(spec.beams, spec.elevation_min, spec.elevation_max,
                                          spec.azimuth_resolution, spec.max_range),
                  dir / "beams.json");

  const int columns = static_cast<int>(std::lround(2 * kPi / spec.azimuth_resolution));
  const Json config{
      {"paths", {{"sequence", "sequence/manifest.json"}, {"output_dir", "out"},
                 {"beam_table", "beams.json"},
                 {"sensor_spec", "sensor_same.json"}}},
      {"format", format},
      {"seed", 11},
      {"raycast",
       {{"width", columns},
        {"height", spec.beams},
        {"peak_width", 0.2},
        {"idw_power", 1.0},
        {"elevation_min_deg", rad2deg(spec.elevation_min - es / 2)},
        {"elevation_max_deg", rad2deg(spec.elevation_max + es / 2)}}},
      {"reconstruct", {{"outlier_radius", 1.0}, {"min_neighbors", 2}}},
      {"raydrop", {{"min_sim_count", 5}, {"threshold", 0.28}, {"mlp", {{"epochs", 40}}}}},
      {"gridsearch",
       {{"widths", {columns / 2, columns}}, {"heights", {spec.beams}}, {"peak_widths", {0.1, 0.2}}, {"max_frames", 1}}}};
  write_json_file(dir / "config.json", config);
  return dir / "config.json";
}

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += "'\\''";
    else q += c;
  }
  return q + "'";
}

/// Runs the CLI binary with `args`; stdout and stderr are captured via files in `scratch`.
inline CliRun run_cli(const std::string& exe, const std::vector<std::string>& args, const fs::path& scratch) {
  fs::create_directories(scratch);
  std::string cmd = shell_quote(exe);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  cmd += " >" + shell_quote(out.string()) + " 2>" + shell_quote(err.string());
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

/// Relative path -> bytes for every data file below `dir`, excluding run logs and manifests.
inline std::map<std::string, std::string> data_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == "run_manifest.json" || name == "log.jsonl") continue;
    files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

}  // namespace project
