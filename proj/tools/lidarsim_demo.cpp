// SPDX-License-Identifier: Apache-2.0
// Writes a small synthetic street sequence plus matching configs.
#include <cmath>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "lidarsim/error.hpp"
#include "lidarsim/pipeline.hpp"
#include "lidarsim/scenegen.hpp"
#include "lidarsim/synth.hpp"

namespace fs = std::filesystem;
using namespace lidarsim;

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic demo sequence and a ready-to-run pipeline config"};
  fs::path out;
  scenegen::DemoSpec spec;
  spec.range_noise_sd = 0.02;
  spec.apply_drop_law = true;
  std::string format = "binary";
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--frames", spec.frames, "Number of frames")->check(CLI::PositiveNumber);
  app.add_option("--beams", spec.beams, "Number of beams")->check(CLI::Range(2, 256));
  app.add_option("--noise", spec.range_noise_sd, "Range noise sigma in meters")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", spec.seed, "Seed for noise and drop draws");
  app.add_flag("!--no-drop", spec.apply_drop_law, "Keep every return");
  app.add_option("--format", format, "Cloud file format")->check(CLI::IsMember({"ascii-ply", "binary"}));
  CLI11_PARSE(app, argc, argv);

  try {
    const SequenceDataset seq = scenegen::make_demo_sequence(spec);
    const fs::path manifest = write_sequence(seq, out / "sequence", parse_cloud_format(format));

    // Same scan pattern as the demo sensor, and a copy keeping every second beam.
    NewSensorSpec same;
    same.name = "demo-same";
    const double es = (spec.elevation_max - spec.elevation_min) / (spec.beams - 1);
    for (int b = 0; b < spec.beams; ++b) same.elevations.push_back(spec.elevation_min + b * es);
    same.azimuth_resolution = spec.azimuth_resolution;
    same.azimuth_start = -kPi + spec.azimuth_resolution / 2;
    same.azimuth_end = kPi + spec.azimuth_resolution / 2 - 1e-9;
    same.max_range = spec.max_range;
    write_json_file(out / "sensor_same.json", to_json(same));
    NewSensorSpec half = same;
    half.name = "demo-half";
    half.elevations.clear();
    for (int b = 0; b < spec.beams; b += 2) {
      half.elevations.push_back(same.elevations[static_cast<std::size_t>(b)]);
      half.beam_ids.push_back(b);
    }
    write_json_file(out / "sensor_half.json", to_json(half));
    // Full scan pattern, so raycasting also fires the rays the sensor dropped.
    save_beam_table(scenegen::lattice_beams(spec.beams, spec.elevation_min, spec.elevation_max,
                                            spec.azimuth_resolution, spec.max_range),
                    out / "beams.json");

    const int columns = static_cast<int>(std::lround(2 * kPi / spec.azimuth_resolution));
    Json config{
        {"paths", {{"sequence", "sequence/manifest.json"}, {"output_dir", "out"},
                   {"beam_table", "beams.json"},
                   {"sensor_spec", "sensor_same.json"}}},
        {"format", format},
        {"seed", spec.seed},
        {"raycast",
         {{"width", columns},
          {"height", spec.beams},
          {"peak_width", 0.2},
          {"idw_power", 1.0},
          {"elevation_min_deg", rad2deg(spec.elevation_min - es / 2)},
          {"elevation_max_deg", rad2deg(spec.elevation_max + es / 2)}}},
        {"reconstruct", {{"outlier_radius", 1.0}, {"min_neighbors", 2}}},
        {"raydrop", {{"min_sim_count", 5}, {"threshold", 0.28}, {"mlp", {{"epochs", 60}}}}},
        {"gridsearch",
         {{"widths", {columns / 2, columns}},
          {"heights", {spec.beams, 2 * spec.beams}},
          {"peak_widths", {0.1, 0.2}},
          {"max_frames", 1}}}};
    write_json_file(out / "config.json", config);
    std::cout << Json{{"manifest", manifest.string()}, {"config", (out / "config.json").string()},
                      {"frames", seq.frames.size()}}
                     .dump()
              << std::endl;
    return 0;
  } catch (const lidarsim::Error& e) {
    std::cerr << Json{{"error", {{"type", "runtime"}, {"message", e.what()}}}}.dump() << std::endl;
    return 4;
  }
}
