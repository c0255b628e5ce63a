// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lidarsim/ingest.hpp"
#include "lidarsim/json_io.hpp"
#include "lidarsim/raycast.hpp"
#include "lidarsim/raydrop.hpp"
#include "lidarsim/reconstruct.hpp"

namespace lidarsim {

struct PathsConfig {
  std::filesystem::path sequence;    // manifest of the real sequence
  std::filesystem::path output_dir;  // one subdirectory per stage
  std::optional<std::filesystem::path> beam_table;
  std::optional<std::filesystem::path> sensor_spec;
  std::optional<std::filesystem::path> sim_sequence;   // metrics input; default: latest stage output
  std::optional<std::filesystem::path> real_sequence;  // metrics input; default: `sequence`
};

struct RaydropConfig {
  ParamBins bins;
  std::size_t min_sim_count = 20;
  MlpHyperParams mlp;
  double threshold = 0.28;
  DropMode mode = DropMode::threshold;
  std::string model = "mlp";  // "mlp" or "table"
  std::size_t normal_neighbors = 10;
};

struct MetricsConfig {
  double voxel = 0.25;
  Vec3 crop_extent = Vec3(4.0, 4.0, 2.0);
};

struct GridsearchConfig {
  std::vector<int> widths{1024, 2048, 2560};
  std::vector<int> heights{64, 128};
  std::vector<double> peak_widths{0.1, 0.2, 0.4};
  std::vector<double> idw_powers{1.0};
  std::size_t max_frames = 3;
};

struct SynthConfig {
  double coverage_tolerance_deg = 0.5;
  bool apply_raydrop = false;
};

/**
 * Whole-pipeline configuration. Relative paths are resolved against the
 * directory of the config file.
 */
struct PipelineConfig {
  PathsConfig paths;
  CloudFormat format = CloudFormat::binary_columnar;
  std::uint64_t seed = 0;
  int workers = 0;  // 0: LIDARSIM_WORKERS or 1
  RaycastConfig raycast;
  RaycastMethod raycast_method = RaycastMethod::fpa;
  RaydropConfig raydrop;
  ReconstructParams reconstruct;
  MetricsConfig metrics;
  GridsearchConfig gridsearch;
  SynthConfig synth;

  /// Collects every problem and throws one ConfigError listing them all.
  static PipelineConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  /// Canonical form; excludes `workers`, which never changes outputs.
  Json to_json() const;
  /// Range checks; throws ConfigError listing every violated field.
  void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);

/// Digest of a file, or of every file below a directory in path order.
std::string digest_path(const std::filesystem::path& path);

/// JSON-lines progress log of one stage run.
class StageLog {
 public:
  StageLog(std::filesystem::path path, std::string stage);
  void event(const std::string& name, Json fields = Json::object());
  void warning(const std::string& code, const std::string& message, Json fields = Json::object());

 private:
  std::ofstream out_;
  std::string stage_;
};

struct StageResult {
  std::string stage;
  std::filesystem::path output_dir;
  Json summary;
};

/// Stage names accepted by run_stage.
const std::vector<std::string>& stage_names();

/**
 * Runs one stage, writing into <output_dir>/<stage>/ its data files,
 * log.jsonl and run_manifest.json.
 */
StageResult run_stage(const std::string& stage, const PipelineConfig& config);

/// Dense scene of one frame: background plus the frame's objects, global frame.
PointCloud frame_scene(const FrameRecord& frame, const BackgroundMap& background,
                       const ObjectLibrary& library);

/// One ray per point of a sensor-frame cloud (beam ids copied when present).
BeamTable beams_from_cloud(const PointCloud& cloud, double max_range);

/// Reads the return model written by the raydrop-train stage.
ReturnModel load_return_model(const std::filesystem::path& path);

}  // namespace lidarsim
