// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lidarsim/geometry.hpp"
#include "lidarsim/ingest.hpp"
#include "lidarsim/json_io.hpp"
#include "lidarsim/raycast.hpp"
#include "lidarsim/raydrop.hpp"
#include "lidarsim/reconstruct.hpp"

namespace lidarsim {

/// Scan pattern and placement of a sensor to synthesize.
struct NewSensorSpec {
  std::string name = "synthetic";
  std::vector<double> elevations;  // radians, strictly increasing
  /// Laser id per elevation; empty means the elevation index.
  std::vector<std::int32_t> beam_ids;
  double azimuth_resolution = deg2rad(0.2);
  double azimuth_start = -kPi;
  double azimuth_end = kPi;
  double max_range = 75.0;
  RigidTransform mount;  // sensor -> vehicle

  void validate() const;
};

/// JSON keys: name, elevations_deg, beam_ids, azimuth_resolution_deg,
/// azimuth_fov_deg [start, end], max_range, mount (4x4).
Json to_json(const NewSensorSpec& s);
NewSensorSpec sensor_spec_from_json(const Json& j);

/// One ray per (elevation, azimuth step), azimuths start + k*resolution < end.
BeamTable beam_table_from_spec(const NewSensorSpec& spec);

struct Placement {
  std::string asset_id;
  OrientedBox3 box;  // global
};

struct ScenarioSpec {
  std::string background_id;
  std::vector<Placement> placements;
};

Json to_json(const ScenarioSpec& s);
ScenarioSpec scenario_from_json(const Json& j);

struct ComposedScene {
  PointCloud cloud;  // global
  std::vector<OrientedBox3> boxes;
};

/**
 * Background plus every placed asset moved to its box pose. No occlusion
 * handling. Intensity and elongation are kept when any input has them
 * (zero-filled elsewhere); normals and beam ids are dropped. Throws
 * CompositionError listing every missing asset id.
 */
ComposedScene compose_scene(const BackgroundMap& background, const ObjectLibrary& library,
                            std::span<const Placement> placements);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;

  double area() const;
};

/// OBJ subset: `v` and `f` records; polygons are fan-triangulated.
TriangleMesh parse_obj(const std::string& text, const std::filesystem::path& origin = {});
TriangleMesh read_obj(const std::filesystem::path& path);

/**
 * Area-weighted uniform surface samples, recentered on their tight
 * axis-aligned box. Throws DomainError on a zero-area mesh.
 */
ObjectAsset mesh_to_asset(const TriangleMesh& mesh, std::size_t samples, std::uint64_t seed,
                          ObjectClass label = ObjectClass::pedestrian,
                          std::string asset_id = "mesh",
                          std::optional<double> intensity = std::nullopt);

struct PoseSample {
  ObjectClass label = ObjectClass::other;
  Vec3 dims = Vec3::Zero();
  std::size_t point_count = 0;
  double distance = 0.0;
  /// Tight extent of the enclosed cluster in the box frame, when known.
  std::optional<Vec3> extent;
};

struct CountStats {
  std::size_t samples = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ClassStats {
  std::size_t samples = 0;
  Vec3 dims_mean = Vec3::Zero();
  Vec3 dims_sd = Vec3::Zero();  // n-1 estimator
  bool low_confidence = true;
  /// Mean annotation dims / cluster extent, per axis; 1 without data.
  Vec3 annotation_ratio = Vec3::Ones();
  /// Keyed by floor(distance / band_width).
  std::map<int, CountStats> point_counts;
};

struct PoseStats {
  double band_width = 10.0;
  std::size_t min_samples = 30;
  std::map<ObjectClass, ClassStats> classes;  // every class present, maybe empty

  const ClassStats& at(ObjectClass c) const;
};

PoseStats fit_pose_stats(std::span<const PoseSample> samples, double band_width = 10.0,
                         std::size_t min_samples = 30);

/// One sample per annotated box with its enclosed cluster.
std::vector<PoseSample> pose_samples(const SequenceDataset& seq);

Json to_json(const PoseStats& s);

struct FilterOptions {
  double k_sigma = 2.0;
  /// Also require the point count to lie within k_sigma of the band at `distance`.
  bool check_point_count = false;
  double distance = 0.0;
};

/// Throws DomainError when the class has no samples.
bool filter_asset(const ObjectAsset& asset, const PoseStats& stats, const FilterOptions& options = {});

/// Scales dims by the class annotation ratio, floored at 1 per axis.
OrientedBox3 loosen_box(const OrientedBox3& tight, const PoseStats& stats);

struct SynthWarning {
  std::size_t frame = 0;
  std::string code;
  std::string message;
};

struct RaydropStage {
  ReturnModel model;
  double threshold = 0.28;
  DropMode mode = DropMode::threshold;
};

struct SynthOptions {
  /// Range-image grid; its elevation bounds are widened to cover the spec.
  RaycastConfig raycast;
  std::optional<RaydropStage> raydrop;
  std::uint64_t seed = 0;
  /// Slack when comparing beam elevations with the source coverage.
  double coverage_tolerance = deg2rad(0.5);
};

struct SynthResult {
  SequenceDataset dataset;
  std::vector<SynthWarning> warnings;
};

/**
 * Re-simulates every source frame with the new sensor at frame pose * mount.
 * Beams outside the source's observed elevation coverage are removed and
 * reported. Output frames follow source order; boxes are re-expressed in
 * the new sensor frame.
 */
SynthResult synthesize_dataset(const SequenceDataset& seq, const NewSensorSpec& spec,
                               const BackgroundMap& background, const ObjectLibrary& library,
                               const SynthOptions& options = {});

Json to_json(const SynthWarning& w);

}  // namespace lidarsim
