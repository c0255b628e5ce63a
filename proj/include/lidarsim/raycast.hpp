// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lidarsim/geometry.hpp"
#include "lidarsim/ingest.hpp"
#include "lidarsim/point_cloud.hpp"

namespace lidarsim {

/// Explicit scan pattern: one direction per ray in the sensor frame.
struct BeamTable {
  std::vector<SphericalDirection> rays;
  /// Laser id per ray; when empty the ray index is used.
  std::vector<std::int32_t> beam_ids;
  double max_range = 75.0;

  void validate() const;
  std::int32_t beam_id(std::size_t ray) const {
    return beam_ids.empty() ? static_cast<std::int32_t>(ray) : beam_ids[ray];
  }
};

/// JSON: {"max_range": m, "rays": [{"azimuth_deg", "elevation_deg"[, "beam_id"]}]}.
BeamTable load_beam_table(const std::filesystem::path& path);
void save_beam_table(const BeamTable& table, const std::filesystem::path& path);

/**
 * Range-image geometry used to bin the dense scene. Column c covers
 * azimuths [azimuth_min + c*step, azimuth_min + (c+1)*step) and wraps
 * modulo width when the span is a full turn; row r covers elevations
 * [elevation_min + r*step, ...). Angles on a bin boundary go to the
 * higher-index bin; the last row/column also owns the closing edge.
 */
struct RaycastConfig {
  int width = 2560;
  int height = 128;
  double peak_width = 0.20;  // meters
  double idw_power = 1.0;
  double azimuth_min = -kPi;
  double azimuth_span = 2.0 * kPi;
  double elevation_min = deg2rad(-17.6);
  double elevation_max = deg2rad(2.4);

  void validate() const;
  bool full_circle() const;
  double azimuth_step() const { return azimuth_span / width; }
  double elevation_step() const { return (elevation_max - elevation_min) / height; }

  /// (column, row) of a direction, or nothing when outside the field of view.
  std::optional<std::pair<int, int>> bin_of(double azimuth, double elevation) const;

  bool operator==(const RaycastConfig&) const = default;
};

/// Scene points bucketed per range-image pixel (frustum).
struct RangeImageGrid {
  RaycastConfig config;
  /// CSR layout: members of bin b = row * width + col are
  /// members[offsets[b] .. offsets[b+1]), sorted by (depth, index).
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> members;
  std::vector<double> depth, azimuth, elevation;  // per scene point
  std::size_t out_of_fov = 0;

  std::span<const std::size_t> bin(int col, int row) const;
  std::size_t bin_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// `scene` must be expressed in the sensor frame.
RangeImageGrid project_to_grid(const PointCloud& scene, const RaycastConfig& config);

/// Closest depth per bin, -1 where empty.
RangeImage closest_depth_image(const RangeImageGrid& grid);

/**
 * Positions (into `depths`) of the first-peak members: all depths within
 * [d_min, d_min + peak_width]. Output is ascending by position.
 */
std::vector<std::size_t> first_peak(std::span<const double> depths, double peak_width);

struct AngularSample {
  double azimuth;
  double elevation;
};

/**
 * Normalized inverse-angular-distance weights w_i ∝ 1 / dist_i^power
 * toward the ray (azimuth differences wrap). A sample within 1e-12 rad of
 * the ray receives all the weight.
 */
std::vector<double> idw_weights(std::span<const AngularSample> samples, double ray_azimuth,
                                double ray_elevation, double power);

/// Weighted average of each column of `features` (one row per sample).
Eigen::VectorXd idw_average(std::span<const AngularSample> samples,
                            const Eigen::MatrixXd& features, double ray_azimuth,
                            double ray_elevation, double power);

struct SimulatedFrame {
  /// Sensor frame. Carries beam_id, plus intensity/elongation when the
  /// scene has them.
  PointCloud cloud;
  std::vector<std::size_t> ray_index;  // per point
  std::vector<std::uint8_t> hit;       // per ray
  /// Per point, filled by attach_normals().
  std::vector<std::uint8_t> normal_valid;
};

enum class RaycastMethod { fpa, cp };

/// Casts every beam against an existing grid of the sensor-frame scene.
SimulatedFrame raycast_grid(const PointCloud& scene_sensor, const RangeImageGrid& grid,
                            const BeamTable& beams, RaycastMethod method);

/// First-peak averaging. `scene` is global, `sensor_pose` maps sensor -> global.
SimulatedFrame raycast_fpa(const PointCloud& scene, const RigidTransform& sensor_pose,
                           const BeamTable& beams, const RaycastConfig& config);

/// Closest point per pixel.
SimulatedFrame raycast_cp(const PointCloud& scene, const RigidTransform& sensor_pose,
                          const BeamTable& beams, const RaycastConfig& config);

struct NormalEstimate {
  /// Input cloud with a normals channel. Invalid normals hold the unit
  /// direction toward the sensor as a placeholder.
  PointCloud cloud;
  std::vector<std::uint8_t> valid;
  std::size_t invalid_count = 0;
};

/**
 * Plane fit over the k nearest neighbours (the point included); the normal
 * is the eigenvector of the smallest covariance eigenvalue, oriented toward
 * `sensor_origin`. Requires 3 <= k <= N.
 */
NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k,
                                const Vec3& sensor_origin = Vec3::Zero());

/// Runs estimate_normals on the frame's cloud in place.
void attach_normals(SimulatedFrame& frame, std::size_t k);

}  // namespace lidarsim
