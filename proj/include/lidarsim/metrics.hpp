// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lidarsim/geometry.hpp"
#include "lidarsim/json_io.hpp"
#include "lidarsim/point_cloud.hpp"
#include "lidarsim/raycast.hpp"

namespace lidarsim {

/**
 * Mean squared nearest-neighbour distance from P to Q plus the same from
 * Q to P. Throws DomainError on an empty cloud.
 */
double chamfer(const PointCloud& p, const PointCloud& q);

/**
 * Occupancy/intensity descriptor of a cloud on a fixed grid centered at the
 * origin: log1p(count) per cell followed by mean intensity per cell.
 * Cells are ordered x-major, then y, then z.
 */
Eigen::VectorXd default_extractor(const PointCloud& cloud, double voxel, const Vec3& crop_extent);

/// Maps an object-cropped cloud and its boxes to a fixed-length vector.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual Json parameters() const = 0;
  virtual Eigen::VectorXd extract(const PointCloud& cloud,
                                  std::span<const OrientedBox3> boxes) const = 0;
};

/// default_extractor in each box frame, summed over boxes.
class DefaultExtractor final : public FeatureExtractor {
 public:
  explicit DefaultExtractor(double voxel = 0.25, Vec3 crop_extent = Vec3(4.0, 4.0, 2.0));

  std::string name() const override { return "voxel-occupancy-intensity"; }
  std::size_t dimension() const override;
  Json parameters() const override;
  Eigen::VectorXd extract(const PointCloud& cloud,
                          std::span<const OrientedBox3> boxes) const override;

  double voxel() const noexcept { return voxel_; }
  const Vec3& crop_extent() const noexcept { return extent_; }

 private:
  double voxel_;
  Vec3 extent_;
};

/// Points of `cloud` inside at least one box.
PointCloud crop_to_boxes(const PointCloud& cloud, std::span<const OrientedBox3> boxes);

/**
 * Crops both clouds to the union of `boxes` and returns the L1 distance
 * of their features. Throws ConsistencyError when the extractor output
 * does not have its declared dimension.
 */
double lpcs(const PointCloud& sim, const PointCloud& real, std::span<const OrientedBox3> boxes,
            const FeatureExtractor& extractor);

struct LpcsPair {
  PointCloud sim;
  PointCloud real;
  std::vector<OrientedBox3> boxes;
};

struct LpcsReport {
  std::string extractor;
  std::vector<double> values;
  double mean = 0.0;
  std::size_t pairs = 0;
};

LpcsReport evaluate_lpcs(std::span<const LpcsPair> pairs, const FeatureExtractor& extractor);

/// A real frame plus what is needed to simulate it.
struct RaycastPair {
  PointCloud scene;            // global frame
  RigidTransform sensor_pose;  // sensor -> global
  BeamTable beams;
  PointCloud real;                  // sensor frame
  std::vector<OrientedBox3> boxes;  // sensor frame
};

struct RankEntry {
  RaycastConfig config;
  std::optional<double> score;  // mean LPCS; empty when the candidate failed
  std::vector<double> per_pair;
  std::string error;
};

/**
 * Simulates every pair with each candidate (FPA) and ranks by mean LPCS,
 * ascending. Ties go to more pixels (W*H), then narrower peak width, then
 * lower IDW power, then the remaining config fields. Failed candidates
 * keep their error message and sort last.
 */
std::vector<RankEntry> rank_raycast_configs(std::span<const RaycastConfig> candidates,
                                            std::span<const RaycastPair> pairs,
                                            const FeatureExtractor& extractor);

Json to_json(const RaycastConfig& c);
RaycastConfig raycast_config_from_json(const Json& j, const RaycastConfig& defaults = {});
Json to_json(const LpcsReport& r);
Json to_json(std::span<const RankEntry> ranking);
std::string ranking_table(std::span<const RankEntry> ranking);
std::string ranking_csv(std::span<const RankEntry> ranking);

}  // namespace lidarsim
