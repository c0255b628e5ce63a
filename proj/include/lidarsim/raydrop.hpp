// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "lidarsim/geometry.hpp"
#include "lidarsim/json_io.hpp"
#include "lidarsim/raycast.hpp"

namespace lidarsim {

/// Per-ray inputs of the return model.
struct RayFeature {
  double distance = 0.0;   // meters
  double incidence = 0.0;  // radians in [0, pi/2]
  double intensity = 0.0;  // [0, 1]
};

/// Angle between a ray and a surface normal, folded into [0, pi/2] since
/// the normal's sign is arbitrary.
double incidence_angle(const Vec3& ray, const Vec3& normal);

struct FeatureSet {
  std::vector<RayFeature> features;
  std::vector<std::size_t> point_index;  // cloud point of each feature
  std::size_t skipped = 0;               // invalid normals
};

/**
 * Features of a sensor-frame cloud whose normals channel is set. Points
 * whose `normal_valid` entry is zero are skipped. A missing intensity
 * channel reads as 0.
 */
FeatureSet ray_features(const PointCloud& cloud, std::span<const std::uint8_t> normal_valid);
FeatureSet ray_features(const SimulatedFrame& frame);

/// Equal-width bins over [min, max]; values outside clamp to the end bins.
struct AxisBins {
  double min = 0.0;
  double max = 1.0;
  double step = 0.1;

  int count() const;
  int index(double v) const;
  double center(int i) const { return min + (i + 0.5) * step; }
  bool operator==(const AxisBins&) const = default;
};

struct ParamBins {
  AxisBins distance{0.0, 80.0, 1.0};
  AxisBins incidence{0.0, kPi / 2, deg2rad(5.0)};
  AxisBins intensity{0.0, 1.0, 0.05};

  void validate() const;
  bool operator==(const ParamBins&) const = default;
};

/// Histogram of simulated and real features over (distance, incidence, intensity).
struct ParamVoxelGrid {
  ParamBins bins;
  std::size_t min_sim_count = 20;
  std::vector<std::uint64_t> sim_count;
  std::vector<std::uint64_t> real_count;
  std::size_t admitted_sim = 0;
  std::size_t admitted_real = 0;

  std::size_t voxel_count() const { return sim_count.size(); }
  std::size_t linear_index(int d, int t, int i) const;
  std::size_t voxel_of(const RayFeature& f) const;
  Eigen::Vector3i coords(std::size_t voxel) const;
  RayFeature center(std::size_t voxel) const;

  /// Enough simulated samples and no more real than simulated points.
  bool defined(std::size_t voxel) const;
  std::optional<double> ratio(std::size_t voxel) const;
  std::size_t defined_count() const;
};

/// Non-finite features are not admitted.
ParamVoxelGrid build_param_grid(std::span<const RayFeature> sim, std::span<const RayFeature> real,
                                const ParamBins& bins = {}, std::size_t min_sim_count = 20);

struct MlpHyperParams {
  std::vector<int> hidden{64, 64};
  int epochs = 300;
  int batch_size = 64;
  double learning_rate = 3e-3;
  /// Learning rate decays along a cosine to this fraction of the start value.
  double final_lr_fraction = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Loss history keeps the full-data loss every this many epochs.
  int record_every = 10;

  void validate() const;
};

/// ReLU MLP with sigmoid output over min-max normalized (d, theta, i).
struct Surrogate {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is (out x in)
  std::vector<Eigen::VectorXd> biases;
  Eigen::Vector3d input_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d input_max = Eigen::Vector3d::Ones();
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
  double final_loss = 0.0;

  double predict(const RayFeature& f) const;
  /// One feature per column (3 x n), returns n probabilities.
  Eigen::VectorXd predict_batch(const Eigen::Matrix3Xd& features) const;
};

/**
 * Fits voxel centers -> ratio over the defined voxels with mini-batch Adam
 * on squared error weighted by sim_count. Deterministic given the seed.
 * The weights with the lowest full-data loss among the recorded epochs are
 * returned, so loss_history is non-increasing. Throws TrainingError with fewer than 50 defined voxels.
 */
Surrogate train_surrogate(const ParamVoxelGrid& grid, const MlpHyperParams& hyper = {},
                          std::uint64_t seed = 0);

/// Ratio table lookup; undefined voxels answer with their nearest defined voxel.
class LookupTable {
 public:
  explicit LookupTable(ParamVoxelGrid grid);

  double predict(const RayFeature& f) const;
  const ParamVoxelGrid& grid() const noexcept { return grid_; }

 private:
  ParamVoxelGrid grid_;
  std::vector<double> value_;  // per voxel, after nearest-defined fill
};

using ReturnModel = std::variant<Surrogate, LookupTable>;

double predict_return_prob(const ReturnModel& model, const RayFeature& f);

enum class DropMode { threshold, bernoulli };

struct RaydropResult {
  SimulatedFrame frame;
  /// Per input point.
  std::vector<std::uint8_t> keep;
  /// Per input point; NaN when the point had no valid feature.
  std::vector<double> probability;
  std::size_t featureless = 0;
};

/**
 * Threshold mode keeps a point iff its return probability >= threshold.
 * Bernoulli mode keeps it with that probability, drawing from
 * (seed, ray index). Points without a valid feature are always kept.
 * Normals are estimated first when the frame has none.
 */
RaydropResult apply_raydrop(const SimulatedFrame& frame, const ReturnModel& model, double threshold,
                            DropMode mode = DropMode::threshold, std::uint64_t seed = 0,
                            std::size_t normal_neighbors = 10);

Json to_json(const Surrogate& s);
Surrogate surrogate_from_json(const Json& j);
Json to_json(const ParamVoxelGrid& g);
ParamVoxelGrid param_grid_from_json(const Json& j);

}  // namespace lidarsim
