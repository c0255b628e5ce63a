// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lidarsim/geometry.hpp"
#include "lidarsim/ingest.hpp"
#include "lidarsim/point_cloud.hpp"

namespace lidarsim {

struct IcpParams {
  int max_iterations = 50;
  /// Stop once the norm of the (rotation vector, translation) update is below this.
  double tolerance = 1e-9;
  std::size_t normal_neighbors = 10;
  /// Pairs farther than rejection_factor * median distance are discarded.
  double rejection_factor = 3.0;
  /// Smallest / largest eigenvalue of the point-to-plane normal matrix
  /// below which the problem is treated as degenerate.
  double degeneracy_ratio = 1e-6;
};

struct ReconstructParams {
  double movement_threshold = 0.5;  // meters
  Vec3 dynamic_enlargement = Vec3::Constant(0.1);
  Vec3 static_enlargement = Vec3::Zero();
  double voxel = 0.05;
  double outlier_radius = 0.3;
  int min_neighbors = 3;
  std::size_t icp_min_points = 200;
  IcpParams icp;

  void validate() const;
};

struct TrackObservation {
  std::size_t frame = 0;
  OrientedBox3 box_global;
  /// Points inside the box, in the box frame (x along the heading).
  PointCloud cluster;
};

struct ObjectTrack {
  std::string track_id;
  ObjectClass label = ObjectClass::other;
  std::vector<TrackObservation> observations;
};

/// Groups every annotated box of the sequence by track id (sorted by id).
std::vector<ObjectTrack> collect_tracks(const SequenceDataset& seq);

/// True iff the largest pairwise distance between global box centers
/// exceeds `movement_threshold`.
bool classify_dynamic(const ObjectTrack& track, double movement_threshold = 0.5);

struct EnlargementPolicy {
  Vec3 dynamic_enlargement = Vec3::Constant(0.1);
  Vec3 static_enlargement = Vec3::Zero();
  std::set<std::string> dynamic_tracks;

  const Vec3& for_track(const std::string& id) const {
    return dynamic_tracks.count(id) ? dynamic_enlargement : static_enlargement;
  }
};

EnlargementPolicy make_enlargement_policy(const SequenceDataset& seq, const ReconstructParams& params);

/// Frame cloud minus the union of the (policy-enlarged) box interiors.
PointCloud remove_foreground(const FrameRecord& frame, const EnlargementPolicy& policy);

/**
 * One point per occupied voxel: the centroid of its members, with scalar
 * channels averaged, normals averaged and renormalized and beam_id taken
 * from the first member. Voxels are emitted in order of their first
 * member.
 */
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

/// Keeps a point iff at least `min_neighbors` other points lie within `radius`.
PointCloud radius_outlier_removal(const PointCloud& cloud, double radius, int min_neighbors);

struct BackgroundProvenance {
  std::string sequence_id;
  std::size_t frames = 0;
  ReconstructParams params;
  std::size_t accumulated_points = 0;
  std::size_t downsampled_points = 0;
  std::size_t outliers_removed = 0;
  std::size_t recropped_points = 0;
};

struct BackgroundMap {
  PointCloud cloud;  // global frame
  BackgroundProvenance provenance;
};

/**
 * Foreground removal per frame, transform to global, concatenation in frame
 * order, voxel downsampling and radius outlier removal. Averaged points that
 * end up inside an enlarged foreground box are dropped at the end. Throws
 * EmptyMapError when nothing survives.
 */
BackgroundMap accumulate_background(const SequenceDataset& seq, const ReconstructParams& params);

struct IcpResult {
  RigidTransform transform;  // source -> target
  double rms = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Target normals could not constrain all six degrees of freedom, so
  /// point-to-point alignment was used.
  bool point_to_point_fallback = false;
};

/// Point-to-plane ICP; both clouds need at least 10 points.
IcpResult icp_align(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                    const IcpParams& params = {});

/// Root mean squared nearest-neighbour distance from `source` to `target`.
double nearest_neighbor_rms(const PointCloud& source, const PointCloud& target);

enum class AssetSource { reconstructed, mesh_sampled };

struct AssetProvenance {
  std::size_t observations = 0;
  std::size_t icp_applied = 0;
  std::size_t icp_rejected = 0;
  std::size_t icp_fallbacks = 0;
  std::size_t clipped_points = 0;
};

/// Object point cloud in its own x-aligned frame with a box at the origin.
struct ObjectAsset {
  std::string track_id;
  ObjectClass label = ObjectClass::other;
  PointCloud cloud;
  OrientedBox3 canonical_box;
  AssetSource source = AssetSource::reconstructed;
  AssetProvenance provenance;

  void validate() const;
};

/**
 * Concatenates the track's box-frame clusters. When both the running
 * accumulation and the next cluster have more than icp_min_points points
 * the cluster is first registered to the accumulation, and the registered
 * pose is kept only if it lowers the cluster-to-accumulation RMS.
 */
ObjectAsset reconstruct_object(const ObjectTrack& track, const ReconstructParams& params);

using ObjectLibrary = std::map<std::string, ObjectAsset>;

ObjectLibrary build_object_library(const SequenceDataset& seq, const ReconstructParams& params);

void save_background(const BackgroundMap& map, const std::filesystem::path& dir, CloudFormat format);
BackgroundMap load_background(const std::filesystem::path& dir);

/// One `<id>.json` + cloud file per asset.
void save_object_library(const ObjectLibrary& library, const std::filesystem::path& dir,
                         CloudFormat format);
ObjectLibrary load_object_library(const std::filesystem::path& dir);

}  // namespace lidarsim
