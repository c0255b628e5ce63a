// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "lidarsim/error.hpp"
#include "lidarsim/kdtree.hpp"
#include "lidarsim/parallel.hpp"

namespace lidarsim {

void ReconstructParams::validate() const {
  if (!(movement_threshold >= 0.0)) throw DomainError("movement_threshold must be >= 0");
  if ((dynamic_enlargement.array() < 0.0).any() || (static_enlargement.array() < 0.0).any())
    throw DomainError("enlargement must be non-negative");
  if (!(voxel > 0.0)) throw DomainError("voxel must be positive");
  if (!(outlier_radius > 0.0)) throw DomainError("outlier_radius must be positive");
  if (min_neighbors < 1) throw DomainError("min_neighbors must be >= 1");
  if (icp_min_points < 10) throw DomainError("icp_min_points must be >= 10");
}

std::vector<ObjectTrack> collect_tracks(const SequenceDataset& seq) {
  std::map<std::string, ObjectTrack> tracks;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto& frame = seq.frames[f];
    for (const auto& box : frame.boxes) {
      auto [it, inserted] = tracks.try_emplace(box.track_id);
      if (inserted) {
        it->second.track_id = box.track_id;
        it->second.label = box.label;
      }
      const auto crop = crop_by_box(frame.cloud, box);
      TrackObservation obs{f, box.transformed(frame.sensor_pose),
                           transform_cloud(crop.inside, box.pose().inverse())};
      it->second.observations.push_back(std::move(obs));
    }
  }
  std::vector<ObjectTrack> out;
  out.reserve(tracks.size());
  for (auto& [id, t] : tracks) out.push_back(std::move(t));
  return out;
}

bool classify_dynamic(const ObjectTrack& track, double movement_threshold) {
  const auto& obs = track.observations;
  double max_sq = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = i + 1; j < obs.size(); ++j)
      max_sq = std::max(max_sq, (obs[i].box_global.center - obs[j].box_global.center).squaredNorm());
  return std::sqrt(max_sq) > movement_threshold;
}

EnlargementPolicy make_enlargement_policy(const SequenceDataset& seq, const ReconstructParams& params) {
  EnlargementPolicy policy{params.dynamic_enlargement, params.static_enlargement, {}};
  // Only box centers matter here, so skip the per-observation crops.
  std::map<std::string, std::vector<Vec3>> centers;
  for (const auto& frame : seq.frames)
    for (const auto& box : frame.boxes) centers[box.track_id].push_back(frame.sensor_pose.apply(box.center));
  for (const auto& [id, cs] : centers) {
    ObjectTrack t;
    for (const auto& c : cs) {
      TrackObservation o;
      o.box_global.center = c;
      t.observations.push_back(std::move(o));
    }
    if (classify_dynamic(t, params.movement_threshold)) policy.dynamic_tracks.insert(id);
  }
  return policy;
}

PointCloud remove_foreground(const FrameRecord& frame, const EnlargementPolicy& policy) {
  std::vector<std::size_t> keep;
  keep.reserve(frame.cloud.size());
  for (std::size_t i = 0; i < frame.cloud.size(); ++i) {
    const Vec3& p = frame.cloud.xyz[i];
    bool inside = false;
    for (const auto& box : frame.boxes) {
      if (box.contains(p, policy.for_track(box.track_id))) {
        inside = true;
        break;
      }
    }
    if (!inside) keep.push_back(i);
  }
  return frame.cloud.select(keep);
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) throw DomainError("voxel size must be positive");
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 q = (cloud.xyz[i] / voxel).array().floor();
    const VoxelKey key{static_cast<std::int64_t>(q.x()), static_cast<std::int64_t>(q.y()),
                       static_cast<std::int64_t>(q.z())};
    auto [it, inserted] = group_of.try_emplace(key, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  PointCloud out = PointCloud::with_channels(cloud.channels());
  out.reserve(groups.size());
  for (const auto& g : groups) {
    const double inv = 1.0 / static_cast<double>(g.size());
    Vec3 c = Vec3::Zero();
    for (auto i : g) c += cloud.xyz[i];
    out.xyz.push_back(c * inv);
    if (cloud.intensity) {
      double s = 0.0;
      for (auto i : g) s += (*cloud.intensity)[i];
      out.intensity->push_back(s * inv);
    }
    if (cloud.elongation) {
      double s = 0.0;
      for (auto i : g) s += (*cloud.elongation)[i];
      out.elongation->push_back(s * inv);
    }
    if (cloud.normals) {
      Vec3 n = Vec3::Zero();
      for (auto i : g) n += (*cloud.normals)[i];
      const double len = n.norm();
      out.normals->push_back(len > 1e-12 ? Vec3(n / len) : (*cloud.normals)[g.front()]);
    }
    if (cloud.beam_id) out.beam_id->push_back((*cloud.beam_id)[g.front()]);
  }
  return out;
}

PointCloud radius_outlier_removal(const PointCloud& cloud, double radius, int min_neighbors) {
  if (!(radius > 0.0)) throw DomainError("outlier radius must be positive");
  if (min_neighbors < 1) throw DomainError("min_neighbors must be >= 1");
  const KdTree tree(cloud.xyz);
  std::vector<std::uint8_t> keep(cloud.size(), 0);
  parallel_for(cloud.size(), [&](std::size_t i) {
    // count_within includes the point itself.
    keep[i] = tree.count_within(cloud.xyz[i], radius) >= static_cast<std::size_t>(min_neighbors) + 1;
  });
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) idx.push_back(i);
  return cloud.select(idx);
}

BackgroundMap accumulate_background(const SequenceDataset& seq, const ReconstructParams& params) {
  params.validate();
  const EnlargementPolicy policy = make_enlargement_policy(seq, params);

  std::vector<PointCloud> per_frame(seq.frames.size());
  parallel_for(seq.frames.size(), [&](std::size_t f) {
    const auto& frame = seq.frames[f];
    per_frame[f] = transform_cloud(remove_foreground(frame, policy), frame.sensor_pose);
  });

  BackgroundMap map;
  auto& prov = map.provenance;
  prov.sequence_id = seq.sensor_name;
  prov.frames = seq.frames.size();
  prov.params = params;

  PointCloud accumulated = PointCloud::with_channels(seq.frames.front().cloud.channels());
  for (const auto& pc : per_frame) accumulated.append(pc);
  prov.accumulated_points = accumulated.size();

  PointCloud down = voxel_downsample(accumulated, params.voxel);
  prov.downsampled_points = down.size();
  PointCloud filtered = radius_outlier_removal(down, params.outlier_radius, params.min_neighbors);
  prov.outliers_removed = down.size() - filtered.size();

  std::vector<OrientedBox3> global_boxes;
  std::vector<Vec3> enlargements;
  for (const auto& frame : seq.frames) {
    for (const auto& box : frame.boxes) {
      global_boxes.push_back(box.transformed(frame.sensor_pose));
      enlargements.push_back(policy.for_track(box.track_id));
    }
  }
  std::vector<std::size_t> keep;
  keep.reserve(filtered.size());
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    bool inside = false;
    for (std::size_t b = 0; b < global_boxes.size() && !inside; ++b)
      inside = global_boxes[b].contains(filtered.xyz[i], enlargements[b]);
    if (!inside) keep.push_back(i);
  }
  prov.recropped_points = filtered.size() - keep.size();
  map.cloud = filtered.select(keep);
  if (map.cloud.empty()) throw EmptyMapError("background map is empty after filtering");
  return map;
}

double nearest_neighbor_rms(const PointCloud& source, const PointCloud& target) {
  if (source.empty() || target.empty()) throw DomainError("RMS needs non-empty clouds");
  const KdTree tree(target.xyz);
  std::vector<double> sq(source.size());
  parallel_for(source.size(), [&](std::size_t i) { sq[i] = tree.nearest(source.xyz[i]).sq_distance; });
  double s = 0.0;
  for (double v : sq) s += v;
  return std::sqrt(s / static_cast<double>(sq.size()));
}

void ObjectAsset::validate() const {
  cloud.validate();
  canonical_box.validate();
  if (canonical_box.yaw != 0.0 || canonical_box.center != Vec3::Zero())
    throw DomainError("asset box must sit at the origin with zero yaw");
  for (const auto& p : cloud.xyz) {
    if ((p.cwiseAbs() - (0.5 * canonical_box.dims + Vec3::Constant(0.01))).maxCoeff() > 1e-9)
      throw DomainError("asset point lies outside its canonical box");
  }
}

ObjectAsset reconstruct_object(const ObjectTrack& track, const ReconstructParams& params) {
  if (track.observations.empty()) throw DomainError("track " + track.track_id + " has no observations");
  ObjectAsset asset;
  asset.track_id = track.track_id;
  asset.label = track.label;
  asset.source = AssetSource::reconstructed;
  asset.provenance.observations = track.observations.size();

  Vec3 dims = Vec3::Zero();
  for (const auto& obs : track.observations) dims = dims.cwiseMax(obs.box_global.dims);
  asset.canonical_box = OrientedBox3::make(Vec3::Zero(), dims, 0.0, track.track_id, track.label);

  PointCloud acc = PointCloud::with_channels(track.observations.front().cluster.channels());
  for (const auto& obs : track.observations) {
    PointCloud cluster = obs.cluster;
    if (cluster.empty()) continue;
    if (acc.size() > params.icp_min_points && cluster.size() > params.icp_min_points) {
      const double before = nearest_neighbor_rms(cluster, acc);
      const IcpResult icp = icp_align(cluster, acc, RigidTransform::identity(), params.icp);
      if (icp.point_to_point_fallback) ++asset.provenance.icp_fallbacks;
      PointCloud aligned = transform_cloud(cluster, icp.transform);
      if (nearest_neighbor_rms(aligned, acc) < before) {
        cluster = std::move(aligned);
        ++asset.provenance.icp_applied;
      } else {
        ++asset.provenance.icp_rejected;
      }
    }
    acc.append(cluster);
  }

  const Vec3 half = 0.5 * dims + Vec3::Constant(0.01);
  std::vector<std::size_t> keep;
  keep.reserve(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    if ((acc.xyz[i].cwiseAbs() - half).maxCoeff() <= 0.0) keep.push_back(i);
  asset.provenance.clipped_points = acc.size() - keep.size();
  asset.cloud = acc.select(keep);
  return asset;
}

ObjectLibrary build_object_library(const SequenceDataset& seq, const ReconstructParams& params) {
  params.validate();
  const auto tracks = collect_tracks(seq);
  std::vector<ObjectAsset> assets(tracks.size());
  parallel_for(tracks.size(), [&](std::size_t i) { assets[i] = reconstruct_object(tracks[i], params); });
  ObjectLibrary lib;
  for (auto& a : assets) lib.emplace(a.track_id, std::move(a));
  return lib;
}

}  // namespace lidarsim
