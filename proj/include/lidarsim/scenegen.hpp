// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lidarsim/geometry.hpp"
#include "lidarsim/ingest.hpp"
#include "lidarsim/point_cloud.hpp"
#include "lidarsim/raycast.hpp"

namespace lidarsim::scenegen {

/// Planar rectangle center + s*u + t*v, |s| <= half_u, |t| <= half_v.
struct Rect {
  Vec3 center = Vec3::Zero();
  Vec3 u = Vec3::UnitX();  // unit
  Vec3 v = Vec3::UnitY();  // unit, orthogonal to u
  double half_u = 0.5;
  double half_v = 0.5;
  double intensity = 0.5;

  Vec3 normal() const { return u.cross(v); }
  double area() const { return 4.0 * half_u * half_v; }
};

struct Hit {
  double range = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double intensity = 0.0;
  std::size_t face = 0;
};

/// Six outward faces of a box.
std::vector<Rect> box_faces(const OrientedBox3& box, double intensity);

/// Scene made of rectangles with exact ray intersection.
struct AnalyticWorld {
  std::vector<Rect> faces;

  void add(const Rect& r) { faces.push_back(r); }
  void add_box(const OrientedBox3& box, double intensity);

  /// Nearest intersection along a unit direction with range in (0, max_range].
  std::optional<Hit> intersect(const Vec3& origin, const Vec3& dir, double max_range) const;

  /// Stratified samples: one uniformly jittered point per cell of a square
  /// lattice with `density` cells per square meter, per face.
  PointCloud sample(double density, std::uint64_t seed) const;

  double area() const;
};

/// Rays on a regular (elevation, azimuth) lattice; beam id = elevation index.
BeamTable lattice_beams(int beams, double elevation_min, double elevation_max,
                        double azimuth_resolution, double max_range);

/// Return probability as a function of (distance, incidence, intensity).
using DropLaw = std::function<double(double, double, double)>;

/// Smooth law used by the demo data and the tests.
double default_drop_law(double distance, double incidence, double intensity);

struct ScanOptions {
  double range_noise_sd = 0.0;
  std::uint64_t seed = 0;
  DropLaw drop_law;  // empty: every hit returns
};

/// Analytic scan in the sensor frame with intensity and beam_id channels.
PointCloud scan(const AnalyticWorld& world, const RigidTransform& sensor_pose, const BeamTable& beams,
                const ScanOptions& options = {});

struct DemoSpec {
  std::size_t frames = 3;
  double frame_dt = 0.5;        // seconds
  double ego_speed = 5.0;       // m/s along +x
  double sensor_height = 1.8;   // meters
  int beams = 32;
  double elevation_min = deg2rad(-16.0);
  double elevation_max = deg2rad(2.0);
  double azimuth_resolution = deg2rad(0.4);
  double max_range = 75.0;
  double range_noise_sd = 0.0;
  bool apply_drop_law = false;
  bool dynamic_objects = true;
  std::uint64_t seed = 0;
};

/// Street-like world at a frame: ground, walls, parked cars and, when
/// enabled, a moving car and a walking pedestrian.
struct DemoObject {
  OrientedBox3 box;  // global
  double intensity = 0.5;
};

struct DemoFrameWorld {
  AnalyticWorld world;  // all surfaces
  std::vector<DemoObject> objects;
  RigidTransform sensor_pose;
};

DemoFrameWorld demo_world(const DemoSpec& spec, std::size_t frame);

SequenceDataset make_demo_sequence(const DemoSpec& spec);

}  // namespace lidarsim::scenegen
