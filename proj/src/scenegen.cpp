// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/scenegen.hpp"

#include <algorithm>
#include <cmath>

#include "lidarsim/error.hpp"
#include "lidarsim/random.hpp"

namespace lidarsim::scenegen {

std::vector<Rect> box_faces(const OrientedBox3& box, double intensity) {
  const Mat3 R = box.pose().rotation();
  const Vec3 ax = R.col(0), ay = R.col(1), az = R.col(2);
  const Vec3 h = 0.5 * box.dims;
  return {
      {box.center + h.x() * ax, ay, az, h.y(), h.z(), intensity},
      {box.center - h.x() * ax, az, ay, h.z(), h.y(), intensity},
      {box.center + h.y() * ay, az, ax, h.z(), h.x(), intensity},
      {box.center - h.y() * ay, ax, az, h.x(), h.z(), intensity},
      {box.center + h.z() * az, ax, ay, h.x(), h.y(), intensity},
      {box.center - h.z() * az, ay, ax, h.y(), h.x(), intensity},
  };
}

void AnalyticWorld::add_box(const OrientedBox3& box, double intensity) {
  for (const auto& f : box_faces(box, intensity)) faces.push_back(f);
}

std::optional<Hit> AnalyticWorld::intersect(const Vec3& origin, const Vec3& dir, double max_range) const {
  std::optional<Hit> best;
  for (std::size_t k = 0; k < faces.size(); ++k) {
    const Rect& f = faces[k];
    const Vec3 n = f.normal();
    const double dn = dir.dot(n);
    if (std::abs(dn) < 1e-15) continue;
    const double t = (f.center - origin).dot(n) / dn;
    if (!(t > 1e-9) || t > max_range || (best && t >= best->range)) continue;
    const Vec3 local = origin + t * dir - f.center;
    if (std::abs(local.dot(f.u)) > f.half_u + 1e-12 || std::abs(local.dot(f.v)) > f.half_v + 1e-12)
      continue;
    best = Hit{t, origin + t * dir, n, f.intensity, k};
  }
  return best;
}

PointCloud AnalyticWorld::sample(double density, std::uint64_t seed) const {
  if (!(density > 0.0)) throw DomainError("sampling density must be positive");
  Rng rng(seed);
  PointCloud out = PointCloud::with_channels(kIntensity);
  const double pitch = 1.0 / std::sqrt(density);
  for (const auto& f : faces) {
    const int nu = std::max(1, static_cast<int>(std::ceil(2.0 * f.half_u / pitch)));
    const int nv = std::max(1, static_cast<int>(std::ceil(2.0 * f.half_v / pitch)));
    const double du = 2.0 * f.half_u / nu, dv = 2.0 * f.half_v / nv;
    for (int a = 0; a < nu; ++a) {
      for (int b = 0; b < nv; ++b) {
        const double s = -f.half_u + (a + rng.uniform()) * du;
        const double t = -f.half_v + (b + rng.uniform()) * dv;
        out.xyz.push_back(f.center + s * f.u + t * f.v);
        out.intensity->push_back(f.intensity);
      }
    }
  }
  return out;
}

double AnalyticWorld::area() const {
  double a = 0.0;
  for (const auto& f : faces) a += f.area();
  return a;
}

BeamTable lattice_beams(int beams, double elevation_min, double elevation_max,
                        double azimuth_resolution, double max_range) {
  if (beams < 1 || !(azimuth_resolution > 0.0) || !(elevation_max >= elevation_min))
    throw DomainError("invalid beam lattice");
  BeamTable t;
  t.max_range = max_range;
  const auto columns = static_cast<int>(std::round(2.0 * kPi / azimuth_resolution));
  for (int b = 0; b < beams; ++b) {
    const double el =
        beams == 1 ? elevation_min : elevation_min + (elevation_max - elevation_min) * b / (beams - 1);
    for (int c = 0; c < columns; ++c) {
      t.rays.push_back({normalize_angle(-kPi + (c + 0.5) * azimuth_resolution), el, std::nullopt});
      t.beam_ids.push_back(b);
    }
  }
  return t;
}

double default_drop_law(double distance, double incidence, double intensity) {
  const double g = incidence / (kPi / 2);
  return std::clamp(0.97 - 0.008 * distance - 0.4 * g * g + 0.3 * (intensity - 0.5), 0.02, 0.98);
}

PointCloud scan(const AnalyticWorld& world, const RigidTransform& sensor_pose, const BeamTable& beams,
                const ScanOptions& options) {
  beams.validate();
  PointCloud out = PointCloud::with_channels(kIntensity | kBeamId);
  const Vec3 origin = sensor_pose.translation();
  for (std::size_t r = 0; r < beams.rays.size(); ++r) {
    const Vec3 dir = direction_from_angles(beams.rays[r].azimuth, beams.rays[r].elevation);
    const auto hit = world.intersect(origin, sensor_pose.rotate(dir), beams.max_range);
    if (!hit) continue;
    const double cos_inc = std::abs(sensor_pose.rotate(dir).dot(hit->normal));
    const double intensity = std::clamp(hit->intensity * (0.5 + 0.5 * cos_inc), 0.0, 1.0);
    double range = hit->range;
    if (options.range_noise_sd > 0.0) {
      // Counter-based so the noise of a ray does not depend on other rays.
      const double u1 = std::max(hash_uniform(options.seed, 2 * r), 1e-300);
      const double u2 = hash_uniform(options.seed, 2 * r + 1);
      range += options.range_noise_sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }
    if (!(range > 0.0) || range > beams.max_range) continue;
    if (options.drop_law) {
      const double p = options.drop_law(range, std::acos(std::clamp(cos_inc, 0.0, 1.0)), intensity);
      if (hash_uniform(splitmix64(options.seed ^ 0xD80Bull), r) >= p) continue;
    }
    out.xyz.push_back(range * dir);
    out.intensity->push_back(intensity);
    out.beam_id->push_back(beams.beam_id(r));
  }
  return out;
}

DemoFrameWorld demo_world(const DemoSpec& spec, std::size_t frame) {
  DemoFrameWorld w;
  const double t = static_cast<double>(frame) * spec.frame_dt;
  w.sensor_pose = RigidTransform::from_yaw(0.01 * static_cast<double>(frame),
                                           Vec3(spec.ego_speed * t, 0.3, spec.sensor_height));

  auto& world = w.world;
  // Street: ground, two facades and two end walls.
  world.add({Vec3(20, 0, 0), Vec3::UnitX(), Vec3::UnitY(), 70.0, 12.0, 0.25});
  world.add({Vec3(20, 12, 4), Vec3::UnitX(), Vec3::UnitZ(), 70.0, 4.0, 0.6});
  world.add({Vec3(20, -12, 4), Vec3::UnitZ(), Vec3::UnitX(), 4.0, 70.0, 0.55});
  world.add({Vec3(90, 0, 4), Vec3::UnitZ(), Vec3::UnitY(), 4.0, 12.0, 0.5});
  world.add({Vec3(-50, 0, 4), Vec3::UnitY(), Vec3::UnitZ(), 12.0, 4.0, 0.5});
  // A kiosk and a slanted ramp give the static map some non-axis structure.
  world.add_box(OrientedBox3::make(Vec3(25, 9.5, 1.25), Vec3(3.0, 2.0, 2.5), 0.3), 0.7);
  const Vec3 ramp_u = Vec3(1, 0, 0.25).normalized();
  world.add({Vec3(40, -8, 0.8), ramp_u, Vec3::UnitY(), 3.2, 1.5, 0.45});

  const struct {
    const char* id;
    Vec3 center;
    double yaw;
    double intensity;
  } parked[] = {{"car_p0", {10, -6, 0.8}, 0.05, 0.8},
                {"car_p1", {18, 6, 0.8}, kPi - 0.03, 0.75},
                {"car_p2", {-6, 6.2, 0.8}, 0.0, 0.85},
                {"car_p3", {32, -6.1, 0.8}, 0.02, 0.7}};
  for (const auto& p : parked) {
    w.objects.push_back({OrientedBox3::make(p.center, Vec3(4.5, 1.9, 1.6), p.yaw, p.id,
                                            ObjectClass::vehicle),
                         p.intensity});
  }
  if (spec.dynamic_objects) {
    w.objects.push_back({OrientedBox3::make(Vec3(-4 + 8.0 * t, -2.5, 0.75), Vec3(4.6, 2.0, 1.5),
                                            0.0, "car_m0", ObjectClass::vehicle),
                         0.9});
    w.objects.push_back({OrientedBox3::make(Vec3(14, 4.5 - 1.4 * t, 0.9), Vec3(0.6, 0.7, 1.8),
                                            -kPi / 2, "ped_0", ObjectClass::pedestrian),
                         0.65});
  }
  for (const auto& o : w.objects) world.add_box(o.box, o.intensity);
  return w;
}

SequenceDataset make_demo_sequence(const DemoSpec& spec) {
  if (spec.frames == 0) throw DomainError("demo sequence needs at least one frame");
  SequenceDataset seq;
  seq.sensor_name = "demo";
  seq.max_range = spec.max_range;
  const BeamTable beams = lattice_beams(spec.beams, spec.elevation_min, spec.elevation_max,
                                        spec.azimuth_resolution, spec.max_range);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const DemoFrameWorld w = demo_world(spec, f);
    ScanOptions opt;
    opt.range_noise_sd = spec.range_noise_sd;
    opt.seed = splitmix64(spec.seed + f);
    if (spec.apply_drop_law) opt.drop_law = default_drop_law;
    FrameRecord rec;
    rec.timestamp_us = static_cast<std::int64_t>(std::llround(static_cast<double>(f) * spec.frame_dt * 1e6));
    rec.sensor_pose = w.sensor_pose;
    rec.cloud = scan(w.world, w.sensor_pose, beams, opt);
    const RigidTransform to_sensor = w.sensor_pose.inverse();
    for (const auto& o : w.objects) {
      const OrientedBox3 b = o.box.transformed(to_sensor);
      if (b.center.norm() <= spec.max_range) rec.boxes.push_back(b);
    }
    seq.frames.push_back(std::move(rec));
  }
  seq.validate();
  return seq;
}

}  // namespace lidarsim::scenegen
