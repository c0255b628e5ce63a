// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lidarsim/error.hpp"
#include "lidarsim/parallel.hpp"
#include "lidarsim/random.hpp"

namespace lidarsim {

void NewSensorSpec::validate() const {
  if (elevations.empty()) throw DomainError("sensor spec needs at least one elevation");
  for (std::size_t i = 0; i < elevations.size(); ++i) {
    if (!std::isfinite(elevations[i]) || std::abs(elevations[i]) > kPi / 2)
      throw DomainError("sensor elevations must lie in [-90, 90] degrees");
    if (i > 0 && !(elevations[i] > elevations[i - 1]))
      throw DomainError("sensor elevations must be strictly increasing");
  }
  if (!beam_ids.empty() && beam_ids.size() != elevations.size())
    throw DomainError("sensor beam_ids must match elevations");
  if (!(azimuth_resolution > 0.0)) throw DomainError("azimuth resolution must be positive");
  if (!(azimuth_end > azimuth_start) || azimuth_end - azimuth_start > 2 * kPi + 1e-9)
    throw DomainError("azimuth field of view must be a non-empty interval of at most 360 degrees");
  if (!(max_range > 0.0)) throw DomainError("max_range must be positive");
}

Json to_json(const NewSensorSpec& s) {
  std::vector<double> el;
  for (double e : s.elevations) el.push_back(rad2deg(e));
  Json j{{"name", s.name},
         {"elevations_deg", el},
         {"azimuth_resolution_deg", rad2deg(s.azimuth_resolution)},
         {"azimuth_fov_deg", {rad2deg(s.azimuth_start), rad2deg(s.azimuth_end)}},
         {"max_range", s.max_range},
         {"mount", to_json(s.mount)}};
  if (!s.beam_ids.empty()) j["beam_ids"] = s.beam_ids;
  return j;
}

NewSensorSpec sensor_spec_from_json(const Json& j) {
  NewSensorSpec s;
  s.name = j.value("name", s.name);
  for (double e : j.at("elevations_deg").get<std::vector<double>>()) s.elevations.push_back(deg2rad(e));
  s.beam_ids = j.value("beam_ids", std::vector<std::int32_t>{});
  s.azimuth_resolution = deg2rad(j.at("azimuth_resolution_deg").get<double>());
  if (j.contains("azimuth_fov_deg")) {
    const auto fov = j.at("azimuth_fov_deg").get<std::vector<double>>();
    if (fov.size() != 2) throw DomainError("azimuth_fov_deg must be [start, end]");
    s.azimuth_start = deg2rad(fov[0]);
    s.azimuth_end = deg2rad(fov[1]);
  }
  s.max_range = j.value("max_range", s.max_range);
  if (j.contains("mount")) s.mount = transform_from_json(j.at("mount"));
  s.validate();
  return s;
}

BeamTable beam_table_from_spec(const NewSensorSpec& spec) {
  spec.validate();
  const auto steps = static_cast<std::size_t>(
      std::ceil((spec.azimuth_end - spec.azimuth_start) / spec.azimuth_resolution - 1e-9));
  BeamTable t;
  t.max_range = spec.max_range;
  t.rays.reserve(steps * spec.elevations.size());
  for (std::size_t e = 0; e < spec.elevations.size(); ++e) {
    const std::int32_t id = spec.beam_ids.empty() ? static_cast<std::int32_t>(e) : spec.beam_ids[e];
    for (std::size_t k = 0; k < steps; ++k) {
      const double az = spec.azimuth_start + static_cast<double>(k) * spec.azimuth_resolution;
      t.rays.push_back({normalize_angle(az), spec.elevations[e], std::nullopt});
      t.beam_ids.push_back(id);
    }
  }
  return t;
}

Json to_json(const ScenarioSpec& s) {
  Json p = Json::array();
  for (const auto& pl : s.placements) p.push_back({{"asset_id", pl.asset_id}, {"box", to_json(pl.box)}});
  return Json{{"background_id", s.background_id}, {"placements", p}};
}

ScenarioSpec scenario_from_json(const Json& j) {
  ScenarioSpec s;
  s.background_id = j.value("background_id", std::string{});
  for (const auto& p : j.at("placements"))
    s.placements.push_back({p.at("asset_id").get<std::string>(), box_from_json(p.at("box"))});
  return s;
}

namespace {

PointCloud conform(const PointCloud& c, unsigned mask) {
  PointCloud out;
  out.xyz = c.xyz;
  if (mask & kIntensity) out.intensity = c.intensity ? *c.intensity : std::vector<double>(c.size(), 0.0);
  if (mask & kElongation)
    out.elongation = c.elongation ? *c.elongation : std::vector<double>(c.size(), 0.0);
  return out;
}

}  // namespace

ComposedScene compose_scene(const BackgroundMap& background, const ObjectLibrary& library,
                            std::span<const Placement> placements) {
  std::vector<std::string> missing;
  unsigned mask = background.cloud.channels();
  for (const auto& p : placements) {
    auto it = library.find(p.asset_id);
    if (it == library.end()) {
      if (std::find(missing.begin(), missing.end(), p.asset_id) == missing.end())
        missing.push_back(p.asset_id);
    } else {
      mask |= it->second.cloud.channels();
      p.box.validate();
    }
  }
  if (!missing.empty()) throw CompositionError(missing);
  mask &= kIntensity | kElongation;

  ComposedScene scene;
  scene.cloud = conform(background.cloud, mask);
  for (const auto& p : placements) {
    const ObjectAsset& a = library.at(p.asset_id);
    scene.cloud.append(conform(transform_cloud(a.cloud, p.box.pose()), mask));
    scene.boxes.push_back(p.box);
  }
  return scene;
}

double TriangleMesh::area() const {
  double a = 0.0;
  for (const auto& f : faces)
    a += 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
  return a;
}

TriangleMesh parse_obj(const std::string& text, const std::filesystem::path& origin) {
  TriangleMesh m;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  auto fail = [&](const std::string& what) { throw ParseError(origin.string(), offset, what); };
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z()) || !v.allFinite()) {
        offset = line_offset;
        fail("bad vertex record");
      }
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::size_t> idx;
      std::string tok;
      while (ls >> tok) {
        long long i = 0;
        try {
          i = std::stoll(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          offset = line_offset;
          fail("bad face index '" + tok + "'");
        }
        const long long n = static_cast<long long>(m.vertices.size());
        const long long resolved = i < 0 ? n + i : i - 1;
        if (i == 0 || resolved < 0 || resolved >= n) {
          offset = line_offset;
          fail("face index out of range");
        }
        idx.push_back(static_cast<std::size_t>(resolved));
      }
      if (idx.size() < 3) {
        offset = line_offset;
        fail("face needs at least three vertices");
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return m;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  return parse_obj(read_file_bytes(path), path);
}

ObjectAsset mesh_to_asset(const TriangleMesh& mesh, std::size_t samples, std::uint64_t seed,
                          ObjectClass label, std::string asset_id, std::optional<double> intensity) {
  if (samples == 0) throw DomainError("mesh sampling needs at least one sample");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                       .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]])
                       .norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw DomainError("mesh has zero surface area");

  Rng rng(seed);
  PointCloud cloud;
  cloud.xyz.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    cloud.xyz.push_back((1.0 - r1) * mesh.vertices[f[0]] + r1 * (1.0 - r2) * mesh.vertices[f[1]] +
                        r1 * r2 * mesh.vertices[f[2]]);
  }
  Vec3 lo = cloud.xyz.front(), hi = lo;
  for (const auto& p : cloud.xyz) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 c = 0.5 * (lo + hi);
  for (auto& p : cloud.xyz) p -= c;
  if (intensity) cloud.intensity = std::vector<double>(samples, *intensity);

  ObjectAsset a;
  a.track_id = std::move(asset_id);
  a.label = label;
  a.cloud = std::move(cloud);
  a.canonical_box = OrientedBox3::make(Vec3::Zero(), (hi - lo).cwiseMax(1e-6), 0.0, a.track_id, label);
  a.source = AssetSource::mesh_sampled;
  a.provenance.observations = 0;
  a.validate();
  return a;
}

const ClassStats& PoseStats::at(ObjectClass c) const {
  auto it = classes.find(c);
  if (it == classes.end()) throw DomainError("no statistics for class " + std::string(to_string(c)));
  return it->second;
}

namespace {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double sd() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

}  // namespace

PoseStats fit_pose_stats(std::span<const PoseSample> samples, double band_width,
                         std::size_t min_samples) {
  if (!(band_width > 0.0)) throw DomainError("distance band width must be positive");
  PoseStats stats;
  stats.band_width = band_width;
  stats.min_samples = min_samples;
  for (ObjectClass c : {ObjectClass::vehicle, ObjectClass::pedestrian, ObjectClass::cyclist,
                        ObjectClass::other}) {
    std::array<Welford, 3> dims, ratio;
    std::map<int, Welford> counts;
    for (const auto& s : samples) {
      if (s.label != c) continue;
      for (int k = 0; k < 3; ++k) dims[k].add(s.dims[k]);
      if (s.extent) {
        for (int k = 0; k < 3; ++k)
          if ((*s.extent)[k] > 1e-6) ratio[k].add(s.dims[k] / (*s.extent)[k]);
      }
      counts[static_cast<int>(std::floor(s.distance / band_width))].add(
          static_cast<double>(s.point_count));
    }
    ClassStats cs;
    cs.samples = dims[0].n;
    cs.low_confidence = cs.samples < min_samples;
    for (int k = 0; k < 3; ++k) {
      cs.dims_mean[k] = dims[k].mean;
      cs.dims_sd[k] = dims[k].sd();
      cs.annotation_ratio[k] = ratio[k].n > 0 ? ratio[k].mean : 1.0;
    }
    for (const auto& [band, w] : counts) cs.point_counts[band] = {w.n, w.mean, w.sd()};
    stats.classes[c] = cs;
  }
  return stats;
}

std::vector<PoseSample> pose_samples(const SequenceDataset& seq) {
  std::vector<PoseSample> out;
  for (const auto& frame : seq.frames) {
    for (const auto& box : frame.boxes) {
      const PointCloud inside = crop_by_box(frame.cloud, box).inside;
      PoseSample s{box.label, box.dims, inside.size(), box.center.norm(), std::nullopt};
      if (inside.size() >= 2) {
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
        for (const auto& p : inside.xyz) {
          const Vec3 l = box.to_local(p);
          lo = lo.cwiseMin(l);
          hi = hi.cwiseMax(l);
        }
        s.extent = hi - lo;
      }
      out.push_back(s);
    }
  }
  return out;
}

Json to_json(const PoseStats& s) {
  Json classes = Json::object();
  for (const auto& [c, cs] : s.classes) {
    Json bands = Json::array();
    for (const auto& [b, cnt] : cs.point_counts)
      bands.push_back({{"band", b},
                       {"min_distance", b * s.band_width},
                       {"samples", cnt.samples},
                       {"mean", cnt.mean},
                       {"sd", cnt.sd}});
    classes[to_string(c)] = {{"samples", cs.samples},
                             {"low_confidence", cs.low_confidence},
                             {"dims_mean", to_json(cs.dims_mean)},
                             {"dims_sd", to_json(cs.dims_sd)},
                             {"annotation_ratio", to_json(cs.annotation_ratio)},
                             {"point_counts", bands}};
  }
  return Json{{"band_width", s.band_width}, {"min_samples", s.min_samples}, {"classes", classes}};
}

bool filter_asset(const ObjectAsset& asset, const PoseStats& stats, const FilterOptions& options) {
  const ClassStats& cs = stats.at(asset.label);
  if (cs.samples == 0) throw DomainError("no samples for class " + std::string(to_string(asset.label)));
  constexpr double kSlack = 1e-12;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(asset.canonical_box.dims[k] - cs.dims_mean[k]) > options.k_sigma * cs.dims_sd[k] + kSlack)
      return false;
  }
  if (options.check_point_count) {
    auto it = cs.point_counts.find(static_cast<int>(std::floor(options.distance / stats.band_width)));
    if (it == cs.point_counts.end()) return false;
    if (std::abs(static_cast<double>(asset.cloud.size()) - it->second.mean) >
        options.k_sigma * it->second.sd + kSlack)
      return false;
  }
  return true;
}

OrientedBox3 loosen_box(const OrientedBox3& tight, const PoseStats& stats) {
  OrientedBox3 b = tight;
  b.dims = tight.dims.cwiseProduct(stats.at(tight.label).annotation_ratio.cwiseMax(1.0));
  return b;
}

Json to_json(const SynthWarning& w) {
  return Json{{"frame", w.frame}, {"code", w.code}, {"message", w.message}};
}

namespace {

RaycastConfig widen_for(const RaycastConfig& base, const BeamTable& beams) {
  RaycastConfig c = base;
  if (beams.rays.empty()) return c;
  double lo = beams.rays.front().elevation, hi = lo;
  for (const auto& r : beams.rays) {
    lo = std::min(lo, r.elevation);
    hi = std::max(hi, r.elevation);
  }
  const double step = base.elevation_step();
  if (lo >= c.elevation_min && hi <= c.elevation_max) return c;
  c.elevation_min = std::max(-kPi / 2, std::min(c.elevation_min, lo - step));
  c.elevation_max = std::min(kPi / 2, std::max(c.elevation_max, hi + step));
  c.height = static_cast<int>(std::ceil((c.elevation_max - c.elevation_min) / step - 1e-9));
  c.elevation_max = c.elevation_min + c.height * step;
  if (c.elevation_max > kPi / 2) {
    c.elevation_max = kPi / 2;
  }
  return c;
}

std::string fmt_deg(double rad) {
  std::ostringstream os;
  os.precision(4);
  os << rad2deg(rad);
  return os.str();
}

}  // namespace

SynthResult synthesize_dataset(const SequenceDataset& seq, const NewSensorSpec& spec,
                               const BackgroundMap& background, const ObjectLibrary& library,
                               const SynthOptions& options) {
  seq.validate();
  spec.validate();
  options.raycast.validate();

  // Elevation coverage of the source sensor, in its own frame.
  double cov_lo = std::numeric_limits<double>::infinity(), cov_hi = -cov_lo;
  for (const auto& f : seq.frames) {
    for (const auto& p : f.cloud.xyz) {
      const double n = p.norm();
      if (n == 0.0) continue;
      const double el = std::asin(std::clamp(p.z() / n, -1.0, 1.0));
      cov_lo = std::min(cov_lo, el);
      cov_hi = std::max(cov_hi, el);
    }
  }

  const BeamTable full = beam_table_from_spec(spec);
  BeamTable beams;
  beams.max_range = full.max_range;
  std::size_t dropped = 0;
  double drop_lo = std::numeric_limits<double>::infinity(), drop_hi = -drop_lo;
  for (std::size_t r = 0; r < full.rays.size(); ++r) {
    const Vec3 dir = spec.mount.rotate(direction_from_angles(full.rays[r].azimuth, full.rays[r].elevation));
    const double el = std::asin(std::clamp(dir.z(), -1.0, 1.0));
    if (el < cov_lo - options.coverage_tolerance || el > cov_hi + options.coverage_tolerance) {
      ++dropped;
      drop_lo = std::min(drop_lo, full.rays[r].elevation);
      drop_hi = std::max(drop_hi, full.rays[r].elevation);
      continue;
    }
    beams.rays.push_back(full.rays[r]);
    beams.beam_ids.push_back(full.beam_id(r));
  }
  const RaycastConfig config = widen_for(options.raycast, beams);

  SynthResult result;
  result.dataset.sensor_name = spec.name;
  result.dataset.max_range = spec.max_range;
  const std::size_t n = seq.frames.size();
  result.dataset.frames.resize(n);
  std::vector<std::vector<SynthWarning>> warnings(n);

  const unsigned scene_mask =
      (background.cloud.channels() | kIntensity) & (kIntensity | kElongation);
  const unsigned out_mask = scene_mask | kBeamId;

  for (std::size_t f = 0; f < n; ++f) {
    const FrameRecord& src = seq.frames[f];
    FrameRecord& dst = result.dataset.frames[f];
    auto& w = warnings[f];
    dst.timestamp_us = src.timestamp_us;
    dst.sensor_pose = src.sensor_pose * spec.mount;
    const RigidTransform global_to_sensor = dst.sensor_pose.inverse();

    if (dropped > 0) {
      w.push_back({f, "fov_exceeds_source",
                   std::to_string(dropped) + " of " + std::to_string(full.rays.size()) +
                       " beams between " + fmt_deg(drop_lo) + " and " + fmt_deg(drop_hi) +
                       " deg lie outside the source elevation coverage [" + fmt_deg(cov_lo) + ", " +
                       fmt_deg(cov_hi) + "] deg and return nothing"});
    }

    std::vector<Placement> placements;
    for (const auto& box : src.boxes) {
      const OrientedBox3 global = box.transformed(src.sensor_pose);
      dst.boxes.push_back(global.transformed(global_to_sensor));
      if (library.count(box.track_id))
        placements.push_back({box.track_id, global});
      else
        w.push_back({f, "missing_asset", "no asset for track '" + box.track_id + "'"});
    }

    PointCloud cloud = PointCloud::with_channels(out_mask);
    try {
      ComposedScene scene = compose_scene(background, library, placements);
      scene.cloud = conform(scene.cloud, scene_mask);
      SimulatedFrame sim = raycast_fpa(scene.cloud, dst.sensor_pose, beams, config);
      if (options.raydrop && !sim.cloud.empty()) {
        const auto& rd = *options.raydrop;
        sim = apply_raydrop(sim, rd.model, rd.threshold, rd.mode, splitmix64(options.seed + f)).frame;
      }
      sim.cloud.normals.reset();
      cloud = std::move(sim.cloud);
    } catch (const Error& e) {
      w.push_back({f, "frame_failed", e.what()});
    }
    dst.cloud = std::move(cloud);
  }
  for (auto& w : warnings)
    result.warnings.insert(result.warnings.end(), w.begin(), w.end());
  return result;
}

}  // namespace lidarsim
