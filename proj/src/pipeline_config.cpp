// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include "lidarsim/error.hpp"
#include "lidarsim/metrics.hpp"
#include "lidarsim/pipeline.hpp"

namespace lidarsim {
namespace fs = std::filesystem;

namespace {

/// Reads optional fields, recording type problems instead of throwing.
class FieldReader {
 public:
  explicit FieldReader(std::vector<std::string>& violations) : v_(violations) {}

  /// Returns the sub-object, or nullptr when absent or not an object.
  const Json* section(const Json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) return nullptr;
    const Json& s = obj.at(key);
    if (!s.is_object()) {
      v_.push_back(path + ": expected an object");
      return nullptr;
    }
    return &s;
  }

  template <class T>
  bool read(const Json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return false;
    const Json& j = obj.at(key);
    try {
      if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) throw std::invalid_argument("type");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!j.is_number_integer()) throw std::invalid_argument("type");
        if (std::is_unsigned_v<T> && j.is_number_integer() && !j.is_number_unsigned() &&
            j.get<long long>() < 0)
          throw std::invalid_argument("sign");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) throw std::invalid_argument("type");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) throw std::invalid_argument("type");
      }
      out = j.get<T>();
      return true;
    } catch (const std::exception&) {
      v_.push_back(path + ": expected " + type_name<T>() + ", got " + j.dump());
      return false;
    }
  }

  bool read_vec3(const Json& obj, const char* key, const std::string& path, Vec3& out) {
    if (!obj.contains(key)) return false;
    const Json& j = obj.at(key);
    if (j.is_number()) {
      out = Vec3::Constant(j.get<double>());
      return true;
    }
    if (j.is_array() && j.size() == 3 && j[0].is_number() && j[1].is_number() && j[2].is_number()) {
      out = vec3_from_json(j);
      return true;
    }
    v_.push_back(path + ": expected a number or [x, y, z], got " + j.dump());
    return false;
  }

  bool read_path(const Json& obj, const char* key, const std::string& path, const fs::path& base,
                 fs::path& out) {
    std::string s;
    if (!read(obj, key, path, s)) return false;
    if (s.empty()) {
      v_.push_back(path + ": must not be empty");
      return false;
    }
    out = fs::path(s).is_absolute() || base.empty() ? fs::path(s) : base / s;
    return true;
  }

  void unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& path) {
    for (const auto& [k, _] : obj.items()) {
      bool ok = false;
      for (const char* name : known) ok = ok || k == name;
      if (!ok) v_.push_back((path.empty() ? "" : path + ".") + k + ": unknown field");
    }
  }

 private:
  template <class T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return std::is_unsigned_v<T> ? "a non-negative integer" : "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list";
  }

  std::vector<std::string>& v_;
};

void read_axis(FieldReader& r, const Json& bins, const char* key, const std::string& path, AxisBins& a,
               bool degrees) {
  const Json* s = r.section(bins, key, path);
  if (!s) return;
  r.unknown(*s, {"min", "max", "step"}, path);
  double lo = degrees ? rad2deg(a.min) : a.min, hi = degrees ? rad2deg(a.max) : a.max,
         st = degrees ? rad2deg(a.step) : a.step;
  r.read(*s, "min", path + ".min", lo);
  r.read(*s, "max", path + ".max", hi);
  r.read(*s, "step", path + ".step", st);
  a = degrees ? AxisBins{deg2rad(lo), deg2rad(hi), deg2rad(st)} : AxisBins{lo, hi, st};
}

Json axis_json(const AxisBins& a, bool degrees) {
  return degrees ? Json{{"min", rad2deg(a.min)}, {"max", rad2deg(a.max)}, {"step", rad2deg(a.step)}}
                 : Json{{"min", a.min}, {"max", a.max}, {"step", a.step}};
}

template <class T>
std::string show(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void validate_into(const PipelineConfig& c, std::vector<std::string>& v) {
  auto need = [&](bool ok, const std::string& field, const std::string& rule) {
    if (!ok) v.push_back(field + ": " + rule);
  };
  need(!c.paths.sequence.empty(), "paths.sequence", "required");
  need(!c.paths.output_dir.empty(), "paths.output_dir", "required");
  need(c.workers >= 0, "workers", "must be >= 0 (got " + show(c.workers) + ")");

  const RaycastConfig& r = c.raycast;
  need(r.width >= 1, "raycast.width", "must be >= 1 (got " + show(r.width) + ")");
  need(r.height >= 1, "raycast.height", "must be >= 1 (got " + show(r.height) + ")");
  need(r.peak_width > 0.0, "raycast.peak_width", "must be > 0 (got " + show(r.peak_width) + ")");
  need(r.idw_power >= 0.0 && std::isfinite(r.idw_power), "raycast.idw_power",
       "must be finite and >= 0 (got " + show(r.idw_power) + ")");
  need(r.azimuth_span > 0.0 && r.azimuth_span <= 2 * kPi + 1e-12, "raycast.azimuth_span_deg",
       "must lie in (0, 360]");
  need(r.azimuth_min >= -kPi && r.azimuth_min <= kPi, "raycast.azimuth_min_deg", "must lie in [-180, 180]");
  need(r.elevation_min < r.elevation_max && r.elevation_min >= -kPi / 2 && r.elevation_max <= kPi / 2,
       "raycast.elevation_min_deg/elevation_max_deg", "must form an increasing interval inside [-90, 90]");

  const RaydropConfig& d = c.raydrop;
  const std::pair<const char*, const AxisBins*> axes[] = {
      {"raydrop.bins.distance", &d.bins.distance},
      {"raydrop.bins.incidence_deg", &d.bins.incidence},
      {"raydrop.bins.intensity", &d.bins.intensity}};
  for (const auto& [name, a] : axes) {
    need(a->max > a->min, name, "max must exceed min");
    need(a->step > 0.0, std::string(name) + ".step", "must be > 0");
  }
  need(d.min_sim_count >= 1, "raydrop.min_sim_count", "must be >= 1");
  need(d.threshold >= 0.0 && d.threshold <= 1.0, "raydrop.threshold",
       "must lie in [0, 1] (got " + show(d.threshold) + ")");
  need(d.model == "mlp" || d.model == "table", "raydrop.model", "must be \"mlp\" or \"table\"");
  need(d.normal_neighbors >= 3, "raydrop.normal_neighbors", "must be >= 3");
  need(!d.mlp.hidden.empty(), "raydrop.mlp.hidden", "must list at least one layer width");
  for (int h : d.mlp.hidden) need(h > 0, "raydrop.mlp.hidden", "widths must be > 0");
  need(d.mlp.epochs > 0, "raydrop.mlp.epochs", "must be > 0");
  need(d.mlp.batch_size > 0, "raydrop.mlp.batch_size", "must be > 0");
  need(d.mlp.learning_rate > 0.0, "raydrop.mlp.learning_rate", "must be > 0");
  need(d.mlp.final_lr_fraction >= 0.0 && d.mlp.final_lr_fraction <= 1.0, "raydrop.mlp.final_lr_fraction",
       "must lie in [0, 1]");
  need(d.mlp.beta1 >= 0.0 && d.mlp.beta1 < 1.0, "raydrop.mlp.beta1", "must lie in [0, 1)");
  need(d.mlp.beta2 >= 0.0 && d.mlp.beta2 < 1.0, "raydrop.mlp.beta2", "must lie in [0, 1)");
  need(d.mlp.epsilon > 0.0, "raydrop.mlp.epsilon", "must be > 0");
  need(d.mlp.record_every > 0, "raydrop.mlp.record_every", "must be > 0");

  const ReconstructParams& p = c.reconstruct;
  need(p.movement_threshold >= 0.0, "reconstruct.movement_threshold", "must be >= 0");
  need((p.dynamic_enlargement.array() >= 0.0).all(), "reconstruct.dynamic_enlargement", "must be >= 0");
  need((p.static_enlargement.array() >= 0.0).all(), "reconstruct.static_enlargement", "must be >= 0");
  need(p.voxel > 0.0, "reconstruct.voxel", "must be > 0 (got " + show(p.voxel) + ")");
  need(p.outlier_radius > 0.0, "reconstruct.outlier_radius", "must be > 0 (got " + show(p.outlier_radius) + ")");
  need(p.min_neighbors >= 1, "reconstruct.min_neighbors", "must be >= 1");
  need(p.icp_min_points >= 10, "reconstruct.icp_min_points", "must be >= 10");
  need(p.icp.max_iterations >= 1, "reconstruct.icp.max_iterations", "must be >= 1");
  need(p.icp.tolerance > 0.0, "reconstruct.icp.tolerance", "must be > 0");
  need(p.icp.normal_neighbors >= 3, "reconstruct.icp.normal_neighbors", "must be >= 3");
  need(p.icp.rejection_factor > 0.0, "reconstruct.icp.rejection_factor", "must be > 0");
  need(p.icp.degeneracy_ratio > 0.0 && p.icp.degeneracy_ratio < 1.0, "reconstruct.icp.degeneracy_ratio",
       "must lie in (0, 1)");

  need(c.metrics.voxel > 0.0, "metrics.voxel", "must be > 0");
  need((c.metrics.crop_extent.array() > 0.0).all(), "metrics.crop_extent", "must be > 0 on every axis");

  const GridsearchConfig& g = c.gridsearch;
  need(!g.widths.empty() && !g.heights.empty() && !g.peak_widths.empty() && !g.idw_powers.empty(),
       "gridsearch", "every candidate list must be non-empty");
  for (int w : g.widths) need(w >= 1, "gridsearch.widths", "entries must be >= 1");
  for (int h : g.heights) need(h >= 1, "gridsearch.heights", "entries must be >= 1");
  for (double pw : g.peak_widths) need(pw > 0.0, "gridsearch.peak_widths", "entries must be > 0");
  for (double ip : g.idw_powers) need(ip >= 0.0, "gridsearch.idw_powers", "entries must be >= 0");
  need(g.max_frames >= 1, "gridsearch.max_frames", "must be >= 1");

  need(c.synth.coverage_tolerance_deg >= 0.0, "synth.coverage_tolerance_deg", "must be >= 0");
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const Json& j, const fs::path& base_dir) {
  std::vector<std::string> v;
  PipelineConfig c;
  if (!j.is_object()) throw ConfigError({"config: expected a JSON object"});
  FieldReader r(v);
  r.unknown(j, {"paths", "format", "seed", "workers", "raycast", "raydrop", "reconstruct", "metrics",
                "gridsearch", "synth"},
            "");

  if (const Json* s = r.section(j, "paths", "paths")) {
    r.unknown(*s, {"sequence", "output_dir", "beam_table", "sensor_spec", "sim_sequence", "real_sequence"},
              "paths");
    r.read_path(*s, "sequence", "paths.sequence", base_dir, c.paths.sequence);
    r.read_path(*s, "output_dir", "paths.output_dir", base_dir, c.paths.output_dir);
    fs::path tmp;
    if (r.read_path(*s, "beam_table", "paths.beam_table", base_dir, tmp)) c.paths.beam_table = tmp;
    if (r.read_path(*s, "sensor_spec", "paths.sensor_spec", base_dir, tmp)) c.paths.sensor_spec = tmp;
    if (r.read_path(*s, "sim_sequence", "paths.sim_sequence", base_dir, tmp)) c.paths.sim_sequence = tmp;
    if (r.read_path(*s, "real_sequence", "paths.real_sequence", base_dir, tmp)) c.paths.real_sequence = tmp;
  }

  std::string fmt;
  if (r.read(j, "format", "format", fmt)) {
    try {
      c.format = parse_cloud_format(fmt);
    } catch (const Error&) {
      v.push_back("format: must be \"ascii-ply\" or \"binary\" (got \"" + fmt + "\")");
    }
  }
  if (!j.contains("seed")) v.push_back("seed: required");
  r.read(j, "seed", "seed", c.seed);
  r.read(j, "workers", "workers", c.workers);

  if (const Json* s = r.section(j, "raycast", "raycast")) {
    r.unknown(*s, {"width", "height", "peak_width", "idw_power", "azimuth_min_deg", "azimuth_span_deg",
                   "elevation_min_deg", "elevation_max_deg", "method"},
              "raycast");
    RaycastConfig& rc = c.raycast;
    r.read(*s, "width", "raycast.width", rc.width);
    r.read(*s, "height", "raycast.height", rc.height);
    r.read(*s, "peak_width", "raycast.peak_width", rc.peak_width);
    r.read(*s, "idw_power", "raycast.idw_power", rc.idw_power);
    double deg;
    if (r.read(*s, "azimuth_min_deg", "raycast.azimuth_min_deg", deg)) rc.azimuth_min = deg2rad(deg);
    if (r.read(*s, "azimuth_span_deg", "raycast.azimuth_span_deg", deg)) rc.azimuth_span = deg2rad(deg);
    if (r.read(*s, "elevation_min_deg", "raycast.elevation_min_deg", deg)) rc.elevation_min = deg2rad(deg);
    if (r.read(*s, "elevation_max_deg", "raycast.elevation_max_deg", deg)) rc.elevation_max = deg2rad(deg);
    std::string method;
    if (r.read(*s, "method", "raycast.method", method)) {
      if (method == "fpa")
        c.raycast_method = RaycastMethod::fpa;
      else if (method == "cp")
        c.raycast_method = RaycastMethod::cp;
      else
        v.push_back("raycast.method: must be \"fpa\" or \"cp\" (got \"" + method + "\")");
    }
  }

  if (const Json* s = r.section(j, "raydrop", "raydrop")) {
    r.unknown(*s, {"bins", "min_sim_count", "mlp", "threshold", "mode", "model", "normal_neighbors"},
              "raydrop");
    RaydropConfig& d = c.raydrop;
    if (const Json* b = r.section(*s, "bins", "raydrop.bins")) {
      r.unknown(*b, {"distance", "incidence_deg", "intensity"}, "raydrop.bins");
      read_axis(r, *b, "distance", "raydrop.bins.distance", d.bins.distance, false);
      read_axis(r, *b, "incidence_deg", "raydrop.bins.incidence_deg", d.bins.incidence, true);
      read_axis(r, *b, "intensity", "raydrop.bins.intensity", d.bins.intensity, false);
    }
    r.read(*s, "min_sim_count", "raydrop.min_sim_count", d.min_sim_count);
    if (const Json* m = r.section(*s, "mlp", "raydrop.mlp")) {
      r.unknown(*m, {"hidden", "epochs", "batch_size", "learning_rate", "final_lr_fraction", "beta1", "beta2",
                     "epsilon", "record_every"},
                "raydrop.mlp");
      r.read(*m, "hidden", "raydrop.mlp.hidden", d.mlp.hidden);
      r.read(*m, "epochs", "raydrop.mlp.epochs", d.mlp.epochs);
      r.read(*m, "batch_size", "raydrop.mlp.batch_size", d.mlp.batch_size);
      r.read(*m, "learning_rate", "raydrop.mlp.learning_rate", d.mlp.learning_rate);
      r.read(*m, "final_lr_fraction", "raydrop.mlp.final_lr_fraction", d.mlp.final_lr_fraction);
      r.read(*m, "beta1", "raydrop.mlp.beta1", d.mlp.beta1);
      r.read(*m, "beta2", "raydrop.mlp.beta2", d.mlp.beta2);
      r.read(*m, "epsilon", "raydrop.mlp.epsilon", d.mlp.epsilon);
      r.read(*m, "record_every", "raydrop.mlp.record_every", d.mlp.record_every);
    }
    r.read(*s, "threshold", "raydrop.threshold", d.threshold);
    std::string mode;
    if (r.read(*s, "mode", "raydrop.mode", mode)) {
      if (mode == "threshold")
        d.mode = DropMode::threshold;
      else if (mode == "bernoulli")
        d.mode = DropMode::bernoulli;
      else
        v.push_back("raydrop.mode: must be \"threshold\" or \"bernoulli\" (got \"" + mode + "\")");
    }
    r.read(*s, "model", "raydrop.model", d.model);
    r.read(*s, "normal_neighbors", "raydrop.normal_neighbors", d.normal_neighbors);
  }

  if (const Json* s = r.section(j, "reconstruct", "reconstruct")) {
    r.unknown(*s, {"movement_threshold", "dynamic_enlargement", "static_enlargement", "voxel", "outlier_radius",
                   "min_neighbors", "icp_min_points", "icp"},
              "reconstruct");
    ReconstructParams& p = c.reconstruct;
    r.read(*s, "movement_threshold", "reconstruct.movement_threshold", p.movement_threshold);
    r.read_vec3(*s, "dynamic_enlargement", "reconstruct.dynamic_enlargement", p.dynamic_enlargement);
    r.read_vec3(*s, "static_enlargement", "reconstruct.static_enlargement", p.static_enlargement);
    r.read(*s, "voxel", "reconstruct.voxel", p.voxel);
    r.read(*s, "outlier_radius", "reconstruct.outlier_radius", p.outlier_radius);
    r.read(*s, "min_neighbors", "reconstruct.min_neighbors", p.min_neighbors);
    r.read(*s, "icp_min_points", "reconstruct.icp_min_points", p.icp_min_points);
    if (const Json* i = r.section(*s, "icp", "reconstruct.icp")) {
      r.unknown(*i, {"max_iterations", "tolerance", "normal_neighbors", "rejection_factor", "degeneracy_ratio"},
                "reconstruct.icp");
      r.read(*i, "max_iterations", "reconstruct.icp.max_iterations", p.icp.max_iterations);
      r.read(*i, "tolerance", "reconstruct.icp.tolerance", p.icp.tolerance);
      r.read(*i, "normal_neighbors", "reconstruct.icp.normal_neighbors", p.icp.normal_neighbors);
      r.read(*i, "rejection_factor", "reconstruct.icp.rejection_factor", p.icp.rejection_factor);
      r.read(*i, "degeneracy_ratio", "reconstruct.icp.degeneracy_ratio", p.icp.degeneracy_ratio);
    }
  }

  if (const Json* s = r.section(j, "metrics", "metrics")) {
    r.unknown(*s, {"voxel", "crop_extent"}, "metrics");
    r.read(*s, "voxel", "metrics.voxel", c.metrics.voxel);
    r.read_vec3(*s, "crop_extent", "metrics.crop_extent", c.metrics.crop_extent);
  }

  if (const Json* s = r.section(j, "gridsearch", "gridsearch")) {
    r.unknown(*s, {"widths", "heights", "peak_widths", "idw_powers", "max_frames"}, "gridsearch");
    r.read(*s, "widths", "gridsearch.widths", c.gridsearch.widths);
    r.read(*s, "heights", "gridsearch.heights", c.gridsearch.heights);
    r.read(*s, "peak_widths", "gridsearch.peak_widths", c.gridsearch.peak_widths);
    r.read(*s, "idw_powers", "gridsearch.idw_powers", c.gridsearch.idw_powers);
    r.read(*s, "max_frames", "gridsearch.max_frames", c.gridsearch.max_frames);
  }

  if (const Json* s = r.section(j, "synth", "synth")) {
    r.unknown(*s, {"coverage_tolerance_deg", "apply_raydrop"}, "synth");
    r.read(*s, "coverage_tolerance_deg", "synth.coverage_tolerance_deg", c.synth.coverage_tolerance_deg);
    r.read(*s, "apply_raydrop", "synth.apply_raydrop", c.synth.apply_raydrop);
  }

  validate_into(c, v);
  if (!v.empty()) throw ConfigError(v);
  return c;
}

void PipelineConfig::validate() const {
  std::vector<std::string> v;
  validate_into(*this, v);
  if (!v.empty()) throw ConfigError(v);
}

Json PipelineConfig::to_json() const {
  Json paths{{"sequence", this->paths.sequence.string()}, {"output_dir", this->paths.output_dir.string()}};
  if (this->paths.beam_table) paths["beam_table"] = this->paths.beam_table->string();
  if (this->paths.sensor_spec) paths["sensor_spec"] = this->paths.sensor_spec->string();
  if (this->paths.sim_sequence) paths["sim_sequence"] = this->paths.sim_sequence->string();
  if (this->paths.real_sequence) paths["real_sequence"] = this->paths.real_sequence->string();

  Json rc = lidarsim::to_json(raycast);
  rc["method"] = raycast_method == RaycastMethod::fpa ? "fpa" : "cp";

  const MlpHyperParams& m = raydrop.mlp;
  Json rd{{"bins",
           {{"distance", axis_json(raydrop.bins.distance, false)},
            {"incidence_deg", axis_json(raydrop.bins.incidence, true)},
            {"intensity", axis_json(raydrop.bins.intensity, false)}}},
          {"min_sim_count", raydrop.min_sim_count},
          {"mlp",
           {{"hidden", m.hidden},
            {"epochs", m.epochs},
            {"batch_size", m.batch_size},
            {"learning_rate", m.learning_rate},
            {"final_lr_fraction", m.final_lr_fraction},
            {"beta1", m.beta1},
            {"beta2", m.beta2},
            {"epsilon", m.epsilon},
            {"record_every", m.record_every}}},
          {"threshold", raydrop.threshold},
          {"mode", raydrop.mode == DropMode::threshold ? "threshold" : "bernoulli"},
          {"model", raydrop.model},
          {"normal_neighbors", raydrop.normal_neighbors}};

  const ReconstructParams& p = reconstruct;
  Json rec{{"movement_threshold", p.movement_threshold},
           {"dynamic_enlargement", lidarsim::to_json(p.dynamic_enlargement)},
           {"static_enlargement", lidarsim::to_json(p.static_enlargement)},
           {"voxel", p.voxel},
           {"outlier_radius", p.outlier_radius},
           {"min_neighbors", p.min_neighbors},
           {"icp_min_points", p.icp_min_points},
           {"icp",
            {{"max_iterations", p.icp.max_iterations},
             {"tolerance", p.icp.tolerance},
             {"normal_neighbors", p.icp.normal_neighbors},
             {"rejection_factor", p.icp.rejection_factor},
             {"degeneracy_ratio", p.icp.degeneracy_ratio}}}};

  return Json{{"paths", paths},
              {"format", std::string(to_string(format))},
              {"seed", seed},
              {"raycast", rc},
              {"raydrop", rd},
              {"reconstruct", rec},
              {"metrics", {{"voxel", metrics.voxel}, {"crop_extent", lidarsim::to_json(metrics.crop_extent)}}},
              {"gridsearch",
               {{"widths", gridsearch.widths},
                {"heights", gridsearch.heights},
                {"peak_widths", gridsearch.peak_widths},
                {"idw_powers", gridsearch.idw_powers},
                {"max_frames", gridsearch.max_frames}}},
              {"synth",
               {{"coverage_tolerance_deg", synth.coverage_tolerance_deg},
                {"apply_raydrop", synth.apply_raydrop}}}};
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const LoadError& e) {
    throw ConfigError({std::string("config: ") + e.what()});
  }
  return PipelineConfig::from_json(j, path.parent_path());
}

}  // namespace lidarsim
