// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "lidarsim/error.hpp"
#include "lidarsim/json_io.hpp"
#include "lidarsim/reconstruct.hpp"

namespace lidarsim {
namespace fs = std::filesystem;
namespace {

Json params_to_json(const ReconstructParams& p) {
  return Json{{"movement_threshold", p.movement_threshold},
              {"dynamic_enlargement", to_json(p.dynamic_enlargement)},
              {"static_enlargement", to_json(p.static_enlargement)},
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
}

ReconstructParams params_from_json(const Json& j) {
  ReconstructParams p;
  p.movement_threshold = j.at("movement_threshold").get<double>();
  p.dynamic_enlargement = vec3_from_json(j.at("dynamic_enlargement"));
  p.static_enlargement = vec3_from_json(j.at("static_enlargement"));
  p.voxel = j.at("voxel").get<double>();
  p.outlier_radius = j.at("outlier_radius").get<double>();
  p.min_neighbors = j.at("min_neighbors").get<int>();
  p.icp_min_points = j.at("icp_min_points").get<std::size_t>();
  const Json& icp = j.at("icp");
  p.icp.max_iterations = icp.at("max_iterations").get<int>();
  p.icp.tolerance = icp.at("tolerance").get<double>();
  p.icp.normal_neighbors = icp.at("normal_neighbors").get<std::size_t>();
  p.icp.rejection_factor = icp.at("rejection_factor").get<double>();
  p.icp.degeneracy_ratio = icp.at("degeneracy_ratio").get<double>();
  return p;
}

std::string safe_file_stem(const std::string& id) {
  std::string s = id.empty() ? "_" : id;
  for (auto& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  if (s.front() == '.') s.front() = '_';
  return s;
}

std::string_view to_string(AssetSource s) {
  return s == AssetSource::reconstructed ? "reconstructed" : "mesh_sampled";
}

AssetSource parse_asset_source(const std::string& s) {
  if (s == "reconstructed") return AssetSource::reconstructed;
  if (s == "mesh_sampled") return AssetSource::mesh_sampled;
  throw DomainError("unknown asset source '" + s + "'");
}

}  // namespace

void save_background(const BackgroundMap& map, const fs::path& dir, CloudFormat format) {
  fs::create_directories(dir);
  const std::string cloud_name = "background" + std::string(file_extension(format));
  write_cloud(map.cloud, dir / cloud_name, format);
  const auto& p = map.provenance;
  write_json_file(dir / "background.json",
                  Json{{"cloud", cloud_name},
                       {"points", map.cloud.size()},
                       {"sequence_id", p.sequence_id},
                       {"frames", p.frames},
                       {"params", params_to_json(p.params)},
                       {"accumulated_points", p.accumulated_points},
                       {"downsampled_points", p.downsampled_points},
                       {"outliers_removed", p.outliers_removed},
                       {"recropped_points", p.recropped_points}});
}

BackgroundMap load_background(const fs::path& dir) {
  const fs::path meta_path = dir / "background.json";
  const Json j = read_json_file(meta_path);
  BackgroundMap map;
  try {
    auto& p = map.provenance;
    p.sequence_id = j.at("sequence_id").get<std::string>();
    p.frames = j.at("frames").get<std::size_t>();
    p.params = params_from_json(j.at("params"));
    p.accumulated_points = j.at("accumulated_points").get<std::size_t>();
    p.downsampled_points = j.at("downsampled_points").get<std::size_t>();
    p.outliers_removed = j.at("outliers_removed").get<std::size_t>();
    p.recropped_points = j.at("recropped_points").get<std::size_t>();
    map.cloud = read_cloud(dir / j.at("cloud").get<std::string>());
  } catch (const Json::exception& e) {
    throw LoadError(meta_path.string(), std::nullopt, std::string("schema mismatch: ") + e.what());
  }
  return map;
}

void save_object_library(const ObjectLibrary& library, const fs::path& dir, CloudFormat format) {
  fs::create_directories(dir);
  for (const auto& [id, asset] : library) {
    const std::string stem = safe_file_stem(id);
    const std::string cloud_name = stem + std::string(file_extension(format));
    write_cloud(asset.cloud, dir / cloud_name, format);
    const auto& pv = asset.provenance;
    write_json_file(dir / (stem + ".json"),
                    Json{{"track_id", asset.track_id},
                         {"class", std::string(to_string(asset.label))},
                         {"source", std::string(to_string(asset.source))},
                         {"cloud", cloud_name},
                         {"points", asset.cloud.size()},
                         {"box", to_json(asset.canonical_box)},
                         {"provenance",
                          {{"observations", pv.observations},
                           {"icp_applied", pv.icp_applied},
                           {"icp_rejected", pv.icp_rejected},
                           {"icp_fallbacks", pv.icp_fallbacks},
                           {"clipped_points", pv.clipped_points}}}});
  }
}

ObjectLibrary load_object_library(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError(dir.string(), std::nullopt, "asset directory not found");
  std::vector<fs::path> metas;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") metas.push_back(e.path());
  std::sort(metas.begin(), metas.end());
  ObjectLibrary lib;
  for (const auto& meta : metas) {
    const Json j = read_json_file(meta);
    try {
      ObjectAsset a;
      a.track_id = j.at("track_id").get<std::string>();
      a.label = parse_object_class(j.at("class").get<std::string>());
      a.source = parse_asset_source(j.at("source").get<std::string>());
      a.canonical_box = box_from_json(j.at("box"));
      const Json& pv = j.at("provenance");
      a.provenance.observations = pv.at("observations").get<std::size_t>();
      a.provenance.icp_applied = pv.at("icp_applied").get<std::size_t>();
      a.provenance.icp_rejected = pv.at("icp_rejected").get<std::size_t>();
      a.provenance.icp_fallbacks = pv.at("icp_fallbacks").get<std::size_t>();
      a.provenance.clipped_points = pv.at("clipped_points").get<std::size_t>();
      a.cloud = read_cloud(dir / j.at("cloud").get<std::string>());
      lib.emplace(a.track_id, std::move(a));
    } catch (const Json::exception& e) {
      throw LoadError(meta.string(), std::nullopt, std::string("schema mismatch: ") + e.what());
    } catch (const DomainError& e) {
      throw LoadError(meta.string(), std::nullopt, e.what());
    }
  }
  return lib;
}

}  // namespace lidarsim
