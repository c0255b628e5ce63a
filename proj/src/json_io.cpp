// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/json_io.hpp"

#include <fstream>
#include <sstream>

#include "lidarsim/error.hpp"

namespace lidarsim {

Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw DomainError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json to_json(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  Json rows = Json::array();
  for (int r = 0; r < 4; ++r) rows.push_back(Json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
  return rows;
}

RigidTransform transform_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw DomainError("expected a 4x4 matrix");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw DomainError("expected a 4x4 matrix");
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return RigidTransform::from_matrix(m);
}

Json to_json(const OrientedBox3& box) {
  return Json{{"track_id", box.track_id},
              {"class", std::string(to_string(box.label))},
              {"center", to_json(box.center)},
              {"dims", to_json(box.dims)},
              {"yaw", box.yaw}};
}

OrientedBox3 box_from_json(const Json& j) {
  OrientedBox3 b;
  b.track_id = j.at("track_id").get<std::string>();
  b.label = parse_object_class(j.at("class").get<std::string>());
  b.center = vec3_from_json(j.at("center"));
  b.dims = vec3_from_json(j.at("dims"));
  b.yaw = j.at("yaw").get<double>();
  b.validate();
  return b;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), std::nullopt, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_file_bytes(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw LoadError(path.string(), std::nullopt, std::string("invalid JSON: ") + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_file_bytes(path, j.dump(2) + "\n");
}

}  // namespace lidarsim
