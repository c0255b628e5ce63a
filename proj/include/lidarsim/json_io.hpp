// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "lidarsim/geometry.hpp"

namespace lidarsim {

using Json = nlohmann::json;

Json to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);

/// 4x4 row-major nested array.
Json to_json(const RigidTransform& t);
RigidTransform transform_from_json(const Json& j);

/// Keys {track_id, class, center, dims, yaw}.
Json to_json(const OrientedBox3& box);
OrientedBox3 box_from_json(const Json& j);

/// Throws LoadError naming the path on I/O or syntax failure.
Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lidarsim
