// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lidarsim/geometry.hpp"
#include "lidarsim/point_cloud.hpp"

namespace lidarsim {

/// One sensor sweep. The cloud and the boxes are in the sensor frame;
/// `sensor_pose` maps sensor -> global.
struct FrameRecord {
  std::int64_t timestamp_us = 0;
  RigidTransform sensor_pose;
  PointCloud cloud;
  std::vector<OrientedBox3> boxes;

  bool operator==(const FrameRecord&) const = default;
};

struct SequenceDataset {
  std::vector<FrameRecord> frames;
  std::string sensor_name;
  double max_range = 75.0;

  /// Throws LoadError naming the first offending frame.
  void validate() const;

  bool operator==(const SequenceDataset&) const = default;
};

enum class CloudFormat { ascii_ply, binary_columnar };

std::string_view to_string(CloudFormat f);
CloudFormat parse_cloud_format(std::string_view name);
/// ".ply" or ".lfpc".
std::string_view file_extension(CloudFormat f);

// Binary columnar layout (all integers and values little-endian):
//   "LFPC" | u32 version | u64 N | u32 channel count |
//   per channel: u8 name length, name, u8 width |
//   per channel: N * width float64, point-major.
// Unknown channels are skipped by the reader.
inline constexpr std::uint32_t kLfpcVersion = 1;

std::string encode_lfpc(const PointCloud& cloud);
PointCloud decode_lfpc(std::string_view bytes, const std::string& source = "<memory>");

std::string encode_ply_ascii(const PointCloud& cloud);
/// Reads ascii or binary_little_endian PLY "vertex" elements.
PointCloud decode_ply(std::string_view bytes, const std::string& source = "<memory>");

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                 CloudFormat format);
/// Detects the format from the magic bytes.
PointCloud read_cloud(const std::filesystem::path& path);

/// Row-major depth map; row 0 is the lowest elevation. Empty bins hold -1.
struct RangeImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;

  float at(int col, int row) const { return depth[static_cast<std::size_t>(row) * width + col]; }
  bool operator==(const RangeImage&) const = default;
};

inline constexpr float kEmptyDepth = -1.0f;

/// Grayscale PFM ("Pf"), little-endian, rows written from row 0 upward.
void export_range_image(const RangeImage& image, const std::filesystem::path& path);
RangeImage read_range_image(const std::filesystem::path& path);

/**
 * Writes `<dir>/manifest.json`, `<dir>/clouds/NNNNNN.<ext>`,
 * `<dir>/poses/NNNNNN.json` and `<dir>/labels.jsonl`.
 * Returns the manifest path.
 */
std::filesystem::path write_sequence(const SequenceDataset& seq,
                                     const std::filesystem::path& dir,
                                     CloudFormat format = CloudFormat::binary_columnar);

SequenceDataset read_sequence(const std::filesystem::path& manifest);

}  // namespace lidarsim
