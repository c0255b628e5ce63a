// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lidarsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Bit set of the optional per-point channels carried by a cloud.
enum ChannelBits : unsigned {
  kIntensity = 1u << 0,
  kElongation = 1u << 1,
  kNormals = 1u << 2,
  kBeamId = 1u << 3,
};

/**
 * Columnar point set. Coordinates are in meters; every optional channel,
 * when present, has exactly one entry per point.
 */
struct PointCloud {
  std::vector<Vec3> xyz;
  std::optional<std::vector<double>> intensity;   // [0, 1]
  std::optional<std::vector<double>> elongation;  // [0, 1]
  std::optional<std::vector<Vec3>> normals;       // unit length
  std::optional<std::vector<std::int32_t>> beam_id;

  std::size_t size() const noexcept { return xyz.size(); }
  bool empty() const noexcept { return xyz.empty(); }

  unsigned channels() const noexcept;

  /// Cloud with no points and the given channels allocated.
  static PointCloud with_channels(unsigned channels);

  /// Throws DomainError describing the first violated invariant.
  void validate() const;

  PointCloud select(std::span<const std::size_t> indices) const;

  /// Appends `other`; both clouds must carry the same channels.
  void append(const PointCloud& other);

  /// Appends point `i` of `src`; `src` must carry the same channels.
  void push_back_from(const PointCloud& src, std::size_t i);

  void reserve(std::size_t n);

  bool operator==(const PointCloud& other) const = default;
};

std::string describe_channels(unsigned channels);

}  // namespace lidarsim
