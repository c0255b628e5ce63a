// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "lidarsim/error.hpp"
#include "lidarsim/ingest.hpp"
#include "lidarsim/json_io.hpp"

namespace lidarsim {
namespace fs = std::filesystem;

void SequenceDataset::validate() const {
  if (frames.empty()) throw LoadError({}, std::nullopt, "sequence has no frames");
  if (!(max_range > 0.0)) throw LoadError({}, std::nullopt, "max_range must be positive");
  const unsigned schema = frames.front().cloud.channels();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (f > 0 && fr.timestamp_us <= frames[f - 1].timestamp_us)
      throw LoadError({}, f, "timestamps must strictly increase");
    if (fr.cloud.channels() != schema)
      throw LoadError({}, f,
                      "channel schema " + describe_channels(fr.cloud.channels()) +
                          " differs from frame 0 " + describe_channels(schema));
    try {
      fr.cloud.validate();
      for (const auto& b : fr.boxes) b.validate();
    } catch (const DomainError& e) {
      throw LoadError({}, f, e.what());
    }
  }
}

namespace {

std::string frame_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return buf;
}

}  // namespace

fs::path write_sequence(const SequenceDataset& seq, const fs::path& dir, CloudFormat format) {
  seq.validate();
  fs::create_directories(dir / "clouds");
  fs::create_directories(dir / "poses");
  Json frames = Json::array();
  std::string labels;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& fr = seq.frames[i];
    const std::string cloud_rel = "clouds/" + frame_stem(i) + std::string(file_extension(format));
    const std::string pose_rel = "poses/" + frame_stem(i) + ".json";
    write_cloud(fr.cloud, dir / cloud_rel, format);
    write_json_file(dir / pose_rel, to_json(fr.sensor_pose));
    frames.push_back({{"timestamp_us", fr.timestamp_us}, {"cloud", cloud_rel}, {"pose", pose_rel}});
    for (const auto& box : fr.boxes) {
      Json line = to_json(box);
      line["frame"] = i;
      labels += line.dump();
      labels += '\n';
    }
  }
  write_file_bytes(dir / "labels.jsonl", labels);
  Json manifest{{"format", "lidarsim-sequence"},
                {"version", 1},
                {"sensor_name", seq.sensor_name},
                {"max_range", seq.max_range},
                {"labels", "labels.jsonl"},
                {"frames", frames}};
  const fs::path manifest_path = dir / "manifest.json";
  write_json_file(manifest_path, manifest);
  return manifest_path;
}

SequenceDataset read_sequence(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path))
    throw LoadError(manifest_path.string(), std::nullopt, "manifest not found");
  const Json manifest = read_json_file(manifest_path);
  const fs::path base = manifest_path.parent_path();
  SequenceDataset seq;
  try {
    seq.sensor_name = manifest.value("sensor_name", std::string{});
    seq.max_range = manifest.at("max_range").get<double>();
    const Json& frames = manifest.at("frames");
    if (!frames.is_array()) throw LoadError(manifest_path.string(), std::nullopt, "frames must be a list");
    seq.frames.resize(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const Json& entry = frames[i];
      auto& fr = seq.frames[i];
      fr.timestamp_us = entry.at("timestamp_us").get<std::int64_t>();
      const fs::path cloud_path = base / entry.at("cloud").get<std::string>();
      const fs::path pose_path = base / entry.at("pose").get<std::string>();
      for (const auto& p : {cloud_path, pose_path})
        if (!fs::exists(p)) throw LoadError(p.string(), i, "missing file");
      try {
        fr.cloud = read_cloud(cloud_path);
      } catch (const ParseError& e) {
        throw LoadError(cloud_path.string(), i, e.what());
      }
      try {
        fr.sensor_pose = transform_from_json(read_json_file(pose_path));
      } catch (const DomainError& e) {
        throw LoadError(pose_path.string(), i, e.what());
      } catch (const Json::exception& e) {
        throw LoadError(pose_path.string(), i, e.what());
      }
    }
    if (manifest.contains("labels")) {
      const fs::path labels_path = base / manifest["labels"].get<std::string>();
      if (!fs::exists(labels_path)) throw LoadError(labels_path.string(), std::nullopt, "missing file");
      std::istringstream lines(read_file_bytes(labels_path));
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(lines, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::optional<std::size_t> frame;
        try {
          const Json j = Json::parse(line);
          frame = j.at("frame").get<std::size_t>();
          if (*frame >= seq.frames.size())
            throw LoadError(labels_path.string(), frame, "label refers to a frame past the end");
          seq.frames[*frame].boxes.push_back(box_from_json(j));
        } catch (const Json::exception& e) {
          throw LoadError(labels_path.string(), frame,
                          "line " + std::to_string(lineno) + ": " + e.what());
        } catch (const DomainError& e) {
          throw LoadError(labels_path.string(), frame,
                          "line " + std::to_string(lineno) + ": " + e.what());
        }
      }
    }
  } catch (const Json::exception& e) {
    throw LoadError(manifest_path.string(), std::nullopt, std::string("schema mismatch: ") + e.what());
  }
  try {
    seq.validate();
  } catch (const LoadError& e) {
    throw LoadError(manifest_path.string(), e.frame(), e.what());
  }
  return seq;
}

void export_range_image(const RangeImage& image, const fs::path& path) {
  if (image.width <= 0 || image.height <= 0) throw DomainError("range image must be non-empty");
  if (image.depth.size() != static_cast<std::size_t>(image.width) * image.height)
    throw DomainError("range image size does not match its dimensions");
  std::string out = "Pf\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n-1.0\n";
  out.reserve(out.size() + image.depth.size() * 4);
  for (float v : image.depth) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    char buf[4];
    std::memcpy(buf, &bits, 4);
    out.append(buf, 4);
  }
  write_file_bytes(path, out);
}

RangeImage read_range_image(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  const std::string source = path.string();
  std::size_t pos = 0;
  auto token = [&]() -> std::string_view {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string_view(bytes).substr(start, pos - start);
  };
  if (token() != "Pf") throw ParseError(source, 0, "expected grayscale PFM magic 'Pf'");
  RangeImage img;
  double scale = 0.0;
  auto w = token(), h = token(), s = token();
  std::string scale_text(s);
  if (std::from_chars(w.data(), w.data() + w.size(), img.width).ec != std::errc() ||
      std::from_chars(h.data(), h.data() + h.size(), img.height).ec != std::errc() ||
      img.width <= 0 || img.height <= 0)
    throw ParseError(source, pos, "bad PFM dimensions");
  try {
    scale = std::stod(scale_text);
  } catch (...) {
    throw ParseError(source, pos, "bad PFM scale");
  }
  if (scale == 0.0) throw ParseError(source, pos, "bad PFM scale");
  ++pos;  // single whitespace byte after the header
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
  if (bytes.size() - std::min(pos, bytes.size()) < count * 4)
    throw ParseError(source, bytes.size(), "truncated PFM payload");
  const bool little = scale < 0.0;
  img.depth.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + pos + 4 * i, 4);
    const bool swap = little != (std::endian::native == std::endian::little);
    if (swap) bits = __builtin_bswap32(bits);
    img.depth[i] = std::bit_cast<float>(bits);
  }
  return img;
}

}  // namespace lidarsim
