// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <optional>

#include "lidarsim/error.hpp"
#include "lidarsim/ingest.hpp"
#include "lidarsim/json_io.hpp"

namespace lidarsim {
namespace {

template <class T>
void put_le(std::string& out, T value) {
  std::array<char, sizeof(T)> buf;
  std::memcpy(buf.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  out.append(buf.data(), buf.size());
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <class T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    std::array<char, sizeof(T)> buf;
    std::memcpy(buf.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf.data(), sizeof(T));
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(std::size_t n, const char* what) { take(n, what); }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(source_, pos_, msg); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated ") + what);
  }

  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

struct ChannelSpec {
  std::string name;
  std::uint8_t width;
};

std::vector<ChannelSpec> channel_list(const PointCloud& c) {
  std::vector<ChannelSpec> list{{"xyz", 3}};
  if (c.intensity) list.push_back({"intensity", 1});
  if (c.elongation) list.push_back({"elongation", 1});
  if (c.normals) list.push_back({"normal", 3});
  if (c.beam_id) list.push_back({"beam_id", 1});
  return list;
}

void validate_or_throw(const PointCloud& c, const std::string& source, std::size_t offset) {
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ParseError(source, offset, e.what());
  }
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

std::string_view to_string(CloudFormat f) {
  return f == CloudFormat::ascii_ply ? "ascii-ply" : "binary";
}

CloudFormat parse_cloud_format(std::string_view name) {
  if (name == "ascii-ply" || name == "ply") return CloudFormat::ascii_ply;
  if (name == "binary" || name == "binary-columnar" || name == "lfpc")
    return CloudFormat::binary_columnar;
  throw DomainError("unknown cloud format '" + std::string(name) + "'");
}

std::string_view file_extension(CloudFormat f) {
  return f == CloudFormat::ascii_ply ? ".ply" : ".lfpc";
}

std::string encode_lfpc(const PointCloud& cloud) {
  const auto channels = channel_list(cloud);
  const std::size_t n = cloud.size();
  std::string out;
  std::size_t width_sum = 0;
  for (const auto& ch : channels) width_sum += ch.width;
  out.reserve(32 + n * width_sum * 8);
  out.append("LFPC", 4);
  put_le<std::uint32_t>(out, kLfpcVersion);
  put_le<std::uint64_t>(out, n);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(channels.size()));
  for (const auto& ch : channels) {
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(ch.name.size()));
    out.append(ch.name);
    put_le<std::uint8_t>(out, ch.width);
  }
  for (const auto& p : cloud.xyz)
    for (int k = 0; k < 3; ++k) put_le<double>(out, p[k]);
  if (cloud.intensity)
    for (double v : *cloud.intensity) put_le<double>(out, v);
  if (cloud.elongation)
    for (double v : *cloud.elongation) put_le<double>(out, v);
  if (cloud.normals)
    for (const auto& nrm : *cloud.normals)
      for (int k = 0; k < 3; ++k) put_le<double>(out, nrm[k]);
  if (cloud.beam_id)
    for (auto id : *cloud.beam_id) put_le<double>(out, static_cast<double>(id));
  return out;
}

PointCloud decode_lfpc(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  if (in.take(4, "magic") != "LFPC") throw ParseError(source, 0, "bad magic (expected LFPC)");
  const auto version = in.get_le<std::uint32_t>("version");
  if (version != kLfpcVersion)
    throw ParseError(source, 4, "unsupported LFPC version " + std::to_string(version));
  const auto n = in.get_le<std::uint64_t>("point count");
  const auto count = in.get_le<std::uint32_t>("channel count");
  std::vector<ChannelSpec> channels;
  for (std::uint32_t c = 0; c < count; ++c) {
    const auto len = in.get_le<std::uint8_t>("channel name length");
    std::string name(in.take(len, "channel name"));
    const auto width = in.get_le<std::uint8_t>("channel width");
    channels.push_back({std::move(name), width});
  }
  if (channels.empty() || channels.front().name != "xyz" || channels.front().width != 3)
    in.fail("first channel must be xyz with width 3");

  // Guard the allocation against absurd headers before reading values.
  std::size_t width_sum = 0;
  for (const auto& ch : channels) width_sum += ch.width;
  if (width_sum != 0 && n > in.remaining() / (8 * width_sum)) in.fail("truncated payload");

  PointCloud cloud;
  const std::size_t npts = static_cast<std::size_t>(n);
  for (const auto& ch : channels) {
    auto expect_width = [&](std::uint8_t w) {
      if (ch.width != w) in.fail("channel " + ch.name + " has width " + std::to_string(ch.width));
    };
    auto read_scalars = [&](std::vector<double>& dst) {
      dst.resize(npts);
      for (auto& v : dst) v = in.get_le<double>("payload");
    };
    auto read_vectors = [&](std::vector<Vec3>& dst) {
      dst.resize(npts);
      for (auto& v : dst)
        for (int k = 0; k < 3; ++k) v[k] = in.get_le<double>("payload");
    };
    if (ch.name == "xyz") {
      expect_width(3);
      read_vectors(cloud.xyz);
    } else if (ch.name == "intensity") {
      expect_width(1);
      read_scalars(cloud.intensity.emplace());
    } else if (ch.name == "elongation") {
      expect_width(1);
      read_scalars(cloud.elongation.emplace());
    } else if (ch.name == "normal") {
      expect_width(3);
      read_vectors(cloud.normals.emplace());
    } else if (ch.name == "beam_id") {
      expect_width(1);
      auto& ids = cloud.beam_id.emplace(npts);
      for (auto& id : ids) {
        const std::size_t at = in.pos();
        const double v = in.get_le<double>("payload");
        if (!(v == std::floor(v) && std::abs(v) <= std::numeric_limits<std::int32_t>::max()))
          throw ParseError(source, at, "beam_id is not a 32-bit integer");
        id = static_cast<std::int32_t>(v);
      }
    } else {
      in.skip(npts * ch.width * 8, "payload");
    }
  }
  if (in.remaining() != 0) in.fail("trailing bytes after payload");
  validate_or_throw(cloud, source, in.pos());
  return cloud;
}

std::string encode_ply_ascii(const PointCloud& cloud) {
  std::string out = "ply\nformat ascii 1.0\ncomment lidarsim point cloud\nelement vertex ";
  out += std::to_string(cloud.size());
  out += "\nproperty double x\nproperty double y\nproperty double z\n";
  if (cloud.intensity) out += "property double intensity\n";
  if (cloud.elongation) out += "property double elongation\n";
  if (cloud.normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
  if (cloud.beam_id) out += "property int beam_id\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.xyz[i];
    append_number(out, p.x());
    out += ' ';
    append_number(out, p.y());
    out += ' ';
    append_number(out, p.z());
    if (cloud.intensity) {
      out += ' ';
      append_number(out, (*cloud.intensity)[i]);
    }
    if (cloud.elongation) {
      out += ' ';
      append_number(out, (*cloud.elongation)[i]);
    }
    if (cloud.normals) {
      for (int k = 0; k < 3; ++k) {
        out += ' ';
        append_number(out, (*cloud.normals)[i][k]);
      }
    }
    if (cloud.beam_id) {
      out += ' ';
      out += std::to_string((*cloud.beam_id)[i]);
    }
    out += '\n';
  }
  return out;
}

namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<PlyType> parse_ply_type(std::string_view t) {
  static const std::map<std::string_view, PlyType> types{
      {"char", PlyType::i8},    {"int8", PlyType::i8},     {"uchar", PlyType::u8},
      {"uint8", PlyType::u8},   {"short", PlyType::i16},   {"int16", PlyType::i16},
      {"ushort", PlyType::u16}, {"uint16", PlyType::u16},  {"int", PlyType::i32},
      {"int32", PlyType::i32},  {"uint", PlyType::u32},    {"uint32", PlyType::u32},
      {"float", PlyType::f32},  {"float32", PlyType::f32}, {"double", PlyType::f64},
      {"float64", PlyType::f64}};
  auto it = types.find(t);
  if (it == types.end()) return std::nullopt;
  return it->second;
}

double read_binary(ByteReader& in, PlyType t) {
  switch (t) {
    case PlyType::i8: return in.get_le<std::int8_t>("vertex data");
    case PlyType::u8: return in.get_le<std::uint8_t>("vertex data");
    case PlyType::i16: return in.get_le<std::int16_t>("vertex data");
    case PlyType::u16: return in.get_le<std::uint16_t>("vertex data");
    case PlyType::i32: return in.get_le<std::int32_t>("vertex data");
    case PlyType::u32: return in.get_le<std::uint32_t>("vertex data");
    case PlyType::f32: return in.get_le<float>("vertex data");
    case PlyType::f64: return in.get_le<double>("vertex data");
  }
  return 0.0;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

PointCloud decode_ply(std::string_view bytes, const std::string& source) {
  struct Property {
    std::string name;
    PlyType type;
  };
  struct Element {
    std::string name;
    std::size_t count;
    std::vector<Property> props;
  };

  std::size_t pos = 0;
  auto next_line = [&](std::size_t& line_start) -> std::optional<std::string_view> {
    if (pos >= bytes.size()) return std::nullopt;
    line_start = pos;
    std::size_t e = bytes.find('\n', pos);
    if (e == std::string_view::npos) e = bytes.size();
    auto line = bytes.substr(pos, e - pos);
    pos = std::min(bytes.size(), e + 1);
    return line;
  };

  std::size_t at = 0;
  auto first = next_line(at);
  if (!first || split_ws(*first) != std::vector<std::string_view>{"ply"})
    throw ParseError(source, 0, "bad magic (expected ply)");
  bool ascii = true;
  std::vector<Element> elements;
  bool header_done = false;
  while (auto line = next_line(at)) {
    auto tok = split_ws(*line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError(source, at, "malformed format line");
      if (tok[1] == "ascii") ascii = true;
      else if (tok[1] == "binary_little_endian") ascii = false;
      else throw ParseError(source, at, "unsupported PLY format " + std::string(tok[1]));
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(source, at, "malformed element line");
      std::size_t count = 0;
      auto r = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), count);
      if (r.ec != std::errc()) throw ParseError(source, at, "bad element count");
      elements.push_back({std::string(tok[1]), count, {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError(source, at, "property before element");
      if (tok.size() >= 2 && tok[1] == "list") {
        if (elements.back().name == "vertex")
          throw ParseError(source, at, "list properties on vertex are not supported");
        // Lists on other elements are fine as long as the vertex element
        // comes first; they are never read.
        elements.back().props.push_back({"<list>", PlyType::u8});
        continue;
      }
      if (tok.size() != 3) throw ParseError(source, at, "malformed property line");
      auto type = parse_ply_type(tok[1]);
      if (!type) throw ParseError(source, at, "unknown property type " + std::string(tok[1]));
      elements.back().props.push_back({std::string(tok[2]), *type});
    } else {
      throw ParseError(source, at, "unexpected header keyword " + std::string(tok[0]));
    }
  }
  if (!header_done) throw ParseError(source, bytes.size(), "missing end_header");
  if (elements.empty() || elements.front().name != "vertex")
    throw ParseError(source, pos, "first element must be vertex");
  const Element& vertex = elements.front();

  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < vertex.props.size(); ++k) col[vertex.props[k].name] = k;
  for (const char* req : {"x", "y", "z"})
    if (!col.count(req)) throw ParseError(source, pos, std::string("missing property ") + req);
  const bool has_normals = col.count("nx") && col.count("ny") && col.count("nz");

  PointCloud cloud;
  if (col.count("intensity")) cloud.intensity.emplace();
  if (col.count("elongation")) cloud.elongation.emplace();
  if (has_normals) cloud.normals.emplace();
  if (col.count("beam_id")) cloud.beam_id.emplace();
  if (vertex.count > bytes.size()) throw ParseError(source, pos, "truncated vertex data");
  cloud.reserve(vertex.count);

  std::vector<double> row(vertex.props.size());
  ByteReader bin(bytes, source);
  if (!ascii) bin.skip(pos, "header");
  for (std::size_t v = 0; v < vertex.count; ++v) {
    if (ascii) {
      auto line = next_line(at);
      if (!line) throw ParseError(source, bytes.size(), "truncated vertex data");
      auto tok = split_ws(*line);
      if (tok.size() != row.size()) throw ParseError(source, at, "wrong number of vertex values");
      for (std::size_t k = 0; k < tok.size(); ++k) {
        auto r = std::from_chars(tok[k].data(), tok[k].data() + tok[k].size(), row[k]);
        if (r.ec != std::errc() || r.ptr != tok[k].data() + tok[k].size())
          throw ParseError(source, at, "bad number '" + std::string(tok[k]) + "'");
      }
    } else {
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = read_binary(bin, vertex.props[k].type);
    }
    cloud.xyz.emplace_back(row[col["x"]], row[col["y"]], row[col["z"]]);
    if (cloud.intensity) cloud.intensity->push_back(row[col["intensity"]]);
    if (cloud.elongation) cloud.elongation->push_back(row[col["elongation"]]);
    if (cloud.normals) cloud.normals->emplace_back(row[col["nx"]], row[col["ny"]], row[col["nz"]]);
    if (cloud.beam_id) cloud.beam_id->push_back(static_cast<std::int32_t>(row[col["beam_id"]]));
  }
  validate_or_throw(cloud, source, ascii ? pos : bin.pos());
  return cloud;
}

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  write_file_bytes(path, format == CloudFormat::ascii_ply ? encode_ply_ascii(cloud)
                                                          : encode_lfpc(cloud));
}

PointCloud read_cloud(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.starts_with("LFPC")) return decode_lfpc(bytes, path.string());
  if (bytes.starts_with("ply")) return decode_ply(bytes, path.string());
  throw ParseError(path.string(), 0, "unrecognized cloud format");
}

}  // namespace lidarsim
