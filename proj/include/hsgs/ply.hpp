#pragma once

#include <Eigen/Core>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hsgs/common.hpp"

// Colored point clouds and PLY I/O. Positions are float32 (the storage
// format's precision); colors live in [0,1] on the uint8 grid after any
// save/load round trip.

namespace hsgs {

struct PointCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<Eigen::Vector3f> colors;

  size_t size() const { return positions.size(); }

  void validate() const {
    require(!positions.empty(), "point cloud: must contain at least one point");
    require(positions.size() == colors.size(), "point cloud: position/color count mismatch");
    for (const auto& p : positions)
      require(p.allFinite(), "point cloud: non-finite coordinate");
    for (const auto& c : colors)
      require(c.allFinite() && c.minCoeff() >= 0.f && c.maxCoeff() <= 1.f,
              "point cloud: color outside [0,1]");
  }
};

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;
  size_t size = 0;
};

inline size_t ply_type_size(const std::string& t) {
  static const std::map<std::string, size_t> sizes = {
      {"char", 1},  {"int8", 1},    {"uchar", 1},  {"uint8", 1},  {"short", 2},
      {"int16", 2}, {"ushort", 2},  {"uint16", 2}, {"int", 4},    {"int32", 4},
      {"uint", 4},  {"uint32", 4},  {"float", 4},  {"float32", 4},{"double", 8},
      {"float64", 8}};
  auto it = sizes.find(t);
  if (it == sizes.end()) return 0;
  return it->second;
}

inline double parse_ply_scalar(const char* bytes, const std::string& type) {
  auto load = [&](auto value) {
    std::memcpy(&value, bytes, sizeof(value));
    return static_cast<double>(value);
  };
  if (type == "float" || type == "float32") return load(float{});
  if (type == "double" || type == "float64") return load(double{});
  if (type == "uchar" || type == "uint8") return load(uint8_t{});
  if (type == "char" || type == "int8") return load(int8_t{});
  if (type == "ushort" || type == "uint16") return load(uint16_t{});
  if (type == "short" || type == "int16") return load(int16_t{});
  if (type == "uint" || type == "uint32") return load(uint32_t{});
  return load(int32_t{});
}

}  // namespace detail

inline PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  int line_no = 0;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw IoError(path.string() + ": unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
  };
  auto fail = [&](const std::string& msg) {
    throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };

  next_line();
  if (line != "ply") fail("not a PLY file (missing 'ply' magic)");

  std::string format;
  size_t vertex_count = 0;
  std::vector<detail::PlyProperty> props;
  bool in_vertex_element = false;
  bool saw_vertex = false;

  while (true) {
    next_line();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment" || word.empty()) continue;
    if (word == "format") {
      ls >> format;
      if (format == "binary_big_endian")
        fail("unsupported format binary_big_endian");
      if (format != "ascii" && format != "binary_little_endian")
        fail("unknown format '" + format + "'");
      continue;
    }
    if (word == "element") {
      std::string name;
      size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        in_vertex_element = true;
        saw_vertex = true;
        vertex_count = count;
      } else {
        if (!saw_vertex && count > 0) fail("element '" + name + "' precedes vertex data");
        in_vertex_element = false;
      }
      continue;
    }
    if (word == "property") {
      if (!in_vertex_element) continue;
      detail::PlyProperty p;
      ls >> p.type;
      if (p.type == "list") fail("list property in vertex element is unsupported");
      ls >> p.name;
      p.size = detail::ply_type_size(p.type);
      if (p.size == 0) fail("unknown property type '" + p.type + "'");
      props.push_back(p);
      continue;
    }
    if (word == "end_header") break;
    fail("unexpected header line '" + line + "'");
  }

  if (format.empty()) fail("missing format line");
  if (!saw_vertex) fail("missing vertex element");
  if (vertex_count == 0)
    throw ValidationError(path.string() + ": empty vertex element");

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (size_t i = 0; i < props.size(); ++i) {
    const std::string& n = props[i].name;
    if (n == "x") ix = static_cast<int>(i);
    else if (n == "y") iy = static_cast<int>(i);
    else if (n == "z") iz = static_cast<int>(i);
    else if (n == "red") ir = static_cast<int>(i);
    else if (n == "green") ig = static_cast<int>(i);
    else if (n == "blue") ib = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail("missing x/y/z vertex properties");
  if (ir < 0 || ig < 0 || ib < 0) fail("missing red/green/blue vertex properties");

  PointCloud cloud;
  cloud.positions.reserve(vertex_count);
  cloud.colors.reserve(vertex_count);
  std::vector<double> record(props.size());

  if (format == "ascii") {
    for (size_t v = 0; v < vertex_count; ++v) {
      next_line();
      std::istringstream ls(line);
      for (size_t p = 0; p < props.size(); ++p)
        if (!(ls >> record[p])) fail("short vertex line");
      cloud.positions.emplace_back(static_cast<float>(record[ix]), static_cast<float>(record[iy]),
                                   static_cast<float>(record[iz]));
      cloud.colors.emplace_back(static_cast<float>(record[ir] / 255.0),
                                static_cast<float>(record[ig] / 255.0),
                                static_cast<float>(record[ib] / 255.0));
    }
  } else {
    size_t record_size = 0;
    std::vector<size_t> offsets(props.size());
    for (size_t p = 0; p < props.size(); ++p) {
      offsets[p] = record_size;
      record_size += props[p].size;
    }
    std::vector<char> bytes(record_size);
    for (size_t v = 0; v < vertex_count; ++v) {
      in.read(bytes.data(), static_cast<std::streamsize>(record_size));
      if (!in)
        throw IoError(path.string() + ": truncated at vertex " + std::to_string(v) + " (offset " +
                      std::to_string(in.gcount()) + " of record)");
      for (size_t p = 0; p < props.size(); ++p)
        record[p] = detail::parse_ply_scalar(bytes.data() + offsets[p], props[p].type);
      cloud.positions.emplace_back(static_cast<float>(record[ix]), static_cast<float>(record[iy]),
                                   static_cast<float>(record[iz]));
      cloud.colors.emplace_back(static_cast<float>(record[ir] / 255.0),
                                static_cast<float>(record[ig] / 255.0),
                                static_cast<float>(record[ib] / 255.0));
    }
  }
  cloud.validate();
  return cloud;
}

inline void save_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");

  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";

  for (size_t i = 0; i < cloud.size(); ++i) {
    float xyz[3] = {cloud.positions[i].x(), cloud.positions[i].y(), cloud.positions[i].z()};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    uint8_t rgb[3];
    for (int c = 0; c < 3; ++c) {
      double s = cloud.colors[i][c] * 255.0 + 0.5;
      rgb[c] = static_cast<uint8_t>(s < 0 ? 0 : (s > 255 ? 255 : s));
    }
    out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace hsgs
