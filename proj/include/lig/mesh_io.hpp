#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lig/binary_io.hpp"
#include "lig/common.hpp"
#include "lig/geometry.hpp"

namespace lig {

inline std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// ---------------------------------------------------------------------------
// OBJ

inline void write_obj(const TriMesh& mesh, std::ostream& os) {
  char buf[128];
  for (const Point3& v : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    os << buf;
  }
  for (const Face& f : mesh.faces()) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

/// Reads v/f records; polygons are fan-triangulated, negative indices are relative.
inline TriMesh read_obj(std::istream& is, const std::string& what = "obj") {
  std::vector<Point3> verts;
  std::vector<Face> faces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Point3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) throw FormatError(what + ":" + std::to_string(lineno) + ": bad vertex");
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ss >> tok) {
        const long long raw = std::strtoll(tok.c_str(), nullptr, 10);
        long long v = raw > 0 ? raw - 1 : static_cast<long long>(verts.size()) + raw;
        if (raw == 0 || v < 0 || v >= static_cast<long long>(verts.size()))
          throw FormatError(what + ":" + std::to_string(lineno) + ": face index out of range");
        idx.push_back(static_cast<std::uint32_t>(v));
      }
      if (idx.size() < 3) throw FormatError(what + ":" + std::to_string(lineno) + ": face with fewer than 3 vertices");
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) faces.push_back({idx[0], idx[i], idx[i + 1]});
    }
  }
  return TriMesh(std::move(verts), std::move(faces));
}

// ---------------------------------------------------------------------------
// PLY

namespace ply {

enum class Type { I8, U8, I16, U16, I32, U32, F32, F64 };

inline Type parse_type(const std::string& t, const std::string& what) {
  static const std::map<std::string, Type> names{
      {"char", Type::I8},    {"int8", Type::I8},     {"uchar", Type::U8},   {"uint8", Type::U8},
      {"short", Type::I16},  {"int16", Type::I16},   {"ushort", Type::U16}, {"uint16", Type::U16},
      {"int", Type::I32},    {"int32", Type::I32},   {"uint", Type::U32},   {"uint32", Type::U32},
      {"float", Type::F32},  {"float32", Type::F32}, {"double", Type::F64}, {"float64", Type::F64}};
  auto it = names.find(t);
  if (it == names.end()) throw FormatError(what + ": unknown PLY property type \"" + t + "\"");
  return it->second;
}

struct Property {
  std::string name;
  Type type = Type::F32;
  bool is_list = false;
  Type count_type = Type::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
};

inline Header read_header(std::istream& is, const std::string& what) {
  std::string line;
  if (!std::getline(is, line) || line.substr(0, 3) != "ply") throw FormatError(what + ": bad magic, expected \"ply\"");
  Header h;
  bool have_format = false;
  while (true) {
    if (!std::getline(is, line)) throw FormatError(what + ": truncated PLY header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      std::string fmt, ver;
      ss >> fmt >> ver;
      if (fmt == "ascii") h.binary = false;
      else if (fmt == "binary_little_endian") h.binary = true;
      else throw FormatError(what + ": unsupported PLY format \"" + fmt + "\"");
      have_format = true;
    } else if (kw == "element") {
      Element e;
      long long n = -1;
      ss >> e.name >> n;
      if (n < 0) throw FormatError(what + ": bad element count");
      e.count = static_cast<std::size_t>(n);
      h.elements.push_back(e);
    } else if (kw == "property") {
      if (h.elements.empty()) throw FormatError(what + ": property before element");
      Property p;
      std::string t;
      ss >> t;
      if (t == "list") {
        std::string ct, it;
        ss >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_type(ct, what);
        p.type = parse_type(it, what);
      } else {
        p.type = parse_type(t, what);
        ss >> p.name;
      }
      h.elements.back().props.push_back(p);
    } else if (kw == "end_header") {
      break;
    }
  }
  if (!have_format) throw FormatError(what + ": PLY header without format line");
  return h;
}

inline double read_binary(bin::Reader& rd, Type t) {
  switch (t) {
    case Type::I8: return static_cast<std::int8_t>(rd.u8());
    case Type::U8: return rd.u8();
    case Type::I16: {
      const std::uint16_t lo = rd.u8(), hi = rd.u8();
      return static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
    }
    case Type::U16: {
      const std::uint16_t lo = rd.u8(), hi = rd.u8();
      return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    case Type::I32: return rd.i32();
    case Type::U32: return rd.u32();
    case Type::F32: return rd.f32();
    case Type::F64: return rd.f64();
  }
  return 0;
}

/// Element rows: scalar properties by name, plus the first list property if any.
struct Table {
  std::map<std::string, std::vector<double>> scalars;
  std::vector<std::vector<std::int64_t>> lists;
};

inline std::vector<Table> read_body(std::istream& is, const Header& h, const std::string& what) {
  std::vector<Table> tables(h.elements.size());
  bin::Reader rd(is, what);
  std::string tok;
  auto ascii = [&]() -> double {
    if (!(is >> tok)) throw FormatError(what + ": truncated file");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw FormatError(what + ": bad number \"" + tok + "\"");
    return v;
  };
  auto value = [&](Type t) { return h.binary ? read_binary(rd, t) : ascii(); };
  for (std::size_t e = 0; e < h.elements.size(); ++e) {
    const Element& el = h.elements[e];
    Table& tab = tables[e];
    for (const auto& p : el.props)
      if (!p.is_list) tab.scalars[p.name].reserve(el.count);
    bool first_list = true;
    for (std::size_t r = 0; r < el.count; ++r) {
      first_list = true;
      for (const auto& p : el.props) {
        if (!p.is_list) {
          tab.scalars[p.name].push_back(value(p.type));
          continue;
        }
        const double cnt = value(p.count_type);
        if (cnt < 0 || cnt > 1e6) throw FormatError(what + ": implausible list length");
        std::vector<std::int64_t> items(static_cast<std::size_t>(cnt));
        for (auto& it : items) it = static_cast<std::int64_t>(value(p.type));
        if (first_list) tab.lists.push_back(std::move(items));
        first_list = false;
      }
    }
  }
  return tables;
}

inline const Table* find_table(const Header& h, const std::vector<Table>& t, const std::string& name) {
  for (std::size_t i = 0; i < h.elements.size(); ++i)
    if (h.elements[i].name == name) return &t[i];
  return nullptr;
}

inline const std::vector<double>& column(const Table& t, const std::string& name, const std::string& what) {
  auto it = t.scalars.find(name);
  if (it == t.scalars.end()) throw FormatError(what + ": missing vertex property \"" + name + "\"");
  return it->second;
}

}  // namespace ply

/// Binary little-endian PLY with double coordinates and int face indices.
inline void write_ply(const TriMesh& mesh, std::ostream& os) {
  os << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.vertices().size()
     << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << mesh.num_faces()
     << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const Point3& v : mesh.vertices())
    for (int a = 0; a < 3; ++a) bin::put_f64(os, v[a]);
  for (const Face& f : mesh.faces()) {
    bin::put_u8(os, 3);
    for (auto i : f) bin::put_i32(os, static_cast<std::int32_t>(i));
  }
}

inline TriMesh read_ply_mesh(std::istream& is, const std::string& what = "ply") {
  const auto h = ply::read_header(is, what);
  const auto tables = ply::read_body(is, h, what);
  const auto* vt = ply::find_table(h, tables, "vertex");
  if (!vt) throw FormatError(what + ": no vertex element");
  const auto& x = ply::column(*vt, "x", what);
  const auto& y = ply::column(*vt, "y", what);
  const auto& z = ply::column(*vt, "z", what);
  std::vector<Point3> verts(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) verts[i] = Point3(x[i], y[i], z[i]);
  std::vector<Face> faces;
  if (const auto* ft = ply::find_table(h, tables, "face")) {
    for (const auto& poly : ft->lists) {
      if (poly.size() < 3) throw FormatError(what + ": face with fewer than 3 vertices");
      for (auto v : poly)
        if (v < 0 || v >= static_cast<std::int64_t>(verts.size())) throw FormatError(what + ": face index out of range");
      for (std::size_t i = 1; i + 1 < poly.size(); ++i)
        faces.push_back({static_cast<std::uint32_t>(poly[0]), static_cast<std::uint32_t>(poly[i]),
                         static_cast<std::uint32_t>(poly[i + 1])});
    }
  }
  return TriMesh(std::move(verts), std::move(faces));
}

/// Oriented point cloud from a PLY vertex element with x,y,z,nx,ny,nz.
inline OrientedPointCloud read_ply_points(std::istream& is, const std::string& what = "ply") {
  const auto h = ply::read_header(is, what);
  const auto tables = ply::read_body(is, h, what);
  const auto* vt = ply::find_table(h, tables, "vertex");
  if (!vt) throw FormatError(what + ": no vertex element");
  const char* names[6] = {"x", "y", "z", "nx", "ny", "nz"};
  std::vector<const std::vector<double>*> cols;
  for (const char* n : names) cols.push_back(&ply::column(*vt, n, what));
  OrientedPointCloud out(cols[0]->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].position = Point3((*cols[0])[i], (*cols[1])[i], (*cols[2])[i]);
    out[i].normal = Vec3((*cols[3])[i], (*cols[4])[i], (*cols[5])[i]);
  }
  return out;
}

inline void write_ply_points(const OrientedPointCloud& pts, std::ostream& os, bool binary = true) {
  os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\nelement vertex " << pts.size()
     << "\nproperty double x\nproperty double y\nproperty double z\nproperty double nx\nproperty double ny\n"
        "property double nz\nend_header\n";
  char buf[160];
  for (const auto& p : pts) {
    if (binary) {
      for (int a = 0; a < 3; ++a) bin::put_f64(os, p.position[a]);
      for (int a = 0; a < 3; ++a) bin::put_f64(os, p.normal[a]);
    } else {
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g\n", p.position.x(), p.position.y(),
                    p.position.z(), p.normal.x(), p.normal.y(), p.normal.z());
      os << buf;
    }
  }
}

// ---------------------------------------------------------------------------
// Path helpers

inline TriMesh load_mesh(const std::string& path) {
  auto is = bin::open_in(path);
  const auto ext = lower_extension(path);
  if (ext == "obj") return read_obj(is, path);
  if (ext == "ply") return read_ply_mesh(is, path);
  throw FormatError(path + ": unknown mesh extension (expected .obj or .ply)");
}

inline void save_mesh(const TriMesh& mesh, const std::string& path) {
  const auto ext = lower_extension(path);
  if (ext != "obj" && ext != "ply") throw FormatError(path + ": unknown mesh extension (expected .obj or .ply)");
  auto os = bin::open_out(path);
  if (ext == "obj") write_obj(mesh, os);
  else write_ply(mesh, os);
  bin::finish(os, path);
}

inline OrientedPointCloud load_points(const std::string& path) {
  auto is = bin::open_in(path);
  return read_ply_points(is, path);
}

inline void save_points(const OrientedPointCloud& pts, const std::string& path, bool binary = true) {
  auto os = bin::open_out(path);
  write_ply_points(pts, os, binary);
  bin::finish(os, path);
}

}  // namespace lig
