#include "gavatar/gaussian_cloud.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gavatar {

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t offset = 0;
};

std::size_t ply_type_size(const std::string& type) {
  if (type == "double" || type == "float64") return 8;
  if (type == "float" || type == "float32" || type == "int" || type == "int32" || type == "uint" || type == "uint32") return 4;
  if (type == "short" || type == "int16" || type == "ushort" || type == "uint16") return 2;
  if (type == "char" || type == "int8" || type == "uchar" || type == "uint8") return 1;
  throw FormatError("PLY: unsupported property type '" + type + "'");
}

double read_as_double(const char* p, const std::string& type) {
  auto load = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (type == "double" || type == "float64") return load(double{});
  if (type == "float" || type == "float32") return load(float{});
  if (type == "int" || type == "int32") return load(std::int32_t{});
  if (type == "uint" || type == "uint32") return load(std::uint32_t{});
  if (type == "short" || type == "int16") return load(std::int16_t{});
  if (type == "ushort" || type == "uint16") return load(std::uint16_t{});
  if (type == "char" || type == "int8") return load(std::int8_t{});
  return load(std::uint8_t{});
}

std::vector<std::string> property_names(int sh_degree) {
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  const int rest = 3 * (sh_coeff_count(sh_degree) - 1);
  for (int r = 0; r < rest; ++r) {
    names.push_back("f_rest_" + std::to_string(r));
  }
  names.insert(names.end(), {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"});
  return names;
}

} // namespace

void export_pointcloud(const GaussianCloud& cloud, const std::string& path, bool float32) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  const auto names = property_names(cloud.sh_degree);
  const char* type = float32 ? "float" : "double";
  f << "ply\nformat binary_little_endian 1.0\n";
  f << "comment sh_degree " << cloud.sh_degree << "\n";
  f << "element vertex " << cloud.size() << "\n";
  for (const auto& n : names) {
    f << "property " << type << " " << n << "\n";
  }
  f << "property int parent\nend_header\n";

  const int k_count = cloud.sh_count();
  std::vector<double> row;
  row.reserve(names.size());
  for (int i = 0; i < cloud.size(); ++i) {
    row.clear();
    for (int c = 0; c < 3; ++c) row.push_back(cloud.centers(i, c));
    for (int c = 0; c < 3; ++c) row.push_back(cloud.canonical_normals(i, c));
    for (int c = 0; c < 3; ++c) row.push_back(cloud.sh(i, c));
    for (int c = 0; c < 3; ++c) {
      for (int k = 1; k < k_count; ++k) {
        row.push_back(cloud.sh(i, 3 * k + c));
      }
    }
    row.push_back(cloud.opacity_logits[i]);
    for (int c = 0; c < 3; ++c) row.push_back(cloud.log_scales(i, c));
    for (int c = 0; c < 4; ++c) row.push_back(cloud.rotations(i, c));
    for (double v : row) {
      if (float32) {
        const float fv = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&fv), sizeof fv);
      } else {
        f.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
    const std::int32_t parent = cloud.parents[i].code();
    f.write(reinterpret_cast<const char*>(&parent), sizeof parent);
  }
  if (!f) {
    throw std::runtime_error("failed writing '" + path + "'");
  }
}

GaussianCloud import_pointcloud(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  std::string line;
  std::getline(f, line);
  if (line != "ply") {
    throw FormatError("'" + path + "' is not a PLY file");
  }
  long long count = -1;
  std::vector<PlyProperty> props;
  std::size_t stride = 0;
  bool in_vertex = false;
  bool header_done = false;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") {
        throw FormatError("PLY: only binary_little_endian is supported, got '" + fmt + "'");
      }
    } else if (tok == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) {
        ls >> count;
      } else if (count >= 0) {
        throw FormatError("PLY: elements after 'vertex' are not supported");
      }
    } else if (tok == "property" && in_vertex) {
      PlyProperty p;
      ls >> p.type >> p.name;
      if (p.type == "list") {
        throw FormatError("PLY: list properties are not supported on vertices");
      }
      p.offset = stride;
      stride += ply_type_size(p.type);
      props.push_back(p);
    } else if (tok == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done || count < 0) {
    throw FormatError("PLY: malformed header in '" + path + "'");
  }

  std::map<std::string, const PlyProperty*> by_name;
  for (const auto& p : props) {
    by_name[p.name] = &p;
  }
  int rest = 0;
  while (by_name.count("f_rest_" + std::to_string(rest)) != 0) {
    ++rest;
  }
  const int k_count = rest / 3 + 1;
  int degree = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k_count)))) - 1;
  if (rest % 3 != 0 || sh_coeff_count(degree) != k_count) {
    throw FormatError("PLY: f_rest count " + std::to_string(rest) + " is not a valid SH layout");
  }

  std::vector<std::string> missing;
  for (const char* req : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                          "rot_0", "rot_1", "rot_2", "rot_3"}) {
    if (by_name.count(req) == 0) {
      missing.emplace_back(req);
    }
  }
  if (!missing.empty()) {
    std::string msg = "PLY: missing required properties:";
    for (const auto& m : missing) {
      msg += " " + m;
    }
    throw FormatError(msg);
  }

  GaussianCloud cloud(degree);
  cloud.resize(static_cast<int>(count));
  cloud.canonical_normals.setZero();
  std::vector<char> buf(stride);
  auto get = [&](const std::string& name, double fallback) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      return fallback;
    }
    return read_as_double(buf.data() + it->second->offset, it->second->type);
  };
  const bool has_parent = by_name.count("parent") != 0;
  for (long long i = 0; i < count; ++i) {
    if (!f.read(buf.data(), static_cast<std::streamsize>(stride))) {
      throw FormatError("PLY: '" + path + "' truncated at vertex " + std::to_string(i));
    }
    const char* axes[3] = {"x", "y", "z"};
    const char* normals[3] = {"nx", "ny", "nz"};
    for (int c = 0; c < 3; ++c) {
      cloud.centers(i, c) = get(axes[c], 0.0);
      cloud.canonical_normals(i, c) = get(normals[c], 0.0);
      cloud.sh(i, c) = get("f_dc_" + std::to_string(c), 0.0);
      cloud.log_scales(i, c) = get("scale_" + std::to_string(c), 0.0);
      for (int k = 1; k < k_count; ++k) {
        cloud.sh(i, 3 * k + c) = get("f_rest_" + std::to_string(c * (k_count - 1) + (k - 1)), 0.0);
      }
    }
    cloud.opacity_logits[i] = get("opacity", 0.0);
    for (int c = 0; c < 4; ++c) {
      cloud.rotations(i, c) = get("rot_" + std::to_string(c), 0.0);
    }
    cloud.parents[i] = has_parent ? ParentId::from_code(static_cast<std::int32_t>(get("parent", -1.0)))
                                  : ParentId::background();
  }
  return cloud;
}

} // namespace gavatar
