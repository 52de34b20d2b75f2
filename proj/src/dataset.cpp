#include "gavatar/dataset.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace gavatar {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Line reader that skips blanks and comments and remembers line numbers.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw FormatError("cannot open '" + path + "'");
  }
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::istringstream ss(line);
      tokens.clear();
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (!tokens.empty()) return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ":" + std::to_string(line_no_) + ": " + what);
  }
  double number(const std::string& token) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) fail("not a number: '" + token + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("not a number: '" + token + "'");
    }
  }
  int integer(const std::string& token) const {
    const double v = number(token);
    if (v != static_cast<int>(v)) fail("not an integer: '" + token + "'");
    return static_cast<int>(v);
  }

 private:
  std::string path_;
  std::ifstream in_;
  int line_no_ = 0;
};

} // namespace

const Camera& SceneDataset::camera(const std::string& id) const {
  for (const NamedCamera& c : cameras) {
    if (c.id == id) return c.camera;
  }
  throw std::out_of_range("unknown camera id '" + id + "'");
}

void write_cameras(const std::vector<NamedCamera>& cameras, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# gavatar cameras v1\n";
  for (const NamedCamera& nc : cameras) {
    const Camera& c = nc.camera;
    out << "camera " << nc.id << "\n";
    out << "  width " << c.width << "\n  height " << c.height << "\n";
    out << "  fx " << fmt(c.fx) << "\n  fy " << fmt(c.fy) << "\n  cx " << fmt(c.cx) << "\n  cy " << fmt(c.cy) << "\n";
    out << "  near " << fmt(c.near) << "\n  far " << fmt(c.far) << "\n";
    out << "  world_to_camera\n";
    for (int r = 0; r < 3; ++r) {
      out << "   ";
      for (int k = 0; k < 3; ++k) out << " " << fmt(c.world_to_camera.rotation(r, k));
      out << " " << fmt(c.world_to_camera.translation(r)) << "\n";
    }
    out << "end\n";
  }
}

std::vector<NamedCamera> read_cameras(const std::string& path) {
  LineReader reader(path);
  std::vector<NamedCamera> out;
  std::vector<std::string> tok;
  while (reader.next(tok)) {
    if (tok[0] != "camera" || tok.size() != 2) reader.fail("expected 'camera <id>'");
    NamedCamera nc;
    nc.id = tok[1];
    for (const NamedCamera& other : out) {
      if (other.id == nc.id) reader.fail("duplicate camera id '" + nc.id + "'");
    }
    std::set<std::string> seen;
    bool have_transform = false;
    for (;;) {
      if (!reader.next(tok)) reader.fail("unterminated camera block '" + nc.id + "'");
      if (tok[0] == "end") break;
      if (tok[0] == "world_to_camera") {
        for (int r = 0; r < 3; ++r) {
          if (!reader.next(tok) || tok.size() != 4) reader.fail("world_to_camera rows need four numbers");
          for (int k = 0; k < 3; ++k) nc.camera.world_to_camera.rotation(r, k) = reader.number(tok[k]);
          nc.camera.world_to_camera.translation(r) = reader.number(tok[3]);
        }
        have_transform = true;
        continue;
      }
      if (tok.size() != 2) reader.fail("expected '<key> <value>'");
      const std::string& key = tok[0];
      if (key == "width") nc.camera.width = reader.integer(tok[1]);
      else if (key == "height") nc.camera.height = reader.integer(tok[1]);
      else if (key == "fx") nc.camera.fx = reader.number(tok[1]);
      else if (key == "fy") nc.camera.fy = reader.number(tok[1]);
      else if (key == "cx") nc.camera.cx = reader.number(tok[1]);
      else if (key == "cy") nc.camera.cy = reader.number(tok[1]);
      else if (key == "near") nc.camera.near = reader.number(tok[1]);
      else if (key == "far") nc.camera.far = reader.number(tok[1]);
      else reader.fail("unknown camera field '" + key + "'");
      seen.insert(key);
    }
    for (const char* key : {"width", "height", "fx", "fy", "cx", "cy"}) {
      if (!seen.count(key)) reader.fail("camera '" + nc.id + "' is missing '" + key + "'");
    }
    if (!have_transform) reader.fail("camera '" + nc.id + "' is missing world_to_camera");
    try {
      nc.camera.validate();
    } catch (const ValidationError& e) {
      reader.fail("camera '" + nc.id + "': " + e.what());
    }
    out.push_back(nc);
  }
  return out;
}

void write_poses(const std::map<int, PoseParams>& poses, int joint_count, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# gavatar poses v1: t tx ty tz then per-joint axis-angle\n";
  out << "joints " << joint_count << "\n";
  for (const auto& [t, p] : poses) {
    if (p.rotations.rows() != joint_count) throw ShapeError("write_poses: pose length differs from joint count");
    out << t;
    for (int c = 0; c < 3; ++c) out << " " << fmt(p.translation(c));
    for (int j = 0; j < joint_count; ++j) {
      for (int c = 0; c < 3; ++c) out << " " << fmt(p.rotations(j, c));
    }
    out << "\n";
  }
}

std::map<int, PoseParams> read_poses(const std::string& path) {
  LineReader reader(path);
  std::vector<std::string> tok;
  if (!reader.next(tok) || tok.size() != 2 || tok[0] != "joints") reader.fail("expected 'joints <J>' header");
  const int j = reader.integer(tok[1]);
  if (j <= 0) reader.fail("joint count must be positive");
  std::map<int, PoseParams> out;
  while (reader.next(tok)) {
    if (static_cast<int>(tok.size()) != 4 + 3 * j) {
      reader.fail("expected " + std::to_string(4 + 3 * j) + " values, got " + std::to_string(tok.size()));
    }
    const int t = reader.integer(tok[0]);
    if (out.count(t)) reader.fail("duplicate frame " + std::to_string(t));
    PoseParams p = PoseParams::canonical(j);
    for (int c = 0; c < 3; ++c) p.translation(c) = reader.number(tok[1 + c]);
    for (int k = 0; k < j; ++k) {
      for (int c = 0; c < 3; ++c) p.rotations(k, c) = reader.number(tok[4 + 3 * k + c]);
    }
    if (!p.rotations.allFinite() || !p.translation.allFinite()) reader.fail("non-finite pose value");
    out.emplace(t, std::move(p));
  }
  return out;
}

void write_shape(const ShapeParams& shape, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# gavatar shape v1\n";
  for (Eigen::Index i = 0; i < shape.betas.size(); ++i) out << (i ? " " : "") << fmt(shape.betas(i));
  out << "\n";
}

ShapeParams read_shape(const std::string& path) {
  LineReader reader(path);
  std::vector<std::string> tok;
  ShapeParams s;
  std::vector<double> vals;
  while (reader.next(tok)) {
    for (const std::string& t : tok) vals.push_back(reader.number(t));
  }
  s.betas = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return s;
}

std::string frame_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", frame);
  return buf;
}

std::pair<int, int> png_size(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char h[24];
  if (!in.read(reinterpret_cast<char*>(h), sizeof h)) throw FormatError("'" + path + "' is not a PNG file");
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (!std::equal(sig, sig + 8, h) || std::string(reinterpret_cast<char*>(h + 12), 4) != "IHDR") {
    throw FormatError("'" + path + "' is not a PNG file");
  }
  auto be32 = [](const unsigned char* p) {
    return static_cast<int>((static_cast<unsigned>(p[0]) << 24) | (p[1] << 16) | (p[2] << 8) | p[3]);
  };
  return {be32(h + 16), be32(h + 20)};
}

SceneDataset load_dataset(const std::string& root, const RunConfig& config, DatasetSplit split) {
  SceneDataset ds;
  ds.root = root;
  const fs::path base(root);
  ds.body = load_body_model((base / "body.bin").string());
  ds.shape = fs::exists(base / "shape.txt") ? read_shape((base / "shape.txt").string()) : ShapeParams{};
  if (ds.shape.betas.size() != 0 && ds.shape.betas.size() != ds.body.shape_count()) {
    throw ValidationError("shape.txt has " + std::to_string(ds.shape.betas.size()) + " coefficients, body model has " +
                          std::to_string(ds.body.shape_count()));
  }
  ds.cameras = read_cameras((base / "cameras.txt").string());
  const auto poses = read_poses((base / "poses.txt").string());
  for (const auto& [t, p] : poses) {
    if (p.rotations.rows() != ds.body.joint_count()) {
      throw ValidationError("poses.txt has " + std::to_string(p.rotations.rows()) + " joints, body model has " +
                            std::to_string(ds.body.joint_count()));
    }
  }

  const std::vector<std::string>* wanted = nullptr;
  if (split == DatasetSplit::Train) wanted = &config.train_cameras;
  if (split == DatasetSplit::Test) wanted = &config.test_cameras;
  if (wanted) {
    for (const std::string& id : *wanted) ds.camera(id);  // throws for unknown ids
  }
  auto camera_selected = [&](const std::string& id) {
    return !wanted || wanted->empty() || std::find(wanted->begin(), wanted->end(), id) != wanted->end();
  };
  auto frame_selected = [&](int t) {
    if (split == DatasetSplit::All || config.test_frame_modulo == 0) return true;
    const bool held_out = t % config.test_frame_modulo == config.test_frame_offset;
    return split == DatasetSplit::Test ? held_out : !held_out;
  };

  std::vector<std::string> problems;
  for (const NamedCamera& nc : ds.cameras) {
    const fs::path image_dir = base / "images" / nc.id;
    // Every image on disk needs a pose.
    if (fs::is_directory(image_dir)) {
      std::vector<std::string> names;
      for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (entry.path().extension() == ".png") names.push_back(entry.path().stem().string());
      }
      std::sort(names.begin(), names.end());
      for (const std::string& stem : names) {
        int t = -1;
        try {
          t = std::stoi(stem);
        } catch (const std::logic_error&) {
        }
        if (t < 0 || !poses.count(t)) problems.push_back("image " + (image_dir / (stem + ".png")).string() + " has no pose");
      }
    }
    if (!camera_selected(nc.id)) continue;
    int ordinal = 0;
    for (const auto& [t, pose] : poses) {
      const bool strided = ordinal++ % config.frame_stride == 0;
      if (!strided || !frame_selected(t)) continue;
      FrameRecord rec;
      rec.camera_id = nc.id;
      rec.frame = t;
      rec.pose = pose;
      rec.image_path = (image_dir / frame_file_name(t)).string();
      const fs::path mask = base / "masks" / nc.id / frame_file_name(t);
      if (fs::exists(mask)) rec.mask_path = mask.string();
      if (!fs::exists(rec.image_path)) {
        problems.push_back("missing image " + rec.image_path);
        continue;
      }
      const auto [w, h] = png_size(rec.image_path);
      if (w != nc.camera.width || h != nc.camera.height) {
        problems.push_back("image " + rec.image_path + " is " + std::to_string(w) + "x" + std::to_string(h) +
                           ", camera expects " + std::to_string(nc.camera.width) + "x" +
                           std::to_string(nc.camera.height));
        continue;
      }
      ds.frames.push_back(std::move(rec));
    }
  }
  if (!problems.empty()) {
    std::string msg = "dataset '" + root + "' is inconsistent:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return ds;
}

} // namespace gavatar
