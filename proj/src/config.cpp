#include "gavatar/config.h"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace gavatar {

using nlohmann::json;

namespace {

json to_tree(const RunConfig& c) {
  const TrainSchedule& s = c.schedule;
  json j;
  j["loss"] = {{"l1", c.loss.l1}, {"ssim", c.loss.ssim}, {"lpips", c.loss.lpips}};
  j["tau"] = c.tau;
  j["schedule"] = {{"warmup_iters", s.warmup_iters},
                   {"alternation_block", s.alternation_block},
                   {"total_iters", s.total_iters},
                   {"densify_from", s.densify_from},
                   {"densify_until", s.densify_until},
                   {"densify_interval", s.densify_interval},
                   {"parent_update_every", s.parent_update_every},
                   {"densify_grad_threshold", s.densify_grad_threshold},
                   {"prune_opacity", s.prune_opacity},
                   {"prune_scale_fraction", s.prune_scale_fraction},
                   {"split_scale_fraction", s.split_scale_fraction}};
  j["lr"] = {{"position_init", c.lr.position_init}, {"position_final", c.lr.position_final},
             {"rotation", c.lr.rotation},           {"scale", c.lr.scale},
             {"opacity", c.lr.opacity},             {"sh_dc", c.lr.sh_dc},
             {"sh_rest", c.lr.sh_rest},             {"drm", c.lr.drm}};
  const bool bounded = c.drm_bounds.mode == OutputBounds::Mode::Bounded;
  j["drm"] = {{"hidden", c.drm_hidden},
              {"bounds", bounded ? "bounded" : "unbounded"},
              {"translation", c.drm_bounds.translation},
              {"angle_deg", c.drm_bounds.angle * 180.0 / std::numbers::pi}};
  j["gaussians"] = {{"sh_degree", c.sh_degree}, {"init_scale", c.init_scale}};
  j["background"] = {{"count", c.background_count},
                     {"radius", c.background_radius},
                     {"color", {c.background_color.x(), c.background_color.y(), c.background_color.z()}}};
  j["render"] = {{"tile_size", c.tile_size},
                 {"lowpass", c.lowpass},
                 {"alpha_cap", c.alpha_cap},
                 {"min_transmittance", c.min_transmittance},
                 {"mask_threshold", c.mask_threshold}};
  j["seed"] = c.seed;
  j["data"] = {{"train_cameras", c.train_cameras},   {"test_cameras", c.test_cameras},
               {"frame_stride", c.frame_stride},     {"test_frame_modulo", c.test_frame_modulo},
               {"test_frame_offset", c.test_frame_offset}};
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

RunConfig from_tree(const json& j) {
  RunConfig c;
  c.loss.l1 = j["loss"]["l1"];
  c.loss.ssim = j["loss"]["ssim"];
  c.loss.lpips = j["loss"]["lpips"];
  c.tau = j["tau"];
  const json& s = j["schedule"];
  c.schedule.warmup_iters = s["warmup_iters"];
  c.schedule.alternation_block = s["alternation_block"];
  c.schedule.total_iters = s["total_iters"];
  c.schedule.densify_from = s["densify_from"];
  c.schedule.densify_until = s["densify_until"];
  c.schedule.densify_interval = s["densify_interval"];
  c.schedule.parent_update_every = s["parent_update_every"];
  c.schedule.densify_grad_threshold = s["densify_grad_threshold"];
  c.schedule.prune_opacity = s["prune_opacity"];
  c.schedule.prune_scale_fraction = s["prune_scale_fraction"];
  c.schedule.split_scale_fraction = s["split_scale_fraction"];
  const json& lr = j["lr"];
  c.lr.position_init = lr["position_init"];
  c.lr.position_final = lr["position_final"];
  c.lr.rotation = lr["rotation"];
  c.lr.scale = lr["scale"];
  c.lr.opacity = lr["opacity"];
  c.lr.sh_dc = lr["sh_dc"];
  c.lr.sh_rest = lr["sh_rest"];
  c.lr.drm = lr["drm"];
  const json& d = j["drm"];
  c.drm_hidden = d["hidden"];
  const std::string mode = d["bounds"];
  const double angle = static_cast<double>(d["angle_deg"]) * std::numbers::pi / 180.0;
  if (mode == "bounded") {
    c.drm_bounds = OutputBounds::bounded(d["translation"], angle);
  } else if (mode == "unbounded") {
    c.drm_bounds = OutputBounds::unbounded(d["translation"], angle);
  } else {
    throw ConfigError("drm.bounds must be \"bounded\" or \"unbounded\"");
  }
  c.sh_degree = j["gaussians"]["sh_degree"];
  c.init_scale = j["gaussians"]["init_scale"];
  c.background_count = j["background"]["count"];
  c.background_radius = j["background"]["radius"];
  const json& col = j["background"]["color"];
  if (!col.is_array() || col.size() != 3) throw ConfigError("background.color must be a 3-element array");
  c.background_color = Vec3(col[0], col[1], col[2]);
  const json& r = j["render"];
  c.tile_size = r["tile_size"];
  c.lowpass = r["lowpass"];
  c.alpha_cap = r["alpha_cap"];
  c.min_transmittance = r["min_transmittance"];
  c.mask_threshold = r["mask_threshold"];
  c.seed = j["seed"];
  const json& data = j["data"];
  c.train_cameras = data["train_cameras"].get<std::vector<std::string>>();
  c.test_cameras = data["test_cameras"].get<std::vector<std::string>>();
  c.frame_stride = data["frame_stride"];
  c.test_frame_modulo = data["test_frame_modulo"];
  c.test_frame_offset = data["test_frame_offset"];
  c.checkpoint_every = j["checkpoint_every"];
  return c;
}

bool compatible(const json& expected, const json& given) {
  if (expected.is_number_integer()) return given.is_number_integer();
  if (expected.is_number()) return given.is_number();
  if (expected.is_array()) {
    if (!given.is_array()) return false;
    // Typed by the first default element, or by being strings for list-valued fields.
    for (const json& g : given) {
      if (!expected.empty() ? !compatible(expected.front(), g) : !g.is_string()) return false;
    }
    return true;
  }
  return expected.type() == given.type();
}

// Copies `given` onto `base`, rejecting keys absent from base and mistyped values.
void merge_checked(json& base, const json& given, const std::string& path) {
  if (!given.is_object()) throw ConfigError("config" + (path.empty() ? "" : " key '" + path + "'") + " must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else if (!compatible(slot, it.value())) {
      throw ConfigError("config key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                        it.value().type_name());
    } else {
      slot = it.value();
    }
  }
}

RunConfig checked(const json& tree) {
  RunConfig c;
  try {
    c = from_tree(tree);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

} // namespace

void RunConfig::validate() const {
  loss.validate();
  schedule.validate();
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (drm_hidden <= 0) throw ValidationError("drm.hidden must be positive");
  if (!(drm_bounds.translation > 0.0) || !(drm_bounds.angle > 0.0)) {
    throw ValidationError("drm translation/angle bounds must be positive");
  }
  if (sh_degree < 0 || sh_degree > 3) throw ValidationError("gaussians.sh_degree must be in [0, 3]");
  if (background_count < 0) throw ValidationError("background.count must be >= 0");
  if (tile_size <= 0) throw ValidationError("render.tile_size must be positive");
  if (!(lowpass >= 0.0) || !(alpha_cap > 0.0 && alpha_cap < 1.0) || !(min_transmittance > 0.0)) {
    throw ValidationError("render settings out of range");
  }
  if (frame_stride <= 0) throw ValidationError("data.frame_stride must be positive");
  if (test_frame_modulo < 0 || (test_frame_modulo > 0 && (test_frame_offset < 0 || test_frame_offset >= test_frame_modulo))) {
    throw ValidationError("data.test_frame_offset must lie in [0, test_frame_modulo)");
  }
  for (double v : {lr.position_init, lr.position_final, lr.rotation, lr.scale, lr.opacity, lr.sh_dc, lr.sh_rest, lr.drm}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("learning rates must be finite and non-negative");
  }
  if (checkpoint_every <= 0) throw ValidationError("checkpoint_every must be positive");
}

RasterSettings RunConfig::raster_settings() const {
  RasterSettings s;
  s.tile_size = tile_size;
  s.lowpass = lowpass;
  s.alpha_cap = alpha_cap;
  s.min_transmittance = min_transmittance;
  s.background = background_color;
  return s;
}

std::string config_to_json(const RunConfig& config) { return to_tree(config).dump(2); }

RunConfig config_from_json(const std::string& text) {
  json given;
  try {
    given = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  json tree = to_tree(RunConfig{});
  merge_checked(tree, given, "");
  return checked(tree);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << config_to_json(config) << "\n";
}

RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides) {
  json tree = to_tree(config);
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;  // bare words are strings
    }
    // Build a nested object for the dotted key and merge it with checks.
    json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    for (std::size_t pos; (pos = rest.find('.')) != std::string::npos;) {
      parts.push_back(rest.substr(0, pos));
      rest = rest.substr(pos + 1);
    }
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    json probe = tree;
    const json* node = &probe;
    for (const std::string& p : parts) {
      if (!node->is_object() || !node->contains(p)) throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[p];
    }
    if (node->is_object()) throw ConfigError("config key '" + key + "' is a section, not a value");
    merge_checked(tree, patch, "");
  }
  return checked(tree);
}

std::string config_hash(const RunConfig& config) {
  const std::string text = to_tree(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace gavatar
