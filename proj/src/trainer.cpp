#include "gavatar/trainer.h"

#include "gavatar/container.h"
#include "gavatar/deformation.h"
#include "gavatar/pipeline.h"
#include "gavatar/rotation.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gavatar {

void GradStats::reset(int n) {
  accum = Eigen::VectorXd::Zero(n);
  count = Eigen::VectorXd::Zero(n);
}

void GradStats::gather(std::span<const int> sources) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sources.size()));
  Eigen::VectorXd c = a;
  for (std::size_t r = 0; r < sources.size(); ++r) {
    if (sources[r] < 0) continue;
    a(r) = accum(sources[r]);
    c(r) = count(sources[r]);
  }
  accum = std::move(a);
  count = std::move(c);
}

Eigen::VectorXd GradStats::average() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(accum.size());
  for (Eigen::Index i = 0; i < accum.size(); ++i) {
    if (count(i) > 0.0) out(i) = accum(i) / count(i);
  }
  return out;
}

namespace {

void copy_row(GaussianCloud& dst, int di, const GaussianCloud& src, int si) {
  dst.centers.row(di) = src.centers.row(si);
  dst.rotations.row(di) = src.rotations.row(si);
  dst.log_scales.row(di) = src.log_scales.row(si);
  dst.opacity_logits(di) = src.opacity_logits(si);
  dst.sh.row(di) = src.sh.row(si);
  dst.parents[di] = src.parents[si];
  dst.canonical_normals.row(di) = src.canonical_normals.row(si);
}

} // namespace

DensifyResult densify_and_prune(const GaussianCloud& cloud, const GradStats& stats, const TrainSchedule& schedule,
                                double scene_extent, bool densify, std::mt19937_64& rng) {
  const int n = cloud.size();
  if (stats.accum.size() != n || stats.count.size() != n) {
    throw ShapeError("densify_and_prune: gradient statistics do not match the cloud");
  }
  const Eigen::VectorXd avg = stats.average();
  const double split_bound = schedule.split_scale_fraction * scene_extent;
  std::vector<int> keep, clone, split;
  for (int i = 0; i < n; ++i) {
    const bool hot = densify && avg(i) >= schedule.densify_grad_threshold && stats.count(i) > 0.0;
    const bool large = std::exp(cloud.log_scales.row(i).maxCoeff()) > split_bound;
    if (hot && large) {
      split.push_back(i);
    } else {
      keep.push_back(i);
      if (hot) clone.push_back(i);
    }
  }

  GaussianCloud grown = cloud.select(keep);
  std::vector<int> sources = keep;
  const int base = grown.size();
  grown.resize(base + static_cast<int>(clone.size() + 2 * split.size()));
  int row = base;
  for (int i : clone) {
    copy_row(grown, row++, cloud, i);
    sources.push_back(-1);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double shrink = std::log(1.6);
  for (int i : split) {
    const Mat3 r = quat_to_matrix(cloud.rotations.row(i).transpose());
    const Vec3 s = cloud.log_scales.row(i).array().exp();
    for (int child = 0; child < 2; ++child) {
      const Vec3 local(normal(rng) * s(0), normal(rng) * s(1), normal(rng) * s(2));
      copy_row(grown, row, cloud, i);
      grown.centers.row(row) += (r * local).transpose();
      grown.log_scales.row(row).array() -= shrink;
      sources.push_back(-1);
      ++row;
    }
  }

  const double prune_bound = schedule.prune_scale_fraction * scene_extent;
  std::vector<int> survivors, survivor_sources;
  for (int i = 0; i < grown.size(); ++i) {
    const bool faint = sigmoid(grown.opacity_logits(i)) < schedule.prune_opacity;
    const bool huge = std::exp(grown.log_scales.row(i).maxCoeff()) > prune_bound;
    if (faint || huge) continue;
    survivors.push_back(i);
    survivor_sources.push_back(sources[i]);
  }
  DensifyResult out;
  out.cloned = static_cast<int>(clone.size());
  out.split = static_cast<int>(split.size());
  out.pruned = grown.size() - static_cast<int>(survivors.size());
  out.cloud = grown.select(survivors);
  out.sources = std::move(survivor_sources);
  return out;
}

GaussianCloud maybe_reassign_parents(const GaussianCloud& cloud, const PosedBody& canonical, std::int64_t completed,
                                     const TrainSchedule& schedule, double tau) {
  if (!is_parent_update_step(completed, schedule)) return cloud;
  return reassign_parents(cloud, canonical, tau);
}

void GaussianOptimizer::reset(int n, int sh_count) {
  centers.reset(n, 3);
  rotations.reset(n, 4);
  log_scales.reset(n, 3);
  opacity.reset(n, 1);
  sh.reset(n, 3 * sh_count);
}

void GaussianOptimizer::gather(std::span<const int> sources) {
  for (AdamState* s : {&centers, &rotations, &log_scales, &opacity, &sh}) s->gather(sources);
}

void DrmOptimizer::reset(const DrmNetwork& net) {
  for (int l = 0; l < DrmNetwork::kLayerCount; ++l) {
    // Eigen weights are column-major; moments follow the same flat order.
    weight[l].reset(static_cast<int>(net.layers[l].weight.size()), 1);
    bias[l].reset(static_cast<int>(net.layers[l].bias.size()), 1);
  }
}

std::pair<Vec3, double> rig_geometry(const std::vector<NamedCamera>& cameras) {
  if (cameras.empty()) throw std::invalid_argument("rig_geometry: no cameras");
  Vec3 center = Vec3::Zero();
  for (const NamedCamera& c : cameras) center += c.camera.center();
  center /= static_cast<double>(cameras.size());
  double radius = 0.0;
  for (const NamedCamera& c : cameras) radius += (c.camera.center() - center).norm();
  radius /= static_cast<double>(cameras.size());
  if (radius < 1e-6) {
    // Single or coincident cameras: use the distance to the world origin (body root).
    radius = std::max(center.norm(), 1.0);
  }
  return {center, radius};
}

TrainerState init_trainer(const RunConfig& config, const BodyModel& body, const ShapeParams& shape,
                          const std::vector<NamedCamera>& cameras) {
  config.validate();
  body.validate();
  TrainerState st;
  st.config = config;
  st.body = body;
  st.shape = shape;
  st.canonical = pose_body(body, shape, PoseParams::canonical(body.joint_count()));
  const auto [center, radius] = rig_geometry(cameras);
  double extent = 0.0;
  for (const NamedCamera& c : cameras) extent = std::max(extent, (c.camera.center() - center).norm());
  st.scene_extent = 1.1 * std::max(extent, radius);
  st.background_center = center;
  st.background_radius = config.background_radius > 0.0 ? config.background_radius : 2.0 * radius;

  GaussianCloud human = init_human_gaussians(st.canonical, config.sh_degree, config.init_scale);
  GaussianCloud background =
      init_background_gaussians(config.background_count, st.background_radius, config.seed + 1, config.sh_degree);
  background.centers.rowwise() += center.transpose();
  st.cloud = concat(human, background);
  st.drm = DrmNetwork(body.joint_count(), config.drm_hidden, config.drm_bounds);
  st.drm.initialize(config.seed + 2);
  st.gaussian_opt.reset(st.cloud.size(), st.cloud.sh_count());
  st.drm_opt.reset(st.drm);
  st.stats.reset(st.cloud.size());
  st.rng.seed(config.seed);
  return st;
}

double position_learning_rate(const TrainerState& st) {
  const double total = static_cast<double>(st.config.schedule.total_iters);
  const double u = std::clamp(static_cast<double>(st.iteration) / total, 0.0, 1.0);
  const double a = st.config.lr.position_init, b = st.config.lr.position_final;
  if (a <= 0.0 || b <= 0.0) return st.scene_extent * ((1.0 - u) * a + u * b);
  return st.scene_extent * std::exp((1.0 - u) * std::log(a) + u * std::log(b));
}

namespace {

bool all_finite(const CloudGradients& g) {
  return g.centers.allFinite() && g.rotations.allFinite() && g.log_scales.allFinite() &&
         g.opacity_logits.allFinite() && g.sh.allFinite() && g.directions.allFinite();
}

} // namespace

StepGradients compute_step_gradients(const TrainerState& st, const TrainingView& view) {
  const RunConfig& cfg = st.config;
  auto fail = [&](const std::string& what) {
    throw TrainingError(what + " at iteration " + std::to_string(st.iteration) + " (camera " + view.camera_id +
                        ", frame " + std::to_string(view.frame) + ")");
  };

  const GaussianCloud& cloud = st.cloud;
  const int n = cloud.size();
  const PosedBody posed = pose_body(st.body, st.shape, view.pose);
  const FaceTransformSet t_set = compute_pvd(st.canonical, posed);
  std::vector<Vec4> face_quats(t_set.size());
  for (int f = 0; f < t_set.size(); ++f) face_quats[f] = quat_from_matrix(t_set.transforms[f].rotation);

  // Rigid posing of human Gaussians, kept per human row for the backward pass.
  const std::vector<int> human = cloud.human_indices();
  const int h_count = static_cast<int>(human.size());
  Points3 p_rigid(h_count, 3), base_dir(h_count, 3);
  Quats q_rigid(h_count, 4);
  for (int h = 0; h < h_count; ++h) {
    const int i = human[h];
    const int f = cloud.parents[i].face_index();
    const RigidTransform& t = t_set.transforms[f];
    p_rigid.row(h) = t.apply(cloud.centers.row(i).transpose()).transpose();
    q_rigid.row(h) = quat_multiply(face_quats[f], cloud.rotations.row(i).transpose()).transpose();
    base_dir.row(h) = (t.rotation * cloud.canonical_normals.row(i).transpose()).transpose();
  }
  DrmForward fwd;
  std::vector<ResidualTransform> residuals;
  if (h_count > 0) {
    fwd = drm_forward(st.drm, encode_joint_distances(p_rigid, posed.joints));
    residuals = postprocess_output(fwd.raw, st.drm.bounds());
  }

  GaussianCloud world = cloud;
  for (int h = 0; h < h_count; ++h) {
    const int i = human[h];
    world.centers.row(i) = p_rigid.row(h) + residuals[h].translation.transpose();
    world.rotations.row(i) = quat_multiply(residuals[h].rotation, q_rigid.row(h).transpose()).transpose();
  }
  const Vec3 eye = view.camera.center();
  DirectionField dirs = relative_sh_directions(world, eye);
  for (int h = 0; h < h_count; ++h) {
    dirs.directions.row(human[h]) =
        (quat_to_matrix(residuals[h].rotation) * base_dir.row(h).transpose()).transpose();
  }

  StepGradients out;
  const RasterSettings settings = cfg.raster_settings();
  ProjectedGaussians pg;
  out.render = render(world, dirs.directions, view.camera, settings, &pg);
  if (!out.render.rgb.same_shape(view.image)) fail("image size differs from the camera");
  out.loss = total_loss(out.render.rgb, view.image, cfg.loss, st.perceptual);
  if (!std::isfinite(out.loss.total)) fail("non-finite loss");

  const CloudGradients g =
      rasterize_backward(world, dirs.directions, view.camera, settings, pg, out.render, out.loss.grad);
  if (!all_finite(g)) fail("non-finite gradients");

  // Chain world-space gradients back to the canonical parameters.
  out.centers = g.centers;
  out.rotations = g.rotations;
  out.log_scales = g.log_scales;
  out.opacity_logits = g.opacity_logits;
  out.sh = g.sh;
  out.mean2d_norm = g.mean2d_norm;
  out.visible.resize(n);
  for (int i = 0; i < n; ++i) out.visible[i] = pg.visible(i) ? 1 : 0;
  std::vector<char> flagged(n, 0);
  for (int i : dirs.flagged) flagged[i] = 1;
  for (int i = 0; i < n; ++i) {
    if (cloud.parents[i].is_face() || flagged[i]) continue;
    const Vec3 v = eye - world.centers.row(i).transpose();
    const double len = v.norm();
    const Vec3 d = v / len;
    const Vec3 gd = g.directions.row(i).transpose();
    const Vec3 gv = (gd - d * d.dot(gd)) / len;
    out.centers.row(i) -= gv.transpose();
  }
  Eigen::MatrixXd g_raw = Eigen::MatrixXd::Zero(h_count, DrmNetwork::kOutputDim);
  Points3 g_rigid(h_count, 3);
  Quats g_qrigid(h_count, 4);
  for (int h = 0; h < h_count; ++h) {
    const int i = human[h];
    const Vec4 qr = residuals[h].rotation;
    Vec4 g_qr = Vec4::Zero(), g_qd = Vec4::Zero();
    quat_multiply_backward(qr, q_rigid.row(h).transpose(), g.rotations.row(i).transpose(), &g_qr, &g_qd);
    Vec3 unused = Vec3::Zero();
    rotate_vector_backward(qr, base_dir.row(h).transpose(), g.directions.row(i).transpose(), &g_qr, &unused);
    const Vec3 g_pf = g.centers.row(i).transpose();
    g_raw.row(h) = postprocess_backward(fwd.raw.row(h), st.drm.bounds(), g_pf, g_qr);
    g_rigid.row(h) = g_pf.transpose();
    g_qrigid.row(h) = g_qd.transpose();
  }
  if (h_count > 0) {
    // Network weight gradients are only needed while the DRM is being updated.
    const bool weight_grads = drm_trainable(schedule_phase(st.iteration, st.config.schedule));
    out.drm = drm_backward(st.drm, fwd.cache, g_raw, weight_grads);
    out.has_drm = weight_grads;
    const int joints = st.drm.joint_count();
    for (int h = 0; h < h_count; ++h) {
      for (int j = 0; j < joints; ++j) g_rigid.row(h) += out.drm.input.block(h, 3 * j, 1, 3);
    }
  }
  for (int h = 0; h < h_count; ++h) {
    const int i = human[h];
    const int f = cloud.parents[i].face_index();
    out.centers.row(i) = (t_set.transforms[f].rotation.transpose() * g_rigid.row(h).transpose()).transpose();
    Vec4 unused = Vec4::Zero(), g_qc = Vec4::Zero();
    quat_multiply_backward(face_quats[f], cloud.rotations.row(i).transpose(), g_qrigid.row(h).transpose(), &unused,
                           &g_qc);
    out.rotations.row(i) = g_qc.transpose();
  }
  if (!out.centers.allFinite() || !out.rotations.allFinite()) fail("non-finite chained gradients");
  return out;
}

StepReport train_step(TrainerState& st, const TrainingView& view) {
  const RunConfig& cfg = st.config;
  const TrainPhase phase = schedule_phase(st.iteration, cfg.schedule);
  StepReport report;
  report.iteration = st.iteration;
  report.phase = phase;
  report.camera_id = view.camera_id;
  report.frame = view.frame;

  const StepGradients sg = compute_step_gradients(st, view);
  report.loss = sg.loss.total;
  report.l1 = sg.loss.l1;
  report.ssim = sg.loss.ssim;
  report.perceptual = sg.loss.perceptual;
  GaussianCloud& cloud = st.cloud;
  const int n = cloud.size();

  const AdamHyper gaussian_hyper{0.9, 0.999, 1e-15};
  if (gaussians_trainable(phase)) {
    GaussianOptimizer& o = st.gaussian_opt;
    o.centers.update(cloud.centers.data(), sg.centers.data(), position_learning_rate(st), gaussian_hyper);
    o.rotations.update(cloud.rotations.data(), sg.rotations.data(), cfg.lr.rotation, gaussian_hyper);
    o.log_scales.update(cloud.log_scales.data(), sg.log_scales.data(), cfg.lr.scale, gaussian_hyper);
    o.opacity.update(cloud.opacity_logits.data(), sg.opacity_logits.data(), cfg.lr.opacity, gaussian_hyper);
    std::vector<double> sh_rates(3 * cloud.sh_count(), cfg.lr.sh_rest);
    for (int c = 0; c < 3; ++c) sh_rates[c] = cfg.lr.sh_dc;
    o.sh.update(cloud.sh.data(), sg.sh.data(), sh_rates, gaussian_hyper);
    for (int i = 0; i < n; ++i) {
      const double norm = cloud.rotations.row(i).norm();
      if (norm > 0.0) cloud.rotations.row(i) /= norm;
    }
    const double ndc = 0.5 * std::max(view.camera.width, view.camera.height);
    for (int i = 0; i < n; ++i) {
      if (!sg.visible[i]) continue;
      st.stats.accum(i) += sg.mean2d_norm(i) * ndc;
      st.stats.count(i) += 1.0;
    }
  }
  if (drm_trainable(phase) && sg.has_drm) {
    const AdamHyper drm_hyper{0.9, 0.999, 1e-8};
    for (int l = 0; l < DrmNetwork::kLayerCount; ++l) {
      st.drm_opt.weight[l].update(st.drm.layers[l].weight.data(), sg.drm.layers[l].weight.data(), cfg.lr.drm, drm_hyper);
      st.drm_opt.bias[l].update(st.drm.layers[l].bias.data(), sg.drm.layers[l].bias.data(), cfg.lr.drm, drm_hyper);
    }
  }

  ++st.iteration;
  if (is_densify_step(st.iteration, phase, cfg.schedule)) {
    DensifyResult r = densify_and_prune(cloud, st.stats, cfg.schedule, st.scene_extent, true, st.rng);
    st.gaussian_opt.gather(r.sources);
    st.stats.reset(r.cloud.size());
    cloud = std::move(r.cloud);
    report.cloned = r.cloned;
    report.split = r.split;
    report.pruned = r.pruned;
  }
  if (is_parent_update_step(st.iteration, cfg.schedule)) {
    cloud = reassign_parents(cloud, st.canonical, cfg.tau);
    report.reassigned = true;
  }
  report.gaussians = cloud.size();
  report.human = cloud.human_count();
  return report;
}

namespace {

using U = std::uint64_t;

void put_adam(ArrayContainer& c, const std::string& name, const AdamState& s) {
  c.put_f64(name + "/m", {s.first().size()}, s.first());
  c.put_f64(name + "/v", {s.second().size()}, s.second());
  const std::int64_t meta[2] = {s.step(), s.width()};
  c.put_i64(name + "/meta", {2}, meta);
}

void get_adam(const ArrayContainer& c, const std::string& name, AdamState& s) {
  const auto meta = c.get_i64(name + "/meta");
  if (meta.size() != 2) throw FormatError(name + "/meta: expected two entries");
  const auto m = c.get_f64(name + "/m");
  const auto v = c.get_f64(name + "/v");
  const int width = static_cast<int>(meta[1]);
  if (width <= 0 || m.size() != v.size() || m.size() % width != 0) throw FormatError(name + ": inconsistent moments");
  s.reset(static_cast<int>(m.size() / width), width);
  s.first() = m;
  s.second() = v;
  s.set_step(meta[0]);
}

template <typename M>
void put_matrix(ArrayContainer& c, const std::string& name, const M& m) {
  // Row-major storage regardless of the Eigen layout.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
  c.put_f64(name, {static_cast<U>(r.rows()), static_cast<U>(r.cols())},
            {r.data(), static_cast<std::size_t>(r.size())});
}

RowMatrix get_matrix(const ArrayContainer& c, const std::string& name) {
  const auto& shape = c.shape(name);
  if (shape.size() != 2) throw FormatError(name + ": expected a matrix");
  const auto data = c.get_f64(name);
  return Eigen::Map<const RowMatrix>(data.data(), static_cast<Eigen::Index>(shape[0]),
                                     static_cast<Eigen::Index>(shape[1]));
}

} // namespace

void save_checkpoint(const TrainerState& st, const std::string& path) {
  ArrayContainer c;
  const std::int64_t version = kCheckpointVersion;
  c.put_i64("meta/version", {1}, {&version, 1});
  c.put_i64("meta/iteration", {1}, {&st.iteration, 1});
  c.put_string("meta/config", config_to_json(st.config));
  c.put_string("meta/config_hash", config_hash(st.config));
  std::ostringstream rng;
  rng << st.rng;
  c.put_string("meta/rng", rng.str());
  const double scene[5] = {st.scene_extent, st.background_center.x(), st.background_center.y(),
                           st.background_center.z(), st.background_radius};
  c.put_f64("meta/scene", {5}, scene);

  body_model_to_container(st.body, c, "body/");
  c.put_f64("shape", {static_cast<U>(st.shape.betas.size())}, {st.shape.betas.data(), static_cast<std::size_t>(st.shape.betas.size())});

  const GaussianCloud& g = st.cloud;
  const std::int64_t degree = g.sh_degree;
  c.put_i64("cloud/sh_degree", {1}, {&degree, 1});
  put_matrix(c, "cloud/centers", g.centers);
  put_matrix(c, "cloud/rotations", g.rotations);
  put_matrix(c, "cloud/log_scales", g.log_scales);
  put_matrix(c, "cloud/opacity_logits", g.opacity_logits);
  put_matrix(c, "cloud/sh", g.sh);
  put_matrix(c, "cloud/canonical_normals", g.canonical_normals);
  std::vector<std::int32_t> parents;
  for (ParentId p : g.parents) parents.push_back(p.code());
  c.put_i32("cloud/parents", {parents.size()}, parents);

  const OutputBounds& b = st.drm.bounds();
  const double drm_meta[5] = {static_cast<double>(st.drm.joint_count()), static_cast<double>(st.drm.hidden()),
                              b.mode == OutputBounds::Mode::Bounded ? 0.0 : 1.0, b.translation, b.angle};
  c.put_f64("drm/meta", {5}, drm_meta);
  for (int l = 0; l < DrmNetwork::kLayerCount; ++l) {
    put_matrix(c, "drm/w" + std::to_string(l), st.drm.layers[l].weight);
    put_matrix(c, "drm/b" + std::to_string(l), st.drm.layers[l].bias);
    put_adam(c, "adam/drm_w" + std::to_string(l), st.drm_opt.weight[l]);
    put_adam(c, "adam/drm_b" + std::to_string(l), st.drm_opt.bias[l]);
  }
  put_adam(c, "adam/centers", st.gaussian_opt.centers);
  put_adam(c, "adam/rotations", st.gaussian_opt.rotations);
  put_adam(c, "adam/log_scales", st.gaussian_opt.log_scales);
  put_adam(c, "adam/opacity", st.gaussian_opt.opacity);
  put_adam(c, "adam/sh", st.gaussian_opt.sh);
  put_matrix(c, "stats/accum", st.stats.accum);
  put_matrix(c, "stats/count", st.stats.count);
  c.write(path, kCheckpointMagic);
}

TrainerState load_checkpoint(const std::string& path, const RunConfig* expected, bool allow_config_mismatch) {
  const ArrayContainer c = ArrayContainer::read(path, kCheckpointMagic);
  const auto version = c.get_i64("meta/version");
  if (version.size() != 1 || version[0] != kCheckpointVersion) {
    throw FormatError("checkpoint '" + path + "' has unsupported version " +
                      (version.empty() ? std::string("?") : std::to_string(version[0])));
  }
  TrainerState st;
  st.config = config_from_json(c.get_string("meta/config"));
  const std::string stored_hash = c.get_string("meta/config_hash");
  if (expected && config_hash(*expected) != stored_hash && !allow_config_mismatch) {
    throw ConfigError("checkpoint config hash " + stored_hash + " differs from the requested config " +
                      config_hash(*expected) + "; pass the override flag to resume anyway");
  }
  if (expected) st.config = *expected;
  st.iteration = c.get_i64("meta/iteration").at(0);
  std::istringstream rng(c.get_string("meta/rng"));
  rng >> st.rng;
  if (!rng) throw FormatError("checkpoint RNG state is corrupt");
  const auto scene = c.get_f64("meta/scene");
  if (scene.size() != 5) throw FormatError("meta/scene: expected five entries");
  st.scene_extent = scene[0];
  st.background_center = Vec3(scene[1], scene[2], scene[3]);
  st.background_radius = scene[4];

  st.body = body_model_from_container(c, "body/");
  const auto betas = c.get_f64("shape");
  st.shape.betas = Eigen::Map<const Eigen::VectorXd>(betas.data(), static_cast<Eigen::Index>(betas.size()));
  st.canonical = pose_body(st.body, st.shape, PoseParams::canonical(st.body.joint_count()));

  GaussianCloud& g = st.cloud;
  g = GaussianCloud(static_cast<int>(c.get_i64("cloud/sh_degree").at(0)));
  const RowMatrix centers = get_matrix(c, "cloud/centers");
  g.resize(static_cast<int>(centers.rows()));
  auto load_into = [&](auto& dst, const std::string& name) {
    const RowMatrix m = get_matrix(c, name);
    if (m.rows() != dst.rows() || m.cols() != dst.cols()) throw FormatError(name + ": unexpected shape");
    dst = m;
  };
  g.centers = centers;
  load_into(g.rotations, "cloud/rotations");
  load_into(g.log_scales, "cloud/log_scales");
  load_into(g.opacity_logits, "cloud/opacity_logits");
  load_into(g.sh, "cloud/sh");
  load_into(g.canonical_normals, "cloud/canonical_normals");
  const auto parents = c.get_i32("cloud/parents");
  if (static_cast<int>(parents.size()) != g.size()) throw FormatError("cloud/parents: unexpected length");
  for (int i = 0; i < g.size(); ++i) g.parents[i] = ParentId::from_code(parents[i]);
  const auto issues = audit_cloud(g, st.canonical.face_count());
  if (!issues.empty()) throw ValidationError("checkpoint cloud fails audit: " + issues.front());

  const auto dm = c.get_f64("drm/meta");
  if (dm.size() != 5) throw FormatError("drm/meta: expected five entries");
  const OutputBounds bounds =
      dm[2] == 0.0 ? OutputBounds::bounded(dm[3], dm[4]) : OutputBounds::unbounded(dm[3], dm[4]);
  st.drm = DrmNetwork(static_cast<int>(dm[0]), static_cast<int>(dm[1]), bounds);
  for (int l = 0; l < DrmNetwork::kLayerCount; ++l) {
    load_into(st.drm.layers[l].weight, "drm/w" + std::to_string(l));
    load_into(st.drm.layers[l].bias, "drm/b" + std::to_string(l));
    get_adam(c, "adam/drm_w" + std::to_string(l), st.drm_opt.weight[l]);
    get_adam(c, "adam/drm_b" + std::to_string(l), st.drm_opt.bias[l]);
  }
  st.drm.check_shapes();
  get_adam(c, "adam/centers", st.gaussian_opt.centers);
  get_adam(c, "adam/rotations", st.gaussian_opt.rotations);
  get_adam(c, "adam/log_scales", st.gaussian_opt.log_scales);
  get_adam(c, "adam/opacity", st.gaussian_opt.opacity);
  get_adam(c, "adam/sh", st.gaussian_opt.sh);
  st.stats.reset(g.size());
  load_into(st.stats.accum, "stats/accum");
  load_into(st.stats.count, "stats/count");
  return st;
}

RenderOutput render_avatar(const TrainerState& st, const PoseParams& pose, const Camera& camera,
                           bool keep_background) {
  if (pose.rotations.rows() != st.body.joint_count()) {
    throw ShapeError("pose has " + std::to_string(pose.rotations.rows()) + " joints, body model has " +
                     std::to_string(st.body.joint_count()));
  }
  const GaussianCloud cloud = keep_background ? st.cloud : filter_background(st.cloud);
  const DeformedCloud d =
      deform_cloud(cloud, st.drm, st.body, st.shape, st.canonical, pose, camera.center());
  return render(d.world, d.directions, camera, st.config.raster_settings());
}

} // namespace gavatar
