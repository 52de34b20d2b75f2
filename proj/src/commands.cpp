#include "gavatar/commands.h"

#include "gavatar/dataset.h"
#include "gavatar/losses.h"
#include "gavatar/pipeline.h"
#include "gavatar/trainer.h"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace gavatar {

namespace fs = std::filesystem;

namespace {

const Camera& find_camera(const std::vector<NamedCamera>& cams, const std::string& id) {
  if (id.empty()) {
    if (cams.empty()) throw UsageError("camera file has no cameras");
    return cams.front().camera;
  }
  for (const NamedCamera& c : cams) {
    if (c.id == id) return c.camera;
  }
  throw UsageError("unknown camera id '" + id + "'");
}

PoseParams pick_pose(const std::map<int, PoseParams>& poses, const std::optional<int>& frame) {
  if (poses.empty()) throw UsageError("pose file is empty");
  if (!frame) return poses.begin()->second;
  const auto it = poses.find(*frame);
  if (it == poses.end()) throw UsageError("pose file has no frame " + std::to_string(*frame));
  return it->second;
}

std::string checkpoint_name(std::int64_t iter) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "iter_%08lld.ckpt", static_cast<long long>(iter));
  return buf;
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

} // namespace

std::vector<std::string> timing_columns() {
  return {"pvd_calculation", "posing_1", "drm_calculation", "posing_2", "rendering", "image_save"};
}

int cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (o.out_dir.empty()) throw UsageError("synth: --out is required");
  SyntheticBodyOptions body_opt;
  body_opt.blend_fraction = o.blend_fraction;
  const BodyModel body = make_synthetic_body(o.joints, o.segments, body_opt);
  SyntheticSceneOptions scene_opt;
  scene_opt.width = o.width;
  scene_opt.height = o.height;
  const SyntheticScene scene = generate_synthetic_scene(body, o.cameras, o.frames, o.seed, o.out_dir, scene_opt);
  log << "wrote " << scene.cameras.size() << " cameras x " << scene.poses.size() << " frames to " << o.out_dir
      << "\n";
  return 0;
}

int cmd_train(const TrainOptions& o, std::ostream& log) {
  if (o.data_root.empty() || o.out_dir.empty()) throw UsageError("train: --data and --out are required");
  RunConfig config = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  config = apply_overrides(config, o.overrides);
  if (o.seed) config.seed = *o.seed;

  const SceneDataset ds = load_dataset(o.data_root, config, DatasetSplit::Train);
  if (ds.frames.empty()) throw ValidationError("train: the training split is empty");
  std::vector<TrainingView> views;
  views.reserve(ds.frames.size());
  for (const FrameRecord& f : ds.frames) {
    views.push_back({f.camera_id, f.frame, ds.camera(f.camera_id), read_png(f.image_path), f.pose});
  }

  TrainerState st = o.resume.empty() ? init_trainer(config, ds.body, ds.shape, ds.cameras)
                                     : load_checkpoint(o.resume, &config, o.allow_config_mismatch);
  const fs::path out(o.out_dir);
  fs::create_directories(out / "checkpoints");
  save_config(st.config, (out / "config.json").string());
  std::ofstream records((out / "log.jsonl").string(), o.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!records) throw std::runtime_error("cannot write training log in '" + o.out_dir + "'");

  const auto start = std::chrono::steady_clock::now();
  std::uniform_int_distribution<std::size_t> pick(0, views.size() - 1);
  while (st.iteration < st.config.schedule.total_iters) {
    const TrainingView& view = views[pick(st.rng)];
    const StepReport r = train_step(st, view);
    nlohmann::json line = {{"iter", r.iteration},      {"phase", to_string(r.phase)}, {"loss", r.loss},
                           {"l1", r.l1},               {"ssim", r.ssim},              {"lpips", r.perceptual},
                           {"gaussians", r.gaussians}, {"human", r.human},            {"camera", r.camera_id},
                           {"frame", r.frame}};
    if (r.cloned || r.split || r.pruned) line["density"] = {{"cloned", r.cloned}, {"split", r.split}, {"pruned", r.pruned}};
    if (r.reassigned) line["reassigned"] = true;
    records << line.dump() << "\n";
    if (st.iteration % st.config.checkpoint_every == 0) {
      save_checkpoint(st, (out / "checkpoints" / checkpoint_name(st.iteration)).string());
    }
    if (!o.quiet && (st.iteration % 100 == 0 || st.iteration == st.config.schedule.total_iters)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log << "iter " << st.iteration << " phase " << to_string(r.phase) << " loss " << fixed(r.loss) << " gaussians "
          << r.gaussians << " (" << r.human << " human) " << fixed(secs, 1) << "s\n";
    }
  }
  records.flush();
  save_checkpoint(st, (out / "final.ckpt").string());
  export_pointcloud(st.cloud, (out / "point_cloud.ply").string());
  return 0;
}

int cmd_render(const RenderOptions& o, std::ostream& log) {
  if (o.checkpoint.empty() || o.poses.empty() || o.cameras.empty() || o.out.empty()) {
    throw UsageError("render: --checkpoint, --poses, --cameras and --out are required");
  }
  const TrainerState st = load_checkpoint(o.checkpoint);
  const Camera& cam = find_camera(read_cameras(o.cameras), o.camera_id);
  const PoseParams pose = pick_pose(read_poses(o.poses), o.frame);
  const RenderOutput r = render_avatar(st, pose, cam, o.keep_background);
  write_png(r.rgb, o.out);
  if (!o.depth_out.empty()) write_png16(r.depth, o.depth_out, 65.535);
  log << "wrote " << o.out << "\n";
  return 0;
}

int cmd_animate(const AnimateOptions& o, std::ostream& log) {
  if (o.checkpoint.empty() || o.poses.empty() || o.cameras.empty() || o.out_dir.empty()) {
    throw UsageError("animate: --checkpoint, --poses, --cameras and --out are required");
  }
  const TrainerState st = load_checkpoint(o.checkpoint);
  const Camera& cam = find_camera(read_cameras(o.cameras), o.camera_id);
  const auto poses = read_poses(o.poses);
  fs::create_directories(o.out_dir);
  int index = 0;
  for (const auto& [t, pose] : poses) {
    const RenderOutput r = render_avatar(st, pose, cam, o.keep_background);
    write_png(r.rgb, (fs::path(o.out_dir) / frame_file_name(index++)).string());
  }
  log << "wrote " << index << " frames to " << o.out_dir << "\n";
  return 0;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.data_root.empty()) throw UsageError("eval: --checkpoint and --data are required");
  DatasetSplit split;
  if (o.split == "test") split = DatasetSplit::Test;
  else if (o.split == "train") split = DatasetSplit::Train;
  else if (o.split == "all") split = DatasetSplit::All;
  else throw UsageError("eval: --split must be test, train or all");
  const TrainerState st = load_checkpoint(o.checkpoint);
  const SceneDataset ds = load_dataset(o.data_root, st.config, split);
  if (ds.frames.empty()) throw ValidationError("eval: split '" + o.split + "' is empty");

  std::ostringstream table;
  table << "camera,frame,psnr,ssim,mask_iou\n";
  double sum_psnr = 0.0, sum_ssim = 0.0, sum_iou = 0.0;
  int iou_rows = 0;
  for (const FrameRecord& f : ds.frames) {
    const Camera& cam = ds.camera(f.camera_id);
    const Image gt = read_png(f.image_path);
    const RenderOutput r = render_avatar(st, f.pose, cam, o.keep_background);
    const double psnr = metric_psnr(r.rgb, gt);
    const double ssim = metric_ssim(r.rgb, gt);
    sum_psnr += psnr;
    sum_ssim += ssim;
    std::string iou_text;
    if (!f.mask_path.empty()) {
      const RenderOutput human = o.keep_background ? render_avatar(st, f.pose, cam, false) : r;
      const double iou = mask_iou(render_mask(human.depth, human.alpha, st.config.mask_threshold), read_png(f.mask_path));
      sum_iou += iou;
      ++iou_rows;
      iou_text = fixed(iou);
    }
    table << f.camera_id << "," << f.frame << "," << fixed(psnr) << "," << fixed(ssim) << "," << iou_text << "\n";
  }
  const double n = static_cast<double>(ds.frames.size());
  table << "mean,," << fixed(sum_psnr / n) << "," << fixed(sum_ssim / n) << ","
        << (iou_rows ? fixed(sum_iou / iou_rows) : std::string()) << "\n";
  out << table.str();
  if (!o.out_csv.empty()) {
    std::ofstream f(o.out_csv);
    if (!f) throw std::runtime_error("cannot write '" + o.out_csv + "'");
    f << table.str();
  }
  return 0;
}

int cmd_export(const ExportOptions& o, std::ostream& log) {
  if (o.checkpoint.empty() || o.out.empty()) throw UsageError("export: --checkpoint and --out are required");
  const TrainerState st = load_checkpoint(o.checkpoint);
  const GaussianCloud cloud = o.human_only ? filter_background(st.cloud) : st.cloud;
  export_pointcloud(cloud, o.out, o.float32);
  log << "wrote " << cloud.size() << " Gaussians to " << o.out << "\n";
  return 0;
}

int cmd_mask(const MaskOptions& o, std::ostream& log) {
  if (o.checkpoint.empty() || o.poses.empty() || o.cameras.empty() || o.out.empty()) {
    throw UsageError("mask: --checkpoint, --poses, --cameras and --out are required");
  }
  const TrainerState st = load_checkpoint(o.checkpoint);
  const Camera& cam = find_camera(read_cameras(o.cameras), o.camera_id);
  const PoseParams pose = pick_pose(read_poses(o.poses), o.frame);
  const RenderOutput r = render_avatar(st, pose, cam, false);
  write_png(render_mask(r.depth, r.alpha, o.threshold), o.out);
  log << "wrote " << o.out << "\n";
  return 0;
}

int cmd_timing(const TimingOptions& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.poses.empty() || o.cameras.empty() || o.out_dir.empty()) {
    throw UsageError("timing: --checkpoint, --poses, --cameras and --out are required");
  }
  using Clock = std::chrono::steady_clock;
  const TrainerState st = load_checkpoint(o.checkpoint);
  const Camera& cam = find_camera(read_cameras(o.cameras), o.camera_id);
  const auto poses = read_poses(o.poses);
  if (poses.empty()) throw UsageError("pose file is empty");
  for (const auto& [t, pose] : poses) {
    if (pose.rotations.rows() != st.body.joint_count()) throw ShapeError("pose length differs from the body model");
  }
  fs::create_directories(o.out_dir);
  const GaussianCloud cloud = o.keep_background ? st.cloud : filter_background(st.cloud);
  const RasterSettings settings = st.config.raster_settings();

  const auto columns = timing_columns();
  std::ostringstream table;
  table << "frame";
  for (const auto& c : columns) table << "," << c;
  table << ",total_with_save,total_without_save,fps_with_save,fps_without_save\n";
  std::vector<double> sums(columns.size(), 0.0);
  int index = 0;
  for (const auto& [t, pose] : poses) {
    DeformTimes dt;
    const DeformedCloud d = deform_cloud(cloud, st.drm, st.body, st.shape, st.canonical, pose, cam.center(), &dt);
    auto mark = Clock::now();
    const RenderOutput r = render(d.world, d.directions, cam, settings);
    const double render_s = std::chrono::duration<double>(Clock::now() - mark).count();
    mark = Clock::now();
    write_png(r.rgb, (fs::path(o.out_dir) / frame_file_name(index)).string());
    const double save_s = std::chrono::duration<double>(Clock::now() - mark).count();
    const std::vector<double> row = {dt.pvd, dt.posing1, dt.drm, dt.posing2, render_s, save_s};
    double with_save = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      sums[k] += row[k];
      with_save += row[k];
    }
    const double without_save = with_save - save_s;
    table << t;
    for (double v : row) table << "," << fixed(v, 6);
    table << "," << fixed(with_save, 6) << "," << fixed(without_save, 6) << "," << fixed(1.0 / with_save, 3) << ","
          << fixed(1.0 / without_save, 3) << "\n";
    ++index;
  }
  double with_save = 0.0;
  table << "mean";
  for (double& s : sums) {
    s /= index;
    with_save += s;
    table << "," << fixed(s, 6);
  }
  const double without_save = with_save - sums.back();
  table << "," << fixed(with_save, 6) << "," << fixed(without_save, 6) << "," << fixed(1.0 / with_save, 3) << ","
        << fixed(1.0 / without_save, 3) << "\n";
  out << table.str();
  if (!o.out_csv.empty()) {
    std::ofstream f(o.out_csv);
    if (!f) throw std::runtime_error("cannot write '" + o.out_csv + "'");
    f << table.str();
  }
  return 0;
}

} // namespace gavatar
