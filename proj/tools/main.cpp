// gavatar command-line entry point. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include "gavatar/commands.h"
#include "gavatar/config.h"

#include <CLI11.hpp>

#include <iostream>

using namespace gavatar;

int main(int argc, char** argv) {
  CLI::App app{"Animatable Gaussian avatar engine"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-view scene");
  s->add_option("--out", synth.out_dir, "Output directory")->required();
  s->add_option("--joints", synth.joints, "Joint count")->check(CLI::Range(2, 64));
  s->add_option("--segments", synth.segments, "Capsule segments")->check(CLI::Range(3, 256));
  s->add_option("--cameras", synth.cameras, "Camera count")->check(CLI::PositiveNumber);
  s->add_option("--frames", synth.frames, "Frame count")->check(CLI::PositiveNumber);
  s->add_option("--width", synth.width)->check(CLI::PositiveNumber);
  s->add_option("--height", synth.height)->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed);
  s->add_option("--blend", synth.blend_fraction, "Skinning blend fraction")->check(CLI::Range(0.0, 0.5));

  TrainOptions train;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train an avatar on a scene");
  t->add_option("--config", train.config_path, "Config JSON file")->check(CLI::ExistingFile);
  t->add_option("--set", train.overrides, "Override key=value (dotted keys)")->take_all();
  auto* seed_opt = t->add_option("--seed", train_seed, "Seed (overrides config)");
  t->add_option("--data", train.data_root, "Dataset root")->required();
  t->add_option("--out", train.out_dir, "Output directory")->required();
  t->add_option("--resume", train.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  t->add_flag("--allow-config-mismatch", train.allow_config_mismatch, "Resume despite a config hash mismatch");
  t->add_flag("--quiet", train.quiet);

  RenderOptions render;
  auto* r = app.add_subcommand("render", "Render the avatar for one pose");
  r->add_option("--checkpoint", render.checkpoint)->required()->check(CLI::ExistingFile);
  r->add_option("--poses", render.poses, "Pose file")->required()->check(CLI::ExistingFile);
  r->add_option("--frame", render.frame, "Frame index in the pose file");
  r->add_option("--cameras", render.cameras, "Camera file")->required()->check(CLI::ExistingFile);
  r->add_option("--camera", render.camera_id, "Camera id (default: first)");
  r->add_option("--out", render.out, "Output PNG")->required();
  r->add_option("--depth", render.depth_out, "Optional 16-bit depth PNG (mm)");
  r->add_flag("--keep-background", render.keep_background);

  AnimateOptions anim;
  auto* a = app.add_subcommand("animate", "Render a pose sequence");
  a->add_option("--checkpoint", anim.checkpoint)->required()->check(CLI::ExistingFile);
  a->add_option("--poses", anim.poses)->required()->check(CLI::ExistingFile);
  a->add_option("--cameras", anim.cameras)->required()->check(CLI::ExistingFile);
  a->add_option("--camera", anim.camera_id);
  a->add_option("--out", anim.out_dir, "Output directory")->required();
  a->add_flag("--keep-background", anim.keep_background);

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "PSNR/SSIM (and mask IoU) on a dataset split");
  e->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--data", eval.data_root)->required()->check(CLI::ExistingDirectory);
  e->add_option("--split", eval.split)->check(CLI::IsMember({"test", "train", "all"}));
  e->add_option("--out", eval.out_csv, "CSV output");

  ExportOptions exp;
  auto* x = app.add_subcommand("export", "Export the canonical cloud as PLY");
  x->add_option("--checkpoint", exp.checkpoint)->required()->check(CLI::ExistingFile);
  x->add_option("--out", exp.out)->required();
  x->add_flag("--float32", exp.float32);
  x->add_flag("--human-only", exp.human_only);

  MaskOptions mask;
  auto* m = app.add_subcommand("mask", "Depth-thresholded human mask");
  m->add_option("--checkpoint", mask.checkpoint)->required()->check(CLI::ExistingFile);
  m->add_option("--poses", mask.poses)->required()->check(CLI::ExistingFile);
  m->add_option("--frame", mask.frame);
  m->add_option("--cameras", mask.cameras)->required()->check(CLI::ExistingFile);
  m->add_option("--camera", mask.camera_id);
  m->add_option("--threshold", mask.threshold, "Depth threshold in meters")->check(CLI::NonNegativeNumber);
  m->add_option("--out", mask.out)->required();

  TimingOptions timing;
  auto* tm = app.add_subcommand("timing", "Per-stage inference timing");
  tm->add_option("--checkpoint", timing.checkpoint)->required()->check(CLI::ExistingFile);
  tm->add_option("--poses", timing.poses)->required()->check(CLI::ExistingFile);
  tm->add_option("--cameras", timing.cameras)->required()->check(CLI::ExistingFile);
  tm->add_option("--camera", timing.camera_id);
  tm->add_option("--out", timing.out_dir, "Directory for saved frames")->required();
  tm->add_option("--csv", timing.out_csv);
  tm->add_flag("--keep-background", timing.keep_background);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s) return cmd_synth(synth, std::cout);
    if (*t) {
      if (*seed_opt) train.seed = train_seed;
      return cmd_train(train, std::cout);
    }
    if (*r) return cmd_render(render, std::cout);
    if (*a) return cmd_animate(anim, std::cout);
    if (*e) return cmd_eval(eval, std::cout);
    if (*x) return cmd_export(exp, std::cout);
    if (*m) return cmd_mask(mask, std::cout);
    if (*tm) return cmd_timing(timing, std::cout);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
