#include "doctest.h"
#include "support.h"

#include "gavatar/commands.h"
#include "gavatar/dataset.h"
#include "gavatar/trainer.h"

#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace gtest;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  static int counter = 0;
  const std::string base = (fs::temp_directory_path() / ("gavatar_cli_" + std::to_string(counter++))).string();
  const std::string cmd = std::string(GAVATAR_CLI) + " " + args + " > " + base + ".out 2> " + base + ".err";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(base + ".out");
  r.err = slurp(base + ".err");
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

// Tiny scene plus a short trained run shared by the render-side tests.
struct Fixture {
  std::string root, scene, config, run;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.root = temp_dir("cli");
    x.scene = x.root + "/scene";
    x.config = x.root + "/toy.json";
    x.run = x.root + "/run";
    std::ofstream(x.config) << R"({
  "schedule": {"warmup_iters": 100, "alternation_block": 100, "total_iters": 500, "densify_from": 50,
               "densify_until": 300, "densify_interval": 50, "parent_update_every": 100,
               "densify_grad_threshold": 0.002},
  "drm": {"hidden": 8},
  "gaussians": {"sh_degree": 1},
  "background": {"count": 300},
  "checkpoint_every": 250
})";
    const Run s = cli("synth --out " + x.scene + " --joints 2 --segments 6 --cameras 2 --frames 8 --width 32 --height 24 --seed 3");
    REQUIRE(s.code == 0);
    const Run t = cli("train --data " + x.scene + " --config " + x.config + " --out " + x.run + " --quiet");
    INFO(t.err);
    REQUIRE(t.code == 0);
    return x;
  }();
  return f;
}

} // namespace

TEST_CASE("train writes checkpoints, a log record per step and a point cloud") {
  const Fixture& f = fixture();
  const auto records = lines(slurp(f.run + "/log.jsonl"));
  CHECK(records.size() == 500);
  CHECK(records.front().find("\"iter\":0") != std::string::npos);
  CHECK(records.back().find("\"iter\":499") != std::string::npos);
  for (const char* p : {"/final.ckpt", "/point_cloud.ply", "/config.json", "/checkpoints/iter_00000250.ckpt",
                        "/checkpoints/iter_00000500.ckpt"}) {
    CHECK(fs::exists(f.run + p));
  }
  const TrainerState st = load_checkpoint(f.run + "/final.ckpt");
  CHECK(st.iteration == 500);
  CHECK(import_pointcloud(f.run + "/point_cloud.ply").size() == st.cloud.size());
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  const Fixture& f = fixture();
  const std::string out = f.root + "/resumed";
  const Run r = cli("train --data " + f.scene + " --config " + f.config + " --out " + out + " --quiet --resume " + f.run +
                    "/checkpoints/iter_00000250.ckpt");
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(lines(slurp(out + "/log.jsonl")).size() == 250);
  CHECK(load_checkpoint(out + "/final.ckpt").iteration == 500);
  CHECK(slurp(out + "/final.ckpt") == slurp(f.run + "/final.ckpt"));

  const Run refused = cli("train --data " + f.scene + " --config " + f.config + " --set lr.drm=0.5 --out " + out +
                          "2 --quiet --resume " + f.run + "/checkpoints/iter_00000250.ckpt");
  CHECK(refused.code == 2);
  CHECK(refused.err.find("hash") != std::string::npos);
}

TEST_CASE("seeds make training reproducible") {
  const Fixture& f = fixture();
  const std::string common = "train --data " + f.scene + " --config " + f.config +
                             " --set schedule.total_iters=60 schedule.warmup_iters=30 schedule.densify_until=60 --quiet --out ";
  REQUIRE(cli(common + f.root + "/s1 --seed 7").code == 0);
  REQUIRE(cli(common + f.root + "/s2 --seed 7").code == 0);
  REQUIRE(cli(common + f.root + "/s3 --seed 8").code == 0);
  CHECK(slurp(f.root + "/s1/final.ckpt") == slurp(f.root + "/s2/final.ckpt"));
  CHECK(slurp(f.root + "/s1/log.jsonl") == slurp(f.root + "/s2/log.jsonl"));
  CHECK(slurp(f.root + "/s1/final.ckpt") != slurp(f.root + "/s3/final.ckpt"));
}

TEST_CASE("exit codes separate usage from runtime failures") {
  const Fixture& f = fixture();
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("train --data " + f.scene).code == 2);
  const Run bad_key = cli("train --data " + f.scene + " --out " + f.root + "/x --set schedule.bogus=1");
  CHECK(bad_key.code == 2);
  CHECK(bad_key.err.find("bogus") != std::string::npos);
  CHECK(cli("train --data " + f.scene + " --out " + f.root + "/x --set tau=near").code == 2);
  CHECK(cli("train --data " + f.root + "/no_such_scene --out " + f.root + "/x").code == 1);
  CHECK(cli("render --checkpoint " + f.run + "/final.ckpt --poses " + f.scene + "/poses.txt --cameras " + f.scene +
            "/cameras.txt --camera cam77 --out " + f.root + "/x.png")
            .code == 2);

  // Exploding scales make the loss non-finite.
  const Run nan = cli("train --data " + f.scene + " --config " + f.config + " --set lr.scale=1e300 --out " + f.root + "/nan --quiet");
  CHECK(nan.code == 1);
  CHECK(nan.err.find("non-finite") != std::string::npos);
  CHECK(nan.err.find("iteration") != std::string::npos);
}

TEST_CASE("render and pose validation") {
  const Fixture& f = fixture();
  const std::string png = f.root + "/r.png";
  const Run r = cli("render --checkpoint " + f.run + "/final.ckpt --poses " + f.scene + "/poses.txt --frame 2 --cameras " +
                    f.scene + "/cameras.txt --camera cam01 --out " + png + " --depth " + f.root + "/d.png");
  REQUIRE(r.code == 0);
  const Image img = read_png(png);
  CHECK(img.width == 32);
  CHECK(img.height == 24);
  CHECK(fs::exists(f.root + "/d.png"));

  std::map<int, PoseParams> wrong;
  wrong[0] = PoseParams::canonical(5);
  write_poses(wrong, 5, f.root + "/wrong.txt");
  const Run bad = cli("render --checkpoint " + f.run + "/final.ckpt --poses " + f.root + "/wrong.txt --cameras " + f.scene +
                      "/cameras.txt --out " + png);
  CHECK(bad.code == 1);
  CHECK(bad.err.find("joints") != std::string::npos);
}

TEST_CASE("animate renders one image per pose in order") {
  const Fixture& f = fixture();
  const auto poses = read_poses(f.scene + "/poses.txt");
  const std::string base = "animate --checkpoint " + f.run + "/final.ckpt --cameras " + f.scene + "/cameras.txt --poses ";
  REQUIRE(cli(base + f.scene + "/poses.txt --out " + f.root + "/fwd").code == 0);
  for (int k = 0; k < static_cast<int>(poses.size()); ++k) CHECK(fs::exists(f.root + "/fwd/" + frame_file_name(k)));
  CHECK_FALSE(fs::exists(f.root + "/fwd/" + frame_file_name(static_cast<int>(poses.size()))));

  std::map<int, PoseParams> reversed, constant;
  int k = 0;
  for (auto it = poses.rbegin(); it != poses.rend(); ++it) reversed[k++] = it->second;
  for (int t = 0; t < 3; ++t) constant[t] = poses.at(4);
  write_poses(reversed, 2, f.root + "/rev.txt");
  write_poses(constant, 2, f.root + "/const.txt");
  REQUIRE(cli(base + f.root + "/rev.txt --out " + f.root + "/rev").code == 0);
  REQUIRE(cli(base + f.root + "/const.txt --out " + f.root + "/const").code == 0);
  const int n = static_cast<int>(poses.size());
  for (int i = 0; i < n; ++i) {
    CHECK(slurp(f.root + "/rev/" + frame_file_name(i)) == slurp(f.root + "/fwd/" + frame_file_name(n - 1 - i)));
  }
  CHECK(slurp(f.root + "/const/" + frame_file_name(0)) == slurp(f.root + "/const/" + frame_file_name(2)));
  CHECK(slurp(f.root + "/const/" + frame_file_name(1)) == slurp(f.root + "/fwd/" + frame_file_name(4)));
}

TEST_CASE("eval writes a deterministic table whose mean row averages the rows") {
  const Fixture& f = fixture();
  const std::string cmd = "eval --checkpoint " + f.run + "/final.ckpt --data " + f.scene + " --split all --out " + f.root + "/m.csv";
  const Run a = cli(cmd), b = cli(cmd);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(slurp(f.root + "/m.csv") == a.out);
  const auto rows = lines(a.out);
  REQUIRE(rows.size() == 1 + 16 + 1);
  CHECK(rows.front() == "camera,frame,psnr,ssim,mask_iou");
  double sum[3] = {};
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    const auto c = split(rows[i]);
    REQUIRE(c.size() == 5);
    for (int k = 0; k < 3; ++k) sum[k] += std::stod(c[2 + k]);
  }
  const auto mean = split(rows.back());
  CHECK(mean[0] == "mean");
  for (int k = 0; k < 3; ++k) CHECK(std::abs(std::stod(mean[2 + k]) - sum[k] / 16.0) <= 1e-6);

  // A short run on a simple scene already resembles its targets.
  CHECK(std::stod(mean[2]) > 15.0);

  // The test split follows the held-out frame rule: frames 3 and 7 on two cameras.
  const Run t = cli("eval --checkpoint " + f.run + "/final.ckpt --data " + f.scene);
  CHECK(lines(t.out).size() == 1 + 4 + 1);
}

TEST_CASE("export and mask") {
  const Fixture& f = fixture();
  const TrainerState st = load_checkpoint(f.run + "/final.ckpt");
  REQUIRE(cli("export --checkpoint " + f.run + "/final.ckpt --out " + f.root + "/h.ply --human-only --float32").code == 0);
  CHECK(import_pointcloud(f.root + "/h.ply").size() == st.cloud.human_count());

  const std::string base = "mask --checkpoint ";
  const std::string rest = " --poses " + f.scene + "/poses.txt --cameras " + f.scene + "/cameras.txt --out ";
  REQUIRE(cli(base + f.run + "/final.ckpt" + rest + f.root + "/m.png").code == 0);
  const Image m = read_png(f.root + "/m.png");
  double on = 0.0;
  for (double v : m.data) {
    CHECK((v == 0.0 || v == 1.0));
    on += v;
  }
  CHECK(on > 0.0);
  REQUIRE(cli(base + f.run + "/final.ckpt" + rest + f.root + "/m0.png --threshold 0").code == 0);
  for (double v : read_png(f.root + "/m0.png").data) CHECK(v == 0.0);

  // A checkpoint without human Gaussians masks nothing.
  TrainerState empty = st;
  empty.cloud = empty.cloud.select(empty.cloud.background_indices());
  empty.stats.reset(empty.cloud.size());
  empty.gaussian_opt.reset(empty.cloud.size(), empty.cloud.sh_count());
  save_checkpoint(empty, f.root + "/empty.ckpt");
  REQUIRE(cli(base + f.root + "/empty.ckpt" + rest + f.root + "/me.png").code == 0);
  for (double v : read_png(f.root + "/me.png").data) CHECK(v == 0.0);
}

TEST_CASE("timing report has the six stage columns") {
  const Fixture& f = fixture();
  const std::vector<std::string> stages = {"pvd_calculation", "posing_1", "drm_calculation", "posing_2", "rendering",
                                           "image_save"};
  CHECK(timing_columns() == stages);
  const std::string cmd = "timing --checkpoint " + f.run + "/final.ckpt --poses " + f.scene + "/poses.txt --cameras " +
                          f.scene + "/cameras.txt --out " + f.root + "/tf --csv " + f.root + "/t.csv";
  const Run a = cli(cmd), b = cli(cmd);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(f.root + "/t.csv") == b.out);
  const auto rows = lines(a.out);
  REQUIRE(rows.size() == 1 + 8 + 1);
  const auto header = split(rows.front());
  REQUIRE(header.size() == 11);
  CHECK(header[0] == "frame");
  for (int k = 0; k < 6; ++k) CHECK(header[1 + k] == stages[k]);
  CHECK(header[7] == "total_with_save");
  CHECK(header[8] == "total_without_save");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split(rows[i]);
    REQUIRE(c.size() == 11);
    double sum = 0.0;
    for (int k = 1; k <= 6; ++k) sum += std::stod(c[k]);
    // Printed with six decimals: each term rounds by at most half a microsecond.
    CHECK(std::abs(sum - std::stod(c[7])) <= 4e-6);
    CHECK(std::abs(std::stod(c[7]) - std::stod(c[6]) - std::stod(c[8])) <= 2e-6);
  }
  const double ta = std::stod(split(rows.back())[8]), tb = std::stod(split(lines(b.out).back())[8]);
  // Loose stability: within 3x, with a floor for sub-millisecond timer noise.
  CHECK(std::max(ta, tb) <= 3.0 * std::min(ta, tb) + 2e-3);
  CHECK(split(rows.back())[0] == "mean");
}
