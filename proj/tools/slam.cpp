// Command-line front end; talks to the engine through its C interface only.
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "lmslam/lmslam.h"

namespace {

int fail(lms_session* s) {
  std::fprintf(stderr, "error: %s\n", lms_last_error(s));
  return 1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CLI::ValidationError("config", "cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laser SLAM with rasterized local maps"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Process a sequence end to end");
  std::string input, output, config_path, odom_prior;
  uint64_t seed = 0;
  bool no_loop = false;
  run->add_option("--input", input,
                  "Scan directory or synthetic:<spec> "
                  "(square[:leg=..][:step=..][:extra=..], "
                  "straight[:length=..][:step=..])")
      ->required();
  run->add_option("--output", output, "Artifact directory")->required();
  run->add_option("--seed", seed, "Random seed");
  run->add_option("--config", config_path, "JSON config file");
  run->add_flag("--no-loop", no_loop, "Disable loop closure");
  run->add_option("--odom-prior", odom_prior, "Per-frame relative pose priors");

  // eval
  auto* eval = app.add_subcommand("eval", "Relative-error evaluation");
  std::string gt, est, lengths = "100,200,300,400,500,600,700,800";
  eval->add_option("--gt", gt, "Ground-truth poses (3x4 row-major lines)")
      ->required();
  eval->add_option("--est", est, "Estimated trajectory (stamped quaternions)")
      ->required();
  eval->add_option("--lengths", lengths, "Comma-separated windows, meters");

  // bench-loop
  auto* bench =
      app.add_subcommand("bench-loop", "Loop-candidate search timing");
  std::string mode, bench_input = "synthetic:square:leg=50:extra=0.3";
  uint64_t bench_seed = 0;
  bench->add_option("--mode", mode, "bow | localmaps | keyframes")->required();
  bench->add_option("--input", bench_input, "Sequence to run");
  bench->add_option("--seed", bench_seed, "Random seed");

  CLI11_PARSE(app, argc, argv);

  lms_session* session = lms_session_create();
  int rc = 0;
  char* out = nullptr;

  if (run->parsed()) {
    std::string config_json;
    if (!config_path.empty()) config_json = slurp(config_path);
    const lms_status st = lms_run(
        session, input.c_str(), output.c_str(),
        config_json.empty() ? nullptr : config_json.c_str(),
        odom_prior.empty() ? nullptr : odom_prior.c_str(), seed,
        no_loop ? 0 : 1, &out);
    rc = st == LMS_OK ? (std::printf("%s\n", out), 0) : fail(session);
  } else if (eval->parsed()) {
    const lms_status st =
        lms_eval(session, gt.c_str(), est.c_str(), lengths.c_str(), &out);
    rc = st == LMS_OK ? (std::printf("%s\n", out), 0) : fail(session);
  } else if (bench->parsed()) {
    const lms_status st = lms_bench_loop(session, bench_input.c_str(),
                                         mode.c_str(), bench_seed, &out);
    rc = st == LMS_OK ? (std::printf("%s\n", out), 0) : fail(session);
  }

  lms_string_free(out);
  lms_session_destroy(session);
  return rc;
}
