#include "lmslam/lmslam.h"

#include <cstring>
#include <sstream>
#include <string>

#include "json.hpp"
#include "lmslam/pipeline.hpp"

struct lms_session {
  std::string last_error;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

lms_status to_status(const lmslam::Error& e) {
  switch (e.code()) {
    case lmslam::ErrorCode::IoError:
    case lmslam::ErrorCode::MalformedFile:
      return LMS_ERROR_IO;
    case lmslam::ErrorCode::InvalidConfig:
      return LMS_ERROR_INVALID_ARGUMENT;
    default:
      return LMS_ERROR_RUNTIME;
  }
}

template <typename Fn>
lms_status guarded(lms_session* s, Fn&& fn) {
  if (!s) return LMS_ERROR_INVALID_ARGUMENT;
  try {
    fn();
    s->last_error.clear();
    return LMS_OK;
  } catch (const lmslam::Error& e) {
    s->last_error = e.what();
    return to_status(e);
  } catch (const std::exception& e) {
    s->last_error = e.what();
    return LMS_ERROR_RUNTIME;
  }
}

}  // namespace

lms_session* lms_session_create(void) { return new lms_session; }

void lms_session_destroy(lms_session* s) { delete s; }

const char* lms_last_error(const lms_session* s) {
  return s ? s->last_error.c_str() : "null session";
}

void lms_string_free(char* str) { std::free(str); }

lms_status lms_run(lms_session* s, const char* input, const char* output_dir,
                   const char* config_json, const char* odom_prior_path,
                   uint64_t seed, int enable_loop, char** metrics_json_out) {
  if (!input || !output_dir) {
    if (s) s->last_error = "input and output_dir are required";
    return LMS_ERROR_INVALID_ARGUMENT;
  }
  return guarded(s, [&] {
    lmslam::PipelineOptions opts;
    opts.input = input;
    opts.output_dir = output_dir;
    opts.seed = seed;
    opts.loop_enabled = enable_loop != 0;
    if (config_json) opts.config_json = config_json;
    if (odom_prior_path) opts.odom_prior_path = odom_prior_path;
    auto result = lmslam::run_pipeline(opts);
    if (metrics_json_out) *metrics_json_out = dup_string(result.metrics_json);
  });
}

lms_status lms_eval(lms_session* s, const char* gt_path, const char* est_path,
                    const char* lengths_csv, char** report_json_out) {
  if (!gt_path || !est_path || !lengths_csv) {
    if (s) s->last_error = "gt_path, est_path and lengths_csv are required";
    return LMS_ERROR_INVALID_ARGUMENT;
  }
  return guarded(s, [&] {
    std::vector<double> lengths;
    std::istringstream is(lengths_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (!tok.empty()) lengths.push_back(std::stod(tok));
    }
    if (lengths.empty()) {
      throw lmslam::Error(lmslam::ErrorCode::InvalidConfig,
                          "no evaluation lengths given");
    }
    const std::string report =
        lmslam::evaluate_trajectories(gt_path, est_path, lengths);
    if (report_json_out) *report_json_out = dup_string(report);
  });
}

lms_status lms_bench_loop(lms_session* s, const char* input, const char* mode,
                          uint64_t seed, char** report_json_out) {
  if (!input || !mode) {
    if (s) s->last_error = "input and mode are required";
    return LMS_ERROR_INVALID_ARGUMENT;
  }
  const std::string m = mode;
  if (m != "bow" && m != "localmaps" && m != "keyframes") {
    if (s) s->last_error = "mode must be bow, localmaps or keyframes";
    return LMS_ERROR_INVALID_ARGUMENT;
  }
  return guarded(s, [&] {
    lmslam::PipelineOptions opts;
    opts.input = input;
    opts.seed = seed;
    opts.loop_enabled = true;
    opts.bench_baselines = true;
    const auto result = lmslam::run_pipeline(opts);

    nlohmann::json report;
    report["mode"] = m;
    const double headline = m == "bow" ? result.bow_search.mean_ms()
                            : m == "localmaps"
                                ? result.localmap_search.mean_ms()
                                : result.keyframe_search.mean_ms();
    report["mean_candidate_ms"] = headline;
    report["all_modes_ms"] = {{"bow", result.bow_search.mean_ms()},
                              {"localmaps", result.localmap_search.mean_ms()},
                              {"keyframes", result.keyframe_search.mean_ms()}};
    report["queries"] = result.bow_search.count;
    report["keyframes"] = result.keyframes;
    report["agreements"] = result.baseline_agreements;
    if (report_json_out) *report_json_out = dup_string(report.dump(2));
  });
}
