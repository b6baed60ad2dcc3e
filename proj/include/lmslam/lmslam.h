/* C interface of the laser mapping and localization engine.
 * All functions are synchronous; a session object carries the last error
 * message. Strings returned through out-parameters must be released with
 * lms_string_free. */
#ifndef LMSLAM_H
#define LMSLAM_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct lms_session lms_session;

typedef enum {
  LMS_OK = 0,
  LMS_ERROR_INVALID_ARGUMENT = 1,
  LMS_ERROR_IO = 2,
  LMS_ERROR_RUNTIME = 3
} lms_status;

lms_session* lms_session_create(void);
void lms_session_destroy(lms_session* s);

/* Human-readable message of the last failing call on this session. */
const char* lms_last_error(const lms_session* s);

void lms_string_free(char* str);

/* Full run: ingestion, tracking, mapping, loop closure, artifacts.
 * input: scan directory or "synthetic:<spec>".
 * output_dir: artifact directory (created if missing).
 * config_json: optional JSON config text (NULL for defaults).
 * odom_prior_path: optional per-frame relative pose prior file (NULL = none).
 * enable_loop: 0 disables loop closure and relocalization.
 * metrics_json_out: optional; receives the metrics document. */
lms_status lms_run(lms_session* s, const char* input, const char* output_dir,
                   const char* config_json, const char* odom_prior_path,
                   uint64_t seed, int enable_loop, char** metrics_json_out);

/* Windowed relative-error evaluation of an estimated trajectory against
 * ground truth. lengths_csv: comma-separated window lengths in meters. */
lms_status lms_eval(lms_session* s, const char* gt_path, const char* est_path,
                    const char* lengths_csv, char** report_json_out);

/* Loop-candidate search timing comparison. mode: "bow", "localmaps" or
 * "keyframes" (selects the headline number; all three are measured). */
lms_status lms_bench_loop(lms_session* s, const char* input, const char* mode,
                          uint64_t seed, char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* LMSLAM_H */
