/* C API of the SAGE SLAM library: opaque handles and error codes over the
 * simulate / run / evaluate entry points. All functions are thread-safe with
 * respect to distinct handles; the last error message is thread-local. */
#ifndef SAGE_CAPI_H
#define SAGE_CAPI_H

#include <stddef.h>

#if defined(_WIN32)
#if defined(SAGE_BUILDING_LIBRARY)
#define SAGE_API __declspec(dllexport)
#else
#define SAGE_API __declspec(dllimport)
#endif
#else
#define SAGE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sage_status {
  SAGE_OK = 0,
  SAGE_ERROR_INVALID_ARGUMENT = 1,
  SAGE_ERROR_CONFIG = 2,
  SAGE_ERROR_IO = 3,
  SAGE_ERROR_RUNTIME = 4
} sage_status;

/* Opaque run configuration (flat key-value store with defaults). */
typedef struct sage_config sage_config;

SAGE_API sage_status sage_config_create(sage_config** out);
SAGE_API void sage_config_destroy(sage_config* cfg);

/* Loads "key = value" lines; unknown keys are rejected. */
SAGE_API sage_status sage_config_load_file(sage_config* cfg, const char* path);
SAGE_API sage_status sage_config_set(sage_config* cfg, const char* key, const char* value);
/* Copies the value into buffer (NUL-terminated); fails when too small. */
SAGE_API sage_status sage_config_get(const sage_config* cfg, const char* key, char* buffer,
                                     size_t buffer_size);

/* Writes a synthetic sequence into out_dir. */
SAGE_API sage_status sage_simulate(const sage_config* cfg, const char* out_dir);

/* Runs the SLAM pipeline on a sequence directory; writes trajectory.txt,
 * depth_*.sgdm, graph.txt and run_log.txt into out_dir. */
SAGE_API sage_status sage_run(const sage_config* cfg, const char* sequence_dir,
                              const char* out_dir);

/* Evaluates a run against a sequence's ground truth. Writes the metric
 * report to report_path (may be NULL to skip the file) and, when report_text
 * is non-NULL, copies it there (NUL-terminated, truncated to text_size). */
SAGE_API sage_status sage_evaluate(const sage_config* cfg, const char* estimate_dir,
                                   const char* sequence_dir, const char* report_path,
                                   char* report_text, size_t text_size);

/* Message describing the most recent failure on this thread. */
SAGE_API const char* sage_last_error(void);

SAGE_API const char* sage_version(void);

#ifdef __cplusplus
}
#endif

#endif /* SAGE_CAPI_H */
