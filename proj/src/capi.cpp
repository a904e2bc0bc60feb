#include "sage/capi.h"

#include "sage/config.hpp"
#include "sage/runner.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

struct sage_config {
  sage::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

sage_status fail(sage_status status, const char* what) {
  g_last_error = what;
  return status;
}

template <typename Fn>
sage_status guarded(Fn&& fn) {
  try {
    fn();
    return SAGE_OK;
  } catch (const std::invalid_argument& e) {
    return fail(SAGE_ERROR_CONFIG, e.what());
  } catch (const std::runtime_error& e) {
    return fail(SAGE_ERROR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(SAGE_ERROR_RUNTIME, e.what());
  }
}

}  // namespace

extern "C" {

sage_status sage_config_create(sage_config** out) {
  if (!out) return fail(SAGE_ERROR_INVALID_ARGUMENT, "null output pointer");
  *out = new (std::nothrow) sage_config();
  if (!*out) return fail(SAGE_ERROR_RUNTIME, "allocation failed");
  return SAGE_OK;
}

void sage_config_destroy(sage_config* cfg) { delete cfg; }

sage_status sage_config_load_file(sage_config* cfg, const char* path) {
  if (!cfg || !path) return fail(SAGE_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { cfg->cfg.load_file(path); });
}

sage_status sage_config_set(sage_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(SAGE_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { cfg->cfg.set(key, value); });
}

sage_status sage_config_get(const sage_config* cfg, const char* key, char* buffer,
                            size_t buffer_size) {
  if (!cfg || !key || !buffer || buffer_size == 0)
    return fail(SAGE_ERROR_INVALID_ARGUMENT, "null argument");
  std::string value;
  const sage_status status = guarded([&] { value = cfg->cfg.get(key); });
  if (status != SAGE_OK) return status;
  if (value.size() + 1 > buffer_size) return fail(SAGE_ERROR_INVALID_ARGUMENT, "buffer too small");
  std::memcpy(buffer, value.c_str(), value.size() + 1);
  return SAGE_OK;
}

sage_status sage_simulate(const sage_config* cfg, const char* out_dir) {
  if (!cfg || !out_dir) return fail(SAGE_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { sage::cmd_simulate(cfg->cfg, out_dir); });
}

sage_status sage_run(const sage_config* cfg, const char* sequence_dir, const char* out_dir) {
  if (!cfg || !sequence_dir || !out_dir)
    return fail(SAGE_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { sage::cmd_run(cfg->cfg, sequence_dir, out_dir); });
}

sage_status sage_evaluate(const sage_config* cfg, const char* estimate_dir,
                          const char* sequence_dir, const char* report_path, char* report_text,
                          size_t text_size) {
  if (!cfg || !estimate_dir || !sequence_dir)
    return fail(SAGE_ERROR_INVALID_ARGUMENT, "null argument");
  std::string text;
  const sage_status status = guarded([&] {
    text = sage::cmd_eval(cfg->cfg, estimate_dir, sequence_dir,
                          report_path ? report_path : std::string());
  });
  if (status != SAGE_OK) return status;
  if (report_text && text_size > 0) {
    const size_t len = std::min(text.size(), text_size - 1);
    std::memcpy(report_text, text.c_str(), len);
    report_text[len] = '\0';
  }
  return SAGE_OK;
}

const char* sage_last_error(void) { return g_last_error.c_str(); }

const char* sage_version(void) { return "0.1.0"; }

}  // extern "C"
