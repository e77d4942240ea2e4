#include "gpdrf/gpdrf.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <string>

#include "gpdrf/commands.hpp"
#include "gpdrf/config.hpp"
#include "gpdrf/errors.hpp"

struct gpdrf_config {
  gpdrf::config::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

// ErrorCode values were chosen to line up with gpdrf_status, so the mapping
// is a cast; keep the two enums in sync.
gpdrf_status status_of(const gpdrf::Error& e) {
  return static_cast<gpdrf_status>(static_cast<int>(e.code()));
}

template <typename F>
gpdrf_status guarded(F&& body) {
  try {
    return body();
  } catch (const gpdrf::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GPDRF_INTERNAL_ERROR;
  } catch (...) {
    g_last_error = "unknown failure";
    return GPDRF_INTERNAL_ERROR;
  }
}

gpdrf_status fail_invalid(const std::string& message) {
  g_last_error = message;
  return GPDRF_INVALID_ARGUMENT;
}

template <size_t N>
bool put_string(char (&dst)[N], const std::string& s) {
  if (s.size() >= N) return false;
  std::memcpy(dst, s.c_str(), s.size() + 1);
  return true;
}

}  // namespace

extern "C" {

const char* gpdrf_version(void) { return "1.0.0"; }

const char* gpdrf_last_error(void) { return g_last_error.c_str(); }

gpdrf_status gpdrf_config_load(const char* path, gpdrf_config** out) {
  if (path == nullptr || out == nullptr)
    return fail_invalid("gpdrf_config_load: null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new gpdrf_config{gpdrf::config::parse_file(path)};
    return GPDRF_OK;
  });
}

gpdrf_status gpdrf_config_default(gpdrf_config** out) {
  if (out == nullptr) return fail_invalid("gpdrf_config_default: null output");
  *out = new gpdrf_config{};
  return GPDRF_OK;
}

void gpdrf_config_free(gpdrf_config* cfg) { delete cfg; }

gpdrf_status gpdrf_config_set_model(gpdrf_config* cfg, const char* model) {
  if (cfg == nullptr || model == nullptr)
    return fail_invalid("gpdrf_config_set_model: null argument");
  return guarded([&] {
    gpdrf::cmd::apply_model_preset(cfg->cfg, model);
    return GPDRF_OK;
  });
}

gpdrf_status gpdrf_config_set_seed(gpdrf_config* cfg, uint64_t seed) {
  if (cfg == nullptr) return fail_invalid("gpdrf_config_set_seed: null config");
  cfg->cfg.train.seed = seed;
  return GPDRF_OK;
}

gpdrf_status gpdrf_config_set_samples(gpdrf_config* cfg, int s) {
  if (cfg == nullptr)
    return fail_invalid("gpdrf_config_set_samples: null config");
  if (s < 1) return fail_invalid("samples must be at least 1");
  cfg->cfg.train.mc_samples = s;
  return GPDRF_OK;
}

gpdrf_status gpdrf_config_set_draws(gpdrf_config* cfg, int t) {
  if (cfg == nullptr) return fail_invalid("gpdrf_config_set_draws: null config");
  if (t < 2) return fail_invalid("draws must be at least 2");
  cfg->cfg.train.eval_draws = t;
  return GPDRF_OK;
}

gpdrf_status gpdrf_config_set_data(gpdrf_config* cfg, const char* train_path) {
  if (cfg == nullptr || train_path == nullptr)
    return fail_invalid("gpdrf_config_set_data: null argument");
  cfg->cfg.train_data = train_path;
  return GPDRF_OK;
}

gpdrf_status gpdrf_config_set_out_dir(gpdrf_config* cfg, const char* dir) {
  if (cfg == nullptr || dir == nullptr)
    return fail_invalid("gpdrf_config_set_out_dir: null argument");
  cfg->cfg.out_dir = dir;
  return GPDRF_OK;
}

gpdrf_status gpdrf_train(const gpdrf_config* cfg, gpdrf_train_result* out) {
  if (cfg == nullptr || out == nullptr)
    return fail_invalid("gpdrf_train: null argument");
  return guarded([&] {
    const gpdrf::cmd::TrainOutputs r = gpdrf::cmd::cmd_train(cfg->cfg);
    if (!put_string(out->checkpoint_path, r.checkpoint_path) ||
        !put_string(out->trace_path, r.trace_path) ||
        !put_string(out->config_path, r.config_path))
      return fail_invalid("output path longer than the result buffer");
    out->final_elbo = r.final_elbo;
    return GPDRF_OK;
  });
}

gpdrf_status gpdrf_evaluate(const char* checkpoint_path, const char* data_path,
                            int samples, int draws, uint64_t seed,
                            const char* out_dir, gpdrf_evaluate_result* out) {
  if (checkpoint_path == nullptr || data_path == nullptr ||
      out_dir == nullptr || out == nullptr)
    return fail_invalid("gpdrf_evaluate: null argument");
  return guarded([&] {
    const gpdrf::cmd::EvaluateOutputs r = gpdrf::cmd::cmd_evaluate(
        checkpoint_path, data_path, samples, draws, seed, out_dir);
    if (!put_string(out->metric, r.metric) ||
        !put_string(out->metrics_path, r.metrics_path))
      return fail_invalid("output path longer than the result buffer");
    out->value = r.value;
    return GPDRF_OK;
  });
}

gpdrf_status gpdrf_uncertainty(const char* checkpoint_path,
                               const char* data_path, int samples, int draws,
                               uint64_t seed, const char* out_dir,
                               gpdrf_uncertainty_result* out) {
  if (checkpoint_path == nullptr || data_path == nullptr ||
      out_dir == nullptr || out == nullptr)
    return fail_invalid("gpdrf_uncertainty: null argument");
  return guarded([&] {
    const gpdrf::cmd::UncertaintyOutputs r = gpdrf::cmd::cmd_uncertainty(
        checkpoint_path, data_path, samples, draws, seed, out_dir);
    if (!put_string(out->report_path, r.report_path))
      return fail_invalid("output path longer than the result buffer");
    const double nan = std::nan("");
    out->error_rate = r.report.error_rate;
    out->d_correct = r.report.d_correct.value_or(nan);
    out->d_misclassified = r.report.d_misclassified.value_or(nan);
    return GPDRF_OK;
  });
}

gpdrf_status gpdrf_check(const gpdrf_config* cfg,
                         const char* checkpoint_path_or_null, char* text,
                         size_t text_capacity) {
  if (cfg == nullptr || text == nullptr || text_capacity == 0)
    return fail_invalid("gpdrf_check: null argument");
  return guarded([&] {
    const gpdrf::cmd::CheckReport rep = gpdrf::cmd::cmd_check(
        cfg->cfg,
        checkpoint_path_or_null == nullptr ? "" : checkpoint_path_or_null);
    const std::string body = rep.text();
    const size_t n = body.size() < text_capacity ? body.size()
                                                 : text_capacity - 1;
    std::memcpy(text, body.data(), n);
    text[n] = '\0';
    if (rep.all_passed()) return GPDRF_OK;
    g_last_error = "self-test battery reported failures";
    return GPDRF_CHECK_FAILED;
  });
}

}  // extern "C"
