#include "psss.h"

#include <cstdio>
#include <cstring>
#include <mutex>
#include <string>

#include "psss/checkpoint.hpp"
#include "psss/commands.hpp"
#include "psss/loss.hpp"

struct psss_config {
  psss::RunConfig cfg;
};

struct psss_model {
  psss::LoadedCheckpoint ck;
};

namespace {

thread_local std::string g_last_error;

struct LogSink {
  std::mutex mu;
  psss_log_fn fn = nullptr;
  void* user = nullptr;
  psss_log_level min_level = PSSS_LOG_INFO;
};

LogSink& sink() {
  static LogSink s;
  return s;
}

void emit(psss::LogLevel level, const std::string& msg) {
  auto& s = sink();
  std::lock_guard lock(s.mu);
  const auto lv = static_cast<psss_log_level>(level);
  if (lv < s.min_level) return;
  if (s.fn) {
    s.fn(lv, msg.c_str(), s.user);
  } else {
    static const char* names[] = {"debug", "info", "warning", "error"};
    std::fprintf(stderr, "[%s] %s\n", names[lv], msg.c_str());
  }
}

const psss::Logger kLogger = emit;

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class F>
psss_status guarded(F&& f) {
  try {
    f();
    return PSSS_OK;
  } catch (const psss::Error& e) {
    g_last_error = e.what();
    return static_cast<psss_status>(e.code());
  } catch (const c10::Error& e) {
    g_last_error = e.what_without_backtrace();
    return PSSS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PSSS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PSSS_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) psss::fail(psss::ErrorCode::kInvalidArgument, what);
}

}  // namespace

extern "C" {

const char* psss_version(void) { return PSSS_VERSION; }

const char* psss_status_name(psss_status status) {
  switch (status) {
    case PSSS_OK: return "ok";
    case PSSS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PSSS_ERR_IO: return "i/o error";
    case PSSS_ERR_PARSE: return "parse error";
    case PSSS_ERR_VALIDATION: return "validation error";
    case PSSS_ERR_SHAPE: return "shape mismatch";
    case PSSS_ERR_NUMERIC: return "numeric error";
    case PSSS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* psss_last_error(void) { return g_last_error.c_str(); }

void psss_string_free(char* s) { std::free(s); }

void psss_set_log_callback(psss_log_fn fn, void* user, psss_log_level min_level) {
  auto& s = sink();
  std::lock_guard lock(s.mu);
  s.fn = fn;
  s.user = user;
  s.min_level = min_level;
}

psss_status psss_config_create(psss_config** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = new psss_config{psss::default_run_config()};
  });
}

void psss_config_destroy(psss_config* cfg) { delete cfg; }

psss_status psss_config_load(psss_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg && path, "null argument");
    cfg->cfg = psss::load_config_file(cfg->cfg, path);
  });
}

psss_status psss_config_set(psss_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg && key && value, "null argument");
    cfg->cfg = psss::set_config_value(cfg->cfg, key, value);
  });
}

psss_status psss_config_to_json(const psss_config* cfg, char** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    *out = dup(psss::config_to_json(cfg->cfg));
  });
}

psss_status psss_synth(const psss_config* cfg, char** manifest_path) {
  return guarded([&] {
    require(cfg, "config is null");
    const auto p = psss::cmd_synth(cfg->cfg, kLogger);
    if (manifest_path) *manifest_path = dup(p.string());
  });
}

psss_status psss_splits(const psss_config* cfg, char** manifest_path) {
  return guarded([&] {
    require(cfg, "config is null");
    const auto p = psss::cmd_splits(cfg->cfg, kLogger);
    if (manifest_path) *manifest_path = dup(p.string());
  });
}

psss_status psss_prepare(const psss_config* cfg, psss_prepare_summary* out) {
  return guarded([&] {
    require(cfg, "config is null");
    const auto r = psss::cmd_prepare(cfg->cfg, kLogger);
    if (out) *out = {r.kept, r.dropped, r.warnings.size() + (r.kept == 0 ? 1u : 0u)};
  });
}

psss_status psss_train(const psss_config* cfg, psss_train_summary* out) {
  return guarded([&] {
    require(cfg, "config is null");
    const auto r = psss::cmd_train(cfg->cfg, kLogger);
    if (out) *out = {r.best_epoch, r.best_miou, r.steps};
  });
}

psss_status psss_eval(const psss_config* cfg, psss_eval_summary* out, char** report_json, char** table) {
  return guarded([&] {
    require(cfg, "config is null");
    const auto r = psss::cmd_eval(cfg->cfg, kLogger);
    if (out) {
      *out = {};
      for (int c = 0; c < PSSS_NUM_CLASSES; ++c) {
        const auto& v = r.result.report.per_class[c];
        out->present[c] = v.has_value();
        out->iou[c] = v.value_or(0.0);
      }
      out->miou = r.result.report.miou;
      out->miou_veins = r.result.report.miou_veins.value_or(0.0);
      out->images = r.result.images;
    }
    if (report_json) *report_json = dup(r.report_json);
    if (table) *table = dup(r.table);
  });
}

psss_status psss_model_load(const char* checkpoint, psss_model** out) {
  return guarded([&] {
    require(checkpoint && out, "null argument");
    *out = new psss_model{psss::load_checkpoint(checkpoint)};
  });
}

void psss_model_destroy(psss_model* model) { delete model; }

psss_status psss_model_predict(psss_model* model, const uint8_t* rgb, int height, int width, int patch,
                               uint8_t* labels) {
  return guarded([&] {
    require(model && rgb && labels, "null argument");
    require(height > 0 && width > 0 && patch > 0, "height, width and patch must be positive");
    const std::size_t n = static_cast<std::size_t>(height) * width;
    psss::Image image(height, width, 3, std::vector<std::uint8_t>(rgb, rgb + 3 * n));
    psss::TorchSegmenter seg(model->ck.model, model->ck.meta.normalizer);
    const auto map = psss::predict_stitched(seg, image, patch);
    std::memcpy(labels, map.data().data(), n);
  });
}

psss_status psss_partial_loss_eval(const double* logits, int height, int width, const uint8_t* partial,
                                   const uint8_t* pseudo_cls, const double* pseudo_conf, double tau,
                                   psss_partial_loss* out, double* grad) {
  return guarded([&] {
    require(logits && partial && pseudo_cls && pseudo_conf && out, "null argument");
    require(height > 0 && width > 0, "height and width must be positive");
    const std::size_t n = static_cast<std::size_t>(height) * width;
    const psss::Size2 size{height, width};
    const auto view = psss::make_logits_view(std::span<const double>(logits, psss::kNumClasses * n), size);
    const psss::PartialMask mask(psss::LabelMap(height, width, 1, std::vector<std::uint8_t>(partial, partial + n)));
    psss::PseudoLabel pseudo{size, std::vector<std::uint8_t>(pseudo_cls, pseudo_cls + n),
                             std::vector<double>(pseudo_conf, pseudo_conf + n)};
    for (auto c : pseudo.cls) require(c < psss::kNumClasses, "pseudo class outside 0..3");
    psss::PsssConfig pc;
    pc.tau = tau;
    pc.validate();
    const auto r = psss::loss_partial_total(view, mask, pseudo, pc, {}, grad != nullptr);
    *out = {r.total, r.supervised, r.pseudo, r.exclusion, r.n_s1, r.n_s2, r.n_s3};
    if (grad) std::copy(r.grad.begin(), r.grad.end(), grad);
  });
}

}  // extern "C"
