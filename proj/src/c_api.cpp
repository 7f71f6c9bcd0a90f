#include "dpm/dpm.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "dpm/dataio.hpp"
#include "dpm/learning.hpp"

struct dpm_bank {
  dpm::ExpertBank bank;
};

struct dpm_dataset {
  dpm::Dataset data;
};

struct dpm_inference {
  std::vector<std::vector<uint32_t>> experts;
  std::vector<double> ll;
};

namespace {

thread_local std::string last_error;

dpm_status fail(dpm_status status, const char* what) {
  last_error = what;
  return status;
}

dpm_status map_code(dpm::ErrorCode code) {
  switch (code) {
    case dpm::ErrorCode::InvalidArgument: return DPM_ERR_INVALID_ARGUMENT;
    case dpm::ErrorCode::EmptyLatentState: return DPM_ERR_EMPTY_LATENT_STATE;
    case dpm::ErrorCode::Domain: return DPM_ERR_DOMAIN;
    case dpm::ErrorCode::Io: return DPM_ERR_IO;
    case dpm::ErrorCode::Format: return DPM_ERR_FORMAT;
    case dpm::ErrorCode::Truncated: return DPM_ERR_TRUNCATED;
  }
  return DPM_ERR_INTERNAL;
}

template <class Fn>
dpm_status guarded(Fn&& fn) {
  try {
    fn();
    return DPM_OK;
  } catch (const dpm::Error& e) {
    return fail(map_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DPM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DPM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DPM_ERR_INTERNAL, "unknown error");
  }
}

#define DPM_REQUIRE(cond, msg) \
  if (!(cond)) return fail(DPM_ERR_INVALID_ARGUMENT, msg)

dpm::InferenceConfig to_config(const dpm_infer_options* opts) {
  dpm_infer_options o;
  dpm_infer_options_init(&o);
  if (opts) o = *opts;
  const auto rule = o.composition == DPM_SOFT ? dpm::Composition::Soft : dpm::Composition::Hard;
  if (o.max_active > 0) return dpm::InferenceConfig::budget(o.max_active, rule);
  dpm::InferenceConfig cfg;
  cfg.min_gain = o.min_gain;
  cfg.composition = rule;
  return cfg;
}

unsigned threads_of(const dpm_infer_options* opts) { return opts && opts->threads > 0 ? opts->threads : 1; }

}  // namespace

extern "C" {

const char* dpm_last_error(void) { return last_error.c_str(); }

const char* dpm_status_string(dpm_status status) {
  switch (status) {
    case DPM_OK: return "ok";
    case DPM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DPM_ERR_EMPTY_LATENT_STATE: return "empty latent state";
    case DPM_ERR_DOMAIN: return "domain error";
    case DPM_ERR_IO: return "I/O error";
    case DPM_ERR_FORMAT: return "format error";
    case DPM_ERR_TRUNCATED: return "truncated input";
    case DPM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

dpm_status dpm_dataset_synthetic(dpm_dataset** out) {
  DPM_REQUIRE(out, "null output pointer");
  return guarded([&] { *out = new dpm_dataset{dpm::gen_synthetic()}; });
}

dpm_status dpm_dataset_read(const char* path, dpm_format format, dpm_data_kind kind, dpm_dataset** out) {
  DPM_REQUIRE(path && out, "null argument");
  return guarded([&] {
    dpm::Dataset ds;
    switch (format) {
      case DPM_FORMAT_CSV:
        ds = dpm::read_csv(path, kind == DPM_BINARY ? dpm::DataKind::Binary : dpm::DataKind::Continuous);
        break;
      case DPM_FORMAT_IDX: ds = dpm::read_idx(path); break;
      case DPM_FORMAT_NETPBM_DIR: ds = dpm::read_netpbm_dir(path); break;
      default: throw dpm::Error(dpm::ErrorCode::InvalidArgument, "unknown data format");
    }
    *out = new dpm_dataset{std::move(ds)};
  });
}

dpm_status dpm_dataset_from_array(const double* values, size_t rows, size_t cols, dpm_data_kind kind,
                                  dpm_dataset** out) {
  DPM_REQUIRE(out && (values || rows * cols == 0), "null argument");
  return guarded([&] {
    dpm::Dataset ds;
    ds.kind = kind == DPM_BINARY ? dpm::DataKind::Binary : dpm::DataKind::Continuous;
    ds.data = Eigen::Map<const dpm::Matrix>(values, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    ds.validate();
    *out = new dpm_dataset{std::move(ds)};
  });
}

dpm_status dpm_dataset_binarize(dpm_dataset* ds, double threshold) {
  DPM_REQUIRE(ds, "null dataset");
  return guarded([&] { ds->data = dpm::binarize(ds->data, threshold); });
}

dpm_status dpm_dataset_write_csv(const dpm_dataset* ds, const char* path) {
  DPM_REQUIRE(ds && path, "null argument");
  return guarded([&] { dpm::write_csv(ds->data, path); });
}

size_t dpm_dataset_rows(const dpm_dataset* ds) { return ds ? ds->data.n() : 0; }
size_t dpm_dataset_cols(const dpm_dataset* ds) { return ds ? ds->data.d() : 0; }
dpm_data_kind dpm_dataset_kind(const dpm_dataset* ds) {
  return ds && ds->data.kind == dpm::DataKind::Continuous ? DPM_CONTINUOUS : DPM_BINARY;
}

int dpm_dataset_shape(const dpm_dataset* ds, size_t* rows, size_t* cols) {
  if (!ds || !ds->data.shape_hint) return 0;
  if (rows) *rows = ds->data.shape_hint->rows;
  if (cols) *cols = ds->data.shape_hint->cols;
  return 1;
}

void dpm_dataset_free(dpm_dataset* ds) { delete ds; }

void dpm_train_options_init(dpm_train_options* opts) {
  if (!opts) return;
  opts->iterations = 10;
  opts->c = 2.0;
  opts->eps = -1.0;
  opts->dead_zone = -1.0;
  opts->seed = 0;
  opts->init_noise = 0.1;
  opts->threads = 1;
  opts->max_active = 0;
}

dpm_status dpm_train(const dpm_dataset* ds, dpm_model_kind kind, uint32_t num_experts, const dpm_train_options* opts,
                     dpm_iteration_callback on_iteration, void* user, dpm_bank** out) {
  DPM_REQUIRE(ds && out, "null argument");
  DPM_REQUIRE(num_experts >= 1, "need at least one expert");
  dpm_train_options o;
  dpm_train_options_init(&o);
  if (opts) o = *opts;
  return guarded([&] {
    dpm::TrainConfig cfg;
    cfg.iterations = o.iterations;
    cfg.c = o.c;
    if (o.eps >= 0.0) cfg.eps = o.eps;
    if (o.dead_zone >= 0.0) cfg.dead_zone = o.dead_zone;
    cfg.seed = o.seed;
    cfg.init_noise = o.init_noise;
    cfg.threads = o.threads > 0 ? o.threads : 1;
    if (o.max_active > 0) cfg.inference = dpm::InferenceConfig::budget(o.max_active, dpm::Composition::Soft);
    const auto model = kind == DPM_GAUSSIAN ? dpm::ObservationModel::Gaussian : dpm::ObservationModel::Bernoulli;
    dpm::IterationCallback cb;
    if (on_iteration) {
      cb = [&](const dpm::IterationReport& r) {
        const dpm_iteration_report rep{static_cast<uint32_t>(r.iteration), r.mean_ll, r.recon_error, r.avg_active};
        on_iteration(&rep, user);
      };
    }
    auto result = dpm::fit(ds->data, model, num_experts, cfg, cb);
    *out = new dpm_bank{std::move(result.bank)};
  });
}

dpm_status dpm_bank_save(const dpm_bank* bank, const char* path) {
  DPM_REQUIRE(bank && path, "null argument");
  return guarded([&] { dpm::save_model(bank->bank, path); });
}

dpm_status dpm_bank_load(const char* path, dpm_bank** out) {
  DPM_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new dpm_bank{dpm::load_model(path)}; });
}

size_t dpm_bank_num_experts(const dpm_bank* bank) { return bank ? bank->bank.num_experts() : 0; }
size_t dpm_bank_num_dims(const dpm_bank* bank) { return bank ? bank->bank.num_dims() : 0; }
dpm_model_kind dpm_bank_kind(const dpm_bank* bank) {
  return bank && bank->bank.gaussian() ? DPM_GAUSSIAN : DPM_BERNOULLI;
}

dpm_status dpm_bank_copy(const dpm_bank* bank, int which, double* dst, size_t len) {
  DPM_REQUIRE(bank && dst, "null argument");
  const dpm::Matrix* m = which == 0 ? &bank->bank.mu : which == 1 ? &bank->bank.var : which == 2 ? &bank->bank.expertise : nullptr;
  DPM_REQUIRE(m, "unknown parameter selector");
  DPM_REQUIRE(m->size() > 0, "bank has no such parameter");
  DPM_REQUIRE(len == static_cast<size_t>(m->size()), "destination length must be K*D");
  std::memcpy(dst, m->data(), len * sizeof(double));
  return DPM_OK;
}

void dpm_bank_free(dpm_bank* bank) { delete bank; }

dpm_status dpm_export_templates(const dpm_bank* bank, size_t rows, size_t cols, const char* out_dir) {
  DPM_REQUIRE(bank && out_dir, "null argument");
  return guarded([&] { dpm::export_template_grid(bank->bank, dpm::ImageShape{rows, cols}, out_dir); });
}

void dpm_infer_options_init(dpm_infer_options* opts) {
  if (!opts) return;
  opts->max_active = 0;
  opts->min_gain = 0.0;
  opts->composition = DPM_HARD;
  opts->threads = 1;
}

dpm_status dpm_infer(const dpm_bank* bank, const dpm_dataset* ds, const dpm_infer_options* opts, dpm_inference** out) {
  DPM_REQUIRE(bank && ds && out, "null argument");
  return guarded([&] {
    const auto results = dpm::infer_batch(bank->bank, ds->data, to_config(opts), threads_of(opts));
    auto inf = std::make_unique<dpm_inference>();
    inf->experts.reserve(results.size());
    inf->ll.reserve(results.size());
    for (const auto& r : results) {
      std::vector<uint32_t> order;
      for (const auto& step : r.trace) order.push_back(static_cast<uint32_t>(step.expert));
      inf->experts.push_back(std::move(order));
      inf->ll.push_back(r.final_ll);
    }
    *out = inf.release();
  });
}

size_t dpm_inference_count(const dpm_inference* inf) { return inf ? inf->ll.size() : 0; }

size_t dpm_inference_experts(const dpm_inference* inf, size_t i, const uint32_t** experts) {
  if (!inf || i >= inf->experts.size()) return 0;
  if (experts) *experts = inf->experts[i].data();
  return inf->experts[i].size();
}

double dpm_inference_log_likelihood(const dpm_inference* inf, size_t i) {
  return inf && i < inf->ll.size() ? inf->ll[i] : 0.0;
}

void dpm_inference_free(dpm_inference* inf) { delete inf; }

dpm_status dpm_evaluate(const dpm_bank* bank, const dpm_dataset* ds, const dpm_infer_options* opts,
                        dpm_evaluation* out) {
  DPM_REQUIRE(bank && ds && out, "null argument");
  return guarded([&] {
    const auto e = dpm::evaluate(bank->bank, ds->data, to_config(opts), threads_of(opts));
    *out = dpm_evaluation{e.recon_error, e.mean_ll, e.avg_active};
  });
}

}  // extern "C"
