#include "fussl/fussl.h"

#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "protocol.hpp"
#include "run_config.hpp"

struct fussl_config {
  fussl::RunConfig impl;
};
struct fussl_dataset {
  fussl::Dataset impl;
};
struct fussl_encoder {
  fussl::EncoderParams impl;
};
struct fussl_ensemble {
  fussl::EnsembleState impl;
};
struct fussl_labels {
  std::vector<fussl::FuzzyLabel> impl;
};
struct fussl_result {
  fussl::RunResult impl;
};

namespace {

thread_local std::string g_last_error = "no error";

void set_error(const std::string& message) { g_last_error = message; }

// Runs `body`, translating exceptions into statuses + last-error text.
template <typename Fn>
fussl_status guarded(Fn&& body) {
  try {
    body();
    return FUSSL_OK;
  } catch (const fussl::config_error& e) {
    set_error(e.what());
    return FUSSL_ERROR_USAGE;
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return FUSSL_ERROR_USAGE;
  } catch (const fussl::numeric_error& e) {
    set_error(e.what());
    return FUSSL_ERROR_NUMERIC;
  } catch (const fussl::data_error& e) {
    set_error(e.what());
    return FUSSL_ERROR_DATA;
  } catch (const std::exception& e) {
    set_error(e.what());
    return FUSSL_ERROR_DATA;
  }
}

fussl_status require_args(bool ok) {
  if (!ok) {
    set_error("null argument");
    return FUSSL_ERROR_USAGE;
  }
  return FUSSL_OK;
}

char* copy_string(const std::string& text) {
  char* out = new char[text.size() + 1];
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* fussl_version(void) { return "0.1.0"; }

const char* fussl_last_error(void) { return g_last_error.c_str(); }

void fussl_string_free(char* text) { delete[] text; }

/* ---------------------------------------------------------------- config */

fussl_status fussl_config_create(fussl_config** out) {
  if (auto rc = require_args(out != nullptr)) return rc;
  return guarded([&] { *out = new fussl_config{}; });
}

void fussl_config_free(fussl_config* config) { delete config; }

fussl_status fussl_config_set(fussl_config* config, const char* key,
                              const char* value) {
  if (auto rc = require_args(config && key && value)) return rc;
  return guarded([&] { config->impl.set(key, value); });
}

fussl_status fussl_config_get(const fussl_config* config, const char* key,
                              char** value_out) {
  if (auto rc = require_args(config && key && value_out)) return rc;
  return guarded([&] { *value_out = copy_string(config->impl.get(key)); });
}

fussl_status fussl_config_load_file(fussl_config* config, const char* path) {
  if (auto rc = require_args(config && path)) return rc;
  return guarded([&] { config->impl.load_file(path); });
}

fussl_status fussl_config_dump(const fussl_config* config, char** text_out) {
  if (auto rc = require_args(config && text_out)) return rc;
  return guarded([&] { *text_out = copy_string(config->impl.dump()); });
}

fussl_status fussl_config_validate(const fussl_config* config) {
  if (auto rc = require_args(config != nullptr)) return rc;
  return guarded([&] { config->impl.validate(); });
}

/* --------------------------------------------------------------- dataset */

fussl_status fussl_dataset_generate(const fussl_config* config,
                                    fussl_dataset** out) {
  if (auto rc = require_args(config && out)) return rc;
  return guarded([&] { *out = new fussl_dataset{config->impl.generate()}; });
}

fussl_status fussl_dataset_load(const char* path, fussl_dataset** out) {
  if (auto rc = require_args(path && out)) return rc;
  return guarded([&] { *out = new fussl_dataset{fussl::load_dataset(path)}; });
}

fussl_status fussl_dataset_save(const fussl_dataset* dataset,
                                const char* path) {
  if (auto rc = require_args(dataset && path)) return rc;
  return guarded([&] { fussl::save_dataset(dataset->impl, path); });
}

void fussl_dataset_free(fussl_dataset* dataset) { delete dataset; }

fussl_status fussl_dataset_info(const fussl_dataset* dataset, uint32_t* n,
                                uint32_t* dim, uint32_t* n_class,
                                uint32_t* n_super) {
  if (auto rc = require_args(dataset != nullptr)) return rc;
  if (n) *n = static_cast<uint32_t>(dataset->impl.size());
  if (dim) *dim = static_cast<uint32_t>(dataset->impl.dim());
  if (n_class) *n_class = dataset->impl.n_class;
  if (n_super) *n_super = dataset->impl.n_super;
  return FUSSL_OK;
}

fussl_status fussl_dataset_split(const fussl_dataset* dataset,
                                 double test_fraction, uint64_t seed,
                                 fussl_dataset** train, fussl_dataset** test) {
  if (auto rc = require_args(dataset && train && test)) return rc;
  return guarded([&] {
    auto train_out = new fussl_dataset{};
    auto test_out = new fussl_dataset{};
    try {
      fussl::split_dataset(dataset->impl, test_fraction, seed, train_out->impl,
                           test_out->impl);
    } catch (...) {
      delete train_out;
      delete test_out;
      throw;
    }
    *train = train_out;
    *test = test_out;
  });
}

/* ------------------------------------------------------------------- run */

fussl_status fussl_run(const fussl_dataset* dataset, const fussl_config* config,
                       fussl_result** out) {
  if (auto rc = require_args(dataset && config && out)) return rc;
  return guarded([&] {
    config->impl.validate();
    const fussl::ProtocolConfig proto =
        config->impl.protocol(dataset->impl.dim());
    *out = new fussl_result{fussl::run_fussl(dataset->impl, proto)};
  });
}

void fussl_result_free(fussl_result* result) { delete result; }

fussl_status fussl_result_metrics_jsonl(const fussl_result* result,
                                        char** text_out) {
  if (auto rc = require_args(result && text_out)) return rc;
  return guarded([&] {
    *text_out = copy_string(fussl::metrics_to_jsonl(result->impl.metrics));
  });
}

fussl_status fussl_result_labels_jsonl(const fussl_result* result,
                                       char** text_out) {
  if (auto rc = require_args(result && text_out)) return rc;
  return guarded([&] {
    *text_out = copy_string(fussl::labels_to_jsonl(result->impl.labels));
  });
}

fussl_status fussl_result_selected_block(const fussl_result* result,
                                         uint32_t* index_out) {
  if (auto rc = require_args(result && index_out)) return rc;
  *index_out = static_cast<uint32_t>(result->impl.selected_block);
  return FUSSL_OK;
}

fussl_status fussl_result_encoder(const fussl_result* result, int which,
                                  fussl_encoder** out) {
  if (auto rc = require_args(result && out)) return rc;
  if (which != FUSSL_ENCODER_FINAL && which != FUSSL_ENCODER_PHASE1) {
    set_error("fussl_result_encoder: unknown encoder selector");
    return FUSSL_ERROR_USAGE;
  }
  return guarded([&] {
    *out = new fussl_encoder{which == FUSSL_ENCODER_FINAL
                                 ? result->impl.final_encoder
                                 : result->impl.phase1_encoder};
  });
}

fussl_status fussl_result_save_ensemble(const fussl_result* result,
                                        const char* path) {
  if (auto rc = require_args(result && path)) return rc;
  return guarded(
      [&] { fussl::save_ensemble(result->impl.ensemble.blocks, path); });
}

/* --------------------------------------------------------------- encoder */

fussl_status fussl_encoder_save(const fussl_encoder* encoder,
                                const char* path) {
  if (auto rc = require_args(encoder && path)) return rc;
  return guarded([&] { fussl::save_encoder(encoder->impl, path); });
}

fussl_status fussl_encoder_load(const char* path, fussl_encoder** out) {
  if (auto rc = require_args(path && out)) return rc;
  return guarded([&] { *out = new fussl_encoder{fussl::load_encoder(path)}; });
}

void fussl_encoder_free(fussl_encoder* encoder) { delete encoder; }

/* -------------------------------------------------------------- ensemble */

fussl_status fussl_ensemble_load(const char* path, fussl_ensemble** out) {
  if (auto rc = require_args(path && out)) return rc;
  return guarded([&] {
    auto handle = new fussl_ensemble{};
    try {
      handle->impl.blocks = fussl::load_ensemble(path);
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

void fussl_ensemble_free(fussl_ensemble* ensemble) { delete ensemble; }

fussl_status fussl_pseudo_label(const fussl_ensemble* ensemble,
                                const fussl_dataset* dataset, const char* mode,
                                fussl_labels** out) {
  if (auto rc = require_args(ensemble && dataset && mode && out)) return rc;
  return guarded([&] {
    const fussl::LabelMode parsed = fussl::parse_label_mode(mode);
    *out = new fussl_labels{
        fussl::pseudo_label(ensemble->impl, dataset->impl, parsed)};
  });
}

fussl_status fussl_labels_jsonl(const fussl_labels* labels, char** text_out) {
  if (auto rc = require_args(labels && text_out)) return rc;
  return guarded(
      [&] { *text_out = copy_string(fussl::labels_to_jsonl(labels->impl)); });
}

void fussl_labels_free(fussl_labels* labels) { delete labels; }

/* ------------------------------------------------------------ evaluation */

fussl_status fussl_linear_probe(const fussl_encoder* encoder,
                                const fussl_dataset* train,
                                const fussl_dataset* test, uint32_t epochs,
                                double lr, uint64_t seed, double* top1_out,
                                uint32_t* n_test_out) {
  if (auto rc = require_args(encoder && train && test && top1_out)) return rc;
  return guarded([&] {
    const fussl::ProbeResult result = fussl::linear_probe(
        encoder->impl, train->impl, test->impl, epochs, lr, seed);
    *top1_out = result.top1;
    if (n_test_out) *n_test_out = static_cast<uint32_t>(result.n_test);
  });
}

fussl_status fussl_knn_probe(const fussl_encoder* encoder,
                             const fussl_dataset* train,
                             const fussl_dataset* test, uint32_t k,
                             double* top1_out, uint32_t* n_test_out) {
  if (auto rc = require_args(encoder && train && test && top1_out)) return rc;
  return guarded([&] {
    const fussl::ProbeResult result =
        fussl::knn_probe(encoder->impl, train->impl, test->impl, k);
    *top1_out = result.top1;
    if (n_test_out) *n_test_out = static_cast<uint32_t>(result.n_test);
  });
}

fussl_status fussl_cross_class_run(const fussl_dataset* dataset,
                                   const fussl_config* config,
                                   const char* label_mode, char** report_out) {
  if (auto rc = require_args(dataset && config && label_mode && report_out)) {
    return rc;
  }
  return guarded([&] {
    config->impl.validate();
    const fussl::Dataset& full = dataset->impl;
    const std::uint32_t cps = full.n_class / full.n_super;
    if (cps < 2 || full.n_class % full.n_super != 0) {
      throw std::invalid_argument(
          "cross-class study needs >= 2 classes per superclass "
          "(uniform hierarchy)");
    }

    // Half the classes of every superclass pre-train, the other half probe.
    std::vector<std::uint32_t> half_a, half_b;
    for (std::uint32_t c = 0; c < full.n_class; ++c) {
      (c % cps < cps / 2 ? half_a : half_b).push_back(c);
    }
    const fussl::Dataset ds_a = fussl::filter_classes(full, half_a);
    const fussl::Dataset ds_b = fussl::filter_classes(full, half_b);
    fussl::Dataset b_train, b_test;
    fussl::split_dataset(ds_b, config->impl.probe_test_fraction(),
                         config->impl.seed(), b_train, b_test);

    fussl::ProtocolConfig proto = config->impl.protocol(full.dim());
    proto.label_mode = fussl::parse_label_mode(label_mode);
    const fussl::RunResult run = fussl::run_fussl(ds_a, proto);

    const fussl::CrossClassReport report = fussl::cross_class_eval(
        run.final_encoder, run.labels, ds_a, b_train, b_test,
        config->impl.probe_epochs(), config->impl.probe_lr(),
        config->impl.seed());

    nlohmann::json j;
    j["probe_top1"] = report.probe.top1;
    j["consistency"] = report.consistency;
    j["chance"] = report.chance;
    j["soft_count"] = report.soft_count;
    j["n_test"] = report.probe.n_test;
    j["label_mode"] = label_mode;
    *report_out = copy_string(j.dump());
  });
}

} /* extern "C" */
