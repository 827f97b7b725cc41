// Command-line driver for the fussl shared library. Links the C API only.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fussl/fussl.h"

namespace {

constexpr int kExitUsage = 2;

struct ConfigDeleter {
  void operator()(fussl_config* p) const { fussl_config_free(p); }
};
struct DatasetDeleter {
  void operator()(fussl_dataset* p) const { fussl_dataset_free(p); }
};
struct EncoderDeleter {
  void operator()(fussl_encoder* p) const { fussl_encoder_free(p); }
};
struct EnsembleDeleter {
  void operator()(fussl_ensemble* p) const { fussl_ensemble_free(p); }
};
struct LabelsDeleter {
  void operator()(fussl_labels* p) const { fussl_labels_free(p); }
};
struct ResultDeleter {
  void operator()(fussl_result* p) const { fussl_result_free(p); }
};
using ConfigPtr = std::unique_ptr<fussl_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<fussl_dataset, DatasetDeleter>;
using EncoderPtr = std::unique_ptr<fussl_encoder, EncoderDeleter>;
using EnsemblePtr = std::unique_ptr<fussl_ensemble, EnsembleDeleter>;
using LabelsPtr = std::unique_ptr<fussl_labels, LabelsDeleter>;
using ResultPtr = std::unique_ptr<fussl_result, ResultDeleter>;

// Aborts the process with the library's error message and the status as
// the exit code (0 success, 2 usage, 3 data, 4 numeric).
void check(fussl_status status, const char* what) {
  if (status == FUSSL_OK) return;
  std::cerr << "fussl: " << what << ": " << fussl_last_error() << "\n";
  std::exit(static_cast<int>(status));
}

std::string take_string(char* text) {
  std::string out = text != nullptr ? text : "";
  fussl_string_free(text);
  return out;
}

struct Overrides {
  std::vector<std::pair<std::string, std::string>> values;
  void add(const std::string& key, const std::string& value) {
    values.emplace_back(key, value);
  }
};

// Flag-to-config-key bindings shared by all subcommands; flags override
// config-file values, which override defaults.
void add_common_options(CLI::App* cmd, std::string& config_path,
                        Overrides& overrides) {
  cmd->add_option("--config", config_path, "Config file (key = value lines)");
  const auto bind = [cmd, &overrides](const std::string& flag,
                                      const std::string& key,
                                      const std::string& help) {
    cmd->add_option_function<std::string>(
        flag,
        [&overrides, key](const std::string& value) {
          overrides.add(key, value);
        },
        help);
  };
  bind("--seed", "seed", "Top-level seed (required)");
  bind("--out-dir", "out_dir", "Output directory");
  bind("--dataset", "dataset", "Dataset file (empty: generate synthetic)");
  bind("--m", "protocol.m", "Ensemble size");
  bind("--loss", "loss.kind",
       "Objective: triplet|npair|contrastive|noncontrastive|wmse|barlow-twins");
  bind("--label-mode", "protocol.label_mode",
       "Labeling mode: fuzzy|hard-only|soft-only");
  bind("--phase1-epochs", "protocol.phase1_epochs", "Phase-1 epochs");
  bind("--phase2-epochs", "protocol.phase2_epochs", "Phase-2 epochs");
  bind("--phase2-full-epochs", "protocol.phase2_full_epochs",
       "Unfrozen phase-2 stretch");
  bind("--batch-size", "protocol.batch_size", "Batch size");
  bind("--freeze-boundary", "protocol.freeze_boundary",
       "Backbone layers frozen in late phase 2");
  bind("--progressive", "protocol.progressive",
       "Progressive relabeling (true/false)");
  bind("--parallel", "protocol.parallel_blocks",
       "Train phase-1 blocks in parallel (true/false)");
  bind("--supers", "gen.n_super", "Synthetic superclass count");
  bind("--classes-per-super", "gen.classes_per_super",
       "Synthetic classes per superclass");
  bind("--dim", "gen.dim", "Synthetic sample dimension");
  bind("--n-per-class", "gen.n_per_class", "Synthetic samples per class");
  bind("--separation", "gen.separation", "Synthetic superclass separation");
  cmd->add_option_function<std::vector<std::string>>(
      "--set",
      [&overrides](const std::vector<std::string>& pairs) {
        for (const auto& pair : pairs) {
          const auto eq = pair.find('=');
          if (eq == std::string::npos) {
            std::cerr << "fussl: --set expects key=value, got '" << pair
                      << "'\n";
            std::exit(kExitUsage);
          }
          overrides.add(pair.substr(0, eq), pair.substr(eq + 1));
        }
      },
      "Override any config key (key=value, repeatable)");
}

ConfigPtr build_config(const std::string& config_path,
                       const Overrides& overrides) {
  fussl_config* raw = nullptr;
  check(fussl_config_create(&raw), "config");
  ConfigPtr config(raw);
  if (!config_path.empty()) {
    check(fussl_config_load_file(config.get(), config_path.c_str()),
          "loading config");
  }
  for (const auto& [key, value] : overrides.values) {
    check(fussl_config_set(config.get(), key.c_str(), value.c_str()),
          "applying flag override");
  }
  check(fussl_config_validate(config.get()), "validating config");
  return config;
}

std::string config_value(const fussl_config* config, const std::string& key) {
  char* raw = nullptr;
  check(fussl_config_get(config, key.c_str(), &raw), "reading config");
  return take_string(raw);
}

// Every subcommand prints the resolved configuration before doing work;
// the printed form is itself a valid config file.
std::string print_effective_config(const fussl_config* config) {
  char* raw = nullptr;
  check(fussl_config_dump(config, &raw), "dumping config");
  const std::string text = take_string(raw);
  std::cout << "# effective configuration\n" << text << std::flush;
  return text;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) {
    std::cerr << "fussl: cannot write '" << path.string() << "'\n";
    std::exit(FUSSL_ERROR_DATA);
  }
  out << text;
}

DatasetPtr obtain_dataset(const fussl_config* config) {
  const std::string path = config_value(config, "dataset");
  fussl_dataset* raw = nullptr;
  if (path.empty()) {
    check(fussl_dataset_generate(config, &raw), "generating dataset");
  } else {
    check(fussl_dataset_load(path.c_str(), &raw), "loading dataset");
  }
  return DatasetPtr(raw);
}

std::string eval_record(const char* probe, const char* stage, double top1,
                        uint32_t n_test, uint32_t epochs) {
  nlohmann::json j;
  j["phase"] = "eval";
  j["probe"] = probe;
  j["stage"] = stage;
  j["top1"] = top1;
  j["n_test"] = n_test;
  j["epochs"] = epochs;
  return j.dump() + "\n";
}

struct RunOutputs {
  double base_top1 = 0.0;   // linear probe of the selected phase-1 block
  double fussl_top1 = 0.0;  // linear probe after phase 2
  uint32_t n_test = 0;
  std::string metrics;  // training + eval JSONL
  ResultPtr result;
};

// Full pipeline plus the base/final linear probes; shared by `run` and the
// ablation cells.
RunOutputs execute_run(const fussl_config* config, const fussl_dataset* data) {
  const double test_fraction =
      std::stod(config_value(config, "probe.test_fraction"));
  const uint64_t seed = std::stoull(config_value(config, "seed"));
  const auto probe_epochs =
      static_cast<uint32_t>(std::stoul(config_value(config, "probe.epochs")));
  const double probe_lr = std::stod(config_value(config, "probe.lr"));

  fussl_dataset *train_raw = nullptr, *test_raw = nullptr;
  check(fussl_dataset_split(data, test_fraction, seed, &train_raw, &test_raw),
        "splitting dataset");
  DatasetPtr train(train_raw), test(test_raw);

  fussl_result* result_raw = nullptr;
  check(fussl_run(data, config, &result_raw), "running the protocol");
  RunOutputs outputs;
  outputs.result.reset(result_raw);

  fussl_encoder* phase1_raw = nullptr;
  check(fussl_result_encoder(outputs.result.get(), FUSSL_ENCODER_PHASE1,
                             &phase1_raw),
        "extracting phase-1 encoder");
  EncoderPtr phase1_encoder(phase1_raw);
  fussl_encoder* final_raw = nullptr;
  check(fussl_result_encoder(outputs.result.get(), FUSSL_ENCODER_FINAL,
                             &final_raw),
        "extracting final encoder");
  EncoderPtr final_encoder(final_raw);

  check(fussl_linear_probe(phase1_encoder.get(), train.get(), test.get(),
                           probe_epochs, probe_lr, seed, &outputs.base_top1,
                           &outputs.n_test),
        "base linear probe");
  check(fussl_linear_probe(final_encoder.get(), train.get(), test.get(),
                           probe_epochs, probe_lr, seed, &outputs.fussl_top1,
                           &outputs.n_test),
        "final linear probe");

  char* metrics_raw = nullptr;
  check(fussl_result_metrics_jsonl(outputs.result.get(), &metrics_raw),
        "metrics");
  outputs.metrics = take_string(metrics_raw);
  outputs.metrics += eval_record("linear", "base", outputs.base_top1,
                                 outputs.n_test, probe_epochs);
  outputs.metrics += eval_record("linear", "fussl", outputs.fussl_top1,
                                 outputs.n_test, probe_epochs);
  return outputs;
}

// ---------------------------------------------------------- subcommands

int cmd_generate_data(const fussl_config* config, const std::string& out) {
  print_effective_config(config);
  DatasetPtr data = obtain_dataset(config);
  check(fussl_dataset_save(data.get(), out.c_str()), "saving dataset");
  uint32_t n = 0, dim = 0, n_class = 0, n_super = 0;
  check(fussl_dataset_info(data.get(), &n, &dim, &n_class, &n_super), "info");
  std::cout << "wrote " << out << ": n=" << n << " dim=" << dim
            << " classes=" << n_class << " superclasses=" << n_super << "\n";
  return 0;
}

int cmd_run(const fussl_config* config) {
  const std::string effective = print_effective_config(config);
  const std::filesystem::path out_dir = config_value(config, "out_dir");
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "effective.cfg", effective);

  DatasetPtr data = obtain_dataset(config);
  if (config_value(config, "dataset").empty()) {
    check(fussl_dataset_save(data.get(), (out_dir / "dataset.bin").c_str()),
          "saving generated dataset");
  }

  const RunOutputs outputs = execute_run(config, data.get());
  write_file(out_dir / "metrics.jsonl", outputs.metrics);

  char* labels_raw = nullptr;
  check(fussl_result_labels_jsonl(outputs.result.get(), &labels_raw),
        "labels");
  write_file(out_dir / "labels.jsonl", take_string(labels_raw));

  fussl_encoder* final_raw = nullptr;
  check(fussl_result_encoder(outputs.result.get(), FUSSL_ENCODER_FINAL,
                             &final_raw),
        "final encoder");
  EncoderPtr final_encoder(final_raw);
  check(fussl_encoder_save(final_encoder.get(),
                           (out_dir / "encoder.ckpt").c_str()),
        "saving encoder");
  fussl_encoder* phase1_raw = nullptr;
  check(fussl_result_encoder(outputs.result.get(), FUSSL_ENCODER_PHASE1,
                             &phase1_raw),
        "phase-1 encoder");
  EncoderPtr phase1_encoder(phase1_raw);
  check(fussl_encoder_save(phase1_encoder.get(),
                           (out_dir / "encoder_phase1.ckpt").c_str()),
        "saving phase-1 encoder");
  check(fussl_result_save_ensemble(outputs.result.get(),
                                   (out_dir / "ensemble.ckpt").c_str()),
        "saving ensemble");

  uint32_t selected = 0;
  check(fussl_result_selected_block(outputs.result.get(), &selected),
        "selected block");
  std::cout << "selected block: " << selected << "\n"
            << "base linear top-1:  " << outputs.base_top1 << "\n"
            << "fussl linear top-1: " << outputs.fussl_top1 << "\n"
            << "outputs in " << out_dir.string() << "\n";
  return 0;
}

int cmd_pseudolabel(const fussl_config* config, const std::string& ensemble,
                    const std::string& data_path, const std::string& out) {
  print_effective_config(config);
  fussl_ensemble* ens_raw = nullptr;
  check(fussl_ensemble_load(ensemble.c_str(), &ens_raw), "loading ensemble");
  EnsemblePtr ens(ens_raw);
  fussl_dataset* data_raw = nullptr;
  check(fussl_dataset_load(data_path.c_str(), &data_raw), "loading dataset");
  DatasetPtr data(data_raw);

  const std::string mode = config_value(config, "protocol.label_mode");
  fussl_labels* labels_raw = nullptr;
  check(fussl_pseudo_label(ens.get(), data.get(), mode.c_str(), &labels_raw),
        "pseudo-labeling");
  LabelsPtr labels(labels_raw);
  char* text = nullptr;
  check(fussl_labels_jsonl(labels.get(), &text), "serializing labels");
  write_file(out, take_string(text));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_evaluate(const fussl_config* config, const std::string& checkpoint,
                 const std::string& train_path, const std::string& test_path,
                 const std::string& probe, const std::string& metrics_out) {
  print_effective_config(config);
  fussl_encoder* enc_raw = nullptr;
  check(fussl_encoder_load(checkpoint.c_str(), &enc_raw), "loading encoder");
  EncoderPtr encoder(enc_raw);
  fussl_dataset* train_raw = nullptr;
  check(fussl_dataset_load(train_path.c_str(), &train_raw), "loading train");
  DatasetPtr train(train_raw);
  fussl_dataset* test_raw = nullptr;
  check(fussl_dataset_load(test_path.c_str(), &test_raw), "loading test");
  DatasetPtr test(test_raw);

  if (probe != "linear" && probe != "knn" && probe != "both") {
    std::cerr << "fussl: --probe must be linear, knn, or both\n";
    return kExitUsage;
  }

  const uint64_t seed = std::stoull(config_value(config, "seed"));
  const auto epochs =
      static_cast<uint32_t>(std::stoul(config_value(config, "probe.epochs")));
  const double lr = std::stod(config_value(config, "probe.lr"));
  const auto k =
      static_cast<uint32_t>(std::stoul(config_value(config, "probe.knn_k")));

  std::string records;
  if (probe == "linear" || probe == "both") {
    double top1 = 0.0;
    uint32_t n_test = 0;
    check(fussl_linear_probe(encoder.get(), train.get(), test.get(), epochs,
                             lr, seed, &top1, &n_test),
          "linear probe");
    records += eval_record("linear", "checkpoint", top1, n_test, epochs);
    std::cout << "linear top-1: " << top1 << " (n=" << n_test << ")\n";
  }
  if (probe == "knn" || probe == "both") {
    double top1 = 0.0;
    uint32_t n_test = 0;
    check(fussl_knn_probe(encoder.get(), train.get(), test.get(), k, &top1,
                          &n_test),
          "knn probe");
    records += eval_record("knn", "checkpoint", top1, n_test, 0);
    std::cout << "knn top-1 (k=" << k << "): " << top1 << " (n=" << n_test
              << ")\n";
  }
  if (!metrics_out.empty()) {
    std::ofstream out(metrics_out, std::ios::app | std::ios::binary);
    if (!out) {
      std::cerr << "fussl: cannot append to '" << metrics_out << "'\n";
      return FUSSL_ERROR_DATA;
    }
    out << records;
  }
  return 0;
}

int cmd_ablate(ConfigPtr base_config, const std::string& axis) {
  print_effective_config(base_config.get());
  const std::filesystem::path out_dir =
      config_value(base_config.get(), "out_dir");
  std::filesystem::create_directories(out_dir);

  struct Cell {
    std::string name;
    std::vector<std::pair<std::string, std::string>> overrides;
  };
  std::vector<Cell> cells;
  if (axis == "ensemble-size") {
    for (int m : {1, 2, 3, 4, 5}) {
      cells.push_back({"m=" + std::to_string(m),
                       {{"protocol.m", std::to_string(m)}}});
    }
  } else if (axis == "label-mode") {
    for (const char* mode : {"fuzzy", "hard-only", "soft-only"}) {
      cells.push_back({mode, {{"protocol.label_mode", mode}}});
    }
  } else if (axis == "progressive") {
    cells.push_back({"sequential", {{"protocol.progressive", "false"}}});
    cells.push_back({"progressive", {{"protocol.progressive", "true"}}});
  } else if (axis == "freeze") {
    cells.push_back({"freeze", {}});
    // No fixed layers: the unfrozen stretch covers all of phase 2.
    cells.push_back(
        {"no-freeze",
         {{"protocol.phase2_full_epochs",
           config_value(base_config.get(), "protocol.phase2_epochs")}}});
  } else if (axis == "cross-class") {
    cells.push_back({"hard-only", {}});
    cells.push_back({"soft-only", {}});
  } else {
    std::cerr << "fussl: unknown ablation axis '" << axis << "'\n";
    return kExitUsage;
  }

  // One dataset shared by every cell.
  DatasetPtr data = obtain_dataset(base_config.get());

  std::string summary = axis == "cross-class"
                            ? "axis\tcell\tconsistency\tprobe_top1\tchance\n"
                            : "axis\tcell\tbase_top1\tfussl_top1\tdelta\n";
  for (const Cell& cell : cells) {
    if (axis == "cross-class") {
      char* report_raw = nullptr;
      check(fussl_cross_class_run(data.get(), base_config.get(),
                                  cell.name.c_str(), &report_raw),
            "cross-class run");
      const std::string report = take_string(report_raw);
      write_file(out_dir / ("cross-class-" + cell.name + ".json"),
                 report + "\n");
      const auto j = nlohmann::json::parse(report);
      summary += axis + "\t" + cell.name + "\t" +
                 std::to_string(j["consistency"].get<double>()) + "\t" +
                 std::to_string(j["probe_top1"].get<double>()) + "\t" +
                 std::to_string(j["chance"].get<double>()) + "\n";
      std::cout << "cell " << cell.name << ": " << report << "\n";
      continue;
    }

    fussl_config* cell_raw = nullptr;
    check(fussl_config_create(&cell_raw), "config");
    ConfigPtr cell_config(cell_raw);
    // Clone the base configuration through its dump.
    char* dump_raw = nullptr;
    check(fussl_config_dump(base_config.get(), &dump_raw), "dump");
    const std::string dump = take_string(dump_raw);
    const std::filesystem::path tmp = out_dir / ".cell.cfg";
    write_file(tmp, dump);
    check(fussl_config_load_file(cell_config.get(), tmp.c_str()), "reload");
    for (const auto& [key, value] : cell.overrides) {
      check(fussl_config_set(cell_config.get(), key.c_str(), value.c_str()),
            "cell override");
    }

    const RunOutputs outputs = execute_run(cell_config.get(), data.get());
    const std::filesystem::path cell_dir = out_dir / ("cell-" + cell.name);
    std::filesystem::create_directories(cell_dir);
    write_file(cell_dir / "metrics.jsonl", outputs.metrics);

    const double delta = outputs.fussl_top1 - outputs.base_top1;
    summary += axis + "\t" + cell.name + "\t" +
               std::to_string(outputs.base_top1) + "\t" +
               std::to_string(outputs.fussl_top1) + "\t" +
               std::to_string(delta) + "\n";
    std::cout << "cell " << cell.name << ": base=" << outputs.base_top1
              << " fussl=" << outputs.fussl_top1 << " delta=" << delta << "\n";
  }
  std::filesystem::remove(out_dir / ".cell.cfg");
  write_file(out_dir / "ablation.tsv", summary);
  std::cout << "summary written to " << (out_dir / "ablation.tsv").string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fussl: ensemble SSL pretraining with fuzzy pseudo-labels"};
  app.require_subcommand(1);

  std::string gen_config_path, gen_out;
  Overrides gen_overrides;
  CLI::App* gen =
      app.add_subcommand("generate-data", "Generate a synthetic dataset file");
  add_common_options(gen, gen_config_path, gen_overrides);
  gen->add_option("--out", gen_out, "Output dataset path")->required();

  std::string run_config_path;
  Overrides run_overrides;
  CLI::App* run = app.add_subcommand("run", "Run the full training protocol");
  add_common_options(run, run_config_path, run_overrides);

  std::string pl_config_path, pl_ensemble, pl_data, pl_out;
  Overrides pl_overrides;
  CLI::App* pl = app.add_subcommand("pseudolabel",
                                    "Label a dataset with a trained ensemble");
  add_common_options(pl, pl_config_path, pl_overrides);
  pl->add_option("--ensemble", pl_ensemble, "Ensemble checkpoint")->required();
  pl->add_option("--data", pl_data, "Dataset file")->required();
  pl->add_option("--out", pl_out, "Labels JSONL output path")->required();

  std::string ev_config_path, ev_checkpoint, ev_train, ev_test,
      ev_probe = "linear", ev_metrics_out;
  Overrides ev_overrides;
  CLI::App* ev = app.add_subcommand("evaluate", "Probe a trained encoder");
  add_common_options(ev, ev_config_path, ev_overrides);
  ev->add_option("--checkpoint", ev_checkpoint, "Encoder checkpoint")
      ->required();
  ev->add_option("--train-data", ev_train, "Probe training dataset")
      ->required();
  ev->add_option("--test-data", ev_test, "Probe test dataset")->required();
  ev->add_option("--probe", ev_probe, "linear|knn|both");
  ev->add_option("--metrics-out", ev_metrics_out,
                 "Append eval records to this JSONL file");

  std::string ab_config_path, ab_axis;
  Overrides ab_overrides;
  CLI::App* ab = app.add_subcommand("ablate", "Sweep one protocol axis");
  add_common_options(ab, ab_config_path, ab_overrides);
  ab->add_option("--axis", ab_axis,
                 "ensemble-size|label-mode|progressive|freeze|cross-class")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (app.got_subcommand(gen)) {
    return cmd_generate_data(build_config(gen_config_path, gen_overrides).get(),
                             gen_out);
  }
  if (app.got_subcommand(run)) {
    return cmd_run(build_config(run_config_path, run_overrides).get());
  }
  if (app.got_subcommand(pl)) {
    return cmd_pseudolabel(build_config(pl_config_path, pl_overrides).get(),
                           pl_ensemble, pl_data, pl_out);
  }
  if (app.got_subcommand(ev)) {
    return cmd_evaluate(build_config(ev_config_path, ev_overrides).get(),
                        ev_checkpoint, ev_train, ev_test, ev_probe,
                        ev_metrics_out);
  }
  if (app.got_subcommand(ab)) {
    return cmd_ablate(build_config(ab_config_path, ab_overrides), ab_axis);
  }
  return kExitUsage;
}
