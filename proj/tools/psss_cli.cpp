// psss: command-line front end over the C interface.
#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "psss.h"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Registers a flag that, when given, sets one config key to its value.
CLI::Option* keyed(CLI::App* app, Overrides& ov, const std::string& name, const std::string& key,
                   const std::string& help) {
  return app->add_option_function<std::string>(
      name, [&ov, key](const std::string& v) { ov.emplace_back(key, v); }, help + " [" + key + "]");
}

/// Same for three integers written as a JSON object with the given field names.
CLI::Option* keyed3(CLI::App* app, Overrides& ov, const std::string& name, const std::string& key,
                    const char* const (&fields)[3], const std::string& help) {
  return app
      ->add_option_function<std::vector<int>>(
          name,
          [&ov, key, fields](const std::vector<int>& v) {
            std::string j = "{";
            for (int i = 0; i < 3; ++i) {
              j += std::string(i ? "," : "") + "\"" + fields[i] + "\":" + std::to_string(v[i]);
            }
            ov.emplace_back(key, j + "}");
          },
          help + " [" + key + "]")
      ->expected(3);
}

int report(psss_status st) {
  if (st == PSSS_OK) return 0;
  std::fprintf(stderr, "error: %s: %s\n", psss_status_name(st), psss_last_error());
  return static_cast<int>(st);
}

void print_and_free(char* s) {
  if (!s) return;
  std::printf("%s\n", s);
  psss_string_free(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially supervised vein segmentation toolkit"};
  app.set_version_flag("--version", std::string(psss_version()));
  app.require_subcommand(1);
  app.fallthrough();

  Overrides ov;
  std::string config_file;
  std::vector<std::string> sets;
  bool verbose = false, quiet = false;
  app.add_option("-c,--config", config_file, "JSON config file (flags override it)");
  keyed(&app, ov, "--root", "experiment_root", "Experiment root; defaults to $PSSS_EXPERIMENT_ROOT or .");
  keyed(&app, ov, "--seed", "seed", "Seed for generation, splits and training");
  app.add_option("--set", sets, "Override any config key: section.key=value");
  app.add_flag("-v,--verbose", verbose, "Log every training step");
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  static const char* const kRegimes[3] = {"full", "partial", "unlabeled"};

  auto* synth = app.add_subcommand("synth", "Generate a synthetic venation dataset");
  keyed(synth, ov, "-o,--out", "synth.out_dir", "Output directory");
  keyed3(synth, ov, "--counts", "synth.counts", kRegimes, "Train leaves per regime: FULL PARTIAL UNLABELED");
  keyed(synth, ov, "--val", "synth.val", "Extra val leaves");
  keyed(synth, ov, "--test", "synth.test", "Extra test leaves");
  keyed(synth, ov, "--species", "synth.species", "Species tag");

  auto* splits = app.add_subcommand("splits", "Assign train/val/test splits by regime ratios");
  keyed(splits, ov, "-i,--inputs", "splits.inputs", "JSON list of input manifests");
  keyed(splits, ov, "-o,--output", "splits.output", "Output manifest");
  keyed3(splits, ov, "--ratios", "splits.ratios", kRegimes, "Regime ratios: FULL PARTIAL UNLABELED");
  keyed(splits, ov, "--unit", "splits.ratio_unit", "FULL images per ratio unit");
  keyed(splits, ov, "--source", "splits.source_species", "Cross-species source");
  keyed(splits, ov, "--target", "splits.target_species", "Cross-species target (enables cross-species mode)");
  keyed(splits, ov, "--mode", "splits.mode", "TRANSFER or SCARCE");

  auto* prepare = app.add_subcommand("prepare", "Cut full images into filtered patches");
  keyed(prepare, ov, "-m,--manifest", "tiling.manifest", "Full-image manifest");
  keyed(prepare, ov, "-o,--out", "tiling.out_dir", "Patch dataset directory");
  keyed(prepare, ov, "--patch", "tiling.patch", "Patch side in pixels");
  keyed(prepare, ov, "--threshold", "tiling.filter.min_foreground_fraction", "Minimum foreground fraction");

  auto* train = app.add_subcommand("train", "Train on a prepared patch dataset");
  bool no_psss = false, supervised_only = false;
  keyed(train, ov, "-p,--patches", "train.patches", "Patch manifest");
  keyed(train, ov, "--eval-manifest", "train.eval_manifest", "Full-image manifest for val");
  keyed(train, ov, "-r,--run", "train.run_name", "Run name under <root>/runs");
  keyed(train, ov, "--epochs", "training.epochs", "Epochs");
  keyed(train, ov, "--batch-size", "training.batch_size", "Batch size per stream");
  keyed(train, ov, "--lr", "training.base_lr", "Initial learning rate");
  keyed(train, ov, "--tau", "training.psss.tau", "Partial-branch confidence threshold");
  keyed(train, ov, "--tau-u", "training.tau_u", "Unlabeled-branch confidence threshold");
  keyed(train, ov, "--lambda", "training.psss.lambda", "Weight of the partial loss");
  keyed(train, ov, "--pseudo-source", "training.pseudo_source", "STUDENT_WEAK or EMA_TEACHER");
  keyed(train, ov, "--width", "model.base_width", "Base channel width of the network");
  keyed(train, ov, "--threads", "train.threads", "Intra-op threads (0 keeps the default)");
  train->add_flag("--no-psss", no_psss, "Semi-supervised host only: drop the partial stream and its loss");
  train->add_flag("--supervised-only", supervised_only, "Supervised baseline: full stream and L_S only");

  auto* eval = app.add_subcommand("eval", "Stitched evaluation of a checkpoint or plugin model");
  bool as_json = false;
  keyed(eval, ov, "--checkpoint", "eval.checkpoint", "Checkpoint (default <root>/runs/<run>/best.pt)");
  keyed(eval, ov, "-m,--manifest", "eval.manifest", "Full-image manifest");
  keyed(eval, ov, "-r,--run", "train.run_name", "Run name under <root>/runs");
  keyed(eval, ov, "--split", "eval.split", "val or test");
  keyed(eval, ov, "--model", "eval.model", "checkpoint, oracle or background");
  keyed(eval, ov, "-o,--out", "eval.out", "Report path");
  keyed(eval, ov, "--patch", "tiling.patch", "Patch side in pixels");
  eval->add_flag_function("--render", [&](std::int64_t) { ov.emplace_back("eval.render", "true"); },
                          "Write colorized predictions");
  eval->add_flag("--json", as_json, "Print the JSON report instead of the table");

  auto* show = app.add_subcommand("config", "Print the resolved configuration");

  CLI11_PARSE(app, argc, argv);

  psss_set_log_callback(nullptr, nullptr, verbose ? PSSS_LOG_DEBUG : quiet ? PSSS_LOG_WARNING : PSSS_LOG_INFO);
  psss_config* cfg = nullptr;
  if (int rc = report(psss_config_create(&cfg))) return rc;
  struct Guard {
    psss_config* c;
    ~Guard() { psss_config_destroy(c); }
  } guard{cfg};

  // Precedence: defaults < config file < flags.
  if (!config_file.empty()) {
    if (int rc = report(psss_config_load(cfg, config_file.c_str()))) return rc;
  }
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", s.c_str());
      return 1;
    }
    ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (no_psss || supervised_only) {
    ov.emplace_back("training.use_partial", "false");
    ov.emplace_back("training.psss.lambda", "0");
  }
  if (supervised_only) ov.emplace_back("training.use_unlabeled", "false");
  for (const auto& [key, value] : ov) {
    if (int rc = report(psss_config_set(cfg, key.c_str(), value.c_str()))) return rc;
  }

  if (*synth) {
    char* path = nullptr;
    if (int rc = report(psss_synth(cfg, &path))) return rc;
    print_and_free(path);
  } else if (*splits) {
    char* path = nullptr;
    if (int rc = report(psss_splits(cfg, &path))) return rc;
    print_and_free(path);
  } else if (*prepare) {
    psss_prepare_summary s{};
    if (int rc = report(psss_prepare(cfg, &s))) return rc;
    std::printf("kept %zu dropped %zu\n", s.kept, s.dropped);
  } else if (*train) {
    psss_train_summary s{};
    if (int rc = report(psss_train(cfg, &s))) return rc;
    std::printf("steps %ld best_epoch %d best_val_miou %.6f\n", s.steps, s.best_epoch, s.best_miou);
  } else if (*eval) {
    char* js = nullptr;
    char* table = nullptr;
    if (int rc = report(psss_eval(cfg, nullptr, &js, &table))) return rc;
    print_and_free(as_json ? js : table);
    psss_string_free(as_json ? table : js);
  } else if (*show) {
    char* js = nullptr;
    if (int rc = report(psss_config_to_json(cfg, &js))) return rc;
    print_and_free(js);
  }
  return 0;
}
