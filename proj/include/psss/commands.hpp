#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "psss/config.hpp"
#include "psss/metrics.hpp"
#include "psss/prepare.hpp"

namespace psss {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3 };

using Logger = std::function<void(LogLevel, const std::string&)>;

/// Writes synth.out_dir and returns the manifest path.
std::filesystem::path cmd_synth(const RunConfig& cfg, const Logger& log);

/// Pools the samples of splits.inputs, assigns splits and writes splits.output.
std::filesystem::path cmd_splits(const RunConfig& cfg, const Logger& log);

/// Tiles tiling.manifest into tiling.out_dir. Warns when every patch of an image is dropped.
PrepareResult cmd_prepare(const RunConfig& cfg, const Logger& log);

struct TrainOutcome {
  std::filesystem::path run_dir;
  std::filesystem::path best_checkpoint;
  int best_epoch = 0;
  double best_miou = -1.0;
  long steps = 0;
};

/// Writes config.json, metrics.jsonl and best.pt into runs/<run_name>.
TrainOutcome cmd_train(const RunConfig& cfg, const Logger& log);

struct EvalOutcome {
  StitchedEvalResult result;
  std::string report_json;
  std::string table;
  std::filesystem::path report_path;
};

EvalOutcome cmd_eval(const RunConfig& cfg, const Logger& log);

/// Structured form of an IoU report (nulls for absent classes).
std::string report_to_json(const IoUReport& r, const std::string& split, std::size_t images);

}  // namespace psss
