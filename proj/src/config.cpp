#include "psss/config.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace psss {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Size2, height, width)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ColorRange, lo, hi)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VeinSpec, canvas, width_v1, width_v2, width_v3, n_secondary,
                                   n_tertiary_per_secondary, lamina, vein, opacity_v1, opacity_v2, opacity_v3,
                                   noise_level)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RegimeCounts, full, partial, unlabeled)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Ratios, full, partial, unlabeled)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SplitFractions, val, test)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(InformativeFilter, min_foreground_fraction, tolerance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AugmentConfig, hflip_p, vflip_p, brightness, contrast, saturation, blur_p,
                                   blur_sigma_min, blur_sigma_max, cutout_count, cutout_size, cutout_fill)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelSpec, backbone, base_width, levels)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PsssConfig, tau, lambda)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossToggles, supervised, pseudo, exclusion)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SynthSection, out_dir, counts, val, test, species, leaf)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TilingSection, manifest, out_dir, patch, filter)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainSection, patches, eval_manifest, run_name, eval_batch, threads)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalSection, model, checkpoint, manifest, split, render, out, batch)

void to_json(json& j, const SplitsSection& s) {
  j = json{{"inputs", s.inputs},
           {"output", s.output},
           {"ratios", s.ratios},
           {"ratio_unit", s.ratio_unit},
           {"fractions", s.fractions},
           {"source_species", s.source_species},
           {"target_species", s.target_species},
           {"mode", std::string(to_string(s.mode))}};
}

void from_json(const json& j, SplitsSection& s) {
  j.at("inputs").get_to(s.inputs);
  j.at("output").get_to(s.output);
  j.at("ratios").get_to(s.ratios);
  j.at("ratio_unit").get_to(s.ratio_unit);
  j.at("fractions").get_to(s.fractions);
  j.at("source_species").get_to(s.source_species);
  j.at("target_species").get_to(s.target_species);
  s.mode = parse_cross_species_mode(j.at("mode").get<std::string>());
}

void to_json(json& j, const TrainingConfig& c) {
  j = json{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"base_lr", c.base_lr},
           {"weight_decay", c.weight_decay},
           {"poly_power", c.poly_power},
           {"momentum", c.momentum},
           {"tau_u", c.tau_u},
           {"psss", c.psss},
           {"loss_toggles", c.loss_toggles},
           {"pseudo_source", std::string(to_string(c.pseudo_source))},
           {"ema_decay", c.ema_decay},
           {"use_unlabeled", c.use_unlabeled},
           {"use_partial", c.use_partial},
           {"stream_weights", c.stream_weights}};
}

void from_json(const json& j, TrainingConfig& c) {
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("base_lr").get_to(c.base_lr);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("poly_power").get_to(c.poly_power);
  j.at("momentum").get_to(c.momentum);
  j.at("tau_u").get_to(c.tau_u);
  j.at("psss").get_to(c.psss);
  j.at("loss_toggles").get_to(c.loss_toggles);
  c.pseudo_source = parse_pseudo_source(j.at("pseudo_source").get<std::string>());
  j.at("ema_decay").get_to(c.ema_decay);
  j.at("use_unlabeled").get_to(c.use_unlabeled);
  j.at("use_partial").get_to(c.use_partial);
  j.at("stream_weights").get_to(c.stream_weights);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"experiment_root", c.experiment_root},
           {"seed", c.seed},
           {"synth", c.synth},
           {"splits", c.splits},
           {"tiling", c.tiling},
           {"augment", c.augment},
           {"model", c.model},
           {"training", c.training},
           {"train", c.train},
           {"eval", c.eval}};
}

void from_json(const json& j, RunConfig& c) {
  j.at("experiment_root").get_to(c.experiment_root);
  j.at("seed").get_to(c.seed);
  j.at("synth").get_to(c.synth);
  j.at("splits").get_to(c.splits);
  j.at("tiling").get_to(c.tiling);
  j.at("augment").get_to(c.augment);
  j.at("model").get_to(c.model);
  j.at("training").get_to(c.training);
  j.at("train").get_to(c.train);
  j.at("eval").get_to(c.eval);
}

namespace {

/// Every key of `given` must exist in `known`; objects are checked recursively.
void check_keys(const json& given, const json& known, const std::string& prefix) {
  if (!given.is_object()) fail(ErrorCode::kParse, "config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) fail(ErrorCode::kParse, "config: unknown key '" + path + "'");
    if (known[key].is_object()) check_keys(value, known[key], path);
  }
}

RunConfig from_checked_json(const json& j) {
  RunConfig out;
  try {
    j.get_to(out);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  return out;
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : std::filesystem::path(experiment_root) / path;
}

std::filesystem::path RunConfig::run_dir() const { return resolve("runs") / train.run_name; }

TrainingConfig RunConfig::training_config() const {
  TrainingConfig t = training;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  synth.leaf.validate();
  training.validate();
  augment.validate();
  if (tiling.patch < 1) fail(ErrorCode::kInvalidArgument, "tiling.patch must be >= 1");
  if (tiling.filter.min_foreground_fraction < 0.0 || tiling.filter.min_foreground_fraction > 1.0) {
    fail(ErrorCode::kInvalidArgument, "tiling.filter.min_foreground_fraction must lie in [0, 1]");
  }
  if (train.run_name.empty() || train.run_name.find('/') != std::string::npos) {
    fail(ErrorCode::kInvalidArgument, "train.run_name must be a plain directory name");
  }
  if (eval.model != "checkpoint" && eval.model != "oracle" && eval.model != "background") {
    fail(ErrorCode::kInvalidArgument, "eval.model must be checkpoint, oracle or background");
  }
  parse_split(eval.split);
}

RunConfig default_run_config() {
  RunConfig c;
  if (const char* root = std::getenv(kExperimentRootEnv); root && *root) c.experiment_root = root;
  return c;
}

std::string config_to_json(const RunConfig& cfg, int indent) { return json(cfg).dump(indent); }

RunConfig apply_config_json(const RunConfig& base, const std::string& text) {
  json given;
  try {
    given = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  json merged = base;
  check_keys(given, merged, "");
  merged.merge_patch(given);
  return from_checked_json(merged);
}

RunConfig load_config_file(const RunConfig& base, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return apply_config_json(base, ss.str());
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

RunConfig set_config_value(const RunConfig& base, const std::string& key, const std::string& value) {
  json merged = base;
  json* node = &merged;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) fail(ErrorCode::kParse, "config: unknown key '" + key + "'");
    node = &(*node)[part];
  }
  json v = json::parse(value, nullptr, false);
  if (node->is_object()) {
    if (v.is_discarded() || !v.is_object()) fail(ErrorCode::kParse, "config: '" + key + "' expects a JSON object");
    check_keys(v, *node, key);
    node->merge_patch(v);
    return from_checked_json(merged);
  }
  if (v.is_discarded() || (node->is_string() && !v.is_string())) v = value;
  *node = v;
  return from_checked_json(merged);
}

std::string_view to_string(CrossSpeciesMode m) { return m == CrossSpeciesMode::kTransfer ? "TRANSFER" : "SCARCE"; }

CrossSpeciesMode parse_cross_species_mode(std::string_view s) {
  if (s == "TRANSFER" || s == "transfer") return CrossSpeciesMode::kTransfer;
  if (s == "SCARCE" || s == "scarce") return CrossSpeciesMode::kScarce;
  fail(ErrorCode::kInvalidArgument, "unknown cross-species mode '" + std::string(s) + "'");
}

}  // namespace psss
