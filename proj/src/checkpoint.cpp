#include "psss/checkpoint.hpp"

#include <json.hpp>

namespace psss {

using nlohmann::json;

std::string meta_to_json(const CheckpointMeta& m) {
  json j;
  j["format_version"] = m.format_version;
  j["model"] = {{"backbone", m.model.backbone}, {"base_width", m.model.base_width}, {"levels", m.model.levels}};
  j["normalizer"] = {{"mean", m.normalizer.mean}, {"std", m.normalizer.std}};
  j["epoch"] = m.epoch;
  j["step"] = m.step;
  j["val_miou"] = m.val_miou;
  j["has_teacher"] = m.has_teacher;
  j["has_optimizer"] = m.has_optimizer;
  j["rng_states"] = m.rng_states;
  j["config"] = json::parse(m.config_json);
  return j.dump();
}

CheckpointMeta meta_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    CheckpointMeta m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kCheckpointFormat) {
      fail(ErrorCode::kParse, "unsupported checkpoint format " + std::to_string(m.format_version));
    }
    m.model.backbone = j.at("model").at("backbone").get<std::string>();
    m.model.base_width = j.at("model").at("base_width").get<int>();
    m.model.levels = j.at("model").at("levels").get<int>();
    m.normalizer.mean = j.at("normalizer").at("mean").get<std::array<double, 3>>();
    m.normalizer.std = j.at("normalizer").at("std").get<std::array<double, 3>>();
    m.epoch = j.at("epoch").get<int>();
    m.step = j.at("step").get<long>();
    m.val_miou = j.at("val_miou").get<double>();
    m.has_teacher = j.at("has_teacher").get<bool>();
    m.has_optimizer = j.at("has_optimizer").get<bool>();
    m.rng_states = j.at("rng_states").get<std::map<std::string, std::array<std::uint64_t, 4>>>();
    m.config_json = j.at("config").dump();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint metadata: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta_in, SegmentationModel& model,
                     SegmentationModel* teacher, torch::optim::Optimizer* optimizer) {
  CheckpointMeta meta = meta_in;
  meta.has_teacher = teacher != nullptr;
  meta.has_optimizer = optimizer != nullptr;

  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(meta_to_json(meta)));
  torch::serialize::OutputArchive model_archive;
  model.save(model_archive);
  archive.write("model", model_archive);
  if (teacher) {
    torch::serialize::OutputArchive t;
    teacher->save(t);
    archive.write("teacher", t);
  }
  if (optimizer) {
    torch::serialize::OutputArchive o;
    optimizer->save(o);
    archive.write("optimizer", o);
  }

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    fail(ErrorCode::kIo, "cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot move checkpoint into place: " + ec.message());
}

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kIo, "checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    fail(ErrorCode::kIo, "cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  LoadedCheckpoint out;
  c10::IValue meta;
  if (!archive.try_read("meta", meta) || !meta.isString()) {
    fail(ErrorCode::kParse, "checkpoint " + path.string() + " has no metadata");
  }
  out.meta = meta_from_json(meta.toStringRef());
  out.model = create_model(out.meta.model);
  try {
    torch::serialize::InputArchive m;
    archive.read("model", m);
    out.model->load(m);
    if (out.meta.has_teacher) {
      out.teacher = create_model(out.meta.model);
      torch::serialize::InputArchive t;
      archive.read("teacher", t);
      out.teacher->load(t);
    }
  } catch (const c10::Error& e) {
    fail(ErrorCode::kParse, "checkpoint tensors do not match the model: " + std::string(e.what_without_backtrace()));
  }
  return out;
}

void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
  auto archive = open_archive(path);
  torch::serialize::InputArchive o;
  if (!archive.try_read("optimizer", o)) fail(ErrorCode::kParse, "checkpoint holds no optimizer state");
  optimizer.load(o);
}

}  // namespace psss
