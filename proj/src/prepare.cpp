#include "psss/prepare.hpp"

#include <cstdio>

#include "psss/image_io.hpp"

namespace psss {

namespace fs = std::filesystem;

PrepareResult prepare_patches(const DatasetManifest& source, const fs::path& source_path, const fs::path& out_dir,
                              const PrepareOptions& opts) {
  if (opts.patch < 1) fail(ErrorCode::kInvalidArgument, "patch size must be >= 1");
  PrepareResult res;
  DatasetManifest& out = res.patches;
  out.species = source.species;
  out.patch_size = opts.patch;
  out.base_dir = out_dir;
  out.source_manifest = fs::relative(fs::absolute(source_path), fs::absolute(out_dir)).generic_string();

  int counts[3] = {0, 0, 0};
  for (const Sample* s : source.select(Split::kTrain)) {
    const Image image = read_image(source.resolve(s->image_path));
    std::optional<LabelMap> mask;
    if (s->mask_path) {
      mask = read_label_map(source.resolve(*s->mask_path));
      if (mask->size() != image.size()) fail(ErrorCode::kShapeMismatch, "sample '" + s->id + "': mask size differs");
    }
    const auto grid = plan_grid(image.height(), image.width(), opts.patch);
    const Rgb pad = modal_color(image);
    const std::uint8_t mask_pad = s->regime == Regime::kPartial ? kUnknownLabel : 0;
    auto patches = extract_patches(image, mask ? &*mask : nullptr, grid, pad, mask_pad);
    const std::size_t total = patches.size();
    patches = filter_informative(std::move(patches), pad, opts.filter);
    res.kept += patches.size();
    res.dropped += total - patches.size();
    if (patches.empty()) {
      res.warnings.push_back("all patches of '" + s->id + "' were dropped as uninformative");
      continue;
    }
    out.grids[s->id] = GridRecord{image.size(), opts.patch};
    for (const auto& p : patches) {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_t%03d", p.tile_index);
      Sample ps;
      ps.id = s->id + suffix;
      ps.image_path = "patches/" + ps.id + ".png";
      write_image(out_dir / ps.image_path, p.image);
      if (p.mask) {
        ps.mask_path = "patch_masks/" + ps.id + ".png";
        write_label_map(out_dir / *ps.mask_path, *p.mask);
      }
      ps.regime = s->regime;
      ps.species = s->species;
      ps.split = Split::kTrain;
      ps.tile = TileRef{s->id, p.tile_index};
      out.samples.push_back(std::move(ps));
      ++counts[static_cast<int>(s->regime)];
    }
  }
  const auto [ratios, unit] = ratios_from_counts(counts[0], counts[1], counts[2]);
  out.ratios = ratios;
  out.ratio_unit = unit;
  validate_structure(out, false);
  res.manifest_path = out_dir / "manifest.txt";
  save_manifest(res.manifest_path, out);
  return res;
}

}  // namespace psss
