#include "psss/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "psss/image_io.hpp"

namespace psss {

namespace {

constexpr std::string_view kMagic = "psss-manifest";
constexpr int kFormatVersion = 1;

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

int to_int(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kParse, "manifest line " + std::to_string(line_no) + ": expected integer, got '" + s + "'");
  }
}

[[noreturn]] void sample_error(const Sample& s, const std::string& what) {
  fail(ErrorCode::kValidation, "sample '" + s.id + "': " + what);
}

int target_count(const Ratios& r, Regime regime, int unit) {
  switch (regime) {
    case Regime::kFull: return r.full * unit;
    case Regime::kPartial: return r.partial * unit;
    case Regime::kUnlabeled: return r.unlabeled * unit;
  }
  return 0;
}

constexpr Regime kRegimes[] = {Regime::kFull, Regime::kPartial, Regime::kUnlabeled};

std::vector<Sample> sorted_by_id(std::vector<Sample> v) {
  std::sort(v.begin(), v.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  return v;
}

/// Splits `n` items into (val, test) counts given fractions of the pool.
std::pair<int, int> holdout_counts(int n, double val_frac, double test_frac) {
  auto take = [n](double f) {
    if (f <= 0.0) return 0;
    int k = static_cast<int>(std::lround(f * n));
    if (k == 0 && n >= 2) k = 1;
    return k;
  };
  int val = take(val_frac);
  int test = take(test_frac);
  if (val + test > n) {
    test = std::max(0, n - val);
    val = std::min(val, n);
  }
  return {val, test};
}

}  // namespace

std::filesystem::path DatasetManifest::resolve(const std::string& rel) const {
  std::filesystem::path p(rel);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<const Sample*> DatasetManifest::select(Split split) const {
  std::vector<const Sample*> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

std::vector<const Sample*> DatasetManifest::select(Split split, Regime regime) const {
  std::vector<const Sample*> out;
  for (const auto& s : samples) {
    if (s.split == split && s.regime == regime) out.push_back(&s);
  }
  return out;
}

int DatasetManifest::count(Split split, Regime regime) const {
  return static_cast<int>(std::count_if(samples.begin(), samples.end(), [&](const Sample& s) {
    return s.split == split && s.regime == regime;
  }));
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  auto parse_error = [&](const std::string& what) {
    fail(ErrorCode::kParse, "manifest line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tok = tokenize(line);
    if (tok.empty()) continue;
    const std::string& key = tok[0];

    if (!saw_header) {
      if (key != kMagic || tok.size() != 2) parse_error("expected header 'psss-manifest 1'");
      if (to_int(tok[1], line_no) != kFormatVersion) parse_error("unsupported manifest version " + tok[1]);
      saw_header = true;
      continue;
    }

    if (key == "ratio_unit") {
      if (tok.size() != 2) parse_error("ratio_unit takes one value");
      m.ratio_unit = to_int(tok[1], line_no);
      if (m.ratio_unit < 1) parse_error("ratio_unit must be >= 1");
    } else if (key == "ratios") {
      if (tok.size() != 4) parse_error("ratios takes three values");
      m.ratios = {to_int(tok[1], line_no), to_int(tok[2], line_no), to_int(tok[3], line_no)};
      if (m.ratios.full < 0 || m.ratios.partial < 0 || m.ratios.unlabeled < 0) parse_error("ratios must be >= 0");
    } else if (key == "species") {
      m.species.assign(tok.begin() + 1, tok.end());
    } else if (key == "patch_size") {
      if (tok.size() != 2) parse_error("patch_size takes one value");
      m.patch_size = to_int(tok[1], line_no);
      if (*m.patch_size < 1) parse_error("patch_size must be >= 1");
    } else if (key == "source_manifest") {
      if (tok.size() != 2) parse_error("source_manifest takes one path");
      m.source_manifest = tok[1];
    } else if (key == "grid") {
      if (tok.size() != 4) parse_error("grid takes <source_id> <height> <width>");
      GridRecord g{{to_int(tok[2], line_no), to_int(tok[3], line_no)}, 0};
      if (!m.grids.emplace(tok[1], g).second) parse_error("duplicate grid record for '" + tok[1] + "'");
    } else if (key == "sample") {
      if (tok.size() != 7 && tok.size() != 9) parse_error("sample takes 6 or 8 fields");
      Sample s;
      s.id = tok[1];
      try {
        s.split = parse_split(tok[2]);
        s.regime = parse_regime(tok[3]);
      } catch (const Error& e) {
        parse_error(std::string("sample '") + tok[1] + "': " + e.what());
      }
      s.species = tok[4];
      s.image_path = tok[5];
      if (tok[6] != "-") s.mask_path = tok[6];
      if (tok.size() == 9) s.tile = TileRef{tok[7], to_int(tok[8], line_no)};
      m.samples.push_back(std::move(s));
    } else {
      parse_error("unknown key '" + key + "'");
    }
  }
  if (!saw_header) fail(ErrorCode::kParse, "manifest is empty or missing its header");
  if (m.patch_size) {
    for (auto& [id, g] : m.grids) g.patch = *m.patch_size;
  }
  return m;
}

void validate_structure(const DatasetManifest& m, bool check_ratios) {
  const std::set<std::string> species(m.species.begin(), m.species.end());
  std::map<std::string, Split> seen;
  for (const auto& s : m.samples) {
    if (s.id.empty()) fail(ErrorCode::kValidation, "sample with empty id");
    if (auto [it, fresh] = seen.emplace(s.id, s.split); !fresh) {
      sample_error(s, "appears twice (splits " + std::string(to_string(it->second)) + " and " +
                          std::string(to_string(s.split)) + ")");
    }
    if (!species.count(s.species)) sample_error(s, "species '" + s.species + "' is not declared");
    if (s.regime == Regime::kUnlabeled && s.mask_path) sample_error(s, "unlabeled sample must not carry a mask");
    if (s.regime != Regime::kUnlabeled && !s.mask_path) {
      sample_error(s, std::string(to_string(s.regime)) + " sample requires a mask");
    }
    if ((s.split == Split::kVal || s.split == Split::kTest) && s.regime != Regime::kFull) {
      sample_error(s, "evaluation splits hold fully labeled samples only");
    }
    if (s.tile) {
      if (!m.is_patch_manifest()) sample_error(s, "tile reference outside a patch manifest");
      if (!m.grids.count(s.tile->source_id)) sample_error(s, "no grid record for source '" + s.tile->source_id + "'");
    }
  }
  if (check_ratios && !m.is_patch_manifest()) {
    for (auto regime : kRegimes) {
      const int want = target_count(m.ratios, regime, m.ratio_unit);
      const int have = m.count(Split::kTrain, regime);
      if (want != have) {
        fail(ErrorCode::kValidation, "train split has " + std::to_string(have) + " " + std::string(to_string(regime)) +
                                         " samples but ratios x ratio_unit requires " + std::to_string(want));
      }
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "manifest not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  DatasetManifest m = parse_manifest(buf.str(), path.parent_path());
  validate_structure(m, opts.check_ratios);

  for (const auto& s : m.samples) {
    const auto image = m.resolve(s.image_path);
    if (!std::filesystem::exists(image)) sample_error(s, "image file missing: " + image.string());
    if (!s.mask_path) continue;
    const auto mask_file = m.resolve(*s.mask_path);
    if (!std::filesystem::exists(mask_file)) sample_error(s, "mask file missing: " + mask_file.string());
    if (!opts.check_pixels) continue;

    LabelMap labels;
    try {
      labels = read_label_map(mask_file);
      if (s.regime == Regime::kFull) {
        SegMask checked(std::move(labels));
        labels = checked.labels();
      } else {
        PartialMask checked(std::move(labels));
        labels = checked.labels();
      }
    } catch (const Error& e) {
      sample_error(s, e.what());
    }
    if (probe_size(image) != labels.size()) sample_error(s, "mask dimensions differ from image");
  }
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "ratio_unit " << m.ratio_unit << '\n';
  out << "ratios " << m.ratios.full << ' ' << m.ratios.partial << ' ' << m.ratios.unlabeled << '\n';
  out << "species";
  for (const auto& sp : m.species) out << ' ' << sp;
  out << '\n';
  if (m.patch_size) out << "patch_size " << *m.patch_size << '\n';
  if (m.source_manifest) out << "source_manifest " << *m.source_manifest << '\n';
  for (const auto& [id, g] : m.grids) {
    out << "grid " << id << ' ' << g.original.height << ' ' << g.original.width << '\n';
  }
  out << "# id split regime species image mask [source tile]\n";
  for (const auto& s : m.samples) {
    for (const auto* field : {&s.id, &s.image_path, &s.species}) {
      if (field->find_first_of(" \t\n#") != std::string::npos || field->empty()) {
        fail(ErrorCode::kInvalidArgument, "manifest fields must be non-empty without whitespace: '" + *field + "'");
      }
    }
    out << "sample " << s.id << ' ' << to_string(s.split) << ' ' << to_string(s.regime) << ' ' << s.species << ' '
        << s.image_path << ' ' << (s.mask_path ? *s.mask_path : "-");
    if (s.tile) out << ' ' << s.tile->source_id << ' ' << s.tile->tile_index;
    out << '\n';
  }
  return out.str();
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write manifest: " + path.string());
  out << format_manifest(m);
  if (!out) fail(ErrorCode::kIo, "failed writing manifest: " + path.string());
}

std::pair<Ratios, int> ratios_from_counts(int full, int partial, int unlabeled) {
  const int unit = std::gcd(std::gcd(full, partial), unlabeled);
  if (unit == 0) return {Ratios{0, 0, 0}, 1};
  return {Ratios{full / unit, partial / unit, unlabeled / unit}, unit};
}

namespace {

std::vector<std::string> species_of(const std::vector<Sample>& samples) {
  std::set<std::string> sp;
  for (const auto& s : samples) sp.insert(s.species);
  return {sp.begin(), sp.end()};
}

/// Shuffled (seeded) samples of one regime, optionally restricted to a species.
std::vector<Sample> pool(const std::vector<Sample>& sorted, Regime regime, const std::string* species, Rng& rng) {
  std::vector<Sample> out;
  for (const auto& s : sorted) {
    if (s.regime == regime && (!species || s.species == *species)) out.push_back(s);
  }
  shuffle(out, rng);
  return out;
}

void take_train(std::vector<Sample>& from, int n, Regime regime, std::vector<Sample>& into,
                const std::string& context) {
  if (static_cast<int>(from.size()) < n) {
    fail(ErrorCode::kValidation, "insufficient " + std::string(to_string(regime)) + " samples" + context + ": need " +
                                     std::to_string(n) + ", have " + std::to_string(from.size()));
  }
  for (int i = 0; i < n; ++i) {
    from[i].split = Split::kTrain;
    into.push_back(std::move(from[i]));
  }
  from.erase(from.begin(), from.begin() + n);
}

void assign_holdout(std::vector<Sample>& rest, int n_val, int n_test, std::vector<Sample>& into) {
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const int k = static_cast<int>(i);
    rest[i].split = k < n_val ? Split::kVal : (k < n_val + n_test ? Split::kTest : Split::kUnused);
    into.push_back(std::move(rest[i]));
  }
  rest.clear();
}

void mark_unused(std::vector<Sample>& rest, std::vector<Sample>& into) { assign_holdout(rest, 0, 0, into); }

DatasetManifest finish(std::vector<Sample> out, std::vector<std::string> species, Ratios ratios, int unit) {
  DatasetManifest m;
  m.samples = sorted_by_id(std::move(out));
  m.species = std::move(species);
  m.ratios = ratios;
  m.ratio_unit = unit;
  validate_structure(m, true);
  return m;
}

}  // namespace

DatasetManifest build_splits(std::vector<Sample> samples, Ratios ratios, int ratio_unit, std::uint64_t seed,
                             SplitFractions fractions) {
  if (ratio_unit < 1) fail(ErrorCode::kInvalidArgument, "ratio_unit must be >= 1");
  samples = sorted_by_id(std::move(samples));
  Rng rng(seed);
  std::vector<Sample> out;
  for (auto regime : kRegimes) {
    auto p = pool(samples, regime, nullptr, rng);
    take_train(p, target_count(ratios, regime, ratio_unit), regime, out, "");
    if (regime == Regime::kFull) {
      const auto [val, test] = holdout_counts(static_cast<int>(p.size()), fractions.val, fractions.test);
      assign_holdout(p, val, test, out);
    } else {
      mark_unused(p, out);
    }
  }
  return finish(std::move(out), species_of(samples), ratios, ratio_unit);
}

DatasetManifest build_cross_species_splits(std::vector<Sample> samples, const std::string& source_species,
                                           const std::string& target_species, CrossSpeciesMode mode,
                                           Ratios ratios, int ratio_unit, std::uint64_t seed,
                                           SplitFractions fractions) {
  if (ratio_unit < 1) fail(ErrorCode::kInvalidArgument, "ratio_unit must be >= 1");
  if (source_species == target_species) fail(ErrorCode::kInvalidArgument, "source and target species must differ");
  samples = sorted_by_id(std::move(samples));
  for (const auto* sp : {&source_species, &target_species}) {
    const bool present =
        std::any_of(samples.begin(), samples.end(), [&](const Sample& s) { return s.species == *sp; });
    if (!present) fail(ErrorCode::kValidation, "species '" + *sp + "' has no samples");
  }

  Rng rng(seed);
  std::vector<Sample> out;
  const bool scarce = mode == CrossSpeciesMode::kScarce;
  for (auto regime : kRegimes) {
    const std::string& train_species = (scarce && regime != Regime::kFull) ? target_species : source_species;
    auto p = pool(samples, regime, &train_species, rng);
    take_train(p, target_count(ratios, regime, ratio_unit), regime, out, " of species '" + train_species + "'");
    mark_unused(p, out);
  }

  // Target FULL samples not consumed above become the evaluation pool.
  std::set<std::string> used;
  for (const auto& s : out) used.insert(s.id);
  std::vector<Sample> eval;
  std::vector<Sample> leftovers;
  for (const auto& s : samples) {
    if (used.count(s.id)) continue;
    (s.species == target_species && s.regime == Regime::kFull ? eval : leftovers).push_back(s);
  }
  if (eval.empty()) fail(ErrorCode::kValidation, "species '" + target_species + "' has no fully labeled samples to evaluate on");
  shuffle(eval, rng);
  const double total = fractions.val + fractions.test;
  const int n = static_cast<int>(eval.size());
  int n_val = total > 0 ? static_cast<int>(std::lround(n * fractions.val / total)) : 0;
  if (n >= 2 && fractions.val > 0) n_val = std::clamp(n_val, 1, n - 1);
  assign_holdout(eval, n_val, n - n_val, out);
  mark_unused(leftovers, out);

  return finish(std::move(out), {source_species, target_species}, ratios, ratio_unit);
}

DatasetManifest merge_manifests(const std::vector<DatasetManifest>& parts, const std::filesystem::path& base_dir) {
  std::vector<Sample> all;
  std::set<std::string> species;
  const auto abs_base = std::filesystem::absolute(base_dir).lexically_normal();
  auto rebase = [&](const DatasetManifest& m, const std::string& rel) {
    const auto abs = std::filesystem::absolute(m.resolve(rel)).lexically_normal();
    return abs.lexically_relative(abs_base).generic_string();
  };
  for (const auto& m : parts) {
    if (m.is_patch_manifest()) fail(ErrorCode::kInvalidArgument, "cannot merge patch manifests");
    species.insert(m.species.begin(), m.species.end());
    for (auto s : m.samples) {
      s.image_path = rebase(m, s.image_path);
      if (s.mask_path) s.mask_path = rebase(m, *s.mask_path);
      all.push_back(std::move(s));
    }
  }
  DatasetManifest m;
  m.samples = sorted_by_id(std::move(all));
  m.species.assign(species.begin(), species.end());
  m.base_dir = base_dir;
  auto [r, unit] = ratios_from_counts(m.count(Split::kTrain, Regime::kFull), m.count(Split::kTrain, Regime::kPartial),
                                      m.count(Split::kTrain, Regime::kUnlabeled));
  m.ratios = r;
  m.ratio_unit = unit;
  validate_structure(m, true);
  return m;
}

}  // namespace psss
