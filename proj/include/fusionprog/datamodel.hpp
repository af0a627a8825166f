#pragma once

// Core domain types, manifest and volume I/O, and patient-level splitting.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fusionprog/core/error.hpp"
#include "fusionprog/core/rng.hpp"

namespace fusionprog {

static_assert(std::endian::native == std::endian::little,
              "volume files are little-endian float32; big-endian hosts need byte swapping");

enum class Modality { ADC, DWI };

inline std::string_view to_string(Modality m) { return m == Modality::ADC ? "ADC" : "DWI"; }

/// One modality's scan for one patient, stored slice-major: (slice, row, col).
struct ImageVolume {
  Modality modality = Modality::ADC;
  int n_slices = 0;
  int height = 0;
  int width = 0;
  std::vector<float> voxels;
  std::string patient_id;

  ImageVolume() = default;
  ImageVolume(Modality m, int slices, int h, int w, std::string pid = {})
      : modality(m), n_slices(slices), height(h), width(w),
        voxels(static_cast<std::size_t>(slices) * h * w, 0.0f), patient_id(std::move(pid)) {}

  std::size_t slice_size() const { return static_cast<std::size_t>(height) * width; }
  float& at(int s, int y, int x) { return voxels[(s * slice_size()) + static_cast<std::size_t>(y) * width + x]; }
  float at(int s, int y, int x) const {
    return voxels[(s * slice_size()) + static_cast<std::size_t>(y) * width + x];
  }
  std::span<float> slice(int s) { return {voxels.data() + s * slice_size(), slice_size()}; }
  std::span<const float> slice(int s) const { return {voxels.data() + s * slice_size(), slice_size()}; }

  void validate() const {
    if (n_slices < 1) throw ShapeError("ImageVolume: n_slices must be >= 1");
    if (height < 8 || width < 8) throw ShapeError("ImageVolume: height and width must be >= 8");
    if (voxels.size() != static_cast<std::size_t>(n_slices) * slice_size())
      throw ShapeError("ImageVolume: voxel count does not match shape");
    for (float v : voxels)
      if (!std::isfinite(v)) throw ShapeError("ImageVolume: non-finite intensity for patient " + patient_id);
  }

  bool operator==(const ImageVolume&) const = default;
};

/// Names of the structured attributes plus which ones are NIHSS-derived.
struct AttributeSchema {
  std::vector<std::string> names;
  std::vector<bool> nihss;

  std::size_t size() const { return names.size(); }
  std::size_t nihss_count() const { return static_cast<std::size_t>(std::count(nihss.begin(), nihss.end(), true)); }

  /// Attributes whose name starts with "nihss" (case-insensitive) are NIHSS-derived.
  static bool is_nihss_name(std::string_view name) {
    if (name.size() < 5) return false;
    std::string head(name.substr(0, 5));
    std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::tolower(c); });
    return head == "nihss";
  }

  static std::shared_ptr<const AttributeSchema> from_names(std::vector<std::string> names) {
    auto s = std::make_shared<AttributeSchema>();
    s->nihss.reserve(names.size());
    for (const auto& n : names) s->nihss.push_back(is_nihss_name(n));
    s->names = std::move(names);
    return s;
  }

  bool operator==(const AttributeSchema&) const = default;
};

struct StructuredRecord {
  std::vector<double> values;
  std::vector<bool> missing_mask;
  std::shared_ptr<const AttributeSchema> schema;

  std::size_t size() const { return values.size(); }
  const std::vector<std::string>& attr_names() const { return schema->names; }
  const std::vector<bool>& nihss_flags() const { return schema->nihss; }
  bool any_missing() const { return std::find(missing_mask.begin(), missing_mask.end(), true) != missing_mask.end(); }

  void validate() const {
    if (missing_mask.size() != values.size() || (schema && schema->size() != values.size()))
      throw ShapeError("StructuredRecord: values, mask and schema lengths differ");
    for (std::size_t j = 0; j < values.size(); ++j)
      if (!missing_mask[j] && !std::isfinite(values[j]))
        throw ShapeError("StructuredRecord: non-finite observed value in column " + std::to_string(j));
  }

  bool operator==(const StructuredRecord& o) const {
    if (values.size() != o.values.size() || missing_mask != o.missing_mask) return false;
    for (std::size_t j = 0; j < values.size(); ++j)
      if (!missing_mask[j] && values[j] != o.values[j]) return false;
    return (!schema && !o.schema) || (schema && o.schema && *schema == *o.schema);
  }
};

/// Aligned (ADC, DWI, structured) triple with the binarized outcome
/// (0: mRS <= 2, 1: mRS > 2).
struct Sample {
  ImageVolume adc;
  ImageVolume dwi;
  StructuredRecord structured;
  int label = 0;

  void validate() const {
    adc.validate();
    dwi.validate();
    structured.validate();
    if (adc.patient_id != dwi.patient_id) throw ShapeError("Sample: ADC and DWI belong to different patients");
    if (label != 0 && label != 1) throw ShapeError("Sample: label must be 0 or 1");
  }
};

struct SplitSpec {
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;
  bool stratified = false;

  void validate() const {
    for (double r : ratios)
      if (!(r > 0.0)) throw ConfigError("SplitSpec: every ratio must be > 0");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
      throw ConfigError("SplitSpec: ratios must sum to 1");
  }
};

struct ManifestEntry {
  std::string patient_id;
  std::filesystem::path adc_path;  // as written in the file (relative to the manifest directory)
  std::filesystem::path dwi_path;
  int label = 0;
  StructuredRecord structured;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::shared_ptr<const AttributeSchema> schema;
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : base_dir / p; }

  bool operator==(const Manifest& o) const {
    return entries == o.entries && ((!schema && !o.schema) || (schema && o.schema && *schema == *o.schema));
  }

  /// Same schema and base dir, subset of entries.
  Manifest with_entries(std::vector<ManifestEntry> e) const { return Manifest{base_dir, schema, std::move(e)}; }
};

// ---------------------------------------------------------------------------
// Volume container: <dir>/header.txt holds "n_slices,H,W"; slice s lives in
// <dir>/slice_SSSS.f32 as H*W little-endian IEEE-754 float32, row-major.

namespace detail {
inline std::string slice_file_name(int s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slice_%04d.f32", s);
  return buf;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline bool volume_exists(const std::filesystem::path& dir) {
  return std::filesystem::is_regular_file(dir / "header.txt");
}

inline void write_volume(const std::filesystem::path& dir, const ImageVolume& vol) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream h(dir / "header.txt");
    if (!h) throw ResolutionError("cannot write volume header in " + dir.string());
    h << vol.n_slices << ',' << vol.height << ',' << vol.width << '\n';
  }
  for (int s = 0; s < vol.n_slices; ++s) {
    std::ofstream f(dir / detail::slice_file_name(s), std::ios::binary);
    if (!f) throw ResolutionError("cannot write slice in " + dir.string());
    const auto sl = vol.slice(s);
    f.write(reinterpret_cast<const char*>(sl.data()), static_cast<std::streamsize>(sl.size_bytes()));
  }
}

inline ImageVolume read_volume(const std::filesystem::path& dir, Modality m, const std::string& patient_id) {
  std::ifstream h(dir / "header.txt");
  if (!h) throw ResolutionError("volume for patient " + patient_id + " not found at " + dir.string());
  std::string line;
  std::getline(h, line);
  const auto parts = detail::split_csv_line(detail::trim(line));
  if (parts.size() != 3) throw ParseError("volume header must be n_slices,H,W: " + (dir / "header.txt").string());
  int dims[3];
  for (int i = 0; i < 3; ++i) {
    try {
      dims[i] = std::stoi(parts[i]);
    } catch (...) {
      throw ParseError("volume header has a non-integer field: " + (dir / "header.txt").string());
    }
  }
  ImageVolume vol(m, dims[0], dims[1], dims[2], patient_id);
  for (int s = 0; s < vol.n_slices; ++s) {
    const auto file = dir / detail::slice_file_name(s);
    std::ifstream f(file, std::ios::binary);
    if (!f) throw ResolutionError("slice file missing for patient " + patient_id + ": " + file.string());
    auto sl = vol.slice(s);
    f.read(reinterpret_cast<char*>(sl.data()), static_cast<std::streamsize>(sl.size_bytes()));
    if (f.gcount() != static_cast<std::streamsize>(sl.size_bytes()))
      throw ParseError("slice file truncated: " + file.string());
    if (f.peek() != std::char_traits<char>::eof()) throw ParseError("slice file has trailing bytes: " + file.string());
  }
  vol.validate();
  return vol;
}

// ---------------------------------------------------------------------------
// Manifest CSV: header `patient_id,adc_path,dwi_path,label,<attr_1>,...,<attr_n>`;
// a missing structured value is an empty field.

inline Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, bool check_paths) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("manifest: empty file");
  auto header = detail::split_csv_line(detail::trim(line));
  if (header.size() < 4 || detail::trim(header[0]) != "patient_id" || detail::trim(header[1]) != "adc_path" ||
      detail::trim(header[2]) != "dwi_path" || detail::trim(header[3]) != "label")
    throw ParseError("manifest: header must start with patient_id,adc_path,dwi_path,label");
  std::vector<std::string> names;
  for (std::size_t i = 4; i < header.size(); ++i) names.push_back(detail::trim(header[i]));

  Manifest m;
  m.base_dir = base_dir;
  m.schema = AttributeSchema::from_names(std::move(names));
  const std::size_t n_attrs = m.schema->size();

  std::unordered_set<std::string> seen;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (!fields.empty()) fields.back() = detail::trim(fields.back());
    if (fields.size() != 4 + n_attrs)
      throw ParseError("manifest row " + std::to_string(row) + ": expected " + std::to_string(n_attrs) +
                       " structured columns, got " +
                       std::to_string(fields.size() >= 4 ? fields.size() - 4 : 0));
    ManifestEntry e;
    e.patient_id = detail::trim(fields[0]);
    if (e.patient_id.empty()) throw ParseError("manifest row " + std::to_string(row) + ": empty patient_id");
    e.adc_path = detail::trim(fields[1]);
    e.dwi_path = detail::trim(fields[2]);
    const auto lab = detail::trim(fields[3]);
    if (lab != "0" && lab != "1") throw ParseError("manifest row " + std::to_string(row) + ": label must be 0 or 1");
    e.label = lab == "1" ? 1 : 0;
    e.structured.schema = m.schema;
    e.structured.values.assign(n_attrs, 0.0);
    e.structured.missing_mask.assign(n_attrs, false);
    for (std::size_t j = 0; j < n_attrs; ++j) {
      const auto f = detail::trim(fields[4 + j]);
      if (f.empty()) {
        e.structured.missing_mask[j] = true;
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(f, &used);
      } catch (...) {
        used = 0;
      }
      if (used != f.size() || !std::isfinite(v))
        throw ParseError("manifest row " + std::to_string(row) + ": bad value in column " + m.schema->names[j]);
      e.structured.values[j] = v;
    }
    // Only the earliest record per patient counts.
    if (!seen.insert(e.patient_id).second) continue;
    if (check_paths) {
      if (!volume_exists(m.resolve(e.adc_path)) || !volume_exists(m.resolve(e.dwi_path)))
        throw ResolutionError("manifest: image volume missing for patient " + e.patient_id);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, bool check_paths = true) {
  std::ifstream in(path);
  if (!in) throw ResolutionError("manifest not found: " + path.string());
  return parse_manifest(in, path.parent_path(), check_paths);
}

inline void write_manifest(const Manifest& m, std::ostream& out) {
  out << "patient_id,adc_path,dwi_path,label";
  for (const auto& n : m.schema->names) out << ',' << n;
  out << '\n';
  for (const auto& e : m.entries) {
    out << e.patient_id << ',' << e.adc_path.generic_string() << ',' << e.dwi_path.generic_string() << ','
        << e.label;
    for (std::size_t j = 0; j < e.structured.size(); ++j) {
      out << ',';
      if (!e.structured.missing_mask[j]) out << detail::format_double(e.structured.values[j]);
    }
    out << '\n';
  }
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ResolutionError("cannot write manifest: " + path.string());
  write_manifest(m, out);
}

inline Sample load_sample(const Manifest& m, const ManifestEntry& e) {
  Sample s;
  s.adc = read_volume(m.resolve(e.adc_path), Modality::ADC, e.patient_id);
  s.dwi = read_volume(m.resolve(e.dwi_path), Modality::DWI, e.patient_id);
  s.structured = e.structured;
  s.label = e.label;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

struct DatasetSplits {
  Manifest train;
  Manifest val;
  Manifest test;
};

namespace detail {
// Sizes (train, val, test): val and test are rounded, train takes the remainder.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& r) {
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r[1]));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r[2]));
  if (n_val + n_test >= n) return {0, n_val, n_test};
  return {n - n_val - n_test, n_val, n_test};
}
}  // namespace detail

/// Patient-level partition: shuffle ids with the split seed and cut by the ratios.
inline DatasetSplits split_dataset(const Manifest& manifest, const SplitSpec& spec) {
  spec.validate();
  if (manifest.empty()) throw ConfigError("split_dataset: manifest is empty");

  std::vector<ManifestEntry> sorted = manifest.entries;
  std::sort(sorted.begin(), sorted.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.patient_id < b.patient_id; });

  std::array<std::vector<ManifestEntry>, 3> parts;
  auto cut = [&](std::vector<ManifestEntry> group, std::uint64_t stream) {
    Rng rng = Rng::keyed(spec.seed, {0x5917, stream});
    rng.shuffle(group.begin(), group.end());
    const auto sizes = detail::split_sizes(group.size(), spec.ratios);
    std::size_t k = 0;
    for (int p = 0; p < 3; ++p)
      for (std::size_t i = 0; i < sizes[p]; ++i) parts[p].push_back(std::move(group[k++]));
  };
  if (spec.stratified) {
    std::vector<ManifestEntry> neg, pos;
    for (auto& e : sorted) (e.label ? pos : neg).push_back(e);
    cut(std::move(neg), 0);
    cut(std::move(pos), 1);
  } else {
    cut(std::move(sorted), 0);
  }
  for (int p = 0; p < 3; ++p) {
    if (parts[p].empty())
      throw ConfigError("split_dataset: split " + std::to_string(p) + " is empty after rounding (n=" +
                        std::to_string(manifest.size()) + ")");
    std::sort(parts[p].begin(), parts[p].end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.patient_id < b.patient_id; });
  }
  return {manifest.with_entries(std::move(parts[0])), manifest.with_entries(std::move(parts[1])),
          manifest.with_entries(std::move(parts[2]))};
}

/// Keeps k contiguous slices starting at floor((n - k) / 2); shorter volumes are
/// zero-padded symmetrically (the extra slice, if any, goes after).
inline ImageVolume select_middle_slices(const ImageVolume& vol, int k) {
  if (k < 1) throw ConfigError("select_middle_slices: k must be >= 1");
  ImageVolume out(vol.modality, k, vol.height, vol.width, vol.patient_id);
  const std::size_t ss = vol.slice_size();
  if (vol.n_slices >= k) {
    const int start = (vol.n_slices - k) / 2;
    std::copy_n(vol.voxels.begin() + static_cast<std::ptrdiff_t>(start * ss), k * ss, out.voxels.begin());
  } else {
    const int before = (k - vol.n_slices) / 2;
    std::copy(vol.voxels.begin(), vol.voxels.end(), out.voxels.begin() + static_cast<std::ptrdiff_t>(before * ss));
  }
  return out;
}

}  // namespace fusionprog
