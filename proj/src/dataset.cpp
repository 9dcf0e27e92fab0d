#include "patchdenoise/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>
#include <png.h>

#include "patchdenoise/error.hpp"
#include "patchdenoise/preprocess.hpp"
#include "patchdenoise/random.hpp"

namespace patchdenoise {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(DoseTag tag) { return tag == DoseTag::low ? "low" : "full"; }

DoseTag dose_tag_from_string(const std::string& name) {
  if (name == "low") return DoseTag::low;
  if (name == "full") return DoseTag::full;
  throw FormatError("unknown dose tag '" + name + "' (expected low or full)");
}

fs::path sidecar_path(const fs::path& raw_path) {
  auto p = raw_path;
  p.replace_extension(".meta");
  return p;
}

void write_slice(const fs::path& raw_path, const SliceRecord& slice, DoseTag dose) {
  slice.validate();
  std::vector<char> payload(slice.pixels.size() * 2);
  for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(slice.pixels[i]);
    payload[2 * i] = static_cast<char>(u & 0xff);
    payload[2 * i + 1] = static_cast<char>(u >> 8);
  }
  std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot write " + raw_path.string());
  raw.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!raw.flush()) throw IoError("write failed for " + raw_path.string());

  const json meta = {{"rows", slice.rows},
                     {"cols", slice.cols},
                     {"rescale_slope", slice.rescale_slope},
                     {"rescale_intercept", slice.rescale_intercept},
                     {"patient_id", slice.patient_id},
                     {"slice_index", slice.slice_index},
                     {"dose_tag", to_string(dose)}};
  const auto meta_path = sidecar_path(raw_path);
  std::ofstream side(meta_path, std::ios::trunc);
  if (!side) throw IoError("cannot write " + meta_path.string());
  side << meta.dump(2) << '\n';
  if (!side.flush()) throw IoError("write failed for " + meta_path.string());
}

namespace {

SliceFile read_sidecar(const fs::path& raw_path) {
  const auto meta_path = sidecar_path(raw_path);
  std::ifstream in(meta_path);
  if (!in) throw FormatError("missing sidecar " + meta_path.string());
  SliceFile out;
  auto& s = out.slice;
  try {
    const json j = json::parse(in);
    static const std::set<std::string> keys = {"rows",       "cols",        "rescale_slope",
                                               "rescale_intercept", "patient_id", "slice_index",
                                               "dose_tag"};
    if (!j.is_object()) throw FormatError("sidecar is not a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!keys.count(key)) throw FormatError("unknown sidecar key '" + key + "'");
    }
    for (const auto& key : keys) {
      if (!j.contains(key)) throw FormatError("sidecar lacks '" + key + "'");
    }
    if (!j["rows"].is_number_unsigned() || !j["cols"].is_number_unsigned()) {
      throw FormatError("rows and cols must be non-negative integers");
    }
    s.rows = j["rows"].get<std::size_t>();
    s.cols = j["cols"].get<std::size_t>();
    s.rescale_slope = j["rescale_slope"].get<double>();
    s.rescale_intercept = j["rescale_intercept"].get<double>();
    s.patient_id = j["patient_id"].get<std::string>();
    s.slice_index = j["slice_index"].get<int>();
    out.dose = dose_tag_from_string(j["dose_tag"].get<std::string>());
  } catch (const FormatError& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace

SliceFile read_slice_file(const fs::path& raw_path) {
  SliceFile out = read_sidecar(raw_path);
  auto& s = out.slice;
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + raw_path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  const std::size_t expected = s.rows * s.cols * 2;
  if (bytes.size() != expected) {
    throw IntegrityError(raw_path.string() + ": payload is " + std::to_string(bytes.size()) +
                         " bytes, sidecar dims " + std::to_string(s.rows) + "x" +
                         std::to_string(s.cols) + " require " + std::to_string(expected));
  }
  s.pixels.resize(s.rows * s.cols);
  for (std::size_t i = 0; i < s.pixels.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    s.pixels[i] = static_cast<std::int16_t>(u);
  }
  return out;
}

std::vector<std::string> PairedDataset::patients() const {
  std::set<std::string> ids;
  for (const auto& p : pairs) ids.insert(p.patient_id);
  return {ids.begin(), ids.end()};
}

PairedDataset scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset root " + root.string() + " is not a directory");
  std::vector<std::string> rel;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".raw") {
      rel.push_back(fs::relative(entry.path(), root).generic_string());
    }
  }
  std::sort(rel.begin(), rel.end());

  PairedDataset out;
  out.root = root;
  using Key = std::tuple<std::string, int>;
  std::map<Key, std::string> low, full;
  std::map<Key, std::pair<std::size_t, std::size_t>> dims;
  std::vector<Key> low_order;
  for (const auto& r : rel) {
    const SliceFile meta = read_sidecar(root / r);
    const Key key{meta.slice.patient_id, meta.slice.slice_index};
    const auto dir_tag = fs::path(r).parent_path().filename().string();
    if (dir_tag != to_string(meta.dose)) {
      throw FormatError(r + ": stored under '" + dir_tag + "' but its sidecar says '" +
                        to_string(meta.dose) + "'");
    }
    auto& bucket = meta.dose == DoseTag::low ? low : full;
    if (!bucket.emplace(key, r).second) {
      throw FormatError("duplicate " + to_string(meta.dose) + "-dose slice for patient '" +
                        meta.slice.patient_id + "' index " + std::to_string(meta.slice.slice_index) +
                        ": " + bucket[key] + " and " + r);
    }
    if (meta.dose == DoseTag::low) low_order.push_back(key);
    const auto d = std::make_pair(meta.slice.rows, meta.slice.cols);
    const auto [it, fresh] = dims.emplace(key, d);
    if (!fresh && it->second != d) {
      throw FormatError(r + ": dimensions differ from its counterpart");
    }
  }
  for (const auto& key : low_order) {
    const auto f = full.find(key);
    if (f == full.end()) {
      out.warnings.push_back("unpaired low-dose slice " + low[key]);
      continue;
    }
    out.pairs.push_back({std::get<0>(key), std::get<1>(key), root / low[key], root / f->second});
  }
  for (const auto& [key, path] : full) {
    if (!low.count(key)) out.warnings.push_back("unpaired full-dose slice " + path);
  }
  if (out.pairs.empty()) {
    throw EmptyDatasetError("no paired low/full-dose slices under " + root.string());
  }
  return out;
}

ImagePair load_pair(const SlicePair& pair, const HuWindow& window) {
  const auto lo = read_slice(pair.low), fu = read_slice(pair.full);
  return {window_normalize(to_hounsfield(lo), window), window_normalize(to_hounsfield(fu), window)};
}

std::vector<ImagePair> load_pairs(const PairedDataset& dataset, const HuWindow& window,
                                  const std::vector<std::string>& patients) {
  const std::set<std::string> wanted(patients.begin(), patients.end());
  std::vector<ImagePair> out;
  for (const auto& p : dataset.pairs) {
    if (wanted.count(p.patient_id)) out.push_back(load_pair(p, window));
  }
  return out;
}

void SynthOptions::validate() const {
  if (patients < 1 || slices_per_patient < 1) {
    throw ConfigError("synth: need at least one patient and one slice");
  }
  if (height < 32 || width < 32) {
    throw ConfigError("synth: slices must be at least 32x32, got " + std::to_string(height) +
                      "x" + std::to_string(width));
  }
  if (!(photon_count > 0.0)) throw ConfigError("synth: photon_count must be positive");
  try {
    window.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

std::string synthetic_patient_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "patient_%02zu", index);
  return buf;
}

ImagePair synthetic_slice(const SynthOptions& o, std::size_t patient, std::size_t slice) {
  const std::uint64_t base = mix_seed(mix_seed(o.seed, patient), slice);
  Rng rng(mix_seed(base, 0));
  const std::size_t ellipses = 4 + static_cast<std::size_t>(rng.below(5));
  Image2D clean = generate_phantom(o.height, o.width, ellipses, mix_seed(base, 1));
  Image2D noisy = add_poisson_noise(clean, o.photon_count, mix_seed(base, 2));
  return {std::move(noisy), std::move(clean)};
}

namespace {

SliceRecord encode(const Image2D& img, const HuWindow& window, const std::string& patient,
                   int index) {
  SliceRecord s;
  s.rows = img.height;
  s.cols = img.width;
  s.patient_id = patient;
  s.slice_index = index;
  s.pixels.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double hu = window.lo + img.values[i] * (window.hi - window.lo);
    const double px = std::round((hu - s.rescale_intercept) / s.rescale_slope);
    s.pixels[i] = static_cast<std::int16_t>(std::clamp(px, -32768.0, 32767.0));
  }
  return s;
}

}  // namespace

void generate_synthetic_dataset(const fs::path& root, const SynthOptions& o) {
  o.validate();
  for (std::size_t p = 0; p < o.patients; ++p) {
    const auto id = synthetic_patient_id(p);
    fs::create_directories(root / id / "low");
    fs::create_directories(root / id / "full");
    for (std::size_t s = 0; s < o.slices_per_patient; ++s) {
      const auto pair = synthetic_slice(o, p, s);
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu.raw", s);
      const int idx = static_cast<int>(s);
      write_slice(root / id / "full" / name, encode(pair.clean, o.window, id, idx), DoseTag::full);
      write_slice(root / id / "low" / name, encode(pair.noisy, o.window, id, idx), DoseTag::low);
    }
  }
}

std::string to_string(ExportFormat f) {
  switch (f) {
    case ExportFormat::png8: return "png8";
    case ExportFormat::png16: return "png16";
    case ExportFormat::csv: return "csv";
  }
  return "unknown";
}

ExportFormat export_format_from_string(const std::string& name) {
  if (name == "png8") return ExportFormat::png8;
  if (name == "png16") return ExportFormat::png16;
  if (name == "csv") return ExportFormat::csv;
  throw UsageError("unknown export format '" + name + "' (expected png8, png16 or csv)");
}

void export_image(const Image2D& img, const fs::path& path, ExportFormat format) {
  if (format == ExportFormat::csv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) out << (x ? "," : "") << img.at(y, x);
      out << '\n';
    }
    if (!out.flush()) throw IoError("write failed for " + path.string());
    return;
  }
  if (img.range != RangeTag::normalized01) {
    throw UsageError("png export needs a normalized image, got " + to_string(img.range));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  int ok = 0;
  if (format == ExportFormat::png8) {
    image.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> px(img.size());
    for (std::size_t i = 0; i < px.size(); ++i)
      px[i] = static_cast<png_byte>(std::lround(std::clamp(img.values[i], 0.0, 1.0) * 255.0));
    ok = png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr);
  } else {
    image.format = PNG_FORMAT_LINEAR_Y;
    std::vector<png_uint_16> px(img.size());
    for (std::size_t i = 0; i < px.size(); ++i)
      px[i] = static_cast<png_uint_16>(std::lround(std::clamp(img.values[i], 0.0, 1.0) * 65535.0));
    ok = png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr);
  }
  if (!ok) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

Image2D import_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read " + path.string() + ": " + image.message);
  }
  const bool deep = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  image.format = deep ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  Image2D out(image.height, image.width);
  bool ok = false;
  if (deep) {
    std::vector<png_uint_16> px(out.size());
    ok = png_image_finish_read(&image, nullptr, px.data(), 0, nullptr) != 0;
    for (std::size_t i = 0; i < px.size(); ++i) out.values[i] = px[i] / 65535.0;
  } else {
    std::vector<png_byte> px(out.size());
    ok = png_image_finish_read(&image, nullptr, px.data(), 0, nullptr) != 0;
    for (std::size_t i = 0; i < px.size(); ++i) out.values[i] = px[i] / 255.0;
  }
  if (!ok) throw FormatError("cannot decode " + path.string() + ": " + image.message);
  return out;
}

Image2D import_csv(const fs::path& path, RangeTag tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad number '" + cell + "' on row " +
                          std::to_string(rows + 1));
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw FormatError(path.string() + ": ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  if (rows == 0) throw FormatError(path.string() + ": empty csv");
  return Image2D(rows, cols, std::move(values), tag);
}

}  // namespace patchdenoise
