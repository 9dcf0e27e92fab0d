#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchdenoise/image.hpp"
#include "patchdenoise/training.hpp"

namespace patchdenoise {

enum class DoseTag { low, full };

std::string to_string(DoseTag tag);
DoseTag dose_tag_from_string(const std::string& name);

/// A stored slice: `<name>.raw` holds rows*cols int16 little-endian pixels in
/// row-major order, `<name>.meta` the JSON sidecar with keys rows, cols,
/// rescale_slope, rescale_intercept, patient_id, slice_index and dose_tag.
struct SliceFile {
  SliceRecord slice;
  DoseTag dose = DoseTag::full;
};

std::filesystem::path sidecar_path(const std::filesystem::path& raw_path);

void write_slice(const std::filesystem::path& raw_path, const SliceRecord& slice, DoseTag dose);
SliceFile read_slice_file(const std::filesystem::path& raw_path);
inline SliceRecord read_slice(const std::filesystem::path& raw_path) {
  return read_slice_file(raw_path).slice;
}

struct SlicePair {
  std::string patient_id;
  int slice_index = 0;
  std::filesystem::path low;
  std::filesystem::path full;
};

struct PairedDataset {
  std::filesystem::path root;
  std::vector<SlicePair> pairs;       // lexicographic by relative path of the low slice
  std::vector<std::string> warnings;  // unpaired slices, excluded from `pairs`

  std::vector<std::string> patients() const;  // sorted, unique
};

/// Enumerates root/<patient>/<low|full>/<index>.raw and pairs slices by
/// (patient_id, slice_index) from their sidecars.
PairedDataset scan_dataset(const std::filesystem::path& root);

/// Both slices of a pair converted to HU and windowed into [0, 1].
ImagePair load_pair(const SlicePair& pair, const HuWindow& window);
std::vector<ImagePair> load_pairs(const PairedDataset& dataset, const HuWindow& window,
                                  const std::vector<std::string>& patients);

struct SynthOptions {
  std::size_t patients = 4;
  std::size_t slices_per_patient = 25;
  std::size_t height = 128;
  std::size_t width = 128;
  double photon_count = 1000.0;
  std::uint64_t seed = 0;
  HuWindow window = HuWindow::abdomen();

  void validate() const;
};

std::string synthetic_patient_id(std::size_t index);

/// Clean phantoms become the full-dose slices and their Poisson-noised copies
/// the low-dose ones, encoded to int16 with slope 1 and intercept -1024
/// through the inverse of the window.
void generate_synthetic_dataset(const std::filesystem::path& root, const SynthOptions& options);

/// Normalized phantom and its noisy copy for one synthetic slice, before
/// integer encoding.
ImagePair synthetic_slice(const SynthOptions& options, std::size_t patient, std::size_t slice);

enum class ExportFormat { png8, png16, csv };

std::string to_string(ExportFormat format);
ExportFormat export_format_from_string(const std::string& name);

/// png8 stores round(v*255), png16 round(v*65535), csv full-precision text.
void export_image(const Image2D& img, const std::filesystem::path& path, ExportFormat format);
/// Reads a grayscale PNG back into [0, 1].
Image2D import_png(const std::filesystem::path& path);
Image2D import_csv(const std::filesystem::path& path, RangeTag tag = RangeTag::normalized01);

}  // namespace patchdenoise
