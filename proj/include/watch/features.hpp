#pragma once

// Handcrafted 60-dimensional descriptors of masked four-band raster patches.
//
// Layout (index ranges, all computed over masked pixels only):
//   0-23   per band (B, G, R, NIR): mean, std, min, max, median, IQR
//   24-31  NDVI then NDWI: mean, std, p10, p90
//   32-39  GLCM at offsets (dx=1,dy=0) then (dx=0,dy=1): contrast, homogeneity, energy, correlation
//   40-49  uniform LBP (P=8, R=1) histogram: bins 0-8 by number of set bits, bin 9 non-uniform
//   50-55  Pearson correlation of band pairs (B,G) (B,R) (B,NIR) (G,R) (G,NIR) (R,NIR)
//   56-59  masked-area fraction, luminance entropy (bits), gradient magnitude mean, std
//
// Luminance is the mean of the R, G and B bands. GLCM and entropy use 16
// gray levels over the masked luminance range.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "watch/datamodel.hpp"

namespace watch {

inline constexpr std::size_t kFeatureDim = 60;
inline constexpr std::size_t kMinMaskPixels = 16;
inline constexpr int kGrayLevels = 16;

struct Patch {
  std::string site_id;
  int month = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<std::vector<double>, 4> bands;  // B, G, R, NIR; row-major H x W
  std::vector<std::uint8_t> mask;            // 1 = pixel belongs to the site

  Patch() = default;
  Patch(std::string id, int month_index, std::size_t h, std::size_t w);
  double& at(std::size_t band, std::size_t y, std::size_t x) { return bands[band][y * width + x]; }
  double at(std::size_t band, std::size_t y, std::size_t x) const { return bands[band][y * width + x]; }
  bool in_mask(long y, long x) const;
  void validate() const;
};

std::array<double, kFeatureDim> extract_handcrafted(const Patch& patch);

// Symmetric normalized co-occurrence matrix over masked pixel pairs at (dx, dy); exposed for testing.
std::vector<double> glcm(const std::vector<int>& levels, const Patch& patch, int dx, int dy);
// Per-pixel quantized luminance (kGrayLevels levels over the masked range); -1 outside the mask.
std::vector<int> quantized_luminance(const Patch& patch);

std::vector<std::uint8_t> encode_patch(const Patch& patch);
Patch decode_patch(std::span<const std::uint8_t> bytes, const std::string& context = "patch");
void write_patch_file(const std::filesystem::path& path, const Patch& patch);
Patch read_patch_file(const std::filesystem::path& path);

// One d=60 series per site; months without a patch are unavailable.
Dataset patches_to_dataset(const std::vector<Patch>& patches, const TimeAxis& axis);

}  // namespace watch
