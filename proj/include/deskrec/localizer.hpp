#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deskrec/image.hpp"

namespace deskrec {

struct LocalizerParams {
  int blur_kernel = 5;
  double blur_sigma = 2.0;
  double diff_threshold = 0.15;
  int min_area_px = 10;
  int expand_px = 100;

  void validate() const;  // Error(InvalidConfig)
};

// Half-open pixel box: rows [minr, maxr), cols [minc, maxc).
struct BBox {
  int minr = 0;
  int minc = 0;
  int maxr = 0;
  int maxc = 0;

  int height() const { return maxr - minr; }
  int width() const { return maxc - minc; }
  bool empty() const { return maxr <= minr || maxc <= minc; }
  bool contains(const BBox& o) const {
    return minr <= o.minr && minc <= o.minc && o.maxr <= maxr && o.maxc <= maxc;
  }
  // Overlapping or sharing an edge/corner.
  bool touches(const BBox& o) const {
    return minr <= o.maxr && o.minr <= maxr && minc <= o.maxc && o.minc <= maxc;
  }
  bool intersects(const BBox& o) const {
    return minr < o.maxr && o.minr < maxr && minc < o.maxc && o.minc < maxc;
  }
  BBox united(const BBox& o) const;
  BBox expanded(int px, int height, int width) const;  // clipped to [0,H]x[0,W]

  nlohmann::json to_json() const { return {minr, minc, maxr, maxc}; }
  auto operator<=>(const BBox&) const = default;
};

struct DiffMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  DiffMask() = default;
  DiffMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

  bool at(int r, int c) const { return bits[static_cast<std::size_t>(r) * width + c] != 0; }
  void set(int r, int c, bool v = true) {
    bits[static_cast<std::size_t>(r) * width + c] = v ? 1 : 0;
  }
  std::size_t count() const;
};

struct ChangeRegion {
  int frame = 0;  // sample index of the current frame
  int index = 0;  // ordinal within the frame pair
  BBox bbox;
  std::vector<BBox> component_bboxes;  // tight boxes before expansion

  std::string id() const { return std::to_string(frame) + "_" + std::to_string(index); }
  friend bool operator==(const ChangeRegion&, const ChangeRegion&) = default;
};

// Normalized 1-D Gaussian of odd `size`; the 2-D kernel is its outer product.
std::vector<double> gaussian_kernel_1d(int size, double sigma);

// Per-channel Gaussian blur with reflect-101 borders; output clamped to [0, 1].
Image gaussian_blur(const Image& image, const LocalizerParams& params = {});

// bit = L2 norm of the per-pixel channel difference > diff_threshold.
DiffMask diff_mask(const Image& prev, const Image& curr, const LocalizerParams& params = {});

// Tight boxes of 8-connected components with area >= min_area, in raster order of
// each component's first pixel.
std::vector<BBox> mask_components(const DiffMask& mask, int min_area);

// Components -> area filter -> expand and clip -> merge touching boxes to a fixpoint
// -> order by (minr, minc) and number them.
std::vector<ChangeRegion> extract_regions(const DiffMask& mask, const LocalizerParams& params = {},
                                          int frame = 0);

std::vector<ChangeRegion> localize(const Image& prev, const Image& curr,
                                   const LocalizerParams& params = {}, int frame = 0);

// [old crop | 3 px black separator | new crop] with 1 px red outlines on every
// component box in both halves.
Image render_region_comparison(const Image& prev, const Image& curr, const ChangeRegion& region);

// Copy of `curr` with a 2 px yellow outline on the region box.
Image annotate_screenshot(const Image& curr, const ChangeRegion& region);

// Outline drawn inside `box`, clipped to the image.
void draw_rect(Image& image, const BBox& box, Rgb color, int thickness);

nlohmann::json regions_to_json(std::span<const ChangeRegion> regions);

}  // namespace deskrec
