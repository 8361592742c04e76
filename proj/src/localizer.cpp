#include "deskrec/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deskrec/error.hpp"

namespace deskrec {

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

void check_region(const Image& image, const BBox& box) {
  if (box.empty() || box.minr < 0 || box.minc < 0 || box.maxr > image.height ||
      box.maxc > image.width) {
    throw Error(Errc::RegionOutOfBounds,
                "box [" + std::to_string(box.minr) + "," + std::to_string(box.minc) + "," +
                    std::to_string(box.maxr) + "," + std::to_string(box.maxc) +
                    ") outside " + std::to_string(image.height) + "x" +
                    std::to_string(image.width));
  }
}

void set_pixel(Image& image, int r, int c, Rgb color) {
  if (image.channels == 1) {
    image.at(r, c) = (color.r + color.g + color.b) / 3.0f;
    return;
  }
  image.at(r, c, 0) = color.r;
  image.at(r, c, 1) = color.g;
  image.at(r, c, 2) = color.b;
}

bool box_order(const BBox& a, const BBox& b) { return a < b; }

}  // namespace

void LocalizerParams::validate() const {
  if (blur_kernel <= 0 || blur_kernel % 2 == 0) {
    throw Error(Errc::InvalidConfig, "blur_kernel must be a positive odd size");
  }
  if (!(blur_sigma > 0) || !(diff_threshold > 0) || min_area_px <= 0 || expand_px <= 0) {
    throw Error(Errc::InvalidConfig, "localizer parameters must be positive");
  }
}

BBox BBox::united(const BBox& o) const {
  return {std::min(minr, o.minr), std::min(minc, o.minc), std::max(maxr, o.maxr),
          std::max(maxc, o.maxc)};
}

BBox BBox::expanded(int px, int height, int width) const {
  return {std::max(0, minr - px), std::max(0, minc - px), std::min(height, maxr + px),
          std::min(width, maxc + px)};
}

std::size_t DiffMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int half = size / 2;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    k[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2.0 * sigma * sigma));
  }
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

Image gaussian_blur(const Image& image, const LocalizerParams& params) {
  params.validate();
  const std::vector<double> kernel = gaussian_kernel_1d(params.blur_kernel, params.blur_sigma);
  const int half = params.blur_kernel / 2;
  const int h = image.height;
  const int w = image.width;
  const int ch = image.channels;

  std::vector<int> col_at(static_cast<std::size_t>(w) * kernel.size());
  for (int c = 0; c < w; ++c)
    for (int k = -half; k <= half; ++k)
      col_at[static_cast<std::size_t>(c) * kernel.size() + (k + half)] = reflect101(c + k, w);
  std::vector<int> row_at(static_cast<std::size_t>(h) * kernel.size());
  for (int r = 0; r < h; ++r)
    for (int k = -half; k <= half; ++k)
      row_at[static_cast<std::size_t>(r) * kernel.size() + (k + half)] = reflect101(r + k, h);

  Image horizontal(h, w, ch);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int* taps = &col_at[static_cast<std::size_t>(c) * kernel.size()];
      for (int p = 0; p < ch; ++p) {
        double acc = 0.0;
        for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * image.at(r, taps[k], p);
        horizontal.at(r, c, p) = static_cast<float>(acc);
      }
    }
  }
  Image out(h, w, ch);
  for (int r = 0; r < h; ++r) {
    const int* taps = &row_at[static_cast<std::size_t>(r) * kernel.size()];
    for (int c = 0; c < w; ++c) {
      for (int p = 0; p < ch; ++p) {
        double acc = 0.0;
        for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * horizontal.at(taps[k], c, p);
        out.at(r, c, p) = std::clamp(static_cast<float>(acc), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

DiffMask diff_mask(const Image& prev, const Image& curr, const LocalizerParams& params) {
  if (!prev.same_shape(curr)) {
    throw Error(Errc::DimensionMismatch,
                std::to_string(prev.height) + "x" + std::to_string(prev.width) + " vs " +
                    std::to_string(curr.height) + "x" + std::to_string(curr.width));
  }
  DiffMask mask(curr.height, curr.width);
  const std::size_t pixels = static_cast<std::size_t>(curr.height) * curr.width;
  const int ch = curr.channels;
  for (std::size_t i = 0; i < pixels; ++i) {
    double sq = 0.0;
    for (int p = 0; p < ch; ++p) {
      const double d = static_cast<double>(curr.data[i * ch + p]) - prev.data[i * ch + p];
      sq += d * d;
    }
    mask.bits[i] = std::sqrt(sq) > params.diff_threshold ? 1 : 0;
  }
  return mask;
}

std::vector<BBox> mask_components(const DiffMask& mask, int min_area) {
  std::vector<BBox> boxes;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const std::size_t start = static_cast<std::size_t>(r) * mask.width + c;
      if (!mask.bits[start] || seen[start]) continue;
      BBox box{r, c, r + 1, c + 1};
      int area = 0;
      seen[start] = 1;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        ++area;
        box = box.united({y, x, y + 1, x + 1});
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= mask.height || nx >= mask.width) continue;
            const std::size_t at = static_cast<std::size_t>(ny) * mask.width + nx;
            if (mask.bits[at] && !seen[at]) {
              seen[at] = 1;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
      if (area >= min_area) boxes.push_back(box);
    }
  }
  return boxes;
}

std::vector<ChangeRegion> extract_regions(const DiffMask& mask, const LocalizerParams& params,
                                          int frame) {
  struct Group {
    BBox box;
    std::vector<BBox> parts;
  };
  std::vector<Group> groups;
  for (const BBox& tight : mask_components(mask, params.min_area_px)) {
    groups.push_back({tight.expanded(params.expand_px, mask.height, mask.width), {tight}});
  }

  // Union boxes only grow, so any pair that touches once keeps touching; sweeping until
  // no pair touches therefore reaches the same partition regardless of visit order.
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t j = i + 1; j < groups.size();) {
        if (groups[i].box.touches(groups[j].box)) {
          groups[i].box = groups[i].box.united(groups[j].box);
          groups[i].parts.insert(groups[i].parts.end(), groups[j].parts.begin(),
                                 groups[j].parts.end());
          groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
        } else {
          ++j;
        }
      }
    }
  }

  std::sort(groups.begin(), groups.end(),
            [](const Group& a, const Group& b) { return box_order(a.box, b.box); });
  std::vector<ChangeRegion> regions;
  regions.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::sort(groups[i].parts.begin(), groups[i].parts.end(), box_order);
    regions.push_back({frame, static_cast<int>(i), groups[i].box, std::move(groups[i].parts)});
  }
  return regions;
}

std::vector<ChangeRegion> localize(const Image& prev, const Image& curr,
                                   const LocalizerParams& params, int frame) {
  if (!prev.same_shape(curr)) {
    throw Error(Errc::DimensionMismatch, "frames differ in shape");
  }
  return extract_regions(diff_mask(gaussian_blur(prev, params), gaussian_blur(curr, params), params),
                         params, frame);
}

void draw_rect(Image& image, const BBox& box, Rgb color, int thickness) {
  const BBox clip{std::max(0, box.minr), std::max(0, box.minc), std::min(image.height, box.maxr),
                  std::min(image.width, box.maxc)};
  if (clip.empty()) return;
  for (int r = clip.minr; r < clip.maxr; ++r) {
    for (int c = clip.minc; c < clip.maxc; ++c) {
      const bool edge = r < box.minr + thickness || r >= box.maxr - thickness ||
                        c < box.minc + thickness || c >= box.maxc - thickness;
      if (edge) set_pixel(image, r, c, color);
    }
  }
}

Image render_region_comparison(const Image& prev, const Image& curr, const ChangeRegion& region) {
  if (!prev.same_shape(curr)) throw Error(Errc::DimensionMismatch, "frames differ in shape");
  check_region(curr, region.bbox);
  const BBox& b = region.bbox;
  const int h = b.height();
  const int w = b.width();
  constexpr int kSeparator = 3;
  Image out(h, 2 * w + kSeparator, curr.channels, 0.0f);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int p = 0; p < curr.channels; ++p) {
        out.at(r, c, p) = prev.at(b.minr + r, b.minc + c, p);
        out.at(r, w + kSeparator + c, p) = curr.at(b.minr + r, b.minc + c, p);
      }
    }
  }
  for (const BBox& part : region.component_bboxes) {
    const BBox local{part.minr - b.minr, part.minc - b.minc, part.maxr - b.minr, part.maxc - b.minc};
    draw_rect(out, local, kRed, 1);
    const BBox right{local.minr, local.minc + w + kSeparator, local.maxr, local.maxc + w + kSeparator};
    draw_rect(out, right, kRed, 1);
  }
  return out;
}

Image annotate_screenshot(const Image& curr, const ChangeRegion& region) {
  check_region(curr, region.bbox);
  Image out = curr;
  draw_rect(out, region.bbox, kYellow, 2);
  return out;
}

nlohmann::json regions_to_json(std::span<const ChangeRegion> regions) {
  nlohmann::json out = nlohmann::json::array();
  for (const ChangeRegion& region : regions) {
    nlohmann::json parts = nlohmann::json::array();
    for (const BBox& p : region.component_bboxes) parts.push_back(p.to_json());
    out.push_back({{"id", region.id()},
                   {"bbox", region.bbox.to_json()},
                   {"component_bboxes", std::move(parts)}});
  }
  return out;
}

}  // namespace deskrec
