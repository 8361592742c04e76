#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace deskrec {

// Row-major interleaved image with channel values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int r, int c, int ch = 0) {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  float at(int r, int c, int ch = 0) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
  bool empty() const { return data.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

struct Rgb {
  float r, g, b;
};

inline constexpr Rgb kRed{1.0f, 0.0f, 0.0f};
inline constexpr Rgb kYellow{1.0f, 1.0f, 0.0f};
inline constexpr Rgb kBlack{0.0f, 0.0f, 0.0f};

struct PngInfo {
  int width = 0;
  int height = 0;
};

// Decoding always yields 3 channels (grey, palette and alpha inputs are converted).
Image decode_png(std::span<const std::uint8_t> bytes);
Image read_png(const std::filesystem::path& path);
PngInfo read_png_info(const std::filesystem::path& path);

// Fixed settings: 8-bit, no interlace, filter NONE, zlib level 6, no ancillary chunks.
// The same image therefore always encodes to the same bytes.
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace deskrec
