#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace areid {

// Planar CHW image with samples in [0, 1].
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary PPM (P6), maxval up to 65535. Grey PGM (P5) is read as 1 channel.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

// Raw tensor: "ARTF", u32 C, u32 H, u32 W, then C*H*W little-endian f32.
Image read_art(const std::filesystem::path& path);
void write_art(const std::filesystem::path& path, const Image& image);

// Dispatches on the leading magic bytes.
Image load_image(const std::filesystem::path& path);

// Interleaved 8-bit RGB (grey images are replicated).
std::vector<std::uint8_t> to_rgb8(const Image& image);

}  // namespace areid
