#include "alignreid/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "alignreid/binio.hpp"

namespace areid {

namespace {

// Skips whitespace and '#' comments between PNM header tokens.
unsigned long read_header_number(std::istream& is, const std::string& origin) {
  int ch = is.peek();
  while (ch != EOF) {
    if (std::isspace(ch)) {
      is.get();
    } else if (ch == '#') {
      std::string skip;
      std::getline(is, skip);
    } else {
      break;
    }
    ch = is.peek();
  }
  unsigned long value = 0;
  bool any = false;
  while (std::isdigit(is.peek())) {
    value = value * 10 + static_cast<unsigned long>(is.get() - '0');
    any = true;
    if (value > 1u << 24) throw ImageError(origin + ": header value too large");
  }
  if (!any) throw ImageError(origin + ": malformed PNM header");
  return value;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ImageError("cannot open " + path.string());
  char magic[2] = {};
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || (magic[1] != '6' && magic[1] != '5')) {
    throw ImageError(path.string() + ": not a binary PPM/PGM file");
  }
  const std::size_t channels = magic[1] == '6' ? 3 : 1;
  const auto width = read_header_number(is, path.string());
  const auto height = read_header_number(is, path.string());
  const auto maxval = read_header_number(is, path.string());
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
    throw ImageError(path.string() + ": invalid dimensions or maxval");
  }
  if (!std::isspace(is.get())) throw ImageError(path.string() + ": malformed PNM header");

  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  const std::size_t samples = channels * width * height;
  std::vector<unsigned char> raw(samples * bytes_per_sample);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw ImageError(path.string() + ": truncated pixel data");
  }
  Image img(channels, height, width);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t s = (y * width + x) * channels + c;
        const unsigned v = bytes_per_sample == 1
                               ? raw[s]
                               : (static_cast<unsigned>(raw[2 * s]) << 8) | raw[2 * s + 1];
        img.at(c, y, x) = std::min(1.0, v * scale);
      }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 3 && image.channels != 1) {
    throw ImageError("write_ppm: " + std::to_string(image.channels) + " channels");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ImageError("cannot write " + path.string());
  os << (image.channels == 3 ? "P6" : "P5") << '\n'
     << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> raw(image.data.size());
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        raw[(y * image.width + x) * image.channels + c] =
            static_cast<char>(to_byte(image.at(c, y, x)));
  os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
}

Image read_art(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ImageError("cannot open " + path.string());
  try {
    binio::expect_magic(is, "ARTF");
    const auto c = binio::get<std::uint32_t>(is, "channels");
    const auto h = binio::get<std::uint32_t>(is, "height");
    const auto w = binio::get<std::uint32_t>(is, "width");
    if (c == 0 || h == 0 || w == 0 || std::uint64_t{c} * h * w > (1ull << 28)) {
      throw ImageError(path.string() + ": invalid tensor extents");
    }
    Image img(c, h, w);
    for (auto& v : img.data) v = binio::get<float>(is, "tensor data");
    return img;
  } catch (const binio::FormatError& e) {
    throw ImageError(path.string() + ": " + e.what());
  }
}

void write_art(const std::filesystem::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ImageError("cannot write " + path.string());
  os.write("ARTF", 4);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(image.channels));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(image.height));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(image.width));
  for (double v : image.data) binio::put<float>(os, static_cast<float>(v));
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ImageError("cannot open " + path.string());
  char head[4] = {};
  is.read(head, 4);
  is.close();
  if (std::memcmp(head, "ARTF", 4) == 0) return read_art(path);
  if (head[0] == 'P' && (head[1] == '6' || head[1] == '5')) return read_ppm(path);
  throw ImageError(path.string() + ": unrecognized image format");
}

std::vector<std::uint8_t> to_rgb8(const Image& image) {
  std::vector<std::uint8_t> out(image.height * image.width * 3);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src = image.channels == 1 ? 0 : std::min(c, image.channels - 1);
        out[(y * image.width + x) * 3 + c] = to_byte(image.at(src, y, x));
      }
  return out;
}

}  // namespace areid
