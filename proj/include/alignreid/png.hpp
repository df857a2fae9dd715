#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "alignreid/image.hpp"

namespace areid {

// 8-bit truecolour PNG from interleaved RGB rows.
std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> rgb, std::size_t width,
                                     std::size_t height);
std::vector<std::uint8_t> encode_png(const Image& image);

}  // namespace areid
