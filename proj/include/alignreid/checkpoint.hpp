#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "alignreid/params.hpp"

namespace areid {

// "ARWT" parameter checkpoints: magic, u16 version, u32 count, then per
// parameter u16 name length, name bytes, u8 rank, u32 extents, f64 data.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const ParamStore& params);
ParamStore read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace areid
