#include "alignreid/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "alignreid/binio.hpp"

namespace areid {

void write_checkpoint(std::ostream& os, const ParamStore& params) {
  os.write("ARWT", 4);
  binio::put<std::uint16_t>(os, kCheckpointVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, value] : params.entries()) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max() || value.rank() > 255) {
      throw std::invalid_argument("checkpoint: parameter " + name + " not representable");
    }
    binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(value.rank()));
    for (auto extent : value.shape()) binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(extent));
    for (double v : value.values()) binio::put<double>(os, v);
  }
}

ParamStore read_checkpoint(std::istream& is) {
  binio::expect_magic(is, "ARWT");
  const auto version = binio::get<std::uint16_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw binio::FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = binio::get<std::uint32_t>(is, "parameter count");
  ParamStore params;
  for (std::uint32_t p = 0; p < count; ++p) {
    const auto len = binio::get<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw binio::FormatError("truncated parameter name");
    const auto rank = binio::get<std::uint8_t>(is, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = binio::get<std::uint32_t>(is, "extent");
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = binio::get<double>(is, "parameter data");
    params.add(std::move(name), Array(std::move(shape), std::move(data)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(os, params);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace areid
