#include "alignreid/embedding_io.hpp"

#include <fstream>
#include <limits>

#include "alignreid/binio.hpp"

namespace areid {

namespace {

void write_rows(std::ostream& os, std::size_t count, std::size_t dim,
                std::span<const double> values, std::span<const std::size_t> ids,
                std::span<const std::size_t> cams, std::size_t repeat) {
  if (count > std::numeric_limits<std::uint32_t>::max() ||
      dim > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("embeddings: too many rows for the file format");
  }
  os.write("ARID", 4);
  binio::put<std::uint16_t>(os, kEmbeddingVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(count));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(dim));
  for (double v : values) binio::put<float>(os, static_cast<float>(v));
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t src = r / repeat;
    if (cams[src] > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("embeddings: camera label exceeds 16 bits");
    }
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ids[src]));
    binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(cams[src]));
  }
}

}  // namespace

void write_embeddings(std::ostream& os, const EmbeddingStore& store) {
  store.validate();
  write_rows(os, store.count, store.dim, store.features, store.identities, store.cameras, 1);
}

EmbeddingStore read_embeddings(std::istream& is) {
  binio::expect_magic(is, "ARID");
  const auto version = binio::get<std::uint16_t>(is, "version");
  if (version != kEmbeddingVersion) {
    throw binio::FormatError("unsupported embedding version " + std::to_string(version));
  }
  EmbeddingStore s;
  s.count = binio::get<std::uint32_t>(is, "count");
  s.dim = binio::get<std::uint32_t>(is, "dim");
  if (s.count * s.dim > (std::size_t{1} << 30)) throw binio::FormatError("embedding file too large");
  s.features.resize(s.count * s.dim);
  for (auto& v : s.features) v = binio::get<float>(is, "features");
  s.identities.resize(s.count);
  s.cameras.resize(s.count);
  for (std::size_t r = 0; r < s.count; ++r) {
    s.identities[r] = binio::get<std::uint32_t>(is, "identity");
    s.cameras[r] = binio::get<std::uint16_t>(is, "camera");
  }
  return s;
}

std::filesystem::path local_companion(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".local");
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store) {
  store.validate();
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_embeddings(os, store);
  }
  if (store.locals) {
    const std::size_t h = store.locals->dim(1), c = store.locals->dim(2);
    std::ofstream os(local_companion(path), std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + local_companion(path).string());
    write_rows(os, store.count * h, c, store.locals->values(), store.identities, store.cameras, h);
  }
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  EmbeddingStore s = read_embeddings(is);
  const auto companion = local_companion(path);
  if (std::filesystem::exists(companion)) {
    std::ifstream ls(companion, std::ios::binary);
    const EmbeddingStore rows = read_embeddings(ls);
    if (s.count == 0 || rows.count % s.count != 0) {
      throw binio::FormatError(companion.string() + ": row count is not a multiple of " +
                               std::to_string(s.count));
    }
    const std::size_t h = rows.count / s.count;
    for (std::size_t r = 0; r < rows.count; ++r) {
      if (rows.identities[r] != s.identities[r / h]) {
        throw binio::FormatError(companion.string() + ": labels disagree with " + path.string());
      }
    }
    s.locals = Array({s.count, h, rows.dim}, rows.features);
  }
  return s;
}

}  // namespace areid
