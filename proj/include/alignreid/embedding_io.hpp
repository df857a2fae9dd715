#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "alignreid/retrieval.hpp"

namespace areid {

// "ARID" files: magic, u16 version, u32 count, u32 dim, count*dim f32 rows,
// then per row u32 identity and u16 camera, all little-endian.
inline constexpr std::uint16_t kEmbeddingVersion = 1;

void write_embeddings(std::ostream& os, const EmbeddingStore& store);
EmbeddingStore read_embeddings(std::istream& is);

// Local features go to a companion file "<path>.local" in the same format
// with H consecutive c-dimensional rows per image, so H is the ratio of the
// two row counts.
void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store);
EmbeddingStore load_embeddings(const std::filesystem::path& path);
std::filesystem::path local_companion(const std::filesystem::path& path);

}  // namespace areid
