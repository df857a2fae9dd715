#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "alignreid/array.hpp"
#include "alignreid/image.hpp"
#include "alignreid/keyvalue.hpp"

namespace areid {

// Striped-person generator. Each identity is a vertical stack of colored
// bands drawn on a cluttered background. Per image the body is shifted,
// stretched and optionally occluded from the top or bottom.
struct SyntheticConfig {
  std::size_t train_identities = 64;
  std::size_t test_identities = 64;
  std::size_t images_per_identity = 8;
  std::size_t queries_per_identity = 2;  // test identities only
  std::size_t cameras = 4;
  std::size_t image_size = 56;
  std::size_t bands = 8;            // signature length
  std::size_t palette = 8;          // distinct band colors
  std::size_t margin = 4;           // rows above and below the canonical body
  std::size_t max_shift = 8;        // rows, uniform in [-max_shift, max_shift]
  double stretch_min = 0.8;
  double stretch_max = 1.2;
  double occlusion_prob = 0.3;
  double occlusion_frac = 0.3;      // max occluded fraction of the image height
  double confuser_fraction = 0.5;   // identities paired with a one-band twin
  double noise = 0.05;
  double background_jitter = 0.15;
  std::uint64_t seed = 7;

  void validate() const;
  static SyntheticConfig from_keyvalue(const KeyValueConfig& kv);
  void to_keyvalue(KeyValueConfig& kv) const;
};

// Band colors, top to bottom, RGB in [0, 1].
struct Signature {
  std::vector<std::array<double, 3>> bands;
};

struct Perturbation {
  int shift = 0;            // rows, positive moves the body down
  double stretch = 1.0;     // body height factor, centered
  std::size_t occlude_top = 0;
  std::size_t occlude_bottom = 0;
  double noise = 0.0;
  std::array<double, 3> background{0.5, 0.5, 0.5};
};

std::vector<Signature> make_signatures(const SyntheticConfig& config, std::size_t count,
                                       std::mt19937_64& rng);

Perturbation sample_perturbation(const SyntheticConfig& config, std::mt19937_64& rng);

// Renders one image. The body spans columns [S/4, 3S/4). Noise uses `rng`.
Image render_person(const SyntheticConfig& config, const Signature& signature,
                    const Perturbation& p, std::mt19937_64& rng);

enum class Split { kTrain, kQuery, kGallery };
const char* split_name(Split split);

struct ManifestRow {
  std::string path;  // relative to the manifest's directory unless absolute
  std::size_t identity = 0;
  std::size_t camera = 0;
  Split split = Split::kTrain;
};

struct SyntheticDataset {
  std::vector<ManifestRow> rows;
  std::vector<Image> images;  // index-aligned with rows
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

// Writes images as PPM plus manifest.csv under `dir`. Returns the manifest path.
std::filesystem::path write_dataset(const SyntheticDataset& dataset,
                                    const std::filesystem::path& dir);

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Manifest rows with images loaded on demand.
class DatasetHandle {
 public:
  DatasetHandle(std::filesystem::path root, std::vector<ManifestRow> rows)
      : root_(std::move(root)), rows_(std::move(rows)) {}

  const std::vector<ManifestRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  std::filesystem::path resolve(std::size_t index) const;
  Image image(std::size_t index) const;

 private:
  std::filesystem::path root_;
  std::vector<ManifestRow> rows_;
};

// CSV with header "path,identity,camera,split". Train identities must be
// contiguous from 0 and every query identity must appear in the gallery.
DatasetHandle load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

// Images of one split stacked as [N, C, S, S] with labels.
struct SplitData {
  Array images;
  std::vector<std::size_t> identities;
  std::vector<std::size_t> cameras;
  std::vector<std::size_t> rows;  // manifest row of each image
};

SplitData load_split(const DatasetHandle& data, Split split);
SplitData split_from_memory(const SyntheticDataset& data, Split split);

// Horizontal flip then pad-and-crop. Offsets are relative to the centered
// crop, each in [-pad, pad]; padding is zero.
struct AugmentChoice {
  bool flip = false;
  int dy = 0;
  int dx = 0;
};

inline constexpr std::size_t kAugmentPad = 4;

AugmentChoice sample_augment(std::mt19937_64& rng, std::size_t pad = kAugmentPad);
// image: one [C, S, S] slice; writes into `out` of the same extent.
void augment(std::span<const double> image, std::size_t channels, std::size_t size,
             const AugmentChoice& choice, std::span<double> out);
Image augment(const Image& image, const AugmentChoice& choice);
Image augment(const Image& image, std::mt19937_64& rng);

// Maps [0, 1] pixels to the network's input range.
inline double input_scale(double v) { return (v - 0.5) * 2.0; }

}  // namespace areid
