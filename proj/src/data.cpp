#include "alignreid/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace areid {

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synthetic config: " + msg); };
  if (train_identities < 2) fail("need at least 2 train identities");
  if (images_per_identity < 2) fail("need at least 2 images per identity");
  if (test_identities > 0 && queries_per_identity >= images_per_identity) {
    fail("queries_per_identity must leave gallery images");
  }
  if (cameras == 0) fail("cameras must be >= 1");
  if (bands == 0 || palette < 2) fail("need >= 1 band and >= 2 palette colors");
  if (image_size < 2 * margin + 2 * bands) {
    fail("image_size " + std::to_string(image_size) + " too small for " +
         std::to_string(bands) + " bands");
  }
  if (max_shift >= image_size) fail("max_shift must be smaller than the image height");
  if (!(occlusion_frac >= 0.0 && occlusion_frac < 1.0)) fail("occlusion_frac must be in [0, 1)");
  if (!(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) fail("occlusion_prob must be in [0, 1]");
  if (!(stretch_min > 0.0 && stretch_min <= 1.0 && stretch_max >= 1.0)) {
    fail("stretch range must bracket 1");
  }
  if (!(confuser_fraction >= 0.0 && confuser_fraction <= 1.0)) fail("confuser_fraction must be in [0, 1]");
  if (!(noise >= 0.0) || !(background_jitter >= 0.0)) fail("noise levels must be >= 0");
}

SyntheticConfig SyntheticConfig::from_keyvalue(const KeyValueConfig& kv) {
  SyntheticConfig c;
  auto sz = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  c.train_identities = sz("train_identities", c.train_identities);
  c.test_identities = sz("test_identities", c.test_identities);
  c.images_per_identity = sz("images_per_identity", c.images_per_identity);
  c.queries_per_identity = sz("queries_per_identity", c.queries_per_identity);
  c.cameras = sz("cameras", c.cameras);
  c.image_size = sz("image_size", c.image_size);
  c.bands = sz("bands", c.bands);
  c.palette = sz("palette", c.palette);
  c.margin = sz("margin", c.margin);
  c.max_shift = sz("max_shift", c.max_shift);
  c.stretch_min = kv.get_double("stretch_min", c.stretch_min);
  c.stretch_max = kv.get_double("stretch_max", c.stretch_max);
  c.occlusion_prob = kv.get_double("occlusion_prob", c.occlusion_prob);
  c.occlusion_frac = kv.get_double("occlusion_frac", c.occlusion_frac);
  c.confuser_fraction = kv.get_double("confuser_fraction", c.confuser_fraction);
  c.noise = kv.get_double("noise", c.noise);
  c.background_jitter = kv.get_double("background_jitter", c.background_jitter);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

void SyntheticConfig::to_keyvalue(KeyValueConfig& kv) const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv.set("train_identities", std::to_string(train_identities));
  kv.set("test_identities", std::to_string(test_identities));
  kv.set("images_per_identity", std::to_string(images_per_identity));
  kv.set("queries_per_identity", std::to_string(queries_per_identity));
  kv.set("cameras", std::to_string(cameras));
  kv.set("image_size", std::to_string(image_size));
  kv.set("bands", std::to_string(bands));
  kv.set("palette", std::to_string(palette));
  kv.set("margin", std::to_string(margin));
  kv.set("max_shift", std::to_string(max_shift));
  kv.set("stretch_min", num(stretch_min));
  kv.set("stretch_max", num(stretch_max));
  kv.set("occlusion_prob", num(occlusion_prob));
  kv.set("occlusion_frac", num(occlusion_frac));
  kv.set("confuser_fraction", num(confuser_fraction));
  kv.set("noise", num(noise));
  kv.set("background_jitter", num(background_jitter));
  kv.set("seed", std::to_string(seed));
}

std::vector<Signature> make_signatures(const SyntheticConfig& config, std::size_t count,
                                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::vector<std::array<double, 3>> palette(config.palette);
  for (auto& color : palette) color = {unit(rng), unit(rng), unit(rng)};

  std::uniform_int_distribution<std::size_t> pick(0, config.palette - 1);
  std::uniform_int_distribution<std::size_t> band_pick(0, config.bands - 1);
  std::vector<std::vector<std::size_t>> codes(count, std::vector<std::size_t>(config.bands));
  const auto pairs = static_cast<std::size_t>(
      std::floor(config.confuser_fraction * static_cast<double>(count) / 2.0));
  for (std::size_t id = 0; id < count; ++id) {
    if (id % 2 == 1 && id / 2 < pairs) {
      // Twin of the previous identity: one band differs.
      codes[id] = codes[id - 1];
      const std::size_t band = band_pick(rng);
      std::size_t color = pick(rng);
      while (color == codes[id][band]) color = pick(rng);
      codes[id][band] = color;
    } else {
      for (auto& c : codes[id]) c = pick(rng);
    }
  }
  std::vector<Signature> out(count);
  for (std::size_t id = 0; id < count; ++id)
    for (auto c : codes[id]) out[id].bands.push_back(palette[c]);
  return out;
}

Perturbation sample_perturbation(const SyntheticConfig& config, std::mt19937_64& rng) {
  Perturbation p;
  const int s = static_cast<int>(config.max_shift);
  p.shift = std::uniform_int_distribution<int>(-s, s)(rng);
  p.stretch = std::uniform_real_distribution<double>(config.stretch_min, config.stretch_max)(rng);
  const auto max_occ = static_cast<std::size_t>(
      std::floor(config.occlusion_frac * static_cast<double>(config.image_size)));
  if (max_occ > 0 && std::bernoulli_distribution(config.occlusion_prob)(rng)) {
    const std::size_t rows = std::uniform_int_distribution<std::size_t>(1, max_occ)(rng);
    if (std::bernoulli_distribution(0.5)(rng)) {
      p.occlude_top = rows;
    } else {
      p.occlude_bottom = rows;
    }
  }
  p.noise = config.noise;
  const double grey = std::uniform_real_distribution<double>(0.3, 0.7)(rng);
  p.background = {grey, grey, grey};
  return p;
}

Image render_person(const SyntheticConfig& config, const Signature& signature,
                    const Perturbation& p, std::mt19937_64& rng) {
  const std::size_t size = config.image_size;
  const std::size_t bands = signature.bands.size();
  Image img(3, size, size);
  std::uniform_real_distribution<double> jitter(-config.background_jitter,
                                                config.background_jitter);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) img.at(c, y, x) = p.background[c] + jitter(rng);

  const double body = static_cast<double>(size - 2 * config.margin) * p.stretch;
  const double top = static_cast<double>(size) / 2.0 + p.shift - body / 2.0;
  const std::size_t x0 = size / 4, x1 = size - size / 4;
  for (std::size_t y = 0; y < size; ++y) {
    if (y < p.occlude_top || y + p.occlude_bottom >= size) continue;
    const double pos = (static_cast<double>(y) + 0.5 - top) / body;
    if (pos < 0.0 || pos >= 1.0) continue;
    const auto band = std::min(bands - 1, static_cast<std::size_t>(pos * static_cast<double>(bands)));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t x = x0; x < x1; ++x) img.at(c, y, x) = signature.bands[band][c];
  }
  if (p.noise > 0.0) {
    std::normal_distribution<double> gauss(0.0, p.noise);
    for (auto& v : img.data) v += gauss(rng);
  }
  for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "train";
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const auto train = make_signatures(config, config.train_identities, rng);
  const auto test = make_signatures(config, config.test_identities, rng);

  SyntheticDataset out;
  auto emit = [&](const Signature& sig, std::size_t identity, std::size_t k, Split split) {
    char name[64];
    std::snprintf(name, sizeof name, "images/%s_%04zu_%02zu.ppm", split_name(split), identity, k);
    out.rows.push_back({name, identity, k % config.cameras, split});
    const Perturbation p = sample_perturbation(config, rng);
    out.images.push_back(render_person(config, sig, p, rng));
  };
  for (std::size_t id = 0; id < train.size(); ++id)
    for (std::size_t k = 0; k < config.images_per_identity; ++k) emit(train[id], id, k, Split::kTrain);
  for (std::size_t t = 0; t < test.size(); ++t)
    for (std::size_t k = 0; k < config.images_per_identity; ++k)
      emit(test[t], config.train_identities + t, k,
           k < config.queries_per_identity ? Split::kQuery : Split::kGallery);
  return out;
}

std::filesystem::path write_dataset(const SyntheticDataset& dataset,
                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    write_ppm(dir / dataset.rows[i].path, dataset.images[i]);
  }
  const auto manifest = dir / "manifest.csv";
  write_manifest(manifest, dataset.rows);
  return manifest;
}

std::filesystem::path DatasetHandle::resolve(std::size_t index) const {
  const std::filesystem::path p = rows_.at(index).path;
  return p.is_absolute() ? p : root_ / p;
}

Image DatasetHandle::image(std::size_t index) const { return load_image(resolve(index)); }

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_size(const std::string& s, std::size_t& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end && !s.empty();
}

}  // namespace

DatasetHandle load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ManifestError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(is, line) || split_csv(line) != std::vector<std::string>{"path", "identity", "camera", "split"}) {
    throw ManifestError(path.string() + ": expected header path,identity,camera,split");
  }
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    auto bad = [&](const std::string& msg) {
      return ManifestError(path.string() + ": row " + std::to_string(lineno) + ": " + msg);
    };
    if (f.size() != 4) throw bad("expected 4 fields, got " + std::to_string(f.size()));
    ManifestRow row;
    row.path = f[0];
    if (row.path.empty()) throw bad("empty path");
    if (!parse_size(f[1], row.identity)) throw bad("identity is not a non-negative integer: " + f[1]);
    if (!parse_size(f[2], row.camera)) throw bad("camera is not a non-negative integer: " + f[2]);
    if (f[3] == "train") {
      row.split = Split::kTrain;
    } else if (f[3] == "query") {
      row.split = Split::kQuery;
    } else if (f[3] == "gallery") {
      row.split = Split::kGallery;
    } else {
      throw bad("unknown split " + f[3]);
    }
    rows.push_back(std::move(row));
  }

  std::set<std::size_t> train_ids, gallery_ids;
  for (const auto& r : rows) {
    if (r.split == Split::kTrain) train_ids.insert(r.identity);
    if (r.split == Split::kGallery) gallery_ids.insert(r.identity);
  }
  if (!train_ids.empty() && (*train_ids.begin() != 0 || *train_ids.rbegin() + 1 != train_ids.size())) {
    throw ManifestError(path.string() + ": train identities must be contiguous from 0");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].split == Split::kQuery && !gallery_ids.count(rows[i].identity)) {
      throw ManifestError(path.string() + ": query identity " + std::to_string(rows[i].identity) +
                          " (data row " + std::to_string(i + 1) + ") is absent from the gallery");
    }
  }
  return DatasetHandle(path.parent_path(), std::move(rows));
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ManifestError("cannot write " + path.string());
  os << "path,identity,camera,split\n";
  for (const auto& r : rows) {
    os << r.path << ',' << r.identity << ',' << r.camera << ',' << split_name(r.split) << '\n';
  }
}

namespace {

template <typename GetImage>
SplitData stack_split(const std::vector<ManifestRow>& rows, Split split, GetImage&& get) {
  SplitData out;
  std::vector<double> pixels;
  Shape shape;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].split != split) continue;
    const Image img = get(i);
    if (shape.empty()) {
      shape = {0, img.channels, img.height, img.width};
    } else if (img.channels != shape[1] || img.height != shape[2] || img.width != shape[3]) {
      throw ImageError("image of row " + std::to_string(i + 1) + " has a different size");
    }
    pixels.insert(pixels.end(), img.data.begin(), img.data.end());
    out.identities.push_back(rows[i].identity);
    out.cameras.push_back(rows[i].camera);
    out.rows.push_back(i);
  }
  if (shape.empty()) shape = {0, 3, 0, 0};
  shape[0] = out.rows.size();
  out.images = Array(shape, std::move(pixels));
  return out;
}

}  // namespace

SplitData load_split(const DatasetHandle& data, Split split) {
  return stack_split(data.rows(), split, [&](std::size_t i) { return data.image(i); });
}

SplitData split_from_memory(const SyntheticDataset& data, Split split) {
  return stack_split(data.rows, split, [&](std::size_t i) { return data.images[i]; });
}

AugmentChoice sample_augment(std::mt19937_64& rng, std::size_t pad) {
  AugmentChoice c;
  c.flip = std::bernoulli_distribution(0.5)(rng);
  const int p = static_cast<int>(pad);
  std::uniform_int_distribution<int> offset(-p, p);
  c.dy = offset(rng);
  c.dx = offset(rng);
  return c;
}

void augment(std::span<const double> image, std::size_t channels, std::size_t size,
             const AugmentChoice& choice, std::span<double> out) {
  const int s = static_cast<int>(size);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = image.data() + c * size * size;
    double* dst = out.data() + c * size * size;
    for (int y = 0; y < s; ++y) {
      const int sy = y + choice.dy;
      for (int x = 0; x < s; ++x) {
        const int fx = x + choice.dx;
        double v = 0.0;
        if (sy >= 0 && sy < s && fx >= 0 && fx < s) {
          const int sx = choice.flip ? s - 1 - fx : fx;
          v = src[sy * s + sx];
        }
        dst[y * s + x] = v;
      }
    }
  }
}

Image augment(const Image& image, const AugmentChoice& choice) {
  if (image.height != image.width) throw ImageError("augment: expected a square image");
  Image out(image.channels, image.height, image.width);
  augment(image.data, image.channels, image.height, choice, out.data);
  return out;
}

Image augment(const Image& image, std::mt19937_64& rng) {
  return augment(image, sample_augment(rng));
}

}  // namespace areid
