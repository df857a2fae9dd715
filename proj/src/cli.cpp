#include "alignreid/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "alignreid/ablation.hpp"
#include "alignreid/aligned.hpp"
#include "alignreid/checkpoint.hpp"
#include "alignreid/data.hpp"
#include "alignreid/embedding_io.hpp"
#include "alignreid/humaneval.hpp"
#include "alignreid/humaneval_server.hpp"
#include "alignreid/image.hpp"
#include "alignreid/retrieval.hpp"
#include "alignreid/trainer.hpp"

namespace areid::cli {

namespace fs = std::filesystem;

namespace {

class MissingFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw MissingFile("no such file: " + p.string());
}

// Values stated for the published training runs; anything else in a
// manifest is a desk-scale choice.
const std::map<std::string, std::string>& published_values() {
  static const std::map<std::string, std::string> v = {
      {"global_margin", "0.5"},         {"local_margin", "0.5"},
      {"k", "4"},                       {"weight_metric_mutual", "0.001"},
      {"weight_cls_mutual", "0.01"},    {"beta1", "0.9"},
      {"beta2", "0.999"},
  };
  return v;
}

std::set<std::string> keys_of(const KeyValueConfig& kv) {
  std::set<std::string> keys;
  for (const auto& [k, v] : kv.values()) keys.insert(k);
  return keys;
}

std::set<std::string> synthetic_keys() {
  KeyValueConfig kv;
  SyntheticConfig{}.to_keyvalue(kv);
  return keys_of(kv);
}

std::set<std::string> model_keys() {
  KeyValueConfig kv;
  ModelConfig{}.to_keyvalue(kv);
  return keys_of(kv);
}

std::set<std::string> train_keys() {
  KeyValueConfig kv;
  TrainConfig{}.to_keyvalue(kv);
  auto keys = keys_of(kv);
  keys.insert({"rate", "decay"});  // shorthand for a decaying schedule
  return keys;
}

std::set<std::string> merged(std::initializer_list<std::set<std::string>> sets) {
  std::set<std::string> out;
  for (const auto& s : sets) out.insert(s.begin(), s.end());
  return out;
}

KeyValueConfig load_config(const std::string& path, const std::set<std::string>& allowed) {
  KeyValueConfig kv;
  if (!path.empty()) {
    require_file(path);
    kv = KeyValueConfig::load(path);
  }
  kv.reject_unknown(allowed);
  return kv;
}

template <typename T>
void override_key(KeyValueConfig& kv, const CLI::Option* opt, const std::string& key,
                  const T& value) {
  if (opt == nullptr || opt->count() == 0) return;
  std::ostringstream os;
  os << value;
  kv.set(key, os.str());
}

// settings.cfg: the resolved configuration, loadable again with --config.
void write_settings(const fs::path& out_dir, const std::string& command,
                    const KeyValueConfig& resolved,
                    const std::map<std::string, std::string>& inputs = {}) {
  fs::create_directories(out_dir);
  std::ofstream os(out_dir / "settings.cfg");
  if (!os) throw std::runtime_error("cannot write " + (out_dir / "settings.cfg").string());
  os << "# alignreid " << command << '\n';
  for (const auto& [k, v] : inputs) os << "# input " << k << ": " << v << '\n';
  const auto& pub = published_values();
  std::string published, scaled;
  for (const auto& [k, v] : resolved.values()) {
    const auto it = pub.find(k);
    if (it != pub.end() && it->second == v) {
      published += ' ' + k;
    } else if (it != pub.end()) {
      scaled += ' ' + k + "(published " + it->second + ")";
    }
  }
  os << "# published values:" << (published.empty() ? " none" : published) << '\n';
  os << "# published value replaced:" << (scaled.empty() ? " none" : scaled) << '\n';
  os << "# every other key is a desk-scale default or a user choice\n";
  resolved.write(os);
}

fs::path manifest_path(const std::string& data) {
  fs::path p = data;
  if (fs::is_directory(p)) p /= "manifest.csv";
  require_file(p);
  return p;
}

Array network_input(const Array& pixels) {
  Array x = pixels;
  for (auto& v : x.values()) v = input_scale(v);
  return x;
}

bool has_split(const DatasetHandle& data, Split s) {
  return std::any_of(data.rows().begin(), data.rows().end(),
                     [s](const ManifestRow& r) { return r.split == s; });
}

void check_input_size(const ModelConfig& mc, const SplitData& split) {
  if (split.images.dim(2) != mc.input_size || split.images.dim(3) != mc.input_size ||
      split.images.dim(1) != mc.in_channels) {
    throw std::invalid_argument("images are " + shape_str(split.images.shape()) +
                                ", model expects " + std::to_string(mc.in_channels) + "x" +
                                std::to_string(mc.input_size) + "x" +
                                std::to_string(mc.input_size));
  }
}

void save_model_config(const fs::path& dir, const ModelConfig& mc) {
  KeyValueConfig kv;
  mc.to_keyvalue(kv);
  std::ofstream os(dir / "model.cfg");
  kv.write(os);
}

// Checkpoints sit next to the model.cfg written by the training command.
Model load_model(const fs::path& checkpoint) {
  require_file(checkpoint);
  const fs::path cfg = checkpoint.parent_path() / "model.cfg";
  require_file(cfg);
  return Model(ModelConfig::from_keyvalue(KeyValueConfig::load(cfg)),
               load_checkpoint(checkpoint));
}

struct EvalSplits {
  SplitData query;
  SplitData gallery;
};

std::optional<EvalSplits> eval_splits(const DatasetHandle& data) {
  if (!has_split(data, Split::kQuery) || !has_split(data, Split::kGallery)) return std::nullopt;
  return EvalSplits{load_split(data, Split::kQuery), load_split(data, Split::kGallery)};
}

// ---- gen-data ------------------------------------------------------------

struct GenDataArgs {
  std::string config, out;
  long long seed = 0, train_ids = 0, test_ids = 0, per_id = 0;
  CLI::Option *seed_opt, *train_opt, *test_opt, *per_opt;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  KeyValueConfig kv = load_config(a.config, synthetic_keys());
  override_key(kv, a.seed_opt, "seed", a.seed);
  override_key(kv, a.train_opt, "train_identities", a.train_ids);
  override_key(kv, a.test_opt, "test_identities", a.test_ids);
  override_key(kv, a.per_opt, "images_per_identity", a.per_id);
  const auto config = SyntheticConfig::from_keyvalue(kv);
  const auto dataset = generate_synthetic(config);
  const auto manifest = write_dataset(dataset, a.out);
  KeyValueConfig resolved;
  config.to_keyvalue(resolved);
  write_settings(a.out, "gen-data", resolved);
  out << "wrote " << dataset.rows.size() << " images and " << manifest.string() << '\n';
  return kOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config, out, data, variant;
  long long epochs = 0, batches = 0;
  double rate = 0;
  std::size_t eval_every = 1;
  CLI::Option *variant_opt = nullptr, *epochs_opt = nullptr, *batches_opt = nullptr,
              *rate_opt = nullptr;
};

KeyValueConfig training_kv(const TrainArgs& a) {
  KeyValueConfig kv = load_config(a.config, merged({model_keys(), train_keys()}));
  override_key(kv, a.variant_opt, "variant", a.variant);
  override_key(kv, a.epochs_opt, "epochs", a.epochs);
  override_key(kv, a.batches_opt, "batches_per_epoch", a.batches);
  override_key(kv, a.rate_opt, "rate", a.rate);
  return kv;
}

std::string epoch_row(const EpochSummary& s, const std::optional<EvalReport>& r) {
  std::ostringstream os;
  os << s.epoch + 1 << ',' << s.rate << ',' << s.mean.total << ','
     << s.mean.metric_global.value_or(0.0) << ',' << s.mean.metric_local.value_or(0.0) << ','
     << s.mean.cls.value_or(0.0) << ',';
  if (r) os << r->r1 << ',' << r->map;
  else os << ',';
  return os.str();
}

int train(const TrainArgs& a, std::ostream& out,
          bool mutual) {
  const auto kv = training_kv(a);
  const ModelConfig mc = ModelConfig::from_keyvalue(kv);
  const TrainConfig tc = TrainConfig::from_keyvalue(
      kv, mutual ? [] {
        TrainConfig c;
        c.schedule = TrainConfig::published_mutual_schedule();
        c.schedule.milestones = {16, 32};
        return c;
      }()
                 : TrainConfig{});
  const auto manifest = manifest_path(a.data);
  const DatasetHandle data = load_manifest(manifest);
  const SplitData train_split = load_split(data, Split::kTrain);
  check_input_size(mc, train_split);
  const auto evals = eval_splits(data);

  KeyValueConfig resolved;
  mc.to_keyvalue(resolved);
  tc.to_keyvalue(resolved);
  const fs::path dir = a.out;
  write_settings(dir, mutual ? "train-mutual" : "train", resolved,
                 {{"data", fs::absolute(manifest).string()}});

  const TrainingData td{train_split.images, train_split.identities};
  auto evaluate_now = [&](std::size_t epoch, const Model& m) -> std::optional<EvalReport> {
    if (!evals || a.eval_every == 0 || (epoch + 1) % a.eval_every != 0) return std::nullopt;
    return evaluate_global(m, evals->query, evals->gallery, Protocol{});
  };

  if (!mutual) {
    std::ofstream loss_log(dir / "loss.csv");
    std::ofstream epoch_log(dir / "epochs.csv");
    epoch_log << "epoch,rate,total,metric_global,metric_local,cls,r1,map\n";
    TrainOptions options;
    options.step_log = &loss_log;
    options.checkpoint_dir = dir;
    options.checkpoint_every = 10;
    options.on_epoch = [&](const EpochSummary& s, const Model& m) {
      const auto r = evaluate_now(s.epoch, m);
      epoch_log << epoch_row(s, r) << '\n' << std::flush;
      out << "epoch " << s.epoch + 1 << " loss " << s.mean.total;
      if (r) out << " rank-1 " << r->r1 << " mAP " << r->map;
      out << '\n' << std::flush;
    };
    const auto result = train_single(td, mc, tc, options);
    save_model_config(dir, result.model.config());
    out << "wrote " << (dir / "final.arwt").string() << '\n';
    return kOk;
  }

  std::ofstream first_log(dir / "first_loss.csv"), second_log(dir / "second_loss.csv");
  std::ofstream epoch_log(dir / "epochs.csv");
  epoch_log << "epoch,gap,first_r1,second_r1\n";
  const Array gap_images = network_input(evals ? evals->gallery.images : train_split.images);
  MutualOptions options;
  options.first_log = &first_log;
  options.second_log = &second_log;
  options.checkpoint_dir = dir;
  options.on_epoch = [&](std::size_t epoch, const Model& m1, const Model& m2) {
    const double gap = distance_matrix_gap(m1, m2, gap_images);
    const auto r1 = evaluate_now(epoch, m1), r2 = evaluate_now(epoch, m2);
    epoch_log << epoch + 1 << ',' << gap << ',' << (r1 ? std::to_string(r1->r1) : "") << ','
              << (r2 ? std::to_string(r2->r1) : "") << '\n'
              << std::flush;
    out << "epoch " << epoch + 1 << " gap " << gap;
    if (r1 && r2) out << " rank-1 " << r1->r1 << " / " << r2->r1;
    out << '\n' << std::flush;
  };
  const auto result = train_mutual(td, mc, tc, options);
  save_model_config(dir, result.first.config());
  out << "wrote " << (dir / "first_final.arwt").string() << " and "
      << (dir / "second_final.arwt").string() << '\n';
  return kOk;
}

// ---- embed ---------------------------------------------------------------

struct EmbedArgs {
  std::string out, data, checkpoint;
  std::vector<std::string> splits = {"query", "gallery"};
  bool with_local = false;
};

Split parse_split(const std::string& s) {
  for (Split sp : {Split::kTrain, Split::kQuery, Split::kGallery})
    if (s == split_name(sp)) return sp;
  throw ConfigError("unknown split '" + s + "' (train|query|gallery)");
}

int embed_cmd(const EmbedArgs& a, std::ostream& out) {
  const Model model = load_model(a.checkpoint);
  const auto manifest = manifest_path(a.data);
  const DatasetHandle data = load_manifest(manifest);
  KeyValueConfig resolved;
  model.config().to_keyvalue(resolved);
  write_settings(a.out, "embed", resolved,
                 {{"data", fs::absolute(manifest).string()},
                  {"checkpoint", fs::absolute(a.checkpoint).string()}});
  for (const auto& name : a.splits) {
    const Split s = parse_split(name);
    const SplitData split = load_split(data, s);
    check_input_size(model.config(), split);
    const auto e = embed(model, network_input(split.images), a.with_local);
    const auto store = EmbeddingStore::from_arrays(e.global, e.local, split.identities,
                                                   split.cameras);
    const fs::path path = fs::path(a.out) / (name + ".arid");
    save_embeddings(path, store);
    out << "wrote " << store.count << " embeddings to " << path.string()
        << (a.with_local ? " (+ local)" : "") << '\n';
  }
  return kOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string out, query, gallery;
  bool rerank = false, include_same_camera = false, combined = false;
  std::size_t k1 = 20, k2 = 6;
  double lambda = 0.3, local_weight = 1.0;
  CLI::Option* weight_opt = nullptr;
};

Array distances_for(const EmbeddingStore& a, const EmbeddingStore& b, double local_weight) {
  return local_weight > 0.0 ? combined_distances(a, b, local_weight)
                            : query_gallery_distances(a, b);
}

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  require_file(a.query);
  require_file(a.gallery);
  const auto queries = load_embeddings(a.query);
  const auto gallery = load_embeddings(a.gallery);
  if (a.local_weight < 0.0) throw ConfigError("--local-weight must be >= 0");
  // Global-only unless combined inference is requested.
  const bool combined = a.combined || a.weight_opt->count() > 0;
  const double local_weight = combined ? a.local_weight : 0.0;
  if (local_weight > 0.0 && (!queries.locals || !gallery.locals)) {
    throw std::invalid_argument("combined distance needs embeddings written with --with-local");
  }
  Protocol protocol{!a.include_same_camera};

  KeyValueConfig resolved;
  resolved.set("local_weight", std::to_string(local_weight));
  resolved.set("exclude_same_camera", protocol.exclude_same_camera ? "true" : "false");
  resolved.set("rerank", a.rerank ? "true" : "false");

  Array dist = distances_for(queries, gallery, local_weight);
  if (a.rerank) {
    RerankParams p{a.k1, a.k2, a.lambda};
    // Small galleries cannot supply k1 neighbours.
    if (p.k1 >= gallery.count) {
      p.k1 = gallery.count - 1;
      out << "k1 clamped to " << p.k1 << " for a gallery of " << gallery.count << '\n';
    }
    p.k2 = std::min(p.k2, p.k1);
    p.validate();
    resolved.set("k1", std::to_string(p.k1));
    resolved.set("k2", std::to_string(p.k2));
    resolved.set("lambda", std::to_string(p.lambda));
    dist = k_reciprocal_rerank(dist, distances_for(queries, queries, local_weight),
                               distances_for(gallery, gallery, local_weight), p);
  }
  const auto report = evaluate(dist, queries, gallery, protocol);
  write_settings(a.out, "eval", resolved,
                 {{"query", fs::absolute(a.query).string()},
                  {"gallery", fs::absolute(a.gallery).string()}});
  std::ofstream(fs::path(a.out) / "eval.json") << report.to_json() << '\n';
  char line[200];
  std::snprintf(line, sizeof line, "mAP %.4f  rank-1 %.4f  rank-5 %.4f  rank-10 %.4f  (%zu queries, %zu excluded)\n",
                report.map, report.r1, report.r5, report.r10, report.num_queries,
                report.excluded_queries);
  out << line;
  return kOk;
}

// ---- align-viz -----------------------------------------------------------

struct AlignArgs {
  std::string out, checkpoint, first, second;
};

std::vector<std::string> stripe_colors(const Image& img, std::size_t rows) {
  std::vector<std::string> colors;
  for (std::size_t h = 0; h < rows; ++h) {
    const std::size_t y0 = h * img.height / rows, y1 = (h + 1) * img.height / rows;
    double rgb[3] = {0, 0, 0};
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t ch = img.channels == 1 ? 0 : c;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = 0; x < img.width; ++x) rgb[c] += img.at(ch, y, x);
      rgb[c] /= static_cast<double>((y1 - y0) * img.width);
    }
    char hex[8];
    std::snprintf(hex, sizeof hex, "#%02x%02x%02x",
                  static_cast<unsigned>(std::clamp(rgb[0], 0.0, 1.0) * 255 + 0.5),
                  static_cast<unsigned>(std::clamp(rgb[1], 0.0, 1.0) * 255 + 0.5),
                  static_cast<unsigned>(std::clamp(rgb[2], 0.0, 1.0) * 255 + 0.5));
    colors.push_back(hex);
  }
  return colors;
}

int align_viz(const AlignArgs& a, std::ostream& out) {
  const Model model = load_model(a.checkpoint);
  require_file(a.first);
  require_file(a.second);
  const Image img[2] = {load_image(a.first), load_image(a.second)};
  const auto& mc = model.config();
  Array batch({2, mc.in_channels, mc.input_size, mc.input_size});
  for (int i = 0; i < 2; ++i) {
    if (img[i].channels != mc.in_channels || img[i].height != mc.input_size ||
        img[i].width != mc.input_size) {
      throw std::invalid_argument((i ? a.second : a.first) + " is " +
                                  std::to_string(img[i].channels) + "x" +
                                  std::to_string(img[i].height) + "x" +
                                  std::to_string(img[i].width) + ", model expects " +
                                  std::to_string(mc.in_channels) + "x" +
                                  std::to_string(mc.input_size) + "x" +
                                  std::to_string(mc.input_size));
    }
    std::copy(img[i].data.begin(), img[i].data.end(), batch.values().begin() + i * img[i].data.size());
  }
  const auto e = embed(model, network_input(batch), true);
  const std::size_t H = e.local->dim(1), c = e.local->dim(2);
  Array f({H, c}), g({H, c});
  std::copy_n(e.local->values().begin(), H * c, f.values().begin());
  std::copy_n(e.local->values().begin() + H * c, H * c, g.values().begin());
  const auto d = aligned::part_distance_matrix(f, g);
  const auto local = aligned::shortest_path(d);
  aligned::RenderOptions ro;
  ro.f_colors = stripe_colors(img[0], H);
  ro.g_colors = stripe_colors(img[1], H);

  write_settings(a.out, "align-viz", KeyValueConfig{},
                 {{"first", fs::absolute(a.first).string()},
                  {"second", fs::absolute(a.second).string()},
                  {"checkpoint", fs::absolute(a.checkpoint).string()}});
  const fs::path svg = fs::path(a.out) / "alignment.svg";
  std::ofstream(svg) << aligned::render_alignment(f, g, local.path, ro);
  std::ofstream(fs::path(a.out) / "path.txt") << aligned::path_dump(local.path);
  const double global = aligned::global_distance(
      std::span<const double>(e.global.values()).subspan(0, e.global.dim(1)),
      std::span<const double>(e.global.values()).subspan(e.global.dim(1), e.global.dim(1)));
  out << "local distance " << local.value << "  global distance " << global << "  wrote "
      << svg.string() << '\n';
  return kOk;
}

// ---- human evaluation ----------------------------------------------------

struct BuildArgs {
  std::string out, data, query, gallery, mode = "single";
  std::vector<std::string> annotators = {"a1"};
  std::uint64_t seed = 1;
  std::size_t max_items = 0;
  bool include_same_camera = false;
};

std::vector<fs::path> split_paths(const DatasetHandle& data, Split s) {
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.rows()[i].split == s) out.push_back(fs::absolute(data.resolve(i)));
  return out;
}

int humaneval_build(const BuildArgs& a, std::ostream& out) {
  require_file(a.query);
  require_file(a.gallery);
  const auto queries = load_embeddings(a.query);
  const auto gallery = load_embeddings(a.gallery);
  const auto manifest = manifest_path(a.data);
  const DatasetHandle data = load_manifest(manifest);
  const auto qpaths = split_paths(data, Split::kQuery);
  const auto gpaths = split_paths(data, Split::kGallery);
  if (qpaths.size() != queries.count || gpaths.size() != gallery.count) {
    throw std::invalid_argument("embeddings hold " + std::to_string(queries.count) + "/" +
                                std::to_string(gallery.count) +
                                " query/gallery rows, manifest lists " +
                                std::to_string(qpaths.size()) + "/" +
                                std::to_string(gpaths.size()));
  }
  const auto mode = humaneval::parse_mode(a.mode);
  const Protocol protocol{!a.include_same_camera};
  const Array dist = query_gallery_distances(queries, gallery);

  std::vector<humaneval::QueryCase> cases;
  std::size_t skipped = 0;
  for (std::size_t q = 0; q < queries.count; ++q) {
    if (a.max_items && cases.size() == a.max_items) break;
    const QueryLabel label{queries.identities[q], queries.cameras[q]};
    const auto row = std::span<const double>(dist.values()).subspan(q * gallery.count, gallery.count);
    RankList ranked = rank_by_distance(row, label, gallery, protocol);
    std::vector<std::size_t> gts;
    for (std::size_t g : ranked.indices)
      if (gallery.identities[g] == label.identity) gts.push_back(g);
    if (gts.empty()) {
      ++skipped;
      continue;
    }
    if (mode == humaneval::Mode::kSingleGt) {
      // One-match gallery per query: keep the lowest-index match, drop the rest.
      const std::size_t keep = *std::min_element(gts.begin(), gts.end());
      std::erase_if(ranked.indices, [&](std::size_t g) {
        return g != keep && gallery.identities[g] == label.identity;
      });
      gts = {keep};
    }
    cases.push_back({qpaths[q], ranked.indices, gts});
  }
  const auto study = humaneval::build_study(mode, cases, gpaths, a.annotators, a.seed);
  KeyValueConfig resolved;
  resolved.set("mode", a.mode);
  resolved.set("seed", std::to_string(a.seed));
  resolved.set("exclude_same_camera", protocol.exclude_same_camera ? "true" : "false");
  write_settings(a.out, "humaneval-build", resolved,
                 {{"data", fs::absolute(manifest).string()},
                  {"query", fs::absolute(a.query).string()},
                  {"gallery", fs::absolute(a.gallery).string()}});
  const fs::path path = fs::path(a.out) / "study.json";
  study.save(path);
  out << "wrote " << study.items.size() << " items for " << study.annotators.size()
      << " annotators to " << path.string();
  if (skipped) out << " (" << skipped << " queries without an admissible match skipped)";
  out << '\n';
  return kOk;
}

struct ServeArgs {
  std::string study, log, host = "127.0.0.1", static_dir;
  int port = 8080;
};

fs::path default_log(const std::string& study, const std::string& log) {
  return log.empty() ? fs::path(study).parent_path() / "answers.jsonl" : fs::path(log);
}

int humaneval_serve(const ServeArgs& a, std::ostream& out) {
  require_file(a.study);
  const auto study = humaneval::Study::load(a.study);
  humaneval::AnswerStore store(study, default_log(a.study, a.log));
  httplib::Server server;
  humaneval::ServerOptions options;
  if (!a.static_dir.empty()) {
    if (!fs::is_directory(a.static_dir)) throw MissingFile("no such directory: " + a.static_dir);
    options.static_dir = a.static_dir;
  }
  humaneval::install_routes(server, study, store, options);
  const int port = a.port == 0 ? server.bind_to_any_port(a.host)
                                : (server.bind_to_port(a.host, a.port) ? a.port : -1);
  if (port < 0) {
    throw std::runtime_error("cannot listen on " + a.host + ":" + std::to_string(a.port));
  }
  out << "serving " << study.items.size() << " items on http://" << a.host << ':' << port
      << '\n'
      << std::flush;
  server.listen_after_bind();
  return kOk;
}

struct ScoreArgs {
  std::string out, study, log;
};

int humaneval_score(const ScoreArgs& a, std::ostream& out) {
  require_file(a.study);
  const auto study = humaneval::Study::load(a.study);
  const fs::path log = default_log(a.study, a.log);
  require_file(log);
  const auto report = humaneval::score_report(study, humaneval::read_events(log));
  write_settings(a.out, "humaneval-score", KeyValueConfig{},
                 {{"study", fs::absolute(a.study).string()}, {"log", fs::absolute(log).string()}});
  std::ofstream(fs::path(a.out) / "report.json") << report.to_json() << '\n';
  for (const auto& [id, s] : report.per_annotator) {
    out << id << ": rank-1 " << s.accuracy() << " (" << s.correct << "/" << s.answered << ", "
        << s.skipped << " skipped)\n";
  }
  out << "best " << report.best << " (" << report.best_annotator << ")\n";
  return kOk;
}

// ---- ablation ------------------------------------------------------------

struct AblationArgs {
  std::string config, out;
  long long epochs = 0, batches = 0, seed = 0;
  CLI::Option *epochs_opt, *batches_opt, *seed_opt;
};

int ablation_cmd(const AblationArgs& a, std::ostream& out) {
  KeyValueConfig kv = load_config(a.config, merged({synthetic_keys(), model_keys(), train_keys()}));
  override_key(kv, a.epochs_opt, "epochs", a.epochs);
  override_key(kv, a.batches_opt, "batches_per_epoch", a.batches);
  override_key(kv, a.seed_opt, "seed", a.seed);
  AblationConfig config;
  config.data = SyntheticConfig::from_keyvalue(kv);
  config.model = ModelConfig::from_keyvalue(kv);
  config.train = TrainConfig::from_keyvalue(kv, config.train);
  KeyValueConfig resolved;
  config.data.to_keyvalue(resolved);
  config.model.to_keyvalue(resolved);
  config.train.to_keyvalue(resolved);
  resolved.set("variant", "all");
  write_settings(a.out, "ablation", resolved);
  const auto result = run_ablation(config, &out);
  std::ofstream(fs::path(a.out) / "ablation.md") << result.table();
  std::ofstream(fs::path(a.out) / "ablation.json") << result.to_json() << '\n';
  out << '\n' << result.table();
  return kOk;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"AlignedReID at desk scale", "alignreid"};
  app.require_subcommand(1);
  app.fallthrough(false);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic striped-person dataset");
  gen->add_option("--config", gd.config, "key=value file");
  gen->add_option("--out", gd.out, "output directory")->required();
  gd.seed_opt = gen->add_option("--seed", gd.seed, "generator seed");
  gd.train_opt = gen->add_option("--train-identities", gd.train_ids);
  gd.test_opt = gen->add_option("--test-identities", gd.test_ids);
  gd.per_opt = gen->add_option("--images-per-identity", gd.per_id);

  TrainArgs ta, tm;
  auto add_train = [](CLI::App* sub, TrainArgs& a) {
    sub->add_option("--config", a.config, "key=value file");
    sub->add_option("--data", a.data, "dataset directory or manifest.csv")->required();
    sub->add_option("--out", a.out, "output directory")->required();
    a.epochs_opt = sub->add_option("--epochs", a.epochs);
    a.batches_opt = sub->add_option("--batches", a.batches, "batches per epoch");
    a.rate_opt = sub->add_option("--lr", a.rate, "initial rate, decayed 0.1x at milestones");
    sub->add_option("--eval-every", a.eval_every, "epochs between test evaluations (0: never)");
  };
  auto* tr = app.add_subcommand("train", "Train one model");
  add_train(tr, ta);
  ta.variant_opt = tr->add_option("--variant", ta.variant, "baseline|gl-baseline|aligned")
                       ->check(CLI::IsMember({"baseline", "gl-baseline", "aligned"}));
  auto* trm = app.add_subcommand("train-mutual", "Train two models with mutual losses");
  add_train(trm, tm);

  EmbedArgs ea;
  auto* em = app.add_subcommand("embed", "Write embeddings for dataset splits");
  em->add_option("--data", ea.data, "dataset directory or manifest.csv")->required();
  em->add_option("--checkpoint", ea.checkpoint, "model checkpoint (.arwt)")->required();
  em->add_option("--out", ea.out, "output directory")->required();
  em->add_option("--splits", ea.splits, "splits to embed")->delimiter(',');
  em->add_flag("--with-local", ea.with_local, "also write local features");

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "CMC and mAP from query/gallery embeddings");
  evc->add_option("--query", ev.query, "query embeddings (.arid)")->required();
  evc->add_option("--gallery", ev.gallery, "gallery embeddings (.arid)")->required();
  evc->add_option("--out", ev.out, "output directory")->required();
  evc->add_flag("--rerank", ev.rerank, "k-reciprocal re-ranking");
  evc->add_option("--k1", ev.k1);
  evc->add_option("--k2", ev.k2);
  evc->add_option("--lambda", ev.lambda);
  evc->add_flag("--combined", ev.combined, "rank by global + local-weight * local distance");
  ev.weight_opt = evc->add_option("--local-weight", ev.local_weight,
                                  "local distance weight (implies --combined)");
  evc->add_flag("--include-same-camera", ev.include_same_camera,
                "keep same-identity same-camera gallery entries");

  AlignArgs al;
  auto* av = app.add_subcommand("align-viz", "Render the local alignment of two images as SVG");
  av->add_option("first", al.first, "first image")->required();
  av->add_option("second", al.second, "second image")->required();
  av->add_option("--checkpoint", al.checkpoint, "model checkpoint (.arwt)")->required();
  av->add_option("--out", al.out, "output directory")->required();

  BuildArgs hb;
  auto* hbc = app.add_subcommand("humaneval-build", "Build human-evaluation candidate sets");
  hbc->add_option("--data", hb.data, "dataset directory or manifest.csv")->required();
  hbc->add_option("--query", hb.query, "query embeddings (.arid)")->required();
  hbc->add_option("--gallery", hb.gallery, "gallery embeddings (.arid)")->required();
  hbc->add_option("--out", hb.out, "output directory")->required();
  hbc->add_option("--mode", hb.mode, "single (10 candidates) | multi (50)")
      ->check(CLI::IsMember({"single", "multi"}));
  hbc->add_option("--annotators", hb.annotators, "annotator ids")->delimiter(',');
  hbc->add_option("--seed", hb.seed, "shuffle seed");
  hbc->add_option("--max-items", hb.max_items, "cap on items (0: all queries)");
  hbc->add_flag("--include-same-camera", hb.include_same_camera);

  ServeArgs sv;
  auto* svc = app.add_subcommand("humaneval-serve", "Serve the annotation API");
  svc->add_option("--study", sv.study, "study.json")->required();
  svc->add_option("--log", sv.log, "answer log (default: answers.jsonl next to the study)");
  svc->add_option("--host", sv.host);
  svc->add_option("--port", sv.port)->check(CLI::Range(0, 65535));
  svc->add_option("--static", sv.static_dir, "UI assets to serve at /");

  ScoreArgs sc;
  auto* scc = app.add_subcommand("humaneval-score", "Score annotators from the answer log");
  scc->add_option("--study", sc.study, "study.json")->required();
  scc->add_option("--log", sc.log, "answer log (default: answers.jsonl next to the study)");
  scc->add_option("--out", sc.out, "output directory")->required();

  AblationArgs ab;
  auto* abc = app.add_subcommand("ablation", "Baseline / GL-Baseline / AlignedReID comparison");
  abc->add_option("--config", ab.config, "key=value file");
  abc->add_option("--out", ab.out, "output directory")->required();
  ab.epochs_opt = abc->add_option("--epochs", ab.epochs);
  ab.batches_opt = abc->add_option("--batches", ab.batches, "batches per epoch");
  ab.seed_opt = abc->add_option("--seed", ab.seed, "dataset seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "alignreid: bad arguments: " << one_line(e.what()) << '\n';
    return kBadConfig;
  }

  try {
    if (*gen) return gen_data(gd, out);
    if (*tr) return train(ta, out, false);
    if (*trm) return train(tm, out, true);
    if (*em) return embed_cmd(ea, out);
    if (*evc) return eval_cmd(ev, out);
    if (*av) return align_viz(al, out);
    if (*hbc) return humaneval_build(hb, out);
    if (*svc) return humaneval_serve(sv, out);
    if (*scc) return humaneval_score(sc, out);
    if (*abc) return ablation_cmd(ab, out);
  } catch (const ConfigError& e) {
    err << "alignreid: bad config: " << one_line(e.what()) << '\n';
    return kBadConfig;
  } catch (const MissingFile& e) {
    err << "alignreid: missing file: " << one_line(e.what()) << '\n';
    return kMissingFile;
  } catch (const TrainingDiverged& e) {
    err << "alignreid: training diverged: " << one_line(e.what()) << '\n';
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    err << "alignreid: precondition violated: " << one_line(e.what()) << '\n';
    return kPrecondition;
  } catch (const std::logic_error& e) {
    err << "alignreid: precondition violated: " << one_line(e.what()) << '\n';
    return kPrecondition;
  } catch (const ManifestError& e) {
    err << "alignreid: bad manifest: " << one_line(e.what()) << '\n';
    return kPrecondition;
  } catch (const ImageError& e) {
    err << "alignreid: bad image: " << one_line(e.what()) << '\n';
    return kPrecondition;
  } catch (const std::exception& e) {
    err << "alignreid: error: " << one_line(e.what()) << '\n';
    return kFailure;
  }
  return kFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace areid::cli
