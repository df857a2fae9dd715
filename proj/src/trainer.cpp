#include "alignreid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "alignreid/checkpoint.hpp"
#include "alignreid/data.hpp"

namespace areid {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kGlBaseline: return "gl-baseline";
    case Variant::kAligned: return "aligned";
  }
  return "aligned";
}

Variant parse_variant(const std::string& name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "gl-baseline") return Variant::kGlBaseline;
  if (name == "aligned") return Variant::kAligned;
  throw ConfigError("unknown variant '" + name + "' (baseline | gl-baseline | aligned)");
}

void PKBatchSpec::validate() const {
  if (p < 2 || k < 2) throw std::invalid_argument("PK batch needs P >= 2 and K >= 2");
  if (batches_per_epoch == 0) throw std::invalid_argument("batches_per_epoch must be >= 1");
}

PKSampler::PKSampler(std::span<const std::size_t> identities, PKBatchSpec spec)
    : spec_(spec) {
  spec_.validate();
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < identities.size(); ++i) groups[identities[i]].push_back(i);
  for (auto& [id, members] : groups) {
    if (members.size() < spec_.k) {
      excluded_.push_back(id);
      continue;
    }
    ids_.push_back(id);
    members_.push_back(std::move(members));
  }
  if (ids_.size() < spec_.p) {
    throw std::invalid_argument("PK sampler: " + std::to_string(ids_.size()) +
                                " identities have >= " + std::to_string(spec_.k) +
                                " images, batch needs " + std::to_string(spec_.p) + " (" +
                                std::to_string(excluded_.size()) + " excluded)");
  }
}

PKBatch PKSampler::next(std::mt19937_64& rng) {
  std::vector<std::size_t> order(ids_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Partial Fisher-Yates: the first P entries are a uniform draw.
  for (std::size_t i = 0; i < spec_.p; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  PKBatch batch;
  for (std::size_t i = 0; i < spec_.p; ++i) {
    std::vector<std::size_t> members = members_[order[i]];
    for (std::size_t j = 0; j < spec_.k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, members.size() - 1);
      std::swap(members[j], members[pick(rng)]);
      batch.indices.push_back(members[j]);
      batch.labels.push_back(ids_[order[i]]);
    }
  }
  return batch;
}

LrSchedule LrSchedule::decay(double initial, std::vector<std::size_t> milestones,
                             double factor) {
  LrSchedule s;
  s.rates.push_back(initial);
  for (std::size_t i = 0; i < milestones.size(); ++i) s.rates.push_back(s.rates.back() * factor);
  s.milestones = std::move(milestones);
  return s;
}

void LrSchedule::validate() const {
  if (rates.size() != milestones.size() + 1) {
    throw std::invalid_argument("schedule needs one more rate than milestones");
  }
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument("schedule milestones must be strictly increasing");
    }
  }
  for (double r : rates) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("learning rates must be > 0");
  }
}

double lr_schedule(std::size_t epoch, const LrSchedule& schedule) {
  std::size_t stage = 0;
  while (stage < schedule.milestones.size() && epoch >= schedule.milestones[stage]) ++stage;
  return schedule.rates.at(stage);
}

LrSchedule TrainConfig::published_single_schedule() { return LrSchedule::decay(1e-3, {80, 160}); }

LrSchedule TrainConfig::published_mutual_schedule() {
  return LrSchedule{{60, 120}, {3e-4, 1e-4, 1e-5}};
}

void TrainConfig::validate() const {
  if (global_margin < 0.0 || local_margin < 0.0) throw std::invalid_argument("margins must be >= 0");
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  batch.validate();
  schedule.validate();
  weights.validate();
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<double> get_doubles(const KeyValueConfig& kv, const std::string& key,
                                const std::vector<double>& fallback) {
  if (!kv.has(key)) return fallback;
  std::vector<double> out;
  std::stringstream ss(kv.get_string(key, ""));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(key + " is not a comma-separated number list: " + kv.get_string(key, ""));
    }
  }
  return out;
}

}  // namespace

TrainConfig TrainConfig::from_keyvalue(const KeyValueConfig& kv, TrainConfig c) {
  c.variant = parse_variant(kv.get_string("variant", variant_name(c.variant)));
  c.global_margin = kv.get_double("global_margin", c.global_margin);
  c.local_margin = kv.get_double("local_margin", c.local_margin);
  c.adam.beta1 = kv.get_double("beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("beta2", c.adam.beta2);
  c.adam.epsilon = kv.get_double("adam_epsilon", c.adam.epsilon);
  c.schedule.milestones = kv.get_sizes("milestones", c.schedule.milestones);
  if (kv.has("rates")) {
    c.schedule.rates = get_doubles(kv, "rates", {});
  } else if (kv.has("rate") || kv.has("milestones")) {
    c.schedule = LrSchedule::decay(kv.get_double("rate", c.schedule.rates.front()),
                                   c.schedule.milestones, kv.get_double("decay", 0.1));
  }
  c.epochs = static_cast<std::size_t>(kv.get_int("epochs", static_cast<long long>(c.epochs)));
  c.batch.p = static_cast<std::size_t>(kv.get_int("p", static_cast<long long>(c.batch.p)));
  c.batch.k = static_cast<std::size_t>(kv.get_int("k", static_cast<long long>(c.batch.k)));
  c.batch.batches_per_epoch = static_cast<std::size_t>(
      kv.get_int("batches_per_epoch", static_cast<long long>(c.batch.batches_per_epoch)));
  c.weights.metric_global = kv.get_double("weight_metric_global", c.weights.metric_global);
  c.weights.metric_local = kv.get_double("weight_metric_local", c.weights.metric_local);
  c.weights.cls = kv.get_double("weight_cls", c.weights.cls);
  c.weights.metric_mutual = kv.get_double("weight_metric_mutual", c.weights.metric_mutual);
  c.weights.cls_mutual = kv.get_double("weight_cls_mutual", c.weights.cls_mutual);
  c.augment = kv.get_bool("augment", c.augment);
  c.data_seed = static_cast<std::uint64_t>(kv.get_int("data_seed", static_cast<long long>(c.data_seed)));
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("init_seed", static_cast<long long>(c.init_seed)));
  c.partner_seed =
      static_cast<std::uint64_t>(kv.get_int("partner_seed", static_cast<long long>(c.partner_seed)));
  c.validate();
  return c;
}

void TrainConfig::to_keyvalue(KeyValueConfig& kv) const {
  kv.set("variant", variant_name(variant));
  kv.set("global_margin", num(global_margin));
  kv.set("local_margin", num(local_margin));
  kv.set("beta1", num(adam.beta1));
  kv.set("beta2", num(adam.beta2));
  kv.set("adam_epsilon", num(adam.epsilon));
  kv.set("milestones", join_sizes(schedule.milestones));
  std::string rates;
  for (std::size_t i = 0; i < schedule.rates.size(); ++i) {
    rates += (i ? "," : "") + num(schedule.rates[i]);
  }
  kv.set("rates", rates);
  kv.set("epochs", std::to_string(epochs));
  kv.set("p", std::to_string(batch.p));
  kv.set("k", std::to_string(batch.k));
  kv.set("batches_per_epoch", std::to_string(batch.batches_per_epoch));
  kv.set("weight_metric_global", num(weights.metric_global));
  kv.set("weight_metric_local", num(weights.metric_local));
  kv.set("weight_cls", num(weights.cls));
  kv.set("weight_metric_mutual", num(weights.metric_mutual));
  kv.set("weight_cls_mutual", num(weights.cls_mutual));
  kv.set("augment", augment ? "true" : "false");
  kv.set("data_seed", std::to_string(data_seed));
  kv.set("init_seed", std::to_string(init_seed));
  kv.set("partner_seed", std::to_string(partner_seed));
}

BatchLoss build_batch_loss(Tape& tape, const Model& model, const BoundParams& bound,
                           NodeId images, std::span<const std::size_t> labels,
                           const TrainConfig& config) {
  const bool with_local = config.variant != Variant::kBaseline;
  const bool with_cls = model.config().num_identities >= 2;
  BatchLoss out;
  out.outputs = model.forward(tape, bound, images, with_local, with_cls);
  out.distances.global = global_distance_matrix(tape, out.outputs.global);
  if (with_local) {
    const LocalMetric metric =
        config.variant == Variant::kAligned ? LocalMetric::kAligned : LocalMetric::kIndexed;
    out.distances.local =
        local_distance_matrix(tape, *out.outputs.local, model.config().rows(), metric);
  }
  out.selection = mine_hard_triplets(tape.value(out.distances.global), labels);
  const auto tri = trihard_loss(tape, out.distances, out.selection, config.global_margin,
                                config.local_margin);
  out.terms.metric_global = tri.global;
  out.terms.metric_local = tri.local;
  if (with_cls) {
    out.terms.cls = ops::softmax_cross_entropy(
        tape, *out.outputs.logits, std::vector<std::size_t>(labels.begin(), labels.end()));
  }
  return out;
}

Array make_batch_images(const Array& images, std::span<const std::size_t> indices,
                        std::mt19937_64* rng) {
  const std::size_t c = images.dim(1), s = images.dim(2);
  const std::size_t plane = c * s * s;
  Array out({indices.size(), c, s, s});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto src = images.values().subspan(indices[b] * plane, plane);
    auto dst = out.values().subspan(b * plane, plane);
    if (rng) {
      augment(src, c, s, sample_augment(*rng), dst);
    } else {
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  for (auto& v : out.values()) v = input_scale(v);
  return out;
}

namespace {

std::vector<Array> param_grads(const Gradients& grads, const BoundParams& bound) {
  std::vector<Array> out;
  out.reserve(bound.nodes.size());
  for (auto n : bound.nodes) out.push_back(grads.of(n));
  return out;
}

// Accumulates component means over an epoch.
class EpochMeans {
 public:
  void add(const LossBundle& b) {
    auto acc = [](std::optional<double>& slot, const std::optional<double>& v) {
      if (v) slot = slot.value_or(0.0) + *v;
    };
    acc(sum_.metric_global, b.metric_global);
    acc(sum_.metric_local, b.metric_local);
    acc(sum_.cls, b.cls);
    acc(sum_.metric_mutual, b.metric_mutual);
    acc(sum_.cls_mutual, b.cls_mutual);
    sum_.total += b.total;
    sum_.weights = b.weights;
    ++count_;
  }
  LossBundle mean() const {
    LossBundle m = sum_;
    const double n = static_cast<double>(std::max<std::size_t>(count_, 1));
    for (auto* slot : {&m.metric_global, &m.metric_local, &m.cls, &m.metric_mutual, &m.cls_mutual}) {
      if (*slot) **slot /= n;
    }
    m.total /= n;
    return m;
  }

 private:
  LossBundle sum_;
  std::size_t count_ = 0;
};

ModelConfig with_classes(ModelConfig config, const TrainingData& data) {
  std::size_t classes = 0;
  for (auto l : data.labels) classes = std::max(classes, l + 1);
  config.num_identities = classes;
  return config;
}

void check_data(const TrainingData& data) {
  if (data.images.rank() != 4 || data.images.dim(0) != data.labels.size()) {
    throw std::invalid_argument("training data: images " + shape_str(data.images.shape()) +
                                " do not match " + std::to_string(data.labels.size()) +
                                " labels");
  }
}

[[noreturn]] void diverge(Model& model, const ParamStore& last_good,
                          const std::filesystem::path& dir, const std::string& tag,
                          std::size_t epoch, std::size_t step, const std::string& why) {
  model.params() = last_good;
  std::string where;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    const auto path = dir / (tag + "last_good.arwt");
    save_checkpoint(path, last_good);
    where = "; last good parameters saved to " + path.string();
  }
  throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " step " +
                             std::to_string(step) + ": " + why + where,
                         epoch, step);
}

}  // namespace

SingleResult train_single(const TrainingData& data, const ModelConfig& model_config,
                          const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  check_data(data);
  Model model(with_classes(model_config, data), config.init_seed);
  PKSampler sampler(data.labels, config.batch);
  std::mt19937_64 rng(config.data_seed);
  AdamState state = AdamState::for_params(model.params(), config.adam);
  if (options.step_log) *options.step_log << LossBundle::csv_header() << '\n';

  SingleResult result{model, {}};
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    state.config.rate = lr_schedule(epoch, config.schedule);
    const ParamStore last_good = model.params();
    EpochMeans means;
    for (std::size_t b = 0; b < config.batch.batches_per_epoch; ++b, ++step) {
      const PKBatch batch = sampler.next(rng);
      Tape tape;
      const BoundParams bound = model.bind(tape);
      const NodeId x = tape.constant(
          make_batch_images(data.images, batch.indices, config.augment ? &rng : nullptr));
      const BatchLoss loss = build_batch_loss(tape, model, bound, x, batch.labels, config);
      const TotalLoss total = total_loss(tape, loss.terms, config.weights);
      if (!total.bundle.all_finite()) {
        diverge(model, last_good, options.checkpoint_dir, "", epoch, step, "non-finite loss");
      }
      const auto grads = param_grads(tape.backprop(total.total), bound);
      try {
        adam_step(model.params(), grads, state);
      } catch (const NonFiniteGradient& e) {
        diverge(model, last_good, options.checkpoint_dir, "", epoch, step, e.what());
      }
      means.add(total.bundle);
      if (options.step_log) *options.step_log << total.bundle.csv_row(step) << '\n';
    }
    EpochSummary summary{epoch, state.config.rate, means.mean()};
    result.epochs.push_back(summary);
    if (!options.checkpoint_dir.empty() && options.checkpoint_every != 0 &&
        (epoch + 1) % options.checkpoint_every == 0) {
      std::filesystem::create_directories(options.checkpoint_dir);
      save_checkpoint(options.checkpoint_dir / ("epoch_" + std::to_string(epoch + 1) + ".arwt"),
                      model.params());
    }
    if (options.on_epoch) options.on_epoch(summary, model);
  }
  if (!options.checkpoint_dir.empty()) {
    std::filesystem::create_directories(options.checkpoint_dir);
    save_checkpoint(options.checkpoint_dir / "final.arwt", model.params());
  }
  result.model = std::move(model);
  return result;
}

MutualTerms mutual_terms(Tape& tape, const BatchLoss& own, const Array& partner_global,
                         const Array& partner_probs) {
  if (!own.outputs.logits) throw std::logic_error("mutual training needs classifier heads");
  const NodeId probs = ops::softmax(tape, *own.outputs.logits);
  return {metric_mutual_loss(tape, own.distances.global, tape.constant(partner_global)),
          classification_mutual_loss(tape, probs, tape.constant(partner_probs))};
}

MutualResult train_mutual(const TrainingData& data, const ModelConfig& model_config,
                          const TrainConfig& config, const MutualOptions& options) {
  config.validate();
  check_data(data);
  const ModelConfig mc = with_classes(model_config, data);
  Model models[2] = {Model(mc, config.init_seed), Model(mc, config.partner_seed)};
  AdamState states[2] = {AdamState::for_params(models[0].params(), config.adam),
                         AdamState::for_params(models[1].params(), config.adam)};
  std::ostream* logs[2] = {options.first_log, options.second_log};
  for (auto* log : logs) {
    if (log) *log << LossBundle::csv_header() << '\n';
  }
  PKSampler sampler(data.labels, config.batch);
  std::mt19937_64 rng(config.data_seed);
  std::vector<EpochSummary> summaries[2];

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double rate = lr_schedule(epoch, config.schedule);
    states[0].config.rate = states[1].config.rate = rate;
    const ParamStore last_good[2] = {models[0].params(), models[1].params()};
    EpochMeans means[2];
    for (std::size_t b = 0; b < config.batch.batches_per_epoch; ++b, ++step) {
      const PKBatch batch = sampler.next(rng);
      const Array images =
          make_batch_images(data.images, batch.indices, config.augment ? &rng : nullptr);

      Tape tapes[2];
      BoundParams bound[2];
      BatchLoss losses[2];
      for (int m = 0; m < 2; ++m) {
        bound[m] = models[m].bind(tapes[m]);
        losses[m] = build_batch_loss(tapes[m], models[m], bound[m], tapes[m].constant(images),
                                     batch.labels, config);
      }
      // Exchange detached outputs, then assemble each model's loss.
      Array globals[2], probs[2];
      for (int m = 0; m < 2; ++m) {
        globals[m] = tapes[m].value(losses[m].distances.global);
        Tape scratch;
        probs[m] = scratch.value(ops::softmax(scratch, scratch.constant(tapes[m].value(*losses[m].outputs.logits))));
      }
      for (int m = 0; m < 2; ++m) {
        const MutualTerms mt = mutual_terms(tapes[m], losses[m], globals[1 - m], probs[1 - m]);
        LossTerms terms = losses[m].terms;
        terms.metric_mutual = mt.metric_mutual;
        terms.cls_mutual = mt.cls_mutual;
        const TotalLoss total = total_loss(tapes[m], terms, config.weights);
        const std::string tag = m == 0 ? "first_" : "second_";
        if (!total.bundle.all_finite()) {
          models[1 - m].params() = last_good[1 - m];
          diverge(models[m], last_good[m], options.checkpoint_dir, tag, epoch, step,
                  "non-finite loss");
        }
        const auto grads = param_grads(tapes[m].backprop(total.total), bound[m]);
        try {
          adam_step(models[m].params(), grads, states[m]);
        } catch (const NonFiniteGradient& e) {
          models[1 - m].params() = last_good[1 - m];
          diverge(models[m], last_good[m], options.checkpoint_dir, tag, epoch, step, e.what());
        }
        means[m].add(total.bundle);
        if (logs[m]) *logs[m] << total.bundle.csv_row(step) << '\n';
      }
    }
    for (int m = 0; m < 2; ++m) summaries[m].push_back({epoch, rate, means[m].mean()});
    if (options.on_epoch) options.on_epoch(epoch, models[0], models[1]);
  }
  if (!options.checkpoint_dir.empty()) {
    std::filesystem::create_directories(options.checkpoint_dir);
    save_checkpoint(options.checkpoint_dir / "first_final.arwt", models[0].params());
    save_checkpoint(options.checkpoint_dir / "second_final.arwt", models[1].params());
  }
  return {std::move(models[0]), std::move(models[1]), std::move(summaries[0]),
          std::move(summaries[1])};
}

double distance_matrix_gap(const Model& a, const Model& b, const Array& images) {
  const Embeddings ea = embed(a, images, false);
  const Embeddings eb = embed(b, images, false);
  Tape tape;
  const Array da = tape.value(global_distance_matrix(tape, tape.constant(ea.global)));
  const Array db = tape.value(global_distance_matrix(tape, tape.constant(eb.global)));
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) s += std::abs(da[i] - db[i]);
  return s / static_cast<double>(da.size());
}

}  // namespace areid
