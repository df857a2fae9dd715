#include "alignreid/humaneval.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace areid::humaneval {

using json = nlohmann::ordered_json;

namespace {

// FNV-1a, so shuffles replay identically across builds.
std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_distinct(std::span<const std::size_t> values, const char* what) {
  std::set<std::size_t> seen;
  for (std::size_t v : values) {
    if (!seen.insert(v).second) {
      throw ProtocolError(std::string(what) + " repeats gallery index " + std::to_string(v));
    }
  }
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

const char* mode_name(Mode mode) {
  return mode == Mode::kSingleGt ? "single" : "multi";
}

Mode parse_mode(const std::string& name) {
  if (name == "single") return Mode::kSingleGt;
  if (name == "multi") return Mode::kMultiGt;
  throw std::invalid_argument("unknown human-eval mode '" + name + "' (single|multi)");
}

Candidates single_gt_candidates(std::span<const std::size_t> ranked, std::size_t gt) {
  if (ranked.size() < kSingleGtSetSize) {
    throw ProtocolError("single-GT set needs a rank list of >= 10, got " +
                        std::to_string(ranked.size()));
  }
  check_distinct(ranked, "rank list");
  Candidates c;
  c.gallery.assign(ranked.begin(), ranked.begin() + kSingleGtSetSize);
  if (std::find(c.gallery.begin(), c.gallery.end(), gt) == c.gallery.end()) {
    c.gallery.back() = gt;
  }
  for (std::size_t g : c.gallery) c.ground_truth.push_back(g == gt);
  return c;
}

Candidates multi_gt_candidates(std::span<const std::size_t> ranked,
                               std::span<const std::size_t> gts) {
  if (gts.empty()) throw ProtocolError("multi-GT set needs at least one ground truth");
  if (gts.size() > kMultiGtSetSize) {
    throw ProtocolError(std::to_string(gts.size()) + " ground truths do not fit in 50 candidates");
  }
  if (ranked.size() < kMultiGtSetSize) {
    throw ProtocolError("multi-GT set needs a rank list of >= 50, got " +
                        std::to_string(ranked.size()));
  }
  check_distinct(ranked, "rank list");
  check_distinct(gts, "ground truths");

  const std::set<std::size_t> gt_set(gts.begin(), gts.end());
  Candidates c;
  c.gallery.assign(ranked.begin(), ranked.begin() + kMultiGtSetSize);
  const std::set<std::size_t> top(c.gallery.begin(), c.gallery.end());

  std::vector<std::pair<std::size_t, std::size_t>> missing;  // (model rank, index)
  for (std::size_t g : gts) {
    if (top.count(g)) continue;
    const auto it = std::find(ranked.begin(), ranked.end(), g);
    const std::size_t rank = it == ranked.end()
                                 ? ranked.size() + g
                                 : static_cast<std::size_t>(it - ranked.begin());
    missing.emplace_back(rank, g);
  }
  std::sort(missing.begin(), missing.end());

  std::size_t slot = c.gallery.size();
  for (const auto& [rank, g] : missing) {
    do {
      --slot;
    } while (gt_set.count(c.gallery[slot]));
    c.gallery[slot] = g;
  }
  for (std::size_t g : c.gallery) c.ground_truth.push_back(gt_set.count(g) > 0);
  return c;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates: std::shuffle's draw pattern is library-specific.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void Study::validate() const {
  if (annotators.empty()) throw ProtocolError("study has no annotators");
  if (std::set<std::string>(annotators.begin(), annotators.end()).size() != annotators.size()) {
    throw ProtocolError("study lists an annotator twice");
  }
  const std::size_t want = mode == Mode::kSingleGt ? kSingleGtSetSize : kMultiGtSetSize;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const auto where = "item " + std::to_string(i) + ": ";
    if (it.candidates.size() != want || it.ground_truth.size() != want) {
      throw ProtocolError(where + std::to_string(it.candidates.size()) + " candidates, mode " +
                          mode_name(mode) + " needs " + std::to_string(want));
    }
    const auto gts = std::count(it.ground_truth.begin(), it.ground_truth.end(), true);
    if (mode == Mode::kSingleGt ? gts != 1 : gts < 1) {
      throw ProtocolError(where + std::to_string(gts) + " ground truths");
    }
    if (!images.count(it.query)) throw ProtocolError(where + "unknown query ref " + it.query);
    for (const auto& r : it.candidates) {
      if (!images.count(r)) throw ProtocolError(where + "unknown candidate ref " + r);
    }
  }
}

bool Study::has_annotator(const std::string& id) const {
  return std::find(annotators.begin(), annotators.end(), id) != annotators.end();
}

std::vector<std::size_t> Study::display_order(const std::string& annotator,
                                              std::size_t item) const {
  std::uint64_t h = fnv1a(annotator, seed ^ 0xcbf29ce484222325ULL);
  h = fnv1a(std::to_string(item), h);
  return shuffled_order(items.at(item).candidates.size(), h);
}

std::string Study::to_json() const {
  json j;
  j["mode"] = mode_name(mode);
  j["seed"] = seed;
  j["annotators"] = annotators;
  json imgs = json::object();
  for (const auto& [ref, path] : images) imgs[ref] = path.generic_string();
  j["images"] = imgs;
  json list = json::array();
  for (const auto& it : items) {
    std::vector<std::size_t> gt;
    for (std::size_t k = 0; k < it.ground_truth.size(); ++k)
      if (it.ground_truth[k]) gt.push_back(k);
    list.push_back({{"query", it.query}, {"candidates", it.candidates}, {"ground_truth", gt}});
  }
  j["items"] = list;
  return j.dump(1);
}

Study Study::from_json(const std::string& text, const std::filesystem::path& base) {
  Study s;
  try {
    const json j = json::parse(text);
    s.mode = parse_mode(j.at("mode").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.annotators = j.at("annotators").get<std::vector<std::string>>();
    for (const auto& [ref, path] : j.at("images").items()) {
      const std::filesystem::path p = path.get<std::string>();
      s.images[ref] = p.is_absolute() || base.empty() ? p : base / p;
    }
    for (const auto& e : j.at("items")) {
      CandidateSet c;
      c.query = e.at("query").get<std::string>();
      c.candidates = e.at("candidates").get<std::vector<std::string>>();
      c.ground_truth.assign(c.candidates.size(), false);
      for (std::size_t k : e.at("ground_truth").get<std::vector<std::size_t>>()) {
        if (k >= c.candidates.size()) {
          throw ProtocolError("ground-truth position " + std::to_string(k) + " out of range");
        }
        c.ground_truth[k] = true;
      }
      s.items.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("study file: ") + e.what());
  }
  s.validate();
  return s;
}

void Study::save(const std::filesystem::path& path) const {
  Study copy = *this;
  const auto dir = std::filesystem::absolute(path).parent_path();
  for (auto& [ref, p] : copy.images) {
    p = std::filesystem::absolute(p).lexically_relative(dir);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << copy.to_json() << '\n';
}

Study Study::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), std::filesystem::absolute(path).parent_path());
}

Study build_study(Mode mode, std::span<const QueryCase> queries,
                  std::span<const std::filesystem::path> gallery,
                  std::vector<std::string> annotators, std::uint64_t seed) {
  Study s;
  s.mode = mode;
  s.seed = seed;
  s.annotators = std::move(annotators);

  std::vector<Candidates> sets;
  for (const auto& q : queries) {
    for (std::size_t g : q.ranked) {
      if (g >= gallery.size()) throw ProtocolError("rank list index beyond the gallery");
    }
    if (mode == Mode::kSingleGt) {
      if (q.gts.size() != 1) {
        throw ProtocolError("single-GT mode needs exactly one ground truth per query, got " +
                            std::to_string(q.gts.size()));
      }
      sets.push_back(single_gt_candidates(q.ranked, q.gts.front()));
    } else {
      sets.push_back(multi_gt_candidates(q.ranked, q.gts));
    }
  }

  std::set<std::filesystem::path> used;
  for (const auto& q : queries) used.insert(q.query);
  for (const auto& c : sets)
    for (std::size_t g : c.gallery) used.insert(gallery[g]);
  std::vector<std::filesystem::path> paths(used.begin(), used.end());
  const auto order = shuffled_order(paths.size(), seed);
  std::map<std::filesystem::path, std::string> ref_of;
  const int width = static_cast<int>(std::to_string(paths.size()).size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::string ref = std::to_string(k);
    ref.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(ref.size()))), '0');
    ref = "img" + ref;
    ref_of[paths[order[k]]] = ref;
    s.images[ref] = paths[order[k]];
  }

  for (std::size_t i = 0; i < queries.size(); ++i) {
    CandidateSet c;
    c.query = ref_of.at(queries[i].query);
    for (std::size_t g : sets[i].gallery) c.candidates.push_back(ref_of.at(gallery[g]));
    c.ground_truth = sets[i].ground_truth;
    s.items.push_back(std::move(c));
  }
  s.validate();
  return s;
}

std::string AnswerEvent::to_json() const {
  json j;
  j["annotator"] = annotator;
  j["item"] = item;
  j["chosen"] = chosen ? json(*chosen) : json(nullptr);
  j["ts"] = ts;
  return j.dump();
}

AnswerEvent AnswerEvent::from_json(const std::string& line) {
  AnswerEvent e;
  try {
    const json j = json::parse(line);
    e.annotator = j.at("annotator").get<std::string>();
    e.item = j.at("item").get<std::size_t>();
    if (!j.at("chosen").is_null()) e.chosen = j.at("chosen").get<std::size_t>();
    e.ts = j.at("ts").get<double>();
  } catch (const json::exception& ex) {
    throw ProtocolError(std::string("answer event: ") + ex.what());
  }
  return e;
}

double AnnotatorScore::accuracy() const {
  return answered == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(answered);
}

std::string HumanReport::to_json() const {
  json j;
  json per = json::object();
  for (const auto& [id, s] : per_annotator) {
    per[id] = {{"accuracy", s.accuracy()},
               {"answered", s.answered},
               {"correct", s.correct},
               {"skipped", s.skipped}};
  }
  j["per_annotator"] = per;
  j["best"] = best;
  j["best_annotator"] = best_annotator;
  return j.dump(1);
}

HumanReport score_report(const Study& study, std::span<const AnswerEvent> events) {
  HumanReport r;
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& e : events) {
    if (!study.has_annotator(e.annotator) || e.item >= study.items.size()) {
      throw ProtocolError("event for unknown annotator or item: " + e.to_json());
    }
    if (!seen.insert({e.annotator, e.item}).second) continue;  // first answer stands
    auto& s = r.per_annotator[e.annotator];
    if (!e.chosen) {
      ++s.skipped;
      continue;
    }
    const auto order = study.display_order(e.annotator, e.item);
    if (*e.chosen >= order.size()) {
      throw ProtocolError("chosen index out of range: " + e.to_json());
    }
    ++s.answered;
    if (study.items[e.item].ground_truth[order[*e.chosen]]) ++s.correct;
  }
  std::erase_if(r.per_annotator, [](const auto& kv) { return kv.second.answered == 0; });
  if (r.per_annotator.empty()) throw ProtocolError("no answered items to score");
  for (const auto& [id, s] : r.per_annotator) {
    if (r.best_annotator.empty() || s.accuracy() > r.best) {
      r.best = s.accuracy();
      r.best_annotator = id;
    }
  }
  return r;
}

std::vector<AnswerEvent> read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<AnswerEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(AnswerEvent::from_json(line));
  }
  return out;
}

AnswerStore::AnswerStore(const Study& study, std::filesystem::path log)
    : study_(study), log_path_(std::move(log)) {
  for (const auto& a : study_.annotators) answered_[a].assign(study_.items.size(), false);
  if (log_path_.empty()) return;
  if (std::filesystem::exists(log_path_)) {
    for (const auto& e : read_events(log_path_)) {
      const auto status = apply(e);
      if (status != RecordStatus::kRecorded && status != RecordStatus::kDuplicate) {
        throw ProtocolError("event log " + log_path_.string() + " does not match the study: " +
                            e.to_json());
      }
    }
  }
  log_.open(log_path_, std::ios::app);
  if (!log_) throw std::runtime_error("cannot append to " + log_path_.string());
}

RecordStatus AnswerStore::apply(const AnswerEvent& e) {
  const auto it = answered_.find(e.annotator);
  if (it == answered_.end()) return RecordStatus::kUnknownAnnotator;
  if (e.item >= study_.items.size()) return RecordStatus::kUnknownItem;
  if (e.chosen && *e.chosen >= study_.items[e.item].candidates.size()) {
    return RecordStatus::kOutOfRange;
  }
  if (it->second[e.item]) return RecordStatus::kDuplicate;
  it->second[e.item] = true;
  events_.push_back(e);
  return RecordStatus::kRecorded;
}

std::optional<NextItem> AnswerStore::next(const std::string& annotator) const {
  std::lock_guard lock(mutex_);
  const auto it = answered_.find(annotator);
  if (it == answered_.end()) throw ProtocolError("unknown annotator " + annotator);
  const auto& done = it->second;
  const auto pos = std::find(done.begin(), done.end(), false);
  if (pos == done.end()) return std::nullopt;
  NextItem n;
  n.item = static_cast<std::size_t>(pos - done.begin());
  n.position = static_cast<std::size_t>(std::count(done.begin(), done.end(), true));
  n.total = done.size();
  const auto& set = study_.items[n.item];
  n.query = set.query;
  for (std::size_t k : study_.display_order(annotator, n.item)) {
    n.candidates.push_back(set.candidates[k]);
  }
  return n;
}

RecordStatus AnswerStore::record(const std::string& annotator, std::size_t item,
                                 std::optional<std::size_t> chosen) {
  std::lock_guard lock(mutex_);
  AnswerEvent e{annotator, item, chosen, now_seconds()};
  const auto status = apply(e);
  if (status == RecordStatus::kRecorded && log_.is_open()) {
    log_ << e.to_json() << '\n';
    log_.flush();
  }
  return status;
}

std::vector<AnswerEvent> AnswerStore::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

HumanReport AnswerStore::report() const {
  return score_report(study_, events());
}

}  // namespace areid::humaneval
