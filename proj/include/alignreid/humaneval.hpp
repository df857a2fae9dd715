#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace areid::humaneval {

inline constexpr std::size_t kSingleGtSetSize = 10;
inline constexpr std::size_t kMultiGtSetSize = 50;

enum class Mode {
  kSingleGt,  // one ground truth per query, 10 candidates
  kMultiGt,   // every ground truth present, 50 candidates
};

const char* mode_name(Mode mode);
Mode parse_mode(const std::string& name);

class ProtocolError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Candidates in model order after ground-truth injection.
struct Candidates {
  std::vector<std::size_t> gallery;  // gallery indices
  std::vector<bool> ground_truth;
};

// Top 10 of `ranked`; a ground truth outside it takes position 10.
Candidates single_gt_candidates(std::span<const std::size_t> ranked, std::size_t gt);

// Top 50 of `ranked`. Missing ground truths, taken in ascending model rank
// (absent ones last, by index), each replace the lowest-ranked non-GT entry.
Candidates multi_gt_candidates(std::span<const std::size_t> ranked,
                               std::span<const std::size_t> gts);

// Seeded permutation of 0..n-1; displayed[k] is the candidate shown at k.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

struct CandidateSet {
  std::string query;                    // image ref
  std::vector<std::string> candidates;  // image refs, model order
  std::vector<bool> ground_truth;       // never sent to clients
};

// The item list every annotator works through, plus the opaque image refs.
struct Study {
  Mode mode = Mode::kSingleGt;
  std::uint64_t seed = 0;
  std::vector<std::string> annotators;
  std::vector<CandidateSet> items;
  std::map<std::string, std::filesystem::path> images;  // ref -> file

  void validate() const;
  bool has_annotator(const std::string& id) const;
  // Display order of `item` for `annotator`, derived from the study seed.
  std::vector<std::size_t> display_order(const std::string& annotator, std::size_t item) const;

  std::string to_json() const;
  static Study from_json(const std::string& text, const std::filesystem::path& base = {});
  void save(const std::filesystem::path& path) const;  // image paths stored relative to it
  static Study load(const std::filesystem::path& path);
};

struct QueryCase {
  std::filesystem::path query;
  std::vector<std::size_t> ranked;  // model rank list over the gallery
  std::vector<std::size_t> gts;     // admissible ground truths
};

// Builds the item list. Image refs come from a seeded permutation of the
// sorted paths so they carry no rank or identity information.
Study build_study(Mode mode, std::span<const QueryCase> queries,
                  std::span<const std::filesystem::path> gallery,
                  std::vector<std::string> annotators, std::uint64_t seed);

struct AnswerEvent {
  std::string annotator;
  std::size_t item = 0;
  std::optional<std::size_t> chosen;  // displayed index; empty = skipped
  double ts = 0.0;                    // unix seconds

  std::string to_json() const;
  static AnswerEvent from_json(const std::string& line);
};

struct AnnotatorScore {
  std::size_t answered = 0;  // skips excluded
  std::size_t correct = 0;
  std::size_t skipped = 0;
  double accuracy() const;
};

struct HumanReport {
  std::map<std::string, AnnotatorScore> per_annotator;  // only annotators with answers
  std::string best_annotator;
  double best = 0.0;

  std::string to_json() const;
};

// Throws when no annotator has answered anything.
HumanReport score_report(const Study& study, std::span<const AnswerEvent> events);

std::vector<AnswerEvent> read_events(const std::filesystem::path& path);

struct NextItem {
  std::size_t item = 0;
  std::size_t position = 0;  // items already answered or skipped
  std::size_t total = 0;
  std::string query;
  std::vector<std::string> candidates;  // refs in display order
};

enum class RecordStatus {
  kRecorded,
  kDuplicate,
  kUnknownAnnotator,
  kUnknownItem,
  kOutOfRange,
};

// Serially consistent answer store backed by an append-only JSON-lines log.
class AnswerStore {
 public:
  // Replays `log` when it exists; an empty path keeps events in memory only.
  AnswerStore(const Study& study, std::filesystem::path log);

  std::optional<NextItem> next(const std::string& annotator) const;  // empty when done
  RecordStatus record(const std::string& annotator, std::size_t item,
                      std::optional<std::size_t> chosen);
  std::vector<AnswerEvent> events() const;
  HumanReport report() const;

 private:
  const Study& study_;
  std::filesystem::path log_path_;
  std::ofstream log_;
  mutable std::mutex mutex_;
  std::vector<AnswerEvent> events_;
  std::map<std::string, std::vector<bool>> answered_;

  RecordStatus apply(const AnswerEvent& e);
};

}  // namespace areid::humaneval
