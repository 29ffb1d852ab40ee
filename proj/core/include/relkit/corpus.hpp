#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relkit/common.hpp"

namespace relkit {

struct SentenceRecord {
  std::string id;
  std::vector<std::string> tokens;
  TokenSpan e1;
  TokenSpan e2;
  std::optional<Label> gold_label;

  int token_count() const { return static_cast<int>(tokens.size()); }
  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

/// How records with overlapping entity spans are treated while loading.
enum class Strictness { kStrict, kLenient };

/// Immutable, validated collection of sentence records.
class Corpus {
 public:
  Corpus() = default;
  /// Validates every record; throws DataError on the first violation.
  explicit Corpus(std::vector<SentenceRecord> records);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const SentenceRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<SentenceRecord>& records() const { return records_; }
  std::optional<std::size_t> index_of(const std::string& id) const;
  /// Like index_of but throws DataError naming the id.
  std::size_t require_index(const std::string& id) const;

  /// Gold labels in record order; throws DataError if any is missing.
  std::vector<Label> gold_labels() const;

 private:
  std::vector<SentenceRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct CorpusLoadStats {
  std::size_t lines = 0;
  std::size_t skipped_overlap = 0;
};

/// Reads the line-delimited JSON corpus format. In strict mode an overlapping
/// entity pair is an error; in lenient mode the record is skipped and counted.
Corpus load_corpus(const std::filesystem::path& path, Strictness mode = Strictness::kStrict,
                   CorpusLoadStats* stats = nullptr);
Corpus read_corpus(std::istream& in, const std::string& source_name,
                   Strictness mode = Strictness::kStrict, CorpusLoadStats* stats = nullptr);

void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
void write_corpus(std::ostream& out, const Corpus& corpus);

/// Fraction of +1 gold labels. Every record must be labelled.
double empirical_prior(const Corpus& corpus);

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // record index -> fold id in [0, k)

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Shuffled round-robin assignment; fold sizes differ by at most one.
FoldPlan make_folds(const Corpus& corpus, int k, std::uint64_t seed);

/// Reads `<id>\t<fold>` lines. Every corpus record must be assigned exactly
/// once; k is one past the largest fold id and every fold must be non-empty.
FoldPlan load_fold_file(const std::filesystem::path& path, const Corpus& corpus);
void write_fold_file(const std::filesystem::path& path, const FoldPlan& plan,
                     const Corpus& corpus);

struct TrainDevSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
};

/// Holds out round-half-up(fraction * n) indices as the development set.
TrainDevSplit split_train_dev(std::span<const std::size_t> records, double fraction,
                              std::uint64_t seed);

}  // namespace relkit
