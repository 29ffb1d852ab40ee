#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relkit/common.hpp"
#include "relkit/eval.hpp"

namespace relkit {

class Corpus;

/// Head-averaged attention of one encoder layer for one sentence, in
/// model-token space. Row i is the attention distribution of token i.
struct AttentionRecord {
  std::string sentence_id;
  int layer = 0;
  int n = 0;
  std::vector<double> weights;     // n*n, row-major
  std::vector<bool> special_mask;  // true = special or padding token
  TokenSpan tok_e1;
  TokenSpan tok_e2;

  std::span<const double> row(int i) const {
    return {weights.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n),
            static_cast<std::size_t>(n)};
  }
  /// Throws DataError on shape, row-sum, span or non-finite violations.
  void validate() const;
  int content_token_count() const;
};

struct EmbeddingRecord {
  std::string sentence_id;
  int layer = 0;
  int n = 0;
  int d = 0;
  std::vector<float> values;  // n*d, row-major

  std::span<const float> row(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d),
            static_cast<std::size_t>(d)};
  }
};

/// Read-only view of a tensor pack directory. Index metadata and blob sizes
/// are validated when the pack is opened; blob contents are read on demand,
/// so a pack can be shared between threads.
class TensorPack {
 public:
  struct Entry {
    int n = 0;
    int d = 0;
    std::vector<bool> special_mask;
    TokenSpan tok_e1;
    TokenSpan tok_e2;
    std::map<int, std::filesystem::path> attention_files;
    std::map<int, std::filesystem::path> embedding_files;
  };

  static TensorPack open(const std::filesystem::path& dir);

  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  bool has_layer(const std::string& id, int layer) const;
  const Entry& entry(const std::string& id) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  const nlohmann::json& manifest() const { return manifest_; }

  AttentionRecord attention(const std::string& id, int layer) const;
  EmbeddingRecord embedding(const std::string& id, int layer) const;

 private:
  std::filesystem::path dir_;
  std::map<std::string, Entry> entries_;
  nlohmann::json manifest_;
};

inline TensorPack load_attention_pack(const std::filesystem::path& dir) {
  return TensorPack::open(dir);
}

/// Builds a pack directory: add() writes blobs immediately, finish() writes
/// index.json.
struct PackWriter {
  std::filesystem::path dir;
  nlohmann::ordered_json entries = nlohmann::ordered_json::object();
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();

  explicit PackWriter(std::filesystem::path out_dir);
  void add(const std::string& id, const std::vector<bool>& special_mask, TokenSpan tok_e1,
           TokenSpan tok_e2, const std::map<int, std::vector<float>>& attention_by_layer,
           const std::map<int, std::vector<float>>& embedding_by_layer = {}, int d = 0);
  void finish() const;
};

struct AttentionOptions {
  /// Zero special-token columns and renormalise over content tokens.
  bool mask_special = true;
};

/// Mean of the attention rows of a span (optionally masked and renormalised).
std::vector<double> entity_attention(const AttentionRecord& rec, TokenSpan span,
                                     const AttentionOptions& opts = {});

struct ContextDistribution {
  std::vector<double> weights;
  bool degenerate = false;
};

/// Normalised Hadamard product of two entity attention vectors. Zero overlap
/// yields the uniform distribution (over `support` when given) and sets the
/// degenerate flag.
ContextDistribution localized_context_distribution(std::span<const double> a1,
                                                   std::span<const double> a2,
                                                   const std::vector<bool>* support_mask = nullptr);

/// Natural-log KL(p || q) with 0 * log(0 / q) = 0. Throws std::domain_error
/// when p puts mass where q has none.
double kl_divergence(std::span<const double> p, std::span<const double> q);

enum class AttnMethod { kPicMI, kPicMIUp, kConEx };

AttnMethod parse_attn_method(const std::string& name);
std::string to_string(AttnMethod m);

/// Per-method statistics over an already computed context distribution.
/// Degenerate distributions score -inf for PicMI/PicMI-Up and 0 for ConEx.
double picmi_statistic(const ContextDistribution& ctx);
double picmi_up_statistic(const ContextDistribution& ctx, std::span<const double> a1,
                          std::span<const double> a2);
/// KL from the uniform distribution over unmasked positions (all positions
/// when support_mask is null).
double conex_statistic(const ContextDistribution& ctx,
                       const std::vector<bool>* support_mask = nullptr);

/// The scalar each method compares against its threshold:
/// PicMI - max of the context distribution; PicMI-Up - mean attention of the
/// two entities to the argmax token; ConEx - KL from the uniform distribution.
double attention_statistic(AttnMethod method, const AttentionRecord& rec,
                           const AttentionOptions& opts = {});

/// Every method predicts +1 iff statistic >= t.
Label picmi(const AttentionRecord& rec, double t, const AttentionOptions& opts = {});
Label picmi_up(const AttentionRecord& rec, double t, const AttentionOptions& opts = {});
Label conex(const AttentionRecord& rec, double t, const AttentionOptions& opts = {});

struct ThresholdRange {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;

  /// lo, lo+step, ..., hi (inclusive), rounded to 1e-10 to cancel drift.
  std::vector<double> values() const;
  static ThresholdRange defaults(AttnMethod method);
};

/// Statistic for every corpus record, in corpus order.
std::vector<double> attention_statistics(AttnMethod method, const Corpus& corpus,
                                         const TensorPack& pack, int layer,
                                         const AttentionOptions& opts = {}, int jobs = 1);

std::vector<Label> attention_predict_corpus(AttnMethod method, const Corpus& corpus,
                                            const TensorPack& pack, int layer, double t,
                                            const AttentionOptions& opts = {}, int jobs = 1);

/// One metrics row per threshold against the corpus gold labels.
std::vector<SweepRow> sweep_thresholds(AttnMethod method, const Corpus& corpus,
                                       const TensorPack& pack, int layer,
                                       const ThresholdRange& range,
                                       const AttentionOptions& opts = {}, int jobs = 1);

inline constexpr int kDefaultLayers[] = {10, 11};

}  // namespace relkit
