#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relkit/common.hpp"

namespace relkit {

/// Confusion counts with +1 as the positive class. Zero denominators yield 0.
struct Metrics {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  /// Derives precision, recall and F1 from the counts.
  static Metrics from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                             std::uint64_t tn);
};

Metrics score(std::span<const Label> preds, std::span<const Label> golds);
/// Id-keyed variant; both maps must cover the same ids.
Metrics score(const std::map<std::string, Label>& preds,
              const std::map<std::string, Label>& golds);

struct CrossValidationResult {
  std::vector<Metrics> folds;
  /// Arithmetic mean of per-fold precision/recall/F1; counts are summed.
  Metrics mean;
  /// Metrics recomputed from the summed counts.
  Metrics pooled;
};

using FoldRunner = std::function<Metrics(int fold)>;

/// Runs every fold (in parallel when jobs > 1) and aggregates in fold order.
CrossValidationResult cross_validate(int k, const FoldRunner& runner, int jobs = 1);

/// Echo of the configuration that produced a metrics object.
struct RunEcho {
  std::string method;
  std::optional<int> layer;
  std::optional<double> threshold;
  std::optional<double> pi_plus;
  std::optional<std::uint64_t> seed;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

/// Metrics object with fixed field order: counts, rates, then the config echo.
nlohmann::ordered_json metrics_to_json(const Metrics& m, const RunEcho& echo);
Metrics metrics_from_json(const nlohmann::json& j);
nlohmann::ordered_json cross_validation_to_json(const CrossValidationResult& cv,
                                                const RunEcho& echo);

struct SweepRow {
  double threshold = 0.0;
  Metrics metrics;
  std::uint64_t predicted_positive = 0;
};

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
/// Comma-separated table sorted by threshold, with header.
void write_sweep_csv(const std::filesystem::path& path, std::vector<SweepRow> rows,
                     const RunEcho& echo);
std::string format_real(double v);

/// Flattens metrics objects into one table; each input must be a metrics
/// object or a cross-validation object (its mean row is used).
void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, nlohmann::json>>& results);

}  // namespace relkit
