#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relkit/common.hpp"

namespace relkit {

class Corpus;

/// `first` is the instance with the higher likelihood of being positive.
struct ComparisonPair {
  std::size_t first = 0;
  std::size_t second = 0;
  friend bool operator==(const ComparisonPair&, const ComparisonPair&) = default;
};

struct PairGeneration {
  std::vector<ComparisonPair> pairs;
  std::uint64_t accepted = 0;
  std::uint64_t drawn = 0;

  double acceptance_rate() const {
    return drawn == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(drawn);
  }
};

/// Draws ordered index pairs uniformly with replacement and keeps every pair
/// except (-1, +1) until n_pairs are accepted. Labels are gold (GoDaG) or
/// frozen silver predictions (SoDaG); the sampler does not distinguish.
PairGeneration generate_pairs(std::span<const Label> labels, std::size_t n_pairs,
                              std::uint64_t seed);

/// Unlabelled pointwise sets obtained from comparison pairs.
struct PointwiseSets {
  std::vector<std::size_t> pos_set;  // first elements
  std::vector<std::size_t> neg_set;  // second elements
  std::string label_source = "gold";  // "gold" or "silver:<method>"
  double pi_plus = 0.5;
};

PointwiseSets split_pointwise(std::span<const ComparisonPair> pairs,
                              std::string label_source = "gold", double pi_plus = 0.5);

inline constexpr double kPriorGrid[] = {0.3, 0.4, 0.5, 0.6};

void check_prior(double pi_plus);

struct MixtureWeights {
  double pos = 0.0;  // true-positive fraction of the pos set
  double neg = 0.0;  // true-positive fraction of the neg set
};

/// pos = pi+ / (pi-^2 + pi+), neg = pi+^2 / (pi+^2 + pi-).
MixtureWeights mixture_weights(double pi_plus);

struct PriorRoots {
  double pi_tilde = 0.0;  // accepted / drawn = pi+^2 + pi-
  double low = 0.0;
  double high = 0.0;
};

/// Solves pi+^2 - pi+ + (1 - pi_tilde) = 0. Both roots are returned because
/// which class dominates cannot be known from the counts alone.
PriorRoots estimate_prior_from_acceptance(std::uint64_t accepted, std::uint64_t drawn);

nlohmann::ordered_json generation_report(const PairGeneration& gen, const std::string& label_source,
                                         std::uint64_t seed);

/// Pair file: `<first_id>\t<second_id>` per line.
void write_pairs(const std::filesystem::path& path, std::span<const ComparisonPair> pairs,
                 const Corpus& corpus);
std::vector<ComparisonPair> read_pairs(const std::filesystem::path& path, const Corpus& corpus);

/// Sets file: `<id>\tP` lines for the pos set followed by `<id>\tN` lines.
void write_sets(const std::filesystem::path& path, const PointwiseSets& sets,
                const Corpus& corpus);
PointwiseSets read_sets(const std::filesystem::path& path, const Corpus& corpus);

/// Label file shared by predictions and silver labels: `<id>\t<+1|-1>`.
void write_labels(const std::filesystem::path& path, std::span<const Label> labels,
                  const Corpus& corpus);
/// Returns labels in corpus order; every corpus id must be present.
std::vector<Label> read_labels(const std::filesystem::path& path, const Corpus& corpus);

/// ConEx silver-label configuration per benchmark dataset.
struct SilverConEx {
  int layer = 10;
  double threshold = 0.08;
};
std::optional<SilverConEx> default_conex_silver(const std::string& dataset);

}  // namespace relkit
