#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relkit {

/// Binary relation label. Positive means "semantic relation".
enum class Label : std::int8_t { kNegative = -1, kPositive = 1 };

inline constexpr int to_int(Label y) { return static_cast<int>(y); }
inline constexpr Label flip(Label y) {
  return y == Label::kPositive ? Label::kNegative : Label::kPositive;
}
/// Sign rule shared by every scorer: ties go to the positive class.
inline constexpr Label label_from_score(double score) {
  return score >= 0.0 ? Label::kPositive : Label::kNegative;
}

std::string to_string(Label y);          // "+1" / "-1"
Label parse_label(std::string_view text);  // accepts +1, 1, -1, P, N

/// Inclusive token-index span.
struct TokenSpan {
  int start = 0;
  int end = 0;

  constexpr int size() const { return end - start + 1; }
  constexpr bool contains(int i) const { return i >= start && i <= end; }
  constexpr bool overlaps(const TokenSpan& o) const {
    return start <= o.end && o.start <= end;
  }
  constexpr bool valid_for(int n) const {
    return start >= 0 && start <= end && end < n;
  }
  friend constexpr bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Malformed or inconsistent input data (files, records). Maps to CLI exit 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic random stream. The raw engine output of mt19937_64 is fixed
/// by the standard; the distributions below are implemented here so that
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Uniform real in [0, 1).
  double uniform01();
  double normal();
  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  /// Independent child stream, for handing one generator to each worker.
  Rng split() { return Rng(next() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions from
/// workers are rethrown on the caller after all workers finish.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

/// Raw little-endian float32 blobs.
std::vector<float> read_f32_le(const std::filesystem::path& path);
void write_f32_le(const std::filesystem::path& path, std::span<const float> values);

/// Rounds half away from zero for non-negative input (round-half-up).
std::size_t round_half_up(double x);

}  // namespace relkit
