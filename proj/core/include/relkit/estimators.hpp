#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relkit/common.hpp"

namespace relkit {

/// ln(1 + exp(-margin)), overflow-free.
double logistic_loss(double margin);
inline double logistic_loss(double score, Label y) { return logistic_loss(to_int(y) * score); }
/// d/dscore of logistic_loss(score, y).
double logistic_loss_grad(double score, Label y);
double sigmoid(double x);

enum class Estimator {
  kBinaryBiased,
  kUU,
  kPcompUnbiased,
  kPcompReLU,
  kPcompABS,
  kNoisyUnbiased,
  kRankPruning,
  kPcompTeacher,
};

inline constexpr Estimator kAllEstimators[] = {
    Estimator::kBinaryBiased,  Estimator::kUU,           Estimator::kPcompUnbiased,
    Estimator::kPcompReLU,     Estimator::kPcompABS,     Estimator::kNoisyUnbiased,
    Estimator::kRankPruning,   Estimator::kPcompTeacher,
};

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& name);

enum class Correction { kReLU, kAbs };

/// Empirical risk over a pos/neg batch and its derivative w.r.t. every score.
struct RiskValue {
  double value = 0.0;
  std::vector<double> grad_pos;
  std::vector<double> grad_neg;
};

/// Mean l(s,+1) over pos plus mean l(s,-1) over neg, optionally weighted per set.
RiskValue risk_binary_biased(std::span<const double> pos, std::span<const double> neg,
                             double weight_pos = 1.0, double weight_neg = 1.0);

/// Unbiased risk from two unlabelled sets with class priors theta (set a)
/// and theta_p (set b).
RiskValue risk_uu(std::span<const double> a, std::span<const double> b, double theta,
                  double theta_p, double pi_plus);

/// Unbiased pairwise-comparison risk; may be negative.
RiskValue risk_pcomp_unbiased(std::span<const double> pos, std::span<const double> neg,
                              double pi_plus);

/// Pairwise-comparison risk with a correction function applied to each of
/// its two partial sums.
RiskValue risk_pcomp_corrected(std::span<const double> pos, std::span<const double> neg,
                               double pi_plus, Correction g);

/// A pair of per-side noise rates. noise_rates_from_prior fills it with
/// mislabelled fractions of each set, flip_rates_from_prior with flip
/// probabilities per true class.
struct NoiseRates {
  double eta_pos = 0.0;
  double eta_neg = 0.0;
};

/// eta_pos: truly-negative fraction of the pos set; eta_neg: truly-positive
/// fraction of the neg set.
NoiseRates noise_rates_from_prior(double pi_plus);

/// Class-conditional flip probabilities for equal-sized pos/neg sets drawn
/// from the pairwise mixture: eta_pos = P(in neg set | truly +1), eta_neg =
/// P(in pos set | truly -1). These are what loss_noisy_unbiased expects.
NoiseRates flip_rates_from_prior(double pi_plus);

double loss_noisy_unbiased(double score, Label noisy_label, const NoiseRates& rates);
double loss_noisy_unbiased_grad(double score, Label noisy_label, const NoiseRates& rates);
/// Mean corrected loss over pos (noisy +1) plus mean over neg (noisy -1).
RiskValue risk_noisy_unbiased(std::span<const double> pos, std::span<const double> neg,
                              const NoiseRates& rates);

struct TeacherConfig {
  double ema_decay = 0.99;
  double lambda_max = 1.0;
  int ramp_epochs = 5;
};

enum class RatesMode { kTheory, kEstimate };

struct EstimatorConfig {
  Estimator method = Estimator::kPcompUnbiased;
  double pi_plus = 0.5;
  std::optional<std::pair<double, double>> uu_thetas;
  TeacherConfig teacher;
  RatesMode rates_mode = RatesMode::kTheory;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for out-of-range priors or missing thetas.
  void validate() const;
};

/// Per-run quantities the objective needs beyond the scores themselves.
struct ObjectiveContext {
  double weight_pos = 1.0;  // rank-pruning reweighting
  double weight_neg = 1.0;
  /// Consistency target for pcomp_teacher; empty disables the term.
  std::span<const double> teacher_pos;
  std::span<const double> teacher_neg;
  double consistency_weight = 0.0;
};

/// Base risk of the configured estimator (plus the consistency term for
/// pcomp_teacher when teacher scores are supplied).
RiskValue objective(const EstimatorConfig& cfg, std::span<const double> pos,
                    std::span<const double> neg, const ObjectiveContext& ctx = {});

/// lambda * mean over both sets of (sigmoid(s) - sigmoid(t))^2, accumulated
/// into an existing RiskValue.
void add_consistency(RiskValue& risk, std::span<const double> pos, std::span<const double> neg,
                     std::span<const double> teacher_pos, std::span<const double> teacher_neg,
                     double lambda);

}  // namespace relkit
