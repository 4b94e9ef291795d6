#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace condfilter {

/// One generation candidate attached to a source sample.
struct ScoredGeneration {
  std::string gen_id;
  double surrogate_score = 0.0;
  std::optional<double> gold_score;
  // Replacement for surrogate_score once a surrogate learner has been applied.
  std::optional<double> smoothed_surrogate;

  /// The score filtering compares against: the smoothed value when present.
  double effective_surrogate() const {
    return smoothed_surrogate.value_or(surrogate_score);
  }

  bool operator==(const ScoredGeneration&) const = default;
};

/// A source sample, its conditioning embedding and its K generations.
struct SampleRecord {
  std::string sample_id;
  Eigen::VectorXd embedding;
  std::string label;
  std::vector<ScoredGeneration> generations;

  std::vector<double> effective_surrogates() const;
  std::vector<double> raw_surrogates() const;
  // Throws ValidationError if any generation lacks a gold score.
  std::vector<double> golds() const;
  bool has_gold() const;

  bool operator==(const SampleRecord& other) const;
};

using Dataset = std::vector<SampleRecord>;

enum class Randomization { kRandomized, kDeterministic };

/// Risk-control hyperparameters shared by every stage of the pipeline.
struct FilterConfig {
  double lambda = 0.5;          // gold quality threshold
  int rho = 0;                  // tolerated false inclusions per sample
  double alpha = 0.1;           // miscoverage level
  double gamma = 1.0;           // RKHS regularization
  std::optional<double> bandwidth;  // RBF xi; nullopt means "auto"
  Randomization randomization = Randomization::kRandomized;
  std::uint64_t rng_seed = 0;
  double bisection_tol = 1e-8;
  double solver_tol = 1e-8;

  // Throws ValidationError describing every violated constraint.
  void validate() const;

  bool operator==(const FilterConfig&) const = default;
};

/// Per-sample cutoff and the resulting kept/dropped partition of gen ids.
struct FilterDecision {
  std::string sample_id;
  double cutoff = 0.0;
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
  std::optional<double> coverage_gap_estimate;

  bool operator==(const FilterDecision&) const = default;
};

/// Splits a record's generations by `score >= cutoff` on the effective
/// surrogate.
FilterDecision decide_by_cutoff(const SampleRecord& record, double cutoff);

enum class ViolationKind {
  kEmptyDataset,
  kDimensionMismatch,
  kScoreOutOfRange,
  kNonFinite,
  kMissingGold,
  kDuplicateId,
  kEmptyGenerations,
  kInvalidConfig,
};

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string sample_id;
  std::string gen_id;
  std::string message;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  explicit ValidationError(const std::string& message);

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Collects every invariant violation without throwing.
std::vector<Violation> check_dataset(const Dataset& records, bool require_gold);

/// Returns the dataset unchanged when it is well formed; throws
/// ValidationError listing all violations otherwise. Idempotent.
Dataset validate_dataset(const Dataset& records, bool require_gold);

/// Embedding dimension shared by a validated, nonempty dataset.
Eigen::Index embedding_dimension(const Dataset& records);

}  // namespace condfilter
