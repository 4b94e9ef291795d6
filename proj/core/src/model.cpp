#include "condfilter/model.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace condfilter {

std::vector<double> SampleRecord::effective_surrogates() const {
  std::vector<double> out;
  out.reserve(generations.size());
  for (const auto& g : generations) out.push_back(g.effective_surrogate());
  return out;
}

std::vector<double> SampleRecord::raw_surrogates() const {
  std::vector<double> out;
  out.reserve(generations.size());
  for (const auto& g : generations) out.push_back(g.surrogate_score);
  return out;
}

std::vector<double> SampleRecord::golds() const {
  std::vector<double> out;
  out.reserve(generations.size());
  for (const auto& g : generations) {
    if (!g.gold_score) {
      throw ValidationError({{ViolationKind::kMissingGold, sample_id, g.gen_id,
                              "generation has no gold score"}});
    }
    out.push_back(*g.gold_score);
  }
  return out;
}

bool SampleRecord::has_gold() const {
  if (generations.empty()) return false;
  for (const auto& g : generations) {
    if (!g.gold_score) return false;
  }
  return true;
}

bool SampleRecord::operator==(const SampleRecord& other) const {
  return sample_id == other.sample_id && label == other.label &&
         embedding.size() == other.embedding.size() &&
         embedding == other.embedding && generations == other.generations;
}

void FilterConfig::validate() const {
  std::vector<Violation> v;
  auto bad = [&](const std::string& msg) {
    v.push_back({ViolationKind::kInvalidConfig, "", "", msg});
  };
  if (!(alpha > 0.0 && alpha < 1.0)) bad("alpha must lie in (0,1)");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) bad("gamma must be positive");
  if (rho < 0) bad("rho must be nonnegative");
  if (!(lambda >= 0.0 && lambda <= 1.0)) bad("lambda must lie in [0,1]");
  if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth))) {
    bad("bandwidth must be positive or auto");
  }
  if (!(bisection_tol > 0.0)) bad("bisection_tol must be positive");
  if (!(solver_tol > 0.0)) bad("solver_tol must be positive");
  if (!v.empty()) throw ValidationError(std::move(v));
}

FilterDecision decide_by_cutoff(const SampleRecord& record, double cutoff) {
  FilterDecision d;
  d.sample_id = record.sample_id;
  d.cutoff = cutoff;
  for (const auto& g : record.generations) {
    if (g.effective_surrogate() >= cutoff) {
      d.kept.push_back(g.gen_id);
    } else {
      d.dropped.push_back(g.gen_id);
    }
  }
  return d;
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyDataset: return "empty dataset";
    case ViolationKind::kDimensionMismatch: return "dimension mismatch";
    case ViolationKind::kScoreOutOfRange: return "score out of range";
    case ViolationKind::kNonFinite: return "non-finite value";
    case ViolationKind::kMissingGold: return "missing gold";
    case ViolationKind::kDuplicateId: return "duplicate id";
    case ViolationKind::kEmptyGenerations: return "empty generations";
    case ViolationKind::kInvalidConfig: return "invalid config";
  }
  return "unknown";
}

namespace {

std::string summarize(const std::vector<Violation>& violations) {
  std::ostringstream os;
  os << violations.size() << " validation error(s)";
  std::size_t shown = 0;
  for (const auto& v : violations) {
    if (shown++ == 5) {
      os << "; ...";
      break;
    }
    os << "; " << to_string(v.kind);
    if (!v.sample_id.empty()) os << " [" << v.sample_id;
    if (!v.gen_id.empty()) os << "/" << v.gen_id;
    if (!v.sample_id.empty()) os << "]";
    if (!v.message.empty()) os << ": " << v.message;
  }
  return os.str();
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : std::runtime_error(summarize(violations)),
      violations_(std::move(violations)) {}

ValidationError::ValidationError(const std::string& message)
    : std::runtime_error(message) {}

std::vector<Violation> check_dataset(const Dataset& records, bool require_gold) {
  std::vector<Violation> out;
  if (records.empty()) {
    out.push_back({ViolationKind::kEmptyDataset, "", "", "no records"});
    return out;
  }
  const Eigen::Index dim = records.front().embedding.size();
  std::unordered_set<std::string> sample_ids;
  for (const auto& r : records) {
    if (!sample_ids.insert(r.sample_id).second) {
      out.push_back({ViolationKind::kDuplicateId, r.sample_id, "",
                     "sample_id appears more than once"});
    }
    if (r.embedding.size() != dim) {
      std::ostringstream msg;
      msg << "embedding has dimension " << r.embedding.size() << ", expected "
          << dim;
      out.push_back({ViolationKind::kDimensionMismatch, r.sample_id, "", msg.str()});
    }
    if (!r.embedding.allFinite()) {
      out.push_back({ViolationKind::kNonFinite, r.sample_id, "",
                     "embedding contains non-finite entries"});
    }
    if (r.generations.empty()) {
      out.push_back({ViolationKind::kEmptyGenerations, r.sample_id, "",
                     "record has no generations"});
    }
    std::unordered_set<std::string> gen_ids;
    for (const auto& g : r.generations) {
      if (!gen_ids.insert(g.gen_id).second) {
        out.push_back({ViolationKind::kDuplicateId, r.sample_id, g.gen_id,
                       "gen_id appears more than once in the record"});
      }
      if (!std::isfinite(g.surrogate_score)) {
        out.push_back({ViolationKind::kNonFinite, r.sample_id, g.gen_id,
                       "surrogate score is not finite"});
      } else if (!in_unit_interval(g.surrogate_score)) {
        out.push_back({ViolationKind::kScoreOutOfRange, r.sample_id, g.gen_id,
                       "surrogate score outside [0,1]"});
      }
      if (g.gold_score) {
        if (!std::isfinite(*g.gold_score)) {
          out.push_back({ViolationKind::kNonFinite, r.sample_id, g.gen_id,
                         "gold score is not finite"});
        } else if (!in_unit_interval(*g.gold_score)) {
          out.push_back({ViolationKind::kScoreOutOfRange, r.sample_id, g.gen_id,
                         "gold score outside [0,1]"});
        }
      } else if (require_gold) {
        out.push_back({ViolationKind::kMissingGold, r.sample_id, g.gen_id,
                       "gold score required"});
      }
      if (g.smoothed_surrogate && !std::isfinite(*g.smoothed_surrogate)) {
        out.push_back({ViolationKind::kNonFinite, r.sample_id, g.gen_id,
                       "smoothed surrogate is not finite"});
      }
    }
  }
  return out;
}

Dataset validate_dataset(const Dataset& records, bool require_gold) {
  auto violations = check_dataset(records, require_gold);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return records;
}

Eigen::Index embedding_dimension(const Dataset& records) {
  if (records.empty()) throw ValidationError("empty dataset has no dimension");
  return records.front().embedding.size();
}

}  // namespace condfilter
