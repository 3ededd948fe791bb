#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framing/error.hpp"
#include "framing/numeric.hpp"

namespace framing {

enum class FramingLabel { A, B };

inline const char* to_string(FramingLabel label) { return label == FramingLabel::A ? "A" : "B"; }

inline FramingLabel other(FramingLabel label) {
  return label == FramingLabel::A ? FramingLabel::B : FramingLabel::A;
}

// Summed natural-log probability of a scored text. Always finite.
class LogProbTotal {
 public:
  LogProbTotal() = default;

  explicit LogProbTotal(double value, std::string_view field = "value") : value_(value) {
    if (!std::isfinite(value)) {
      throw InvalidArgument(std::string(field) + " must be finite, got " + std::to_string(value));
    }
  }

  double value() const noexcept { return value_; }

  friend bool operator==(const LogProbTotal&, const LogProbTotal&) = default;

 private:
  double value_ = 0.0;
};

// log p(x | s), obtained as p_sx - p_s. Both totals are kept for audit.
struct ConditionalLogProb {
  LogProbTotal prefix_total;
  LogProbTotal joint_total;
  double value = 0.0;
  std::string target_id;
};

inline ConditionalLogProb conditional_logprob(double prefix_total, double joint_total,
                                              std::string target_id = {}) {
  LogProbTotal prefix(prefix_total, "prefix_total");
  LogProbTotal joint(joint_total, "joint_total");
  return {prefix, joint, joint.value() - prefix.value(), std::move(target_id)};
}

struct DeltaRecord {
  std::string conditioner_a_id;
  std::string conditioner_b_id;
  std::string target_id;
  ConditionalLogProb lp_a;
  ConditionalLogProb lp_b;
  double delta = 0.0;
};

// Δ(s_a, s_b, x) = lp(x|s_a) - lp(x|s_b); positive means x leans toward A.
inline DeltaRecord delta(ConditionalLogProb lp_a, ConditionalLogProb lp_b,
                         std::string conditioner_a_id, std::string conditioner_b_id) {
  if (lp_a.target_id != lp_b.target_id) {
    throw InvalidArgument("delta over different targets: '" + lp_a.target_id + "' vs '" +
                          lp_b.target_id + "'");
  }
  DeltaRecord record;
  record.conditioner_a_id = std::move(conditioner_a_id);
  record.conditioner_b_id = std::move(conditioner_b_id);
  record.target_id = lp_a.target_id;
  record.delta = lp_a.value - lp_b.value;
  record.lp_a = std::move(lp_a);
  record.lp_b = std::move(lp_b);
  return record;
}

// Exchanges the roles of the two conditioners; the delta is negated.
inline DeltaRecord swapped(const DeltaRecord& record) {
  return delta(record.lp_b, record.lp_a, record.conditioner_b_id, record.conditioner_a_id);
}

struct Classification {
  FramingLabel label = FramingLabel::B;
  double aggregate_delta = 0.0;
  bool tie = false;
};

// Label from a sign. Exact zero goes to B and is flagged.
inline Classification classify_score(double score) {
  if (score > 0.0) return {FramingLabel::A, score, false};
  if (score < 0.0) return {FramingLabel::B, score, false};
  return {FramingLabel::B, 0.0, true};
}

// Mean of the deltas (correctly rounded, so order never matters), then sign.
inline Classification classify(std::span<const DeltaRecord> records) {
  if (records.empty()) throw InvalidArgument("classify needs at least one delta record");
  std::vector<double> deltas;
  deltas.reserve(records.size());
  for (const auto& r : records) {
    if (r.target_id != records.front().target_id) {
      throw InvalidArgument("classify over mixed targets: '" + records.front().target_id +
                            "' and '" + r.target_id + "'");
    }
    deltas.push_back(r.delta);
  }
  return classify_score(exact_mean(deltas));
}

}  // namespace framing
