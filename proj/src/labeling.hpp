#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fussl {

enum class LabelMode { kFuzzy, kHardOnly, kSoftOnly };

// Either one class index (hard) or a sparse membership distribution over
// 2..m pseudo-classes summing to 1 (soft).
struct FuzzyLabel {
  enum class Kind { kHard, kSoft };
  Kind kind = Kind::kHard;
  std::uint32_t hard_class = 0;
  // Soft memberships, sorted by class id, weights summing to 1.
  std::vector<std::pair<std::uint32_t, double>> memberships;

  bool is_hard() const { return kind == Kind::kHard; }
  // Highest-weight class (hard class for hard labels; weight ties break
  // toward the lower class id).
  std::uint32_t top_class() const;
};

// One ensemble block's opinion about a sample: the argmax pseudo-class of
// its normalized (softmax) projector output and that maximum value.
struct BlockVote {
  std::uint32_t pseudo_class = 0;
  double confidence = 0.0;
};

// The fuzzy labeling rule applied to one sample's block votes.
//
//  - fuzzy: a strict-majority class (count > m/2) gives a hard label;
//    otherwise a soft label over the distinct voted classes, each weighted
//    by the summed confidence of its voters, renormalized to 1.
//  - hard-only: plurality vote; ties break by summed confidence, then by
//    the lowest class id.
//  - soft-only: memberships over the distinct voted classes weighted by
//    vote counts; a unanimous vote still collapses to a hard label (a
//    one-class membership map is not a soft label).
//
// A single block (m = 1) always yields a hard label.
FuzzyLabel label_from_votes(const std::vector<BlockVote>& votes,
                            LabelMode mode);

void validate_label(const FuzzyLabel& label, std::size_t ensemble_size);

LabelMode parse_label_mode(const std::string& text);
std::string label_mode_name(LabelMode mode);

}  // namespace fussl
