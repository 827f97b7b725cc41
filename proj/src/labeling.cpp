#include "labeling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "error.hpp"

namespace fussl {

namespace {

struct ClassTally {
  std::size_t votes = 0;
  double confidence = 0.0;
};

FuzzyLabel hard_label(std::uint32_t cls) {
  FuzzyLabel label;
  label.kind = FuzzyLabel::Kind::kHard;
  label.hard_class = cls;
  return label;
}

FuzzyLabel soft_label(const std::map<std::uint32_t, ClassTally>& tally,
                      bool weight_by_votes) {
  FuzzyLabel label;
  label.kind = FuzzyLabel::Kind::kSoft;
  double total = 0.0;
  for (const auto& [cls, t] : tally) {
    const double w =
        weight_by_votes ? static_cast<double>(t.votes) : t.confidence;
    label.memberships.emplace_back(cls, w);
    total += w;
  }
  for (auto& [cls, w] : label.memberships) w /= total;
  return label;
}

}  // namespace

std::uint32_t FuzzyLabel::top_class() const {
  if (is_hard()) return hard_class;
  std::uint32_t best = memberships.front().first;
  double best_w = memberships.front().second;
  for (const auto& [cls, w] : memberships) {
    if (w > best_w) {
      best = cls;
      best_w = w;
    }
  }
  return best;
}

FuzzyLabel label_from_votes(const std::vector<BlockVote>& votes,
                            LabelMode mode) {
  if (votes.empty()) throw std::invalid_argument("label_from_votes: no votes");

  const std::size_t m = votes.size();
  std::map<std::uint32_t, ClassTally> tally;
  for (const auto& vote : votes) {
    auto& t = tally[vote.pseudo_class];
    ++t.votes;
    t.confidence += vote.confidence;
  }

  if (tally.size() == 1) return hard_label(tally.begin()->first);

  if (mode == LabelMode::kHardOnly) {
    // Plurality; ties by summed confidence, then lowest class id (the map
    // iterates ascending, so strict > keeps the lowest).
    std::uint32_t best = tally.begin()->first;
    ClassTally best_t = tally.begin()->second;
    for (const auto& [cls, t] : tally) {
      if (t.votes > best_t.votes ||
          (t.votes == best_t.votes && t.confidence > best_t.confidence)) {
        best = cls;
        best_t = t;
      }
    }
    return hard_label(best);
  }

  if (mode == LabelMode::kSoftOnly) return soft_label(tally, true);

  // Fuzzy: strict majority wins, otherwise confidence-weighted soft label.
  for (const auto& [cls, t] : tally) {
    if (2 * t.votes > m) return hard_label(cls);
  }
  return soft_label(tally, false);
}

void validate_label(const FuzzyLabel& label, std::size_t ensemble_size) {
  if (label.is_hard()) {
    if (!label.memberships.empty()) {
      throw std::invalid_argument("fuzzy label: hard label with memberships");
    }
    return;
  }
  if (label.memberships.size() < 2 ||
      label.memberships.size() > ensemble_size) {
    throw std::invalid_argument(
        "fuzzy label: soft support size must be in [2, m]");
  }
  double sum = 0.0;
  std::uint32_t prev = 0;
  bool first = true;
  for (const auto& [cls, w] : label.memberships) {
    if (!first && cls <= prev) {
      throw std::invalid_argument("fuzzy label: memberships not sorted");
    }
    if (w <= 0.0) {
      throw std::invalid_argument("fuzzy label: non-positive membership");
    }
    prev = cls;
    first = false;
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("fuzzy label: memberships do not sum to 1");
  }
}

LabelMode parse_label_mode(const std::string& text) {
  if (text == "fuzzy") return LabelMode::kFuzzy;
  if (text == "hard-only") return LabelMode::kHardOnly;
  if (text == "soft-only") return LabelMode::kSoftOnly;
  throw config_error("unknown label mode '" + text +
                     "' (expected fuzzy, hard-only, or soft-only)");
}

std::string label_mode_name(LabelMode mode) {
  switch (mode) {
    case LabelMode::kFuzzy: return "fuzzy";
    case LabelMode::kHardOnly: return "hard-only";
    case LabelMode::kSoftOnly: return "soft-only";
  }
  return "fuzzy";
}

}  // namespace fussl
