#pragma once

#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "encoder.hpp"
#include "labeling.hpp"

namespace fussl {

struct ProbeResult {
  double top1 = 0.0;
  std::size_t n_test = 0;
  std::size_t train_epochs = 0;
};

// Trains a single linear layer + softmax on frozen backbone outputs of raw
// samples with the true class labels, then reports top-1 on the test set.
// The encoder is never mutated.
ProbeResult linear_probe(const EncoderParams& encoder, const Dataset& train,
                         const Dataset& test, std::size_t epochs, double lr,
                         std::uint64_t seed);

// Cosine-distance k-nearest-neighbour vote on frozen backbone outputs; no
// training. Distance ties break by train index, vote ties by class id.
ProbeResult knn_probe(const EncoderParams& encoder, const Dataset& train,
                      const Dataset& test, std::size_t k);

struct CrossClassReport {
  ProbeResult probe;      // linear probe on the held-out class subset
  double consistency = 0.0;  // soft labels whose top-2 classes share a superclass
  double chance = 0.0;       // (classes_per_super - 1) / (n_class - 1)
  std::size_t soft_count = 0;
};

// Cross-class transfer metric. `labels_a` are the phase-1 pseudo-labels of
// `ds_a` (the pre-training class subset); `b_train` / `b_test` hold the
// disjoint probe classes. Each pseudo-class is mapped to the majority true
// superclass of the samples that rank it first, and a soft label counts as
// consistent when its two highest-weight classes map to the same
// superclass.
CrossClassReport cross_class_eval(const EncoderParams& encoder,
                                  const std::vector<FuzzyLabel>& labels_a,
                                  const Dataset& ds_a, const Dataset& b_train,
                                  const Dataset& b_test,
                                  std::size_t probe_epochs, double probe_lr,
                                  std::uint64_t seed);

// Fraction of hard labels agreeing with the majority true class of their
// pseudo-class (chance level is 1 / n_class for balanced data).
double hard_label_purity(const std::vector<FuzzyLabel>& labels,
                         const Dataset& ds);

}  // namespace fussl
