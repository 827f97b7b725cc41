#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>

#include "error.hpp"
#include "protocol.hpp"
#include "rng.hpp"

namespace fussl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Matrix backbone_features(const EncoderParams& encoder, const Matrix& x) {
  return forward_eval(encoder, x).backbone_out;
}

std::uint32_t argmax_row(const double* row, std::size_t n) {
  std::uint32_t best = 0;
  for (std::size_t c = 1; c < n; ++c) {
    if (row[c] > row[best]) best = static_cast<std::uint32_t>(c);
  }
  return best;
}

}  // namespace

ProbeResult linear_probe(const EncoderParams& encoder, const Dataset& train,
                         const Dataset& test, std::size_t epochs, double lr,
                         std::uint64_t seed) {
  require(train.dim() == test.dim(), "linear_probe: dim mismatch");
  require(train.n_class == test.n_class, "linear_probe: class space mismatch");

  const Matrix f_train = backbone_features(encoder, train.x);
  const Matrix f_test = backbone_features(encoder, test.x);
  const std::size_t feat = f_train.cols;
  const std::size_t n_class = train.n_class;

  // Single linear layer, Adam, mini-batch soft-max cross-entropy.
  Matrix w(n_class, feat), b(1, n_class);
  Matrix w_m(n_class, feat), w_v(n_class, feat), b_m(1, n_class), b_v(1, n_class);
  RngStream init_rng = RngStream::derive(seed, "probe.init");
  const double bound = 1.0 / std::sqrt(static_cast<double>(feat));
  for (auto& v : w.data) v = init_rng.uniform(-bound, bound);

  const std::size_t batch = std::min<std::size_t>(128, f_train.rows);
  const std::size_t n_batches = f_train.rows / batch;
  std::vector<std::size_t> order(f_train.rows);
  std::uint64_t step = 0;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    RngStream order_rng =
        RngStream::derive(seed, "probe.order.epoch" + std::to_string(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);

    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      Matrix gw(n_class, feat), gb(1, n_class);
      const double inv_b = 1.0 / static_cast<double>(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t r = order[bi * batch + i];
        const double* x = f_train.row(r);
        // logits = W x + b, then softmax - onehot.
        std::vector<double> logits(n_class);
        for (std::size_t c = 0; c < n_class; ++c) {
          logits[c] = b.data[c];
          const double* wr = w.row(c);
          for (std::size_t d = 0; d < feat; ++d) logits[c] += wr[d] * x[d];
        }
        double m = logits[0];
        for (double v : logits) m = std::max(m, v);
        double sum = 0.0;
        for (auto& v : logits) {
          v = std::exp(v - m);
          sum += v;
        }
        for (std::size_t c = 0; c < n_class; ++c) {
          const double p = logits[c] / sum;
          const double g =
              (p - (c == train.class_labels[r] ? 1.0 : 0.0)) * inv_b;
          gb.data[c] += g;
          if (g == 0.0) continue;
          double* gwr = gw.row(c);
          for (std::size_t d = 0; d < feat; ++d) gwr[d] += g * x[d];
        }
      }

      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      const auto adam = [&](Matrix& p, const Matrix& g, Matrix& m1, Matrix& v1) {
        for (std::size_t i = 0; i < p.data.size(); ++i) {
          m1.data[i] = kBeta1 * m1.data[i] + (1.0 - kBeta1) * g.data[i];
          v1.data[i] = kBeta2 * v1.data[i] + (1.0 - kBeta2) * g.data[i] * g.data[i];
          p.data[i] -= lr * (m1.data[i] / bc1) /
                       (std::sqrt(v1.data[i] / bc2) + kEps);
        }
      };
      adam(w, gw, w_m, w_v);
      adam(b, gb, b_m, b_v);
    }
  }

  std::size_t correct = 0;
  std::vector<double> logits(n_class);
  for (std::size_t r = 0; r < f_test.rows; ++r) {
    const double* x = f_test.row(r);
    for (std::size_t c = 0; c < n_class; ++c) {
      logits[c] = b.data[c];
      const double* wr = w.row(c);
      for (std::size_t d = 0; d < feat; ++d) logits[c] += wr[d] * x[d];
    }
    if (argmax_row(logits.data(), n_class) == test.class_labels[r]) ++correct;
  }

  ProbeResult result;
  result.top1 = static_cast<double>(correct) / static_cast<double>(f_test.rows);
  result.n_test = f_test.rows;
  result.train_epochs = epochs;
  return result;
}

ProbeResult knn_probe(const EncoderParams& encoder, const Dataset& train,
                      const Dataset& test, std::size_t k) {
  require(k >= 1, "knn_probe: k must be >= 1");
  require(k <= train.size(), "knn_probe: k exceeds training set size");
  require(train.dim() == test.dim(), "knn_probe: dim mismatch");
  require(train.n_class == test.n_class, "knn_probe: class space mismatch");

  const Matrix f_train = backbone_features(encoder, train.x);
  const Matrix f_test = backbone_features(encoder, test.x);
  const std::size_t d = f_train.cols;

  std::vector<double> train_norms(f_train.rows);
  for (std::size_t r = 0; r < f_train.rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += f_train(r, c) * f_train(r, c);
    train_norms[r] = std::max(std::sqrt(sq), 1e-12);
  }

  std::size_t correct = 0;
  std::vector<std::pair<double, std::size_t>> dist(f_train.rows);
  std::vector<std::size_t> votes(train.n_class);
  for (std::size_t t = 0; t < f_test.rows; ++t) {
    const double* x = f_test.row(t);
    double xn = 0.0;
    for (std::size_t c = 0; c < d; ++c) xn += x[c] * x[c];
    xn = std::max(std::sqrt(xn), 1e-12);
    for (std::size_t r = 0; r < f_train.rows; ++r) {
      double dotv = 0.0;
      const double* y = f_train.row(r);
      for (std::size_t c = 0; c < d; ++c) dotv += x[c] * y[c];
      dist[r] = {1.0 - dotv / (xn * train_norms[r]), r};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

    std::fill(votes.begin(), votes.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      ++votes[train.class_labels[dist[i].second]];
    }
    std::uint32_t winner = 0;
    for (std::uint32_t c = 1; c < train.n_class; ++c) {
      if (votes[c] > votes[winner]) winner = c;  // ties keep the lowest id
    }
    if (winner == test.class_labels[t]) ++correct;
  }

  ProbeResult result;
  result.top1 = static_cast<double>(correct) / static_cast<double>(f_test.rows);
  result.n_test = f_test.rows;
  result.train_epochs = 0;
  return result;
}

CrossClassReport cross_class_eval(const EncoderParams& encoder,
                                  const std::vector<FuzzyLabel>& labels_a,
                                  const Dataset& ds_a, const Dataset& b_train,
                                  const Dataset& b_test,
                                  std::size_t probe_epochs, double probe_lr,
                                  std::uint64_t seed) {
  require(labels_a.size() == ds_a.size(),
          "cross_class_eval: labels not aligned with dataset A");

  // Class sets must be disjoint with identical superclass coverage.
  std::set<std::uint32_t> classes_a(ds_a.class_labels.begin(),
                                    ds_a.class_labels.end());
  std::set<std::uint32_t> classes_b(b_train.class_labels.begin(),
                                    b_train.class_labels.end());
  classes_b.insert(b_test.class_labels.begin(), b_test.class_labels.end());
  for (auto c : classes_b) {
    require(classes_a.count(c) == 0,
            "cross_class_eval: class sets overlap (class " +
                std::to_string(c) + ")");
  }
  std::set<std::uint32_t> supers_a(ds_a.superclass_labels.begin(),
                                   ds_a.superclass_labels.end());
  std::set<std::uint32_t> supers_b(b_train.superclass_labels.begin(),
                                   b_train.superclass_labels.end());
  supers_b.insert(b_test.superclass_labels.begin(),
                  b_test.superclass_labels.end());
  require(supers_a == supers_b,
          "cross_class_eval: superclass coverage differs between subsets");

  CrossClassReport report;
  report.probe =
      linear_probe(encoder, b_train, b_test, probe_epochs, probe_lr, seed);

  // Map each pseudo-class to the majority true superclass of the samples
  // that rank it first (ties toward the lower superclass id).
  std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> tally;
  for (std::size_t r = 0; r < ds_a.size(); ++r) {
    ++tally[labels_a[r].top_class()][ds_a.superclass_labels[r]];
  }
  std::map<std::uint32_t, std::uint32_t> super_of;
  for (const auto& [pc, counts] : tally) {
    std::uint32_t best_super = counts.begin()->first;
    std::size_t best_count = counts.begin()->second;
    for (const auto& [super, count] : counts) {
      if (count > best_count) {
        best_super = super;
        best_count = count;
      }
    }
    super_of[pc] = best_super;
  }

  std::size_t consistent = 0, counted = 0;
  for (std::size_t r = 0; r < ds_a.size(); ++r) {
    const FuzzyLabel& label = labels_a[r];
    if (label.is_hard()) continue;
    ++report.soft_count;
    // Two highest-weight classes; weight ties break toward lower class id.
    std::pair<double, std::uint32_t> first{-1.0, 0}, second{-1.0, 0};
    for (const auto& [cls, w] : label.memberships) {
      if (w > first.first) {
        second = first;
        first = {w, cls};
      } else if (w > second.first) {
        second = {w, cls};
      }
    }
    const auto it1 = super_of.find(first.second);
    const auto it2 = super_of.find(second.second);
    if (it1 == super_of.end() || it2 == super_of.end()) continue;
    ++counted;
    if (it1->second == it2->second) ++consistent;
  }
  report.consistency =
      counted > 0 ? static_cast<double>(consistent) / static_cast<double>(counted)
                  : 0.0;

  const double classes_per_super =
      static_cast<double>(ds_a.n_class) / static_cast<double>(ds_a.n_super);
  report.chance = (classes_per_super - 1.0) /
                  (static_cast<double>(ds_a.n_class) - 1.0);
  return report;
}

double hard_label_purity(const std::vector<FuzzyLabel>& labels,
                         const Dataset& ds) {
  require(labels.size() == ds.size(),
          "hard_label_purity: labels not aligned with dataset");
  std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> clusters;
  std::size_t n_hard = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    if (!labels[r].is_hard()) continue;
    ++clusters[labels[r].hard_class][ds.class_labels[r]];
    ++n_hard;
  }
  if (n_hard == 0) return 0.0;
  std::size_t majority_sum = 0;
  for (const auto& [pc, counts] : clusters) {
    std::size_t best = 0;
    for (const auto& [cls, count] : counts) best = std::max(best, count);
    majority_sum += best;
  }
  return static_cast<double>(majority_sum) / static_cast<double>(n_hard);
}

}  // namespace fussl
