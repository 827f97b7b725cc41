// Acceptance suite: one pass/fail line per criterion, exit code = number
// of failed criteria. argv[1] (optional) is the path of the fussl-cli
// binary, needed by the end-to-end determinism criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "losses.hpp"
#include "numerics.hpp"
#include "protocol.hpp"
#include "rng.hpp"

using namespace fussl;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

double median5(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ------------------------------------------------ finite-difference oracle

double fd_max_rel_err(const std::function<double(const std::vector<Matrix>&)>& f,
                      std::vector<Matrix> inputs,
                      const std::vector<Matrix>& analytic) {
  const double step = 1e-5;
  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    for (std::size_t i = 0; i < inputs[which].data.size(); ++i) {
      const double saved = inputs[which].data[i];
      inputs[which].data[i] = saved + step;
      const double up = f(inputs);
      inputs[which].data[i] = saved - step;
      const double down = f(inputs);
      inputs[which].data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[which].data[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

// Criterion 1: analytic gradients of all six objectives vs central finite
// differences, >= 100 random instances each, rel err < 1e-4, < 2 minutes.
bool criterion_gradients(std::string& detail) {
  const auto start = Clock::now();
  RngStream rng(1001);
  LossConfig cfg;
  double worst = 0.0;

  const auto batch = [&] { return 1 + rng.index(16); };
  const auto dim = [&] { return 1 + rng.index(8); };

  // Triplet, both modes, skipping instances on the hinge kink.
  for (TripletMode mode : {TripletMode::kStandard, TripletMode::kAsWritten}) {
    LossConfig tc = cfg;
    tc.triplet_mode = mode;
    int done = 0;
    while (done < 100) {
      const std::size_t n = batch(), d = dim();
      const Matrix zi = random_matrix(n, d, rng);
      const Matrix zj = random_matrix(n, d, rng);
      const Matrix zk = random_matrix(n, d, rng);
      bool near = false;
      for (std::size_t r = 0; r < n && !near; ++r) {
        double ap = 0.0, aq = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          ap += zi(r, c) * zj(r, c);
          aq += zi(r, c) * zk(r, c);
        }
        const double h = mode == TripletMode::kAsWritten ? ap - aq + tc.margin
                                                         : aq - ap + tc.margin;
        near = std::abs(h) < 1e-2;
      }
      if (near) continue;
      const LossOutput out = triplet_loss(zi, zj, zk, tc);
      worst = std::max(worst, fd_max_rel_err(
                                  [&](const std::vector<Matrix>& in) {
                                    return triplet_loss(in[0], in[1], in[2], tc)
                                        .value;
                                  },
                                  {zi, zj, zk}, out.grads));
      ++done;
    }
  }

  // N-pair.
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 1 + rng.index(8), d = dim(), k = 1 + rng.index(8);
    const Matrix zi = random_matrix(n, d, rng);
    const Matrix zj = random_matrix(n, d, rng);
    const Matrix neg = random_matrix(k, d, rng);
    const LossOutput out = npair_loss(zi, zj, neg, cfg);
    worst = std::max(worst, fd_max_rel_err(
                                [&](const std::vector<Matrix>& in) {
                                  return npair_loss(in[0], in[1], in[2], cfg)
                                      .value;
                                },
                                {zi, zj, neg}, out.grads));
  }

  // Contrastive.
  for (int i = 0; i < 100; ++i) {
    const std::size_t half = 2 + rng.index(6);
    const std::size_t n = 2 * half, d = 2 + rng.index(7);
    const Matrix views = random_matrix(n, d, rng);
    std::vector<std::size_t> pairs(n);
    for (std::size_t p = 0; p < half; ++p) {
      pairs[2 * p] = 2 * p + 1;
      pairs[2 * p + 1] = 2 * p;
    }
    const LossOutput out = contrastive_loss(views, pairs, cfg);
    worst = std::max(worst, fd_max_rel_err(
                                [&](const std::vector<Matrix>& in) {
                                  return contrastive_loss(in[0], pairs, cfg)
                                      .value;
                                },
                                {views}, out.grads));
  }

  // Non-contrastive: online path only, target constant; the target grad
  // entry must be identically zero.
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = batch(), d = 2 + rng.index(7);
    const Matrix online = random_matrix(n, d, rng);
    const Matrix target = random_matrix(n, d, rng);
    const Matrix pred = random_matrix(n, d, rng);
    const LossOutput out = noncontrastive_loss(online, target, pred);
    for (double g : out.grads[1].data) {
      if (g != 0.0) {
        detail = "stop-gradient violated";
        return false;
      }
    }
    worst = std::max(
        worst, fd_max_rel_err(
                   [&](const std::vector<Matrix>& in) {
                     return noncontrastive_loss(online, target, in[0]).value;
                   },
                   {pred}, {out.grads[2]}));
  }

  // W-MSE under the frozen-transform rule.
  for (int i = 0; i < 100; ++i) {
    const std::size_t d = 2 + rng.index(4);
    const std::size_t n = d + 2 + rng.index(16 - d - 1);
    const Matrix zi = random_matrix(n, d, rng);
    const Matrix zj = random_matrix(n, d, rng);
    const Matrix ta = whiten_batch(zi, cfg.whiten_eps).transform;
    const Matrix tb = whiten_batch(zj, cfg.whiten_eps).transform;
    const auto frozen_value = [&](const std::vector<Matrix>& in) {
      const auto apply = [](const Matrix& z, const Matrix& t) {
        std::vector<double> mean(z.cols, 0.0);
        for (std::size_t r = 0; r < z.rows; ++r) {
          for (std::size_t c = 0; c < z.cols; ++c) mean[c] += z(r, c);
        }
        for (auto& m : mean) m /= static_cast<double>(z.rows);
        Matrix centered(z.rows, z.cols);
        for (std::size_t r = 0; r < z.rows; ++r) {
          for (std::size_t c = 0; c < z.cols; ++c) {
            centered(r, c) = z(r, c) - mean[c];
          }
        }
        return matmul(centered, t);
      };
      return cosine_pair_loss(apply(in[0], ta), apply(in[1], tb)).value;
    };
    const LossOutput out = wmse_loss(zi, zj, cfg);
    worst = std::max(worst, fd_max_rel_err(frozen_value, {zi, zj}, out.grads));
  }

  // Barlow Twins.
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 3 + rng.index(13), d = 2 + rng.index(7);
    const Matrix za = random_matrix(n, d, rng);
    const Matrix zb = random_matrix(n, d, rng);
    const LossOutput out = barlow_twins_loss(za, zb, cfg);
    worst = std::max(worst, fd_max_rel_err(
                                [&](const std::vector<Matrix>& in) {
                                  return barlow_twins_loss(in[0], in[1], cfg)
                                      .value;
                                },
                                {za, zb}, out.grads));
  }

  const double elapsed = seconds_since(start);
  detail = "max rel err " + fmt(worst) + ", " + fmt(elapsed) + "s";
  return worst < 1e-4 && elapsed < 120.0;
}

// Criterion 2: whitened covariance within 1e-6 of identity on 100 random
// full-rank batches.
bool criterion_whitening(std::string& detail) {
  RngStream rng(1002);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t d = 2 + rng.index(5);
    const std::size_t n = d + 4 + rng.index(20);
    const Matrix z = random_matrix(n, d, rng);
    const WhitenReport report = whiten_batch(z, 1e-9);

    // Independent covariance evaluation of the output.
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) mean[c] += report.whitened(r, c);
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    double frob = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        double cov = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          cov += (report.whitened(r, a) - mean[a]) *
                 (report.whitened(r, b) - mean[b]);
        }
        cov /= static_cast<double>(n - 1);
        const double target = a == b ? 1.0 : 0.0;
        frob += (cov - target) * (cov - target);
      }
    }
    worst = std::max(worst, std::sqrt(frob));
  }
  detail = "max Frobenius deviation " + fmt(worst);
  return worst < 1e-6;
}

// Criterion 3: cross-correlation entries in [-1, 1] +- 1e-9 on 1000 random
// pairs; Barlow Twins loss exactly 0 at C = I and positive otherwise.
bool criterion_cross_correlation(std::string& detail) {
  RngStream rng(1003);
  double out_of_range = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.index(14), d = 1 + rng.index(8);
    const Matrix c = cross_correlation(random_matrix(n, d, rng),
                                       random_matrix(n, d, rng));
    for (double v : c.data) {
      out_of_range = std::max({out_of_range, v - 1.0, -1.0 - v});
    }
  }
  if (out_of_range > 1e-9) {
    detail = "entries exceed the bound by " + fmt(out_of_range);
    return false;
  }

  LossConfig cfg;
  Matrix exact(4, 2);
  exact.data = {1, 1, 1, -1, -1, 1, -1, -1};  // standardized, C = I exactly
  const double at_identity = barlow_twins_loss(exact, exact, cfg).value;
  if (at_identity != 0.0) {
    detail = "loss at C = I is " + fmt(at_identity) + ", not exactly 0";
    return false;
  }

  std::size_t positive_checked = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 4 + rng.index(10), d = 2 + rng.index(5);
    const Matrix za = random_matrix(n, d, rng);
    const Matrix zb = random_matrix(n, d, rng);
    const Matrix c = cross_correlation(za, zb);
    double dev = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        dev = std::max(dev, std::abs(c(a, b) - (a == b ? 1.0 : 0.0)));
      }
    }
    if (dev > 1e-6) {
      ++positive_checked;
      if (barlow_twins_loss(za, zb, cfg).value <= 0.0) {
        detail = "loss not positive at C != I";
        return false;
      }
    }
  }
  detail = "bound slack " + fmt(out_of_range) + ", exact zero at C = I, " +
           std::to_string(positive_checked) + " positive cases";
  return positive_checked > 0;
}

// Criterion 4: closed-form spot values.
bool criterion_spot_values(std::string& detail) {
  LossConfig cfg;
  double worst = 0.0;

  for (std::size_t n : {5, 9}) {
    Matrix views(n, 3);
    for (std::size_t r = 0; r < n; ++r) {
      views(r, 0) = 0.7;
      views(r, 1) = -0.2;
      views(r, 2) = 1.1;
    }
    std::vector<std::size_t> pairs(n);
    for (std::size_t i = 0; i < n; ++i) pairs[i] = (i + 1) % n;
    const double value = contrastive_loss(views, pairs, cfg).value;
    worst = std::max(worst,
                     std::abs(value - std::log(static_cast<double>(n - 1))));
  }

  Matrix a(1, 2), b(1, 2), c(1, 2);
  a.data = {3, 0};
  b.data = {0, 2};
  c.data = {-5, 0};
  worst = std::max(worst, std::abs(cosine_pair_loss(a, a).value - 0.0));
  worst = std::max(worst, std::abs(cosine_pair_loss(a, b).value - 2.0));
  worst = std::max(worst, std::abs(cosine_pair_loss(a, c).value - 4.0));

  for (std::size_t k : {3, 8}) {
    Matrix v(1, 4);
    v.data = {0.3, -0.4, 0.9, 0.1};
    Matrix negatives(k, 4);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t col = 0; col < 4; ++col) negatives(r, col) = v(0, col);
    }
    const double value = npair_loss(v, v, negatives, cfg).value;
    worst = std::max(worst,
                     std::abs(value - std::log(1.0 + static_cast<double>(k))));
  }

  detail = "max deviation " + fmt(worst);
  return worst < 1e-9;
}

// Criterion 5: the fuzzy labeling rule, exhaustively vs a brute-force
// oracle for m <= 4.
bool criterion_fuzzy_labels(std::string& detail) {
  // Spot contracts first.
  const FuzzyLabel majority =
      label_from_votes({{5, 0.9}, {5, 0.8}, {9, 0.99}}, LabelMode::kFuzzy);
  if (!majority.is_hard() || majority.hard_class != 5) {
    detail = "majority vote did not yield the winning hard label";
    return false;
  }
  const FuzzyLabel distinct =
      label_from_votes({{1, 0.5}, {2, 0.3}, {3, 0.2}}, LabelMode::kFuzzy);
  double sum = 0.0;
  for (const auto& [cls, w] : distinct.memberships) sum += w;
  if (distinct.is_hard() || distinct.memberships.size() != 3 ||
      std::abs(sum - 1.0) > 1e-9) {
    detail = "all-distinct votes did not yield a normalized soft label";
    return false;
  }
  for (LabelMode mode :
       {LabelMode::kFuzzy, LabelMode::kHardOnly, LabelMode::kSoftOnly}) {
    if (!label_from_votes({{7, 0.4}}, mode).is_hard()) {
      detail = "m = 1 did not reduce to hard labeling";
      return false;
    }
  }

  std::size_t cases = 0;
  for (std::size_t m = 1; m <= 4; ++m) {
    std::size_t patterns = 1;
    for (std::size_t i = 0; i < m; ++i) patterns *= m;
    for (std::size_t code = 0; code < patterns; ++code) {
      std::vector<BlockVote> votes(m);
      std::size_t rest = code;
      for (std::size_t b = 0; b < m; ++b) {
        votes[b] = BlockVote{static_cast<std::uint32_t>(rest % m),
                             0.31 + 0.17 * static_cast<double>(b)};
        rest /= m;
      }
      for (LabelMode mode :
           {LabelMode::kFuzzy, LabelMode::kHardOnly, LabelMode::kSoftOnly}) {
        const FuzzyLabel got = label_from_votes(votes, mode);
        validate_label(got, m);
        ++cases;

        // Brute-force rule evaluation.
        std::map<std::uint32_t, std::pair<std::size_t, double>> tally;
        for (const auto& v : votes) {
          auto& t = tally[v.pseudo_class];
          ++t.first;
          t.second += v.confidence;
        }
        FuzzyLabel expected;
        if (tally.size() == 1) {
          expected.hard_class = tally.begin()->first;
        } else if (mode == LabelMode::kHardOnly) {
          auto best = tally.begin();
          for (auto it = tally.begin(); it != tally.end(); ++it) {
            if (it->second.first > best->second.first ||
                (it->second.first == best->second.first &&
                 it->second.second > best->second.second)) {
              best = it;
            }
          }
          expected.hard_class = best->first;
        } else {
          bool strict_majority = false;
          if (mode == LabelMode::kFuzzy) {
            for (const auto& [cls, t] : tally) {
              if (2 * t.first > m) {
                expected.hard_class = cls;
                strict_majority = true;
              }
            }
          }
          if (!strict_majority) {
            expected.kind = FuzzyLabel::Kind::kSoft;
            double total = 0.0;
            for (const auto& [cls, t] : tally) {
              const double w = mode == LabelMode::kSoftOnly
                                   ? static_cast<double>(t.first)
                                   : t.second;
              expected.memberships.emplace_back(cls, w);
              total += w;
            }
            for (auto& [cls, w] : expected.memberships) w /= total;
          }
        }

        bool same = got.kind == expected.kind;
        if (same && got.is_hard()) same = got.hard_class == expected.hard_class;
        if (same && !got.is_hard()) {
          same = got.memberships.size() == expected.memberships.size();
          for (std::size_t i = 0; same && i < got.memberships.size(); ++i) {
            same = got.memberships[i].first == expected.memberships[i].first &&
                   std::abs(got.memberships[i].second -
                            expected.memberships[i].second) < 1e-12;
          }
        }
        if (!same) {
          detail = "oracle mismatch at m=" + std::to_string(m) +
                   " code=" + std::to_string(code) + " mode " +
                   label_mode_name(mode);
          return false;
        }
      }
    }
  }
  detail = std::to_string(cases) + " exhaustive cases match the oracle";
  return true;
}

// ------------------------------------------------------------ criterion 6

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("acceptance: cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::string masked_metrics(const std::filesystem::path& path) {
  static const std::regex pattern("\"wall_ms\":[0-9]+");
  return std::regex_replace(read_file(path), pattern, "\"wall_ms\":0");
}

// Two end-to-end CLI runs with the same config produce bit-identical
// outputs (metrics compared with the wall-clock field masked), and
// parallel phase-1 equals sequential phase-1.
bool criterion_determinism(const std::string& cli, std::string& detail) {
  if (cli.empty()) {
    detail = "fussl-cli path not provided";
    return false;
  }
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "fussl_acceptance_det";
  fs::remove_all(root);
  fs::create_directories(root);

  const fs::path cfg_path = root / "run.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "seed = 77\n"
        << "gen.n_super = 2\ngen.classes_per_super = 2\ngen.dim = 16\n"
        << "gen.n_per_class = 40\ngen.separation = 6\n"
        << "model.backbone_dims = 24,24\nmodel.projector_dims = 32,16\n"
        << "protocol.m = 3\nprotocol.phase1_epochs = 4\n"
        << "protocol.phase2_epochs = 2\nprotocol.phase2_full_epochs = 1\n"
        << "protocol.batch_size = 32\nprotocol.freeze_boundary = 1\n"
        << "probe.epochs = 10\n";
  }

  const auto invoke = [&](const std::string& extra, const fs::path& out_dir) {
    const std::string cmd = cli + " run --config " + cfg_path.string() +
                            " --out-dir " + out_dir.string() + " " + extra +
                            " > " + (out_dir.string() + ".log") + " 2>&1";
    return std::system(cmd.c_str()) == 0;
  };

  if (!invoke("", root / "a") || !invoke("", root / "b") ||
      !invoke("--parallel false", root / "c")) {
    detail = "CLI invocation failed (see " + root.string() + ")";
    return false;
  }

  if (masked_metrics(root / "a" / "metrics.jsonl") !=
      masked_metrics(root / "b" / "metrics.jsonl")) {
    detail = "metrics differ between identical runs";
    return false;
  }
  for (const char* name : {"encoder.ckpt", "encoder_phase1.ckpt",
                           "ensemble.ckpt", "labels.jsonl", "dataset.bin"}) {
    if (read_file(root / "a" / name) != read_file(root / "b" / name)) {
      detail = std::string(name) + " differs between identical runs";
      return false;
    }
  }

  // Parallel vs sequential phase 1.
  if (read_file(root / "a" / "ensemble.ckpt") !=
      read_file(root / "c" / "ensemble.ckpt")) {
    detail = "parallel and sequential phase-1 ensembles differ";
    return false;
  }
  if (masked_metrics(root / "a" / "metrics.jsonl") !=
      masked_metrics(root / "c" / "metrics.jsonl")) {
    detail = "parallel and sequential metrics differ";
    return false;
  }

  // The printed effective config, re-fed as input, reproduces the run.
  {
    const std::string cmd = cli + " run --config " +
                            (root / "a" / "effective.cfg").string() +
                            " --out-dir " + (root / "d").string() + " > " +
                            (root / "d.log").string() + " 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      detail = "re-running the effective config failed";
      return false;
    }
    if (masked_metrics(root / "a" / "metrics.jsonl") !=
            masked_metrics(root / "d" / "metrics.jsonl") ||
        read_file(root / "a" / "encoder.ckpt") !=
            read_file(root / "d" / "encoder.ckpt")) {
      detail = "effective config does not reproduce the run";
      return false;
    }
  }
  detail = "two runs bit-identical (wall_ms masked in metrics); "
           "parallel == sequential; effective config round-trips";
  return true;
}

// ------------------------------------------------------------ criterion 7

ProtocolConfig desk_scale_config(std::uint64_t seed) {
  ProtocolConfig cfg;
  cfg.m = 3;
  cfg.loss_kind = LossKind::kBarlowTwins;
  cfg.seed = seed;
  cfg.phase1_epochs = 18;
  cfg.phase2_epochs = 9;
  cfg.phase2_full_epochs = 3;
  cfg.batch_size = 128;
  cfg.freeze_boundary = 2;
  cfg.encoder.backbone = {LayerSpec{32, 64, true, Activation::kRelu},
                          LayerSpec{64, 64, true, Activation::kRelu},
                          LayerSpec{64, 64, true, Activation::kRelu}};
  cfg.encoder.projector = {LayerSpec{64, 128, true, Activation::kRelu},
                           LayerSpec{128, 128, true, Activation::kRelu},
                           LayerSpec{128, 128, false, Activation::kNone}};
  cfg.augment.noise_sigma = 0.3;
  cfg.augment.mask_fraction = 0.1;
  cfg.augment.scale_lo = 0.9;
  cfg.augment.scale_hi = 1.1;
  return cfg;
}

// Desk-scale end-to-end: 10 classes, dim 32, separation 8, n = 2000,
// m = 3, Barlow Twins. 5-seed medians: phase-1 probe >= 0.80, hard-label
// purity >= 0.20, phase-2 probe delta >= -0.02. Under 10 minutes.
bool criterion_desk_scale(std::string& detail) {
  const auto start = Clock::now();
  std::vector<double> base_top1s, deltas, purities;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset ds = generate_synthetic(5, 2, 32, 200, 8.0, seed);
    Dataset train, test;
    split_dataset(ds, 0.25, seed, train, test);

    const RunResult run = run_fussl(ds, desk_scale_config(seed));
    const ProbeResult base =
        linear_probe(run.phase1_encoder, train, test, 150, 1e-3, seed);
    const ProbeResult fussl =
        linear_probe(run.final_encoder, train, test, 150, 1e-3, seed);
    base_top1s.push_back(base.top1);
    deltas.push_back(fussl.top1 - base.top1);
    purities.push_back(hard_label_purity(run.labels, ds));
  }
  const double base_med = median5(base_top1s);
  const double delta_med = median5(deltas);
  const double purity_med = median5(purities);
  const double elapsed = seconds_since(start);

  detail = "phase-1 top1 median " + fmt(base_med) + " (>= 0.80), purity " +
           fmt(purity_med) + " (>= 0.20 = 2x chance), phase-2 delta " +
           fmt(delta_med) + " (>= -0.02), " + fmt(elapsed) + "s";
  return base_med >= 0.80 && purity_med >= 0.20 && delta_med >= -0.02 &&
         elapsed < 600.0;
}

// ------------------------------------------------------------ criterion 8

// Frozen parameters bit-unchanged at every optimizer step of the frozen
// stretch; the no-freeze ablation runs and its probe delta is reported.
bool criterion_freezing(std::string& detail) {
  const Dataset ds = generate_synthetic(5, 2, 32, 40, 8.0, 11);
  Dataset train, test;
  split_dataset(ds, 0.25, 11, train, test);

  ProtocolConfig cfg = desk_scale_config(11);
  cfg.phase1_epochs = 4;
  cfg.phase2_epochs = 6;
  cfg.phase2_full_epochs = 2;
  cfg.batch_size = 64;

  std::vector<MetricsRecord> metrics;
  EnsembleState ens = phase1_train(ds, cfg, metrics);
  const auto labels = pseudo_label(ens, ds, LabelMode::kFuzzy);
  const std::size_t selected = select_block(ens, labels, ds);

  // Freezing variant with a per-step bit-equality check.
  EncoderParams frozen_variant = ens.blocks[selected];
  std::vector<std::vector<double>> frozen_snapshot;
  bool snapshot_taken = false;
  std::size_t violations = 0, frozen_steps = 0;
  std::vector<MetricsRecord> p2_metrics;
  phase2_train(
      frozen_variant, labels, ds, cfg, cfg.phase2_epochs,
      cfg.phase2_full_epochs, /*allow_freeze=*/true, 0,
      static_cast<std::int64_t>(selected), p2_metrics,
      [&](const EncoderParams& p, std::size_t, std::size_t frozen) {
        if (frozen == 0) return;
        if (!snapshot_taken) {
          for (std::size_t l = 0; l < cfg.freeze_boundary; ++l) {
            frozen_snapshot.push_back(p.backbone[l].weight.data);
            frozen_snapshot.push_back(p.backbone[l].bias.data);
            if (p.backbone[l].spec.has_batchnorm) {
              frozen_snapshot.push_back(p.backbone[l].bn_gamma.data);
              frozen_snapshot.push_back(p.backbone[l].bn_beta.data);
            }
          }
          snapshot_taken = true;
          return;
        }
        ++frozen_steps;
        std::size_t idx = 0;
        for (std::size_t l = 0; l < cfg.freeze_boundary; ++l) {
          if (p.backbone[l].weight.data != frozen_snapshot[idx++]) ++violations;
          if (p.backbone[l].bias.data != frozen_snapshot[idx++]) ++violations;
          if (p.backbone[l].spec.has_batchnorm) {
            if (p.backbone[l].bn_gamma.data != frozen_snapshot[idx++])
              ++violations;
            if (p.backbone[l].bn_beta.data != frozen_snapshot[idx++])
              ++violations;
          }
        }
      });
  if (!snapshot_taken || frozen_steps == 0) {
    detail = "frozen stretch never ran";
    return false;
  }
  if (violations > 0) {
    detail = std::to_string(violations) + " frozen tensors changed";
    return false;
  }

  // No-freeze ablation: the unfrozen stretch covers all of phase 2.
  EncoderParams unfrozen_variant = ens.blocks[selected];
  std::vector<MetricsRecord> nf_metrics;
  phase2_train(unfrozen_variant, labels, ds, cfg, cfg.phase2_epochs,
               cfg.phase2_epochs, /*allow_freeze=*/true, 0,
               static_cast<std::int64_t>(selected), nf_metrics);

  const ProbeResult frozen_probe =
      linear_probe(frozen_variant, train, test, 100, 1e-3, 11);
  const ProbeResult unfrozen_probe =
      linear_probe(unfrozen_variant, train, test, 100, 1e-3, 11);
  detail = "frozen params bit-unchanged over " + std::to_string(frozen_steps) +
           " steps; freeze vs no-freeze probe delta " +
           fmt(frozen_probe.top1 - unfrozen_probe.top1) + " (reported)";
  return true;
}

// ------------------------------------------------------------ criterion 9

// Cross-class soft-label consistency beats the analytic chance level on
// well-separated hierarchical data (5-seed median).
bool criterion_cross_class(std::string& detail) {
  std::vector<double> consistencies;
  double chance = 0.0, probe_top1_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    // Superclass separation 10, class separation 2: same-superclass
    // classes are confusable, exactly what soft labels should capture.
    const Dataset full = generate_synthetic(5, 4, 16, 50, 10.0, seed, 2.0);
    std::vector<std::uint32_t> half_a, half_b;
    for (std::uint32_t c = 0; c < full.n_class; ++c) {
      (c % 4 < 2 ? half_a : half_b).push_back(c);
    }
    const Dataset ds_a = filter_classes(full, half_a);
    const Dataset ds_b = filter_classes(full, half_b);
    Dataset b_train, b_test;
    split_dataset(ds_b, 0.25, seed, b_train, b_test);

    ProtocolConfig cfg;
    cfg.m = 3;
    cfg.seed = seed;
    cfg.label_mode = LabelMode::kSoftOnly;
    cfg.phase1_epochs = 12;
    cfg.phase2_epochs = 6;
    cfg.phase2_full_epochs = 2;
    cfg.batch_size = 64;
    cfg.freeze_boundary = 1;
    cfg.encoder.backbone = {LayerSpec{16, 32, true, Activation::kRelu},
                            LayerSpec{32, 32, true, Activation::kRelu}};
    cfg.encoder.projector = {LayerSpec{32, 64, true, Activation::kRelu},
                             LayerSpec{64, 64, false, Activation::kNone}};
    cfg.augment.noise_sigma = 0.3;
    cfg.augment.mask_fraction = 0.1;

    const RunResult run = run_fussl(ds_a, cfg);
    const CrossClassReport report = cross_class_eval(
        run.final_encoder, run.labels, ds_a, b_train, b_test, 100, 1e-3, seed);
    consistencies.push_back(report.consistency);
    chance = report.chance;
    probe_top1_sum += report.probe.top1;
  }
  const double median = median5(consistencies);
  detail = "soft-only consistency median " + fmt(median) + " vs chance " +
           fmt(chance) + "; mean cross-class probe top1 " +
           fmt(probe_top1_sum / 5.0);
  return median > chance;
}

// ----------------------------------------------------------- criterion 10

// knn_probe equals an exhaustive pairwise-distance oracle, exactly.
bool criterion_knn_oracle(std::string& detail) {
  const EncoderParams encoder = init_encoder(desk_scale_config(13).encoder, 13);

  RngStream seeds(1010);
  std::size_t checked = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Dataset full =
        generate_synthetic(2, 2, 32, 25, 5.0, seeds.next_u64());  // n = 100
    Dataset train, test;
    split_dataset(full, 0.3, seeds.next_u64(), train, test);

    const Matrix f_train = forward_eval(encoder, train.x).backbone_out;
    const Matrix f_test = forward_eval(encoder, test.x).backbone_out;
    for (std::size_t k : {1, 3, 5, 15}) {
      // Exhaustive oracle: full sort over cosine distances, majority vote,
      // ties to the lowest class id.
      std::size_t correct = 0;
      for (std::size_t t = 0; t < f_test.rows; ++t) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t r = 0; r < f_train.rows; ++r) {
          double dot = 0.0, na = 0.0, nb = 0.0;
          for (std::size_t c = 0; c < f_train.cols; ++c) {
            dot += f_test(t, c) * f_train(r, c);
            na += f_test(t, c) * f_test(t, c);
            nb += f_train(r, c) * f_train(r, c);
          }
          all.emplace_back(1.0 - dot / (std::max(std::sqrt(na), 1e-12) *
                                        std::max(std::sqrt(nb), 1e-12)),
                           r);
        }
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> votes(train.n_class, 0);
        for (std::size_t i = 0; i < k; ++i) {
          ++votes[train.class_labels[all[i].second]];
        }
        std::uint32_t winner = 0;
        for (std::uint32_t c = 1; c < train.n_class; ++c) {
          if (votes[c] > votes[winner]) winner = c;
        }
        if (winner == test.class_labels[t]) ++correct;
      }
      const double oracle =
          static_cast<double>(correct) / static_cast<double>(f_test.rows);
      const double got = knn_probe(encoder, train, test, k).top1;
      if (got != oracle) {
        detail = "mismatch at k=" + std::to_string(k) + ": " + fmt(got) +
                 " vs oracle " + fmt(oracle);
        return false;
      }
      ++checked;
    }
  }
  detail = std::to_string(checked) + " instances match exactly";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const auto start = Clock::now();

  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite (six losses vs finite differences)",
       criterion_gradients},
      {2, "whitening drives covariance to identity", criterion_whitening},
      {3, "cross-correlation bound and Barlow Twins zero",
       criterion_cross_correlation},
      {4, "closed-form spot values", criterion_spot_values},
      {5, "fuzzy labeling rule vs exhaustive oracle", criterion_fuzzy_labels},
      {6, "end-to-end determinism and parallel equivalence",
       [&](std::string& d) { return criterion_determinism(cli, d); }},
      {7, "desk-scale end-to-end quality", criterion_desk_scale},
      {8, "phase-2 freezing contract", criterion_freezing},
      {9, "cross-class soft-label consistency", criterion_cross_class},
      {10, "knn probe equals the exhaustive oracle", criterion_knn_oracle},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    std::string detail;
    bool pass = false;
    try {
      pass = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!pass) ++failures;
    std::printf("criterion %2d: %s — %s%s%s\n", criterion.id,
                pass ? "PASS" : "FAIL", criterion.name,
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
  }

  std::printf("%d/10 criteria passed in %.1fs\n", 10 - failures,
              seconds_since(start));
  return failures;
}
