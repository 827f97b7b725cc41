#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "rng.hpp"

namespace fussl {

// Labeled vector dataset with a two-level class hierarchy. Every class id
// maps to exactly one superclass id.
struct Dataset {
  Matrix x;  // n x dim, rows are samples
  std::vector<std::uint32_t> class_labels;
  std::vector<std::uint32_t> superclass_labels;
  std::uint32_t n_class = 0;
  std::uint32_t n_super = 0;

  std::size_t size() const { return x.rows; }
  std::size_t dim() const { return x.cols; }
};

struct AugmentConfig {
  double noise_sigma = 0.3;       // additive Gaussian noise
  double mask_fraction = 0.1;     // fraction of coordinates zeroed, [0, 1)
  double scale_lo = 0.9;          // global scaling range
  double scale_hi = 1.1;
  double crop_fraction_min = 1.0; // contiguous keep-window >= this fraction
};

// Gaussian class clusters around centers arranged hierarchically:
// superclass centers at radius `separation` in random directions, class
// centers perturbed around them at radius `class_separation` (defaults to
// separation / 2 when negative), unit-variance samples around class
// centers. Deterministic under `seed`.
Dataset generate_synthetic(std::uint32_t n_super,
                           std::uint32_t classes_per_super, std::uint32_t dim,
                           std::uint32_t n_per_class, double separation,
                           std::uint64_t seed, double class_separation = -1.0);

// 2m independently augmented copies of one sample; block i is meant to
// receive the pair (2i, 2i+1). Per view: contiguous crop window, global
// scaling, additive noise, then coordinate masking (so masked coordinates
// are exactly zero).
std::vector<std::vector<double>> make_views(const std::vector<double>& x_row,
                                            std::size_t m,
                                            const AugmentConfig& cfg,
                                            RngStream& rng);

// File format "FUSL1": magic, u32 LE (n, dim, n_class, n_super), then n
// records of (u32 class, u32 superclass, dim x f64 LE). Round trips are
// bit-exact.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Rows whose class is in `classes`; metadata (n_class, n_super) unchanged.
Dataset filter_classes(const Dataset& ds,
                       const std::vector<std::uint32_t>& classes);

// Deterministic shuffled split; every class keeps at least one training
// row when it has any.
void split_dataset(const Dataset& ds, double test_fraction, std::uint64_t seed,
                   Dataset& train, Dataset& test);

void validate_dataset(const Dataset& ds);

}  // namespace fussl
