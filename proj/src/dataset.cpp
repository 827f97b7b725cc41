#include "dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "error.hpp"

namespace fussl {

namespace {

constexpr char kMagic[5] = {'F', 'U', 'S', 'L', '1'};

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<double> random_unit_vector(std::uint32_t dim, RngStream& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& c : v) {
      c = rng.normal();
      norm += c * c;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-9);
  for (auto& c : v) c /= norm;
  return v;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_f64(std::ofstream& out, double d) {
  const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw data_error("dataset: truncated file '" + path + "'");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in, const std::string& path) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw data_error("dataset: truncated file '" + path + "'");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.n_class = ds.n_class;
  out.n_super = ds.n_super;
  out.x = Matrix(rows.size(), ds.dim());
  out.class_labels.reserve(rows.size());
  out.superclass_labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(out.x.row(i), ds.x.row(rows[i]), ds.dim() * sizeof(double));
    out.class_labels.push_back(ds.class_labels[rows[i]]);
    out.superclass_labels.push_back(ds.superclass_labels[rows[i]]);
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(std::uint32_t n_super,
                           std::uint32_t classes_per_super, std::uint32_t dim,
                           std::uint32_t n_per_class, double separation,
                           std::uint64_t seed, double class_separation) {
  require(n_super >= 1 && classes_per_super >= 1 && n_per_class >= 1,
          "generate_synthetic: counts must be positive");
  require(dim >= 2, "generate_synthetic: dim must be >= 2");
  require(separation >= 0.0, "generate_synthetic: separation must be >= 0");

  const double class_scale =
      class_separation < 0.0 ? separation / 2.0 : class_separation;
  const std::uint32_t n_class = n_super * classes_per_super;
  const std::size_t n = static_cast<std::size_t>(n_class) * n_per_class;

  RngStream rng = RngStream::derive(seed, "datagen");

  std::vector<std::vector<double>> class_centers(n_class);
  for (std::uint32_t s = 0; s < n_super; ++s) {
    auto super_center = random_unit_vector(dim, rng);
    for (auto& c : super_center) c *= separation;
    for (std::uint32_t k = 0; k < classes_per_super; ++k) {
      auto offset = random_unit_vector(dim, rng);
      auto& center = class_centers[s * classes_per_super + k];
      center.resize(dim);
      for (std::uint32_t d = 0; d < dim; ++d) {
        center[d] = super_center[d] + class_scale * offset[d];
      }
    }
  }

  Dataset ds;
  ds.n_class = n_class;
  ds.n_super = n_super;
  ds.x = Matrix(n, dim);
  ds.class_labels.resize(n);
  ds.superclass_labels.resize(n);
  std::size_t row = 0;
  for (std::uint32_t c = 0; c < n_class; ++c) {
    for (std::uint32_t i = 0; i < n_per_class; ++i, ++row) {
      double* dst = ds.x.row(row);
      for (std::uint32_t d = 0; d < dim; ++d) {
        dst[d] = class_centers[c][d] + rng.normal();
      }
      ds.class_labels[row] = c;
      ds.superclass_labels[row] = c / classes_per_super;
    }
  }
  return ds;
}

std::vector<std::vector<double>> make_views(const std::vector<double>& x_row,
                                            std::size_t m,
                                            const AugmentConfig& cfg,
                                            RngStream& rng) {
  require(m >= 1, "make_views: m must be >= 1");
  require(cfg.scale_lo <= cfg.scale_hi && cfg.scale_lo > 0.0,
          "make_views: invalid scale range");
  require(cfg.mask_fraction >= 0.0 && cfg.mask_fraction < 1.0,
          "make_views: mask_fraction must be in [0, 1)");
  require(cfg.crop_fraction_min > 0.0 && cfg.crop_fraction_min <= 1.0,
          "make_views: crop_fraction_min must be in (0, 1]");
  require(cfg.noise_sigma >= 0.0, "make_views: noise_sigma must be >= 0");

  const std::size_t dim = x_row.size();
  const std::size_t mask_count = static_cast<std::size_t>(
      std::floor(cfg.mask_fraction * static_cast<double>(dim) + 0.5));

  std::vector<std::vector<double>> views(2 * m);
  std::vector<std::size_t> order(dim);
  for (auto& view : views) {
    view = x_row;

    if (cfg.crop_fraction_min < 1.0) {
      const double f = rng.uniform(cfg.crop_fraction_min, 1.0);
      const std::size_t keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::floor(f * static_cast<double>(dim) + 0.5)));
      if (keep < dim) {
        const std::size_t start = rng.index(dim - keep + 1);
        for (std::size_t d = 0; d < dim; ++d) {
          if (d < start || d >= start + keep) view[d] = 0.0;
        }
      }
    }

    const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    for (auto& v : view) v *= scale;

    if (cfg.noise_sigma > 0.0) {
      for (auto& v : view) v += cfg.noise_sigma * rng.normal();
    }

    if (mask_count > 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < mask_count; ++i) {
        const std::size_t j = i + rng.index(dim - i);
        std::swap(order[i], order[j]);
        view[order[i]] = 0.0;
      }
    }
  }
  return views;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  validate_dataset(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("dataset: cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(ds.size()));
  put_u32(out, static_cast<std::uint32_t>(ds.dim()));
  put_u32(out, ds.n_class);
  put_u32(out, ds.n_super);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    put_u32(out, ds.class_labels[r]);
    put_u32(out, ds.superclass_labels[r]);
    for (std::size_t d = 0; d < ds.dim(); ++d) put_f64(out, ds.x(r, d));
  }
  if (!out) throw data_error("dataset: write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("dataset: cannot open '" + path + "'");

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(kMagic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw data_error("dataset: bad magic in '" + path + "'");
  }

  Dataset ds;
  const std::uint32_t n = get_u32(in, path);
  const std::uint32_t dim = get_u32(in, path);
  ds.n_class = get_u32(in, path);
  ds.n_super = get_u32(in, path);
  ds.x = Matrix(n, dim);
  ds.class_labels.resize(n);
  ds.superclass_labels.resize(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    ds.class_labels[r] = get_u32(in, path);
    ds.superclass_labels[r] = get_u32(in, path);
    for (std::uint32_t d = 0; d < dim; ++d) ds.x(r, d) = get_f64(in, path);
  }
  // Trailing garbage is as suspect as truncation.
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw data_error("dataset: trailing bytes in '" + path + "'");
  }
  validate_dataset(ds);
  return ds;
}

Dataset filter_classes(const Dataset& ds,
                       const std::vector<std::uint32_t>& classes) {
  std::vector<bool> keep(ds.n_class, false);
  for (auto c : classes) {
    require(c < ds.n_class, "filter_classes: class id out of range");
    keep[c] = true;
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    if (keep[ds.class_labels[r]]) rows.push_back(r);
  }
  return take_rows(ds, rows);
}

void split_dataset(const Dataset& ds, double test_fraction, std::uint64_t seed,
                   Dataset& train, Dataset& test) {
  require(test_fraction >= 0.0 && test_fraction < 1.0,
          "split_dataset: test_fraction must be in [0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng = RngStream::derive(seed, "split");
  rng.shuffle(order);

  const std::size_t n_test =
      static_cast<std::size_t>(test_fraction * static_cast<double>(ds.size()));
  std::vector<std::size_t> test_rows(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train_rows(order.begin() + n_test, order.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  train = take_rows(ds, train_rows);
  test = take_rows(ds, test_rows);
}

void validate_dataset(const Dataset& ds) {
  if (ds.size() < 1) throw data_error("dataset: empty");
  if (ds.class_labels.size() != ds.size() ||
      ds.superclass_labels.size() != ds.size()) {
    throw data_error("dataset: label count does not match sample count");
  }
  if (ds.n_class < 1 || ds.n_super < 1) {
    throw data_error("dataset: class/superclass counts must be positive");
  }
  // Each class must map to exactly one superclass.
  std::vector<std::int64_t> super_of(ds.n_class, -1);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto c = ds.class_labels[r];
    const auto s = ds.superclass_labels[r];
    if (c >= ds.n_class) {
      throw data_error("dataset: class label " + std::to_string(c) +
                       " out of range at row " + std::to_string(r));
    }
    if (s >= ds.n_super) {
      throw data_error("dataset: superclass label " + std::to_string(s) +
                       " out of range at row " + std::to_string(r));
    }
    if (super_of[c] < 0) {
      super_of[c] = s;
    } else if (super_of[c] != static_cast<std::int64_t>(s)) {
      throw data_error("dataset: class " + std::to_string(c) +
                       " maps to more than one superclass");
    }
  }
  if (!ds.x.all_finite()) throw data_error("dataset: non-finite sample values");
}

}  // namespace fussl
