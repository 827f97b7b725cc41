#include "checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "error.hpp"

namespace fussl {

namespace {

constexpr char kMagic[8] = {'F', 'U', 'S', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double d) {
  const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size)
      : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) throw data_error("checkpoint: truncated file");
  }
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

Matrix record_to_matrix(const TensorRecord& rec) {
  if (rec.dims.size() != 2) {
    throw data_error("checkpoint: tensor '" + rec.name + "' is not rank 2");
  }
  Matrix m(rec.dims[0], rec.dims[1]);
  if (m.data.size() != rec.data.size()) {
    throw data_error("checkpoint: tensor '" + rec.name + "' size mismatch");
  }
  m.data = rec.data;
  return m;
}

TensorRecord matrix_record(const std::string& name, const Matrix& m) {
  return TensorRecord{name,
                      {static_cast<std::uint32_t>(m.rows),
                       static_cast<std::uint32_t>(m.cols)},
                      m.data};
}

void append_layer_records(std::vector<TensorRecord>& out,
                          const std::string& prefix, const Layer& layer) {
  const auto& s = layer.spec;
  out.push_back(TensorRecord{
      prefix + ".spec",
      {1, 5},
      {static_cast<double>(s.in_dim), static_cast<double>(s.out_dim),
       s.has_batchnorm ? 1.0 : 0.0,
       s.activation == Activation::kRelu ? 1.0 : 0.0,
       layer.trainable ? 1.0 : 0.0}});
  out.push_back(matrix_record(prefix + ".weight", layer.weight));
  out.push_back(matrix_record(prefix + ".bias", layer.bias));
  if (s.has_batchnorm) {
    out.push_back(matrix_record(prefix + ".bn_gamma", layer.bn_gamma));
    out.push_back(matrix_record(prefix + ".bn_beta", layer.bn_beta));
    out.push_back(matrix_record(prefix + ".bn_running_mean", layer.bn_running_mean));
    out.push_back(matrix_record(prefix + ".bn_running_var", layer.bn_running_var));
  }
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(
    const std::vector<TensorRecord>& tensors) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
  put_u32(out, kFormatVersion);
  for (const auto& rec : tensors) {
    put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out.insert(out.end(), rec.name.begin(), rec.name.end());
    put_u32(out, static_cast<std::uint32_t>(rec.dims.size()));
    std::size_t count = 1;
    for (auto d : rec.dims) {
      put_u32(out, d);
      count *= d;
    }
    if (count != rec.data.size()) {
      throw data_error("checkpoint: tensor '" + rec.name +
                       "' dims do not match data size");
    }
    for (double v : rec.data) put_f64(out, v);
  }
  return out;
}

void write_checkpoint(const std::string& path,
                      const std::vector<TensorRecord>& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw data_error("checkpoint: cannot open '" + path + "' for writing");
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!file) throw data_error("checkpoint: write failed for '" + path + "'");
}

std::vector<TensorRecord> read_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw data_error("checkpoint: cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());

  Reader reader(bytes.data(), bytes.size());
  const std::string magic = reader.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw data_error("checkpoint: bad magic in '" + path + "'");
  }
  const std::uint32_t version = reader.u32();
  if (version != kFormatVersion) {
    throw data_error("checkpoint: unsupported format version " +
                     std::to_string(version));
  }

  std::vector<TensorRecord> tensors;
  while (!reader.at_end()) {
    TensorRecord rec;
    rec.name = reader.bytes(reader.u32());
    const std::uint32_t rank = reader.u32();
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      rec.dims.push_back(reader.u32());
      count *= rec.dims.back();
    }
    rec.data.resize(count);
    for (auto& v : rec.data) v = reader.f64();
    tensors.push_back(std::move(rec));
  }
  return tensors;
}

std::vector<TensorRecord> encoder_to_records(const EncoderParams& params,
                                             const std::string& prefix) {
  std::vector<TensorRecord> out;
  out.push_back(TensorRecord{prefix + "meta",
                             {1, 4},
                             {static_cast<double>(params.backbone.size()),
                              static_cast<double>(params.projector.size()),
                              static_cast<double>(params.predictor.size()),
                              params.bn_momentum}});
  const auto section = [&](const char* name, const std::vector<Layer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      append_layer_records(out, prefix + name + "." + std::to_string(i),
                           layers[i]);
    }
  };
  section("backbone", params.backbone);
  section("projector", params.projector);
  section("predictor", params.predictor);
  return out;
}

EncoderParams encoder_from_records(const std::vector<TensorRecord>& tensors,
                                   const std::string& prefix) {
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& rec : tensors) by_name[rec.name] = &rec;

  const auto find = [&](const std::string& name) -> const TensorRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw data_error("checkpoint: missing tensor '" + name + "'");
    }
    return *it->second;
  };

  const TensorRecord& meta = find(prefix + "meta");
  if (meta.data.size() != 4) throw data_error("checkpoint: malformed meta");

  EncoderParams params;
  params.bn_momentum = meta.data[3];
  const auto load_section = [&](const char* name, std::size_t count,
                                std::vector<Layer>& layers) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::string p = prefix + name + "." + std::to_string(i);
      const TensorRecord& spec_rec = find(p + ".spec");
      if (spec_rec.data.size() != 5) {
        throw data_error("checkpoint: malformed spec for '" + p + "'");
      }
      Layer layer;
      layer.spec.in_dim = static_cast<std::size_t>(spec_rec.data[0]);
      layer.spec.out_dim = static_cast<std::size_t>(spec_rec.data[1]);
      layer.spec.has_batchnorm = spec_rec.data[2] != 0.0;
      layer.spec.activation =
          spec_rec.data[3] != 0.0 ? Activation::kRelu : Activation::kNone;
      layer.trainable = spec_rec.data[4] != 0.0;
      layer.weight = record_to_matrix(find(p + ".weight"));
      layer.bias = record_to_matrix(find(p + ".bias"));
      if (layer.spec.has_batchnorm) {
        layer.bn_gamma = record_to_matrix(find(p + ".bn_gamma"));
        layer.bn_beta = record_to_matrix(find(p + ".bn_beta"));
        layer.bn_running_mean = record_to_matrix(find(p + ".bn_running_mean"));
        layer.bn_running_var = record_to_matrix(find(p + ".bn_running_var"));
      }
      if (layer.weight.rows != layer.spec.out_dim ||
          layer.weight.cols != layer.spec.in_dim) {
        throw data_error("checkpoint: weight shape mismatch for '" + p + "'");
      }
      layers.push_back(std::move(layer));
    }
  };
  load_section("backbone", static_cast<std::size_t>(meta.data[0]), params.backbone);
  load_section("projector", static_cast<std::size_t>(meta.data[1]), params.projector);
  load_section("predictor", static_cast<std::size_t>(meta.data[2]), params.predictor);
  if (params.backbone.empty() || params.projector.empty()) {
    throw data_error("checkpoint: encoder missing backbone or projector");
  }
  return params;
}

void save_encoder(const EncoderParams& params, const std::string& path) {
  write_checkpoint(path, encoder_to_records(params));
}

EncoderParams load_encoder(const std::string& path) {
  return encoder_from_records(read_checkpoint(path));
}

void save_ensemble(const std::vector<EncoderParams>& blocks,
                   const std::string& path) {
  std::vector<TensorRecord> records;
  records.push_back(TensorRecord{
      "ensemble.meta", {1, 1}, {static_cast<double>(blocks.size())}});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto block_records =
        encoder_to_records(blocks[i], "block" + std::to_string(i) + ".");
    records.insert(records.end(), block_records.begin(), block_records.end());
  }
  write_checkpoint(path, records);
}

std::vector<EncoderParams> load_ensemble(const std::string& path) {
  const auto records = read_checkpoint(path);
  const auto meta = std::find_if(records.begin(), records.end(),
                                 [](const TensorRecord& rec) {
                                   return rec.name == "ensemble.meta";
                                 });
  if (meta == records.end() || meta->data.size() != 1) {
    throw data_error("checkpoint: '" + path + "' is not an ensemble");
  }
  const auto m = static_cast<std::size_t>(meta->data[0]);
  if (m < 1) throw data_error("checkpoint: empty ensemble in '" + path + "'");
  std::vector<EncoderParams> blocks;
  blocks.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    blocks.push_back(
        encoder_from_records(records, "block" + std::to_string(i) + "."));
  }
  return blocks;
}

}  // namespace fussl
