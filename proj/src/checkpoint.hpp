#pragma once

#include <string>
#include <vector>

#include "encoder.hpp"

namespace fussl {

// Checkpoint container: magic "FUSLCKPT", u32 format version, then a
// sequence of named tensor records (name length u32, name bytes, rank u32,
// dims u32 x rank, data as 64-bit little-endian reals). Round trips are
// bit-exact.
struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

void write_checkpoint(const std::string& path,
                      const std::vector<TensorRecord>& tensors);
std::vector<TensorRecord> read_checkpoint(const std::string& path);

// Serialized encoder bytes, exactly as write would put them on disk.
std::vector<unsigned char> encode_checkpoint(
    const std::vector<TensorRecord>& tensors);

std::vector<TensorRecord> encoder_to_records(const EncoderParams& params,
                                             const std::string& prefix = "");
EncoderParams encoder_from_records(const std::vector<TensorRecord>& tensors,
                                   const std::string& prefix = "");

void save_encoder(const EncoderParams& params, const std::string& path);
EncoderParams load_encoder(const std::string& path);

// All blocks of an ensemble in one checkpoint ("block<i>." prefixes).
void save_ensemble(const std::vector<EncoderParams>& blocks,
                   const std::string& path);
std::vector<EncoderParams> load_ensemble(const std::string& path);

}  // namespace fussl
