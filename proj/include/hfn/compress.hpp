#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hfn/model.hpp"

namespace hfn {

// Checkpoint format (version 1, all multi-byte fields little-endian):
//
//   offset  field
//   0       magic "HFNC"
//   4       u16 format version
//   6       u16 PRNG algorithm id        (1 = philox4x32-10)
//   8       u16 checksum algorithm id    (1 = fnv1a-64)
//   10      u16 flags                    (bit0 running stats, bit1 appendix)
//   12      u64 seed
//   20      u8  stem, u8 block, u8 method, u8 ubn, u8 init kind
//   25      u32 stage_blocks[4]
//   41      u8  folded-stage bitmask
//   42      u32 width permille
//           u32 base_channels, u32 num_classes, u32 k_permille, u32 input_size
//           u32 masked layer count, u32 bn state count
//   payload
//           per masked layer, plan order:
//             u32 plan index, u64 element count, u16 k_permille,
//             ceil(n/8) mask bytes (bit i of byte j = element 8*j+i, flat
//             row-major OIHW order)
//           per UBN state, plan order: u32 channels, f32 gamma[], f32 beta[]
//           if flags&1: per BN state, plan order: u32 channels, f32 mean[], f32 var[]
//           if flags&2: per masked layer: f32 scores[], f32 velocity[]; u32 epochs
//   tail    u64 fnv1a-64 over every preceding byte
//
// Weights are not stored anywhere: they are regenerated from (seed, plan
// position) at load time.

inline constexpr uint16_t kFormatVersion = 1;
inline constexpr uint16_t kChecksumAlgorithmId = 1;  // fnv1a-64

std::vector<uint8_t> pack_mask_bits(const MaskBits& mask);
MaskBits unpack_mask_bits(const std::vector<uint8_t>& bytes, int64_t n);

// Serializes a supermask-trained model. Weight-learning models are rejected:
// their weights are not regenerable from the seed.
std::vector<uint8_t> compress_model(Model<float>& model, bool include_appendix = false,
                                    uint32_t epochs_trained = 0);

Model<float> decompress_model(const std::vector<uint8_t>& bytes);

void write_checkpoint(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_checkpoint(const std::string& path);

// Header fields as printable (name, value) pairs for the --dump-header mode.
std::vector<std::pair<std::string, std::string>> dump_header(const std::vector<uint8_t>& bytes);

struct SizeBreakdown {
  int64_t mask_bytes = 0;        // 1 bit per masked weight
  int64_t ubn_param_bytes = 0;   // 4 bytes per UBN scale/bias
  int64_t stats_bytes = 0;       // 4 bytes per running-stat scalar (all BNs)
  int64_t header_bytes = 0;      // header + per-layer framing + checksum
  int64_t paper_bytes = 0;       // masks + UBN params (weight methods: 4*params)
  int64_t file_bytes = 0;        // actual checkpoint size including stats
  int64_t dense_bytes = 0;       // 32-bit dense storage of the unfolded vanilla net
  double reduction = 1.0;        // dense_bytes / paper_bytes
};

SizeBreakdown size_report(const ArchConfig& cfg, Method method);

}  // namespace hfn
