#include "hfn/compress.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hfn {

namespace {

struct ByteWriter {
  std::vector<uint8_t> buf;

  void u8(uint8_t v) { buf.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void bytes(const uint8_t* p, size_t n) { buf.insert(buf.end(), p, p + n); }
};

struct ByteReader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated at offset " + std::to_string(pos));
  }
  uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(buf[pos++]) << (8 * i);
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  const uint8_t* bytes(size_t n) {
    need(n);
    const uint8_t* p = buf.data() + pos;
    pos += n;
    return p;
  }
};

constexpr uint16_t kFlagStats = 1;
constexpr uint16_t kFlagAppendix = 2;

}  // namespace

std::vector<uint8_t> pack_mask_bits(const MaskBits& mask) {
  std::vector<uint8_t> out((mask.size() + 7) / 8, 0);
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  }
  return out;
}

MaskBits unpack_mask_bits(const std::vector<uint8_t>& bytes, int64_t n) {
  if (static_cast<int64_t>(bytes.size()) != (n + 7) / 8) {
    throw IoError("mask byte count does not match element count");
  }
  MaskBits mask(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < n; ++i) {
    mask[static_cast<size_t>(i)] = (bytes[static_cast<size_t>(i / 8)] >> (i % 8)) & 1u;
  }
  return mask;
}

std::vector<uint8_t> compress_model(Model<float>& model, bool include_appendix,
                                    uint32_t epochs_trained) {
  if (!is_supermask(model.method)) {
    throw ConfigError("compress: method " + std::string(to_string(model.method)) +
                      " stores learned weights, which are not regenerable from a seed");
  }
  const ArchConfig& cfg = model.cfg;

  ByteWriter w;
  w.bytes(reinterpret_cast<const uint8_t*>("HFNC"), 4);
  w.u16(kFormatVersion);
  w.u16(kPrngAlgorithmId);
  w.u16(kChecksumAlgorithmId);
  uint16_t flags = kFlagStats;
  if (include_appendix) flags |= kFlagAppendix;
  w.u16(flags);
  w.u64(model.seed);
  w.u8(static_cast<uint8_t>(cfg.stem));
  w.u8(static_cast<uint8_t>(cfg.block));
  w.u8(static_cast<uint8_t>(model.method));
  w.u8(cfg.ubn ? 1 : 0);
  w.u8(static_cast<uint8_t>(model.init));
  for (int i = 0; i < 4; ++i) w.u32(static_cast<uint32_t>(cfg.stage_blocks[i]));
  uint8_t fold_mask = 0;
  for (int i = 0; i < 4; ++i)
    if (cfg.folded[i]) fold_mask |= static_cast<uint8_t>(1u << i);
  w.u8(fold_mask);
  w.u32(static_cast<uint32_t>(std::lround(cfg.width_mult * 1000.0)));
  w.u32(static_cast<uint32_t>(cfg.base_channels));
  w.u32(static_cast<uint32_t>(cfg.num_classes));
  w.u32(static_cast<uint32_t>(cfg.k_permille));
  w.u32(static_cast<uint32_t>(cfg.input_size));

  int masked_layers = 0;
  model.for_each_conv([&](ConvLayer<float>& c) {
    if (c.masked) ++masked_layers;
  });
  int bn_states = 0;
  model.for_each_bn([&](BnLayer<float>&) { ++bn_states; });
  w.u32(static_cast<uint32_t>(masked_layers));
  w.u32(static_cast<uint32_t>(bn_states));

  model.for_each_conv([&](ConvLayer<float>& c) {
    if (!c.masked) return;
    if (!c.mask_valid) c.refresh_mask();
    w.u32(static_cast<uint32_t>(c.spec.index));
    w.u64(static_cast<uint64_t>(c.w.numel()));
    w.u16(static_cast<uint16_t>(c.k_permille));
    auto packed = pack_mask_bits(c.mask);
    w.bytes(packed.data(), packed.size());
  });

  model.for_each_bn([&](BnLayer<float>& b) {
    if (!b.spec.ubn) return;
    w.u32(static_cast<uint32_t>(b.state.channels));
    for (auto v : b.state.gamma.data) w.f32(v);
    for (auto v : b.state.beta.data) w.f32(v);
  });

  model.for_each_bn([&](BnLayer<float>& b) {
    w.u32(static_cast<uint32_t>(b.state.channels));
    for (auto v : b.state.running_mean.data) w.f32(v);
    for (auto v : b.state.running_var.data) w.f32(v);
  });

  if (include_appendix) {
    model.for_each_conv([&](ConvLayer<float>& c) {
      if (!c.masked) return;
      for (auto v : c.scores.data) w.f32(v);
      const bool has_vel = c.s_vel.numel() == c.scores.numel();
      for (int64_t i = 0; i < c.scores.numel(); ++i) w.f32(has_vel ? c.s_vel[i] : 0.0f);
    });
    w.u32(epochs_trained);
  }

  w.u64(fnv1a64(w.buf.data(), w.buf.size()));
  return w.buf;
}

namespace {

struct ParsedHeader {
  uint16_t version, prng_id, checksum_id, flags;
  uint64_t seed;
  Method method;
  InitKind init;
  ArchConfig cfg;
  uint32_t masked_layers, bn_states;
};

ParsedHeader parse_header(ByteReader& r) {
  const uint8_t* magic = r.bytes(4);
  if (std::memcmp(magic, "HFNC", 4) != 0) throw IoError("not a checkpoint: bad magic");
  ParsedHeader h;
  h.version = r.u16();
  if (h.version != kFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(h.version));
  }
  h.prng_id = r.u16();
  if (h.prng_id != kPrngAlgorithmId) {
    throw IoError("unsupported PRNG algorithm id " + std::to_string(h.prng_id));
  }
  h.checksum_id = r.u16();
  if (h.checksum_id != kChecksumAlgorithmId) {
    throw IoError("unsupported checksum algorithm id " + std::to_string(h.checksum_id));
  }
  h.flags = r.u16();
  h.seed = r.u64();
  const uint8_t stem = r.u8();
  const uint8_t block = r.u8();
  const uint8_t method = r.u8();
  const uint8_t ubn = r.u8();
  const uint8_t init = r.u8();
  if (stem > 1 || block > 1 || method > 3 || init > 2) throw IoError("corrupt header enums");
  h.cfg.stem = static_cast<StemKind>(stem);
  h.cfg.block = static_cast<BlockKind>(block);
  h.method = static_cast<Method>(method);
  h.cfg.ubn = ubn != 0;
  h.init = static_cast<InitKind>(init);
  for (int i = 0; i < 4; ++i) h.cfg.stage_blocks[i] = static_cast<int>(r.u32());
  const uint8_t fold_mask = r.u8();
  for (int i = 0; i < 4; ++i) h.cfg.folded[i] = (fold_mask >> i) & 1u;
  h.cfg.width_mult = static_cast<double>(r.u32()) / 1000.0;
  h.cfg.base_channels = static_cast<int>(r.u32());
  h.cfg.num_classes = static_cast<int>(r.u32());
  h.cfg.k_permille = static_cast<int>(r.u32());
  h.cfg.input_size = static_cast<int>(r.u32());
  h.masked_layers = r.u32();
  h.bn_states = r.u32();
  return h;
}

void verify_checksum(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 12) throw IoError("checkpoint too small");
  ByteReader tail{bytes, bytes.size() - 8};
  const uint64_t stored = tail.u64();
  const uint64_t actual = fnv1a64(bytes.data(), bytes.size() - 8);
  if (stored != actual) {
    throw IoError("checksum mismatch: checkpoint is corrupt or was edited");
  }
}

}  // namespace

Model<float> decompress_model(const std::vector<uint8_t>& bytes) {
  verify_checksum(bytes);
  ByteReader r{bytes};
  ParsedHeader h = parse_header(r);
  h.cfg.validate_for(h.method);

  Model<float> model = build_model<float>(h.cfg, h.seed, h.method, h.init);

  uint32_t expect_masked = 0;
  model.for_each_conv([&](ConvLayer<float>& c) {
    if (c.masked) ++expect_masked;
  });
  if (expect_masked != h.masked_layers) {
    throw IoError("masked layer count mismatch: file " + std::to_string(h.masked_layers) +
                  ", architecture " + std::to_string(expect_masked));
  }

  model.for_each_conv([&](ConvLayer<float>& c) {
    if (!c.masked) return;
    const uint32_t index = r.u32();
    const uint64_t n = r.u64();
    const uint16_t k = r.u16();
    if (index != static_cast<uint32_t>(c.spec.index) || n != static_cast<uint64_t>(c.w.numel())) {
      throw IoError("mask framing does not match layer " + c.spec.name);
    }
    c.k_permille = k;
    const size_t nb = static_cast<size_t>((n + 7) / 8);
    const uint8_t* p = r.bytes(nb);
    c.mask = unpack_mask_bits(std::vector<uint8_t>(p, p + nb), static_cast<int64_t>(n));
    c.mask_valid = true;
  });

  model.for_each_bn([&](BnLayer<float>& b) {
    if (!b.spec.ubn) return;
    const uint32_t ch = r.u32();
    if (ch != static_cast<uint32_t>(b.state.channels)) throw IoError("UBN channel mismatch");
    for (auto& v : b.state.gamma.data) v = r.f32();
    for (auto& v : b.state.beta.data) v = r.f32();
  });

  if (h.flags & kFlagStats) {
    model.for_each_bn([&](BnLayer<float>& b) {
      const uint32_t ch = r.u32();
      if (ch != static_cast<uint32_t>(b.state.channels)) throw IoError("BN stat channel mismatch");
      for (auto& v : b.state.running_mean.data) v = r.f32();
      for (auto& v : b.state.running_var.data) v = r.f32();
    });
  }

  if (h.flags & kFlagAppendix) {
    model.for_each_conv([&](ConvLayer<float>& c) {
      if (!c.masked) return;
      for (auto& v : c.scores.data) v = r.f32();
      if (c.s_vel.numel() != c.scores.numel()) c.s_vel = Tensor<float>(c.scores.shape);
      for (auto& v : c.s_vel.data) v = r.f32();
    });
    (void)r.u32();  // epochs trained
  }
  return model;
}

void write_checkpoint(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  if (!out) throw IoError("short write: " + path);
}

std::vector<uint8_t> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

std::vector<std::pair<std::string, std::string>> dump_header(const std::vector<uint8_t>& bytes) {
  verify_checksum(bytes);
  ByteReader r{bytes};
  ParsedHeader h = parse_header(r);
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("magic", "HFNC");
  out.emplace_back("version", std::to_string(h.version));
  out.emplace_back("prng_algorithm", std::string(kPrngAlgorithmName) + " (id " +
                                         std::to_string(h.prng_id) + ")");
  out.emplace_back("checksum_algorithm", "fnv1a-64 (id " + std::to_string(h.checksum_id) + ")");
  out.emplace_back("has_running_stats", (h.flags & kFlagStats) ? "yes" : "no");
  out.emplace_back("has_training_appendix", (h.flags & kFlagAppendix) ? "yes" : "no");
  out.emplace_back("seed", std::to_string(h.seed));
  out.emplace_back("stem", to_string(h.cfg.stem));
  out.emplace_back("block", to_string(h.cfg.block));
  out.emplace_back("method", to_string(h.method));
  out.emplace_back("ubn", h.cfg.ubn ? "yes" : "no");
  out.emplace_back("init", h.init == InitKind::signed_constant ? "signed_constant"
                           : h.init == InitKind::kaiming_normal ? "kaiming_normal"
                                                                : "kaiming_uniform");
  std::string blocks;
  for (int i = 0; i < 4; ++i) blocks += (i ? "," : "") + std::to_string(h.cfg.stage_blocks[i]);
  out.emplace_back("stage_blocks", blocks);
  out.emplace_back("folded_stages", h.cfg.fold_string());
  out.emplace_back("width_mult", std::to_string(h.cfg.width_mult));
  out.emplace_back("base_channels", std::to_string(h.cfg.base_channels));
  out.emplace_back("num_classes", std::to_string(h.cfg.num_classes));
  out.emplace_back("k_permille", std::to_string(h.cfg.k_permille));
  out.emplace_back("input_size", std::to_string(h.cfg.input_size));
  out.emplace_back("masked_layers", std::to_string(h.masked_layers));
  out.emplace_back("bn_states", std::to_string(h.bn_states));
  out.emplace_back("file_bytes", std::to_string(bytes.size()));
  return out;
}

SizeBreakdown size_report(const ArchConfig& cfg, Method method) {
  cfg.validate_for(method);
  const ParamCounts pc = count_params(cfg);
  SizeBreakdown s;

  ArchConfig dense_cfg = cfg;
  dense_cfg.folded = {false, false, false, false};
  s.dense_bytes = 4 * reported_params(dense_cfg, Method::vanilla);

  if (is_supermask(method)) {
    s.mask_bytes = pc.mask_bytes;
    s.ubn_param_bytes = method == Method::hfn ? 4 * pc.ubn_affine : 0;
    s.stats_bytes = 4 * pc.running_scalars;
    // fixed header + framing (14 bytes per masked layer) + UBN/stat channel
    // framing + checksum
    const LayerPlan plan = make_plan(cfg);
    int64_t ubn_states = 0;
    for (const BnSpec* b : plan.bn_order())
      if (b->ubn) ++ubn_states;
    s.header_bytes =
        70 + 14 * pc.conv_layers +
        4 * (ubn_states + static_cast<int64_t>(plan.bn_order().size())) + 8;
    s.paper_bytes = s.mask_bytes + s.ubn_param_bytes;
    s.file_bytes = s.paper_bytes + s.stats_bytes + s.header_bytes;
  } else {
    s.paper_bytes = 4 * reported_params(cfg, method);
    s.file_bytes = s.paper_bytes + 4 * pc.running_scalars;
    s.stats_bytes = 4 * pc.running_scalars;
  }
  s.reduction = static_cast<double>(s.dense_bytes) / static_cast<double>(s.paper_bytes);
  return s;
}

}  // namespace hfn
