#include "hfn/model_plan.hpp"

#include <cmath>
#include <sstream>

namespace hfn {

const char* to_string(StemKind k) {
  return k == StemKind::cifar_3x3 ? "cifar_3x3" : "imagenet_7x7";
}

const char* to_string(BlockKind k) { return k == BlockKind::bottleneck ? "bottleneck" : "basic"; }

const char* to_string(Method m) {
  switch (m) {
    case Method::vanilla: return "vanilla";
    case Method::folding: return "folding";
    case Method::hnn: return "hnn";
    case Method::hfn: return "hfn";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "vanilla") return Method::vanilla;
  if (s == "folding") return Method::folding;
  if (s == "hnn") return Method::hnn;
  if (s == "hfn") return Method::hfn;
  throw ConfigError("unknown method '" + s + "' (expected vanilla|folding|hnn|hfn)");
}

StemKind stem_from_string(const std::string& s) {
  if (s == "cifar" || s == "cifar_3x3") return StemKind::cifar_3x3;
  if (s == "imagenet" || s == "imagenet_7x7") return StemKind::imagenet_7x7;
  throw ConfigError("unknown stem '" + s + "' (expected cifar|imagenet)");
}

std::string ArchConfig::fold_string() const {
  std::string s;
  for (int i = 0; i < 4; ++i) {
    if (folded[i]) {
      if (!s.empty()) s += ",";
      s += std::to_string(i + 1);
    }
  }
  return s.empty() ? "-" : s;
}

void ArchConfig::validate() const {
  for (int i = 0; i < 4; ++i) {
    if (stage_blocks[i] < 1) throw ConfigError("stage " + std::to_string(i + 1) + " needs >= 1 block");
    if (folded[i] && stage_blocks[i] < 3) {
      throw ConfigError("folded stage " + std::to_string(i + 1) + " needs >= 3 blocks, got " +
                        std::to_string(stage_blocks[i]));
    }
  }
  if (block == BlockKind::basic && any_folded()) {
    throw ConfigError("folding basic-block architectures is not supported");
  }
  if (width_mult < 1.0) throw ConfigError("width_mult must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (k_permille <= 0 || k_permille > 1000) throw ConfigError("k_permille must be in (0,1000]");
  if (input_size < 4) throw ConfigError("input_size must be >= 4");
}

void ArchConfig::validate_for(Method method) const {
  validate();
  if (is_folded_method(method) && !any_folded()) {
    throw ConfigError(std::string(to_string(method)) + " requires at least one folded stage");
  }
  if (!is_folded_method(method) && any_folded()) {
    throw ConfigError("folded stages given but method is " + std::string(to_string(method)) +
                      "; use method folding or hfn");
  }
}

std::array<bool, 4> parse_fold_set(const std::string& csv) {
  std::array<bool, 4> out{false, false, false, false};
  if (csv.empty() || csv == "-" || csv == "none") return out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    int s;
    try {
      s = std::stoi(tok);
    } catch (...) {
      throw ConfigError("bad fold stage '" + tok + "'");
    }
    if (s < 1 || s > 4) throw ConfigError("fold stages must be in 1..4, got " + tok);
    out[s - 1] = true;
  }
  return out;
}

ArchConfig make_arch(int depth, bool wide, StemKind stem, int num_classes) {
  ArchConfig cfg;
  cfg.stem = stem;
  cfg.num_classes = num_classes;
  cfg.input_size = stem == StemKind::cifar_3x3 ? 32 : 224;
  cfg.width_mult = wide ? 2.0 : 1.0;
  switch (depth) {
    case 34:
      cfg.block = BlockKind::basic;
      cfg.stage_blocks = {3, 4, 6, 3};
      break;
    case 50: cfg.stage_blocks = {3, 4, 6, 3}; break;
    case 101: cfg.stage_blocks = {3, 4, 23, 3}; break;
    case 152: cfg.stage_blocks = {3, 8, 36, 3}; break;
    case 200: cfg.stage_blocks = {3, 24, 36, 3}; break;
    default: throw ConfigError("unknown depth " + std::to_string(depth) + " (have 34/50/101/152/200)");
  }
  return cfg;
}

namespace {

struct PlanBuilder {
  int conv_idx = 0;
  int bn_idx = 0;

  ConvSpec conv(LayerRole role, int stage, const std::string& name, int out_c, int in_c, int k,
                int stride, int pad, int iterations = 1) {
    ConvSpec c;
    c.role = role;
    c.stage = stage;
    c.out_c = out_c;
    c.in_c = in_c;
    c.kh = c.kw = k;
    c.stride = stride;
    c.pad = pad;
    c.iterations = iterations;
    c.index = conv_idx++;
    c.name = name;
    return c;
  }

  BnSpec bn(int channels, bool ubn, const std::string& name) {
    BnSpec b;
    b.channels = channels;
    b.ubn = ubn;
    b.index = bn_idx++;
    b.name = name;
    return b;
  }
};

BlockPlan make_bottleneck(PlanBuilder& pb, const std::string& prefix, int stage, int in_c,
                          int mid_c, int out_c, int stride, int iterations) {
  BlockPlan b;
  b.stride = stride;
  b.convs.push_back(pb.conv(LayerRole::conv1, stage, prefix + ".conv1", mid_c, in_c, 1, 1, 0, iterations));
  b.convs.push_back(pb.conv(LayerRole::conv2, stage, prefix + ".conv2", mid_c, mid_c, 3, stride, 1, iterations));
  b.convs.push_back(pb.conv(LayerRole::conv3, stage, prefix + ".conv3", out_c, mid_c, 1, 1, 0, iterations));
  if (stride != 1 || in_c != out_c) {
    b.proj = pb.conv(LayerRole::proj, stage, prefix + ".proj", out_c, in_c, 1, stride, 0, iterations);
    b.proj_bn = pb.bn(out_c, false, prefix + ".proj.bn");
  }
  b.bns.push_back(pb.bn(mid_c, false, prefix + ".bn1"));
  b.bns.push_back(pb.bn(mid_c, false, prefix + ".bn2"));
  b.bns.push_back(pb.bn(out_c, false, prefix + ".bn3"));
  return b;
}

BlockPlan make_basic(PlanBuilder& pb, const std::string& prefix, int stage, int in_c, int out_c,
                     int stride) {
  BlockPlan b;
  b.stride = stride;
  b.convs.push_back(pb.conv(LayerRole::conv1, stage, prefix + ".conv1", out_c, in_c, 3, stride, 1));
  b.convs.push_back(pb.conv(LayerRole::conv2, stage, prefix + ".conv2", out_c, out_c, 3, 1, 1));
  if (stride != 1 || in_c != out_c) {
    b.proj = pb.conv(LayerRole::proj, stage, prefix + ".proj", out_c, in_c, 1, stride, 0);
    b.proj_bn = pb.bn(out_c, false, prefix + ".proj.bn");
  }
  b.bns.push_back(pb.bn(out_c, false, prefix + ".bn1"));
  b.bns.push_back(pb.bn(out_c, false, prefix + ".bn2"));
  return b;
}

}  // namespace

LayerPlan make_plan(const ArchConfig& cfg) {
  cfg.validate();
  LayerPlan plan;
  PlanBuilder pb;
  const int expansion = cfg.block == BlockKind::bottleneck ? 4 : 1;

  if (cfg.stem == StemKind::cifar_3x3) {
    plan.stem = pb.conv(LayerRole::stem, 0, "stem", cfg.base_channels, 3, 3, 1, 1);
    plan.stem_maxpool = false;
  } else {
    plan.stem = pb.conv(LayerRole::stem, 0, "stem", cfg.base_channels, 3, 7, 2, 3);
    plan.stem_maxpool = true;
  }
  plan.stem_bn = pb.bn(cfg.base_channels, false, "stem.bn");

  int in_c = cfg.base_channels;
  for (int s = 1; s <= 4; ++s) {
    StagePlan& sp = plan.stages[s - 1];
    sp.index = s;
    sp.blocks = cfg.stage_blocks[s - 1];
    sp.folded = cfg.folded[s - 1];
    sp.stride = s == 1 ? 1 : 2;
    const int base = cfg.base_channels << (s - 1);
    sp.mid_c = static_cast<int>(std::lround(base * cfg.width_mult));
    sp.out_c = base * expansion;
    sp.in_c = in_c;
    const std::string sname = "s" + std::to_string(s);

    auto make_block = [&](const std::string& prefix, int block_in, int stride, int iterations) {
      return cfg.block == BlockKind::bottleneck
                 ? make_bottleneck(pb, prefix, s, block_in, sp.mid_c, sp.out_c, stride, iterations)
                 : make_basic(pb, prefix, s, block_in, sp.out_c, stride);
    };

    sp.first = make_block(sname + ".b0", in_c, sp.stride, 1);
    if (sp.folded) {
      sp.iterations = sp.blocks - 1;
      sp.recurrent = make_block(sname + ".shared", sp.out_c, 1, sp.iterations);
      const int bn_sets = cfg.ubn ? sp.iterations : 1;
      for (int i = 0; i < bn_sets; ++i) {
        std::vector<BnSpec> set;
        const std::string iname = sname + (cfg.ubn ? ".it" + std::to_string(i) : ".sharedbn");
        set.push_back(pb.bn(sp.mid_c, cfg.ubn, iname + ".bn1"));
        set.push_back(pb.bn(sp.mid_c, cfg.ubn, iname + ".bn2"));
        set.push_back(pb.bn(sp.out_c, cfg.ubn, iname + ".bn3"));
        sp.ubn.push_back(std::move(set));
      }
      // The recurrent block's own BnSpecs are placeholders; the per-iteration
      // sets above are the real instances.
      sp.recurrent->bns.clear();
    } else {
      for (int b = 1; b < sp.blocks; ++b) {
        sp.tail.push_back(make_block(sname + ".b" + std::to_string(b), sp.out_c, 1, 1));
      }
    }
    in_c = sp.out_c;
  }

  ConvSpec fc;
  fc.role = LayerRole::fc;
  fc.stage = 5;
  fc.out_c = cfg.num_classes;
  fc.in_c = in_c;
  fc.kh = fc.kw = 1;
  fc.stride = 1;
  fc.pad = 0;
  fc.index = pb.conv_idx++;
  fc.name = "fc";
  plan.fc = fc;

  plan.conv_count = static_cast<int>(plan.conv_order().size());
  plan.bn_count = static_cast<int>(plan.bn_order().size());
  return plan;
}

std::vector<const ConvSpec*> LayerPlan::conv_order() const {
  std::vector<const ConvSpec*> order;
  order.push_back(&stem);
  auto add_block = [&](const BlockPlan& b) {
    for (const auto& c : b.convs) order.push_back(&c);
    if (b.proj) order.push_back(&*b.proj);
  };
  for (const auto& sp : stages) {
    add_block(sp.first);
    for (const auto& b : sp.tail) add_block(b);
    if (sp.recurrent) add_block(*sp.recurrent);
  }
  order.push_back(&fc);
  return order;
}

std::vector<const BnSpec*> LayerPlan::bn_order() const {
  std::vector<const BnSpec*> order;
  order.push_back(&stem_bn);
  auto add_block = [&](const BlockPlan& b) {
    if (b.proj_bn) order.push_back(&*b.proj_bn);
    for (const auto& s : b.bns) order.push_back(&s);
  };
  for (const auto& sp : stages) {
    add_block(sp.first);
    for (const auto& b : sp.tail) add_block(b);
    for (const auto& set : sp.ubn) {
      for (const auto& s : set) order.push_back(&s);
    }
  }
  return order;
}

ParamCounts count_params(const ArchConfig& cfg) {
  const LayerPlan plan = make_plan(cfg);
  ParamCounts pc;
  for (const ConvSpec* c : plan.conv_order()) {
    const int64_t n = c->weight_count();
    pc.weight_params += n;
    pc.surviving += (n * cfg.k_permille) / 1000;
    pc.mask_bytes += (n + 7) / 8;
    ++pc.conv_layers;
  }
  for (const BnSpec* b : plan.bn_order()) {
    pc.bn_affine_full += 2ll * b->channels;
    pc.running_scalars += 2ll * b->channels;
    if (b->ubn) pc.ubn_affine += 2ll * b->channels;
  }
  return pc;
}

int64_t reported_params(const ArchConfig& cfg, Method method) {
  const ParamCounts pc = count_params(cfg);
  switch (method) {
    case Method::vanilla:
    case Method::folding: return pc.weight_params + pc.bn_affine_full;
    case Method::hnn: return pc.surviving;
    case Method::hfn: return pc.surviving + pc.ubn_affine;
  }
  return 0;
}

int64_t mult_count(const ArchConfig& cfg, bool density_scaled) {
  const LayerPlan plan = make_plan(cfg);
  const double density = static_cast<double>(cfg.k_permille) / 1000.0;
  int64_t total = 0;
  int hw = cfg.input_size;
  auto out_size = [](int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; };
  auto conv_macs = [&](const ConvSpec& c, int in_hw) {
    const int o = out_size(in_hw, c.kh, c.stride, c.pad);
    return std::pair<int64_t, int>(c.weight_count() * o * o, o);
  };

  auto [stem_macs, stem_out] = conv_macs(plan.stem, hw);
  total += stem_macs;
  hw = stem_out;
  if (plan.stem_maxpool) hw = out_size(hw, 3, 2, 1);

  auto block_macs = [&](const BlockPlan& b, int in_hw) {
    int64_t macs = 0;
    int cur = in_hw;
    for (const auto& c : b.convs) {
      auto [m, o] = conv_macs(c, cur);
      macs += m;
      cur = o;
    }
    if (b.proj) macs += conv_macs(*b.proj, in_hw).first;
    return std::pair<int64_t, int>(macs, cur);
  };

  for (const auto& sp : plan.stages) {
    auto [m, o] = block_macs(sp.first, hw);
    total += m;
    hw = o;
    for (const auto& b : sp.tail) total += block_macs(b, hw).first;
    if (sp.recurrent) total += block_macs(*sp.recurrent, hw).first * sp.iterations;
  }
  total += plan.fc.weight_count();  // global average pool reduces to 1x1
  if (density_scaled) total = static_cast<int64_t>(std::llround(static_cast<double>(total) * density));
  return total;
}

}  // namespace hfn
