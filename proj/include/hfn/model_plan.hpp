#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hfn/common.hpp"
#include "hfn/rng.hpp"

namespace hfn {

enum class StemKind : uint8_t { cifar_3x3 = 0, imagenet_7x7 = 1 };
enum class BlockKind : uint8_t { bottleneck = 0, basic = 1 };
enum class Method : uint8_t { vanilla = 0, folding = 1, hnn = 2, hfn = 3 };

const char* to_string(StemKind k);
const char* to_string(BlockKind k);
const char* to_string(Method m);
Method method_from_string(const std::string& s);
StemKind stem_from_string(const std::string& s);

inline bool is_supermask(Method m) { return m == Method::hnn || m == Method::hfn; }
inline bool is_folded_method(Method m) { return m == Method::folding || m == Method::hfn; }

// Full description of a (possibly folded) residual network.
struct ArchConfig {
  StemKind stem = StemKind::cifar_3x3;
  BlockKind block = BlockKind::bottleneck;
  std::array<int, 4> stage_blocks{3, 4, 6, 3};
  std::array<bool, 4> folded{false, false, false, false};
  double width_mult = 1.0;
  int base_channels = 64;
  int num_classes = 100;
  int k_permille = 300;
  int input_size = 32;
  bool ubn = true;  // unshared (per-iteration) BatchNorm in folded stages

  bool any_folded() const { return folded[0] || folded[1] || folded[2] || folded[3]; }
  std::string fold_string() const;

  // Structural invariants, independent of training method.
  void validate() const;
  // Method/architecture compatibility (folding methods need folded stages etc).
  void validate_for(Method method) const;
};

std::array<bool, 4> parse_fold_set(const std::string& csv);

// Named depth presets: 34 (basic), 50, 101, 152, 200 (+ wide variant).
ArchConfig make_arch(int depth, bool wide, StemKind stem, int num_classes);

enum class LayerRole : uint8_t { stem = 0, conv1, conv2, conv3, proj, fc };

struct ConvSpec {
  LayerRole role = LayerRole::stem;
  int stage = 0;  // 0 stem, 1..4 stages, 5 classifier
  int out_c = 0, in_c = 0, kh = 0, kw = 0, stride = 1, pad = 0;
  int iterations = 1;  // >1 when this conv is shared across fold iterations
  int index = -1;      // position in plan order; fixes the RNG substream
  std::string name;

  int64_t weight_count() const { return static_cast<int64_t>(out_c) * in_c * kh * kw; }
  int64_t fan_in() const { return static_cast<int64_t>(in_c) * kh * kw; }
};

struct BnSpec {
  int channels = 0;
  bool ubn = false;  // per-iteration instance inside a folded stage
  int index = -1;    // position in plan order; fixes the serialization order
  std::string name;
};

struct BlockPlan {
  std::vector<ConvSpec> convs;  // main-path convs in execution order
  std::optional<ConvSpec> proj;
  std::vector<BnSpec> bns;  // one per main-path conv
  std::optional<BnSpec> proj_bn;
  int stride = 1;
};

struct StagePlan {
  int index = 1;
  bool folded = false;
  int blocks = 0;
  int iterations = 0;  // blocks-1 when folded, else 0
  int in_c = 0, mid_c = 0, out_c = 0, stride = 1;
  BlockPlan first;
  std::vector<BlockPlan> tail;            // unfolded remainder
  std::optional<BlockPlan> recurrent;     // folded shared block (no projection)
  std::vector<std::vector<BnSpec>> ubn;   // per-iteration BN sets (one set if BN shared)
};

struct LayerPlan {
  ConvSpec stem;
  BnSpec stem_bn;
  bool stem_maxpool = false;
  std::array<StagePlan, 4> stages;
  ConvSpec fc;
  int conv_count = 0;  // number of ConvSpec entries including fc
  int bn_count = 0;

  std::vector<const ConvSpec*> conv_order() const;
  std::vector<const BnSpec*> bn_order() const;
};

LayerPlan make_plan(const ArchConfig& cfg);

struct ParamCounts {
  int64_t weight_params = 0;    // conv + classifier weights of this architecture
  int64_t bn_affine_full = 0;   // gamma+beta scalars when every BN learns (weight methods)
  int64_t ubn_affine = 0;       // gamma+beta scalars in per-iteration UBN instances
  int64_t surviving = 0;        // sum of floor(k/1000 * n) over masked layers
  int64_t running_scalars = 0;  // running mean+var scalars over all BN instances
  int64_t mask_bytes = 0;       // sum of ceil(n/8) over masked layers
  int64_t conv_layers = 0;      // masked layer count (convs + classifier)
};

ParamCounts count_params(const ArchConfig& cfg);

// Parameter count as reported per method: weights+BN for weight learning,
// surviving masked weights (+ UBN scales/biases for hfn) for supermask methods.
int64_t reported_params(const ArchConfig& cfg, Method method);

// Multiply operations for one inference at cfg.input_size. Folded stages run
// their shared block once per iteration, so folding never changes the total.
// density_scaled multiplies masked-layer MACs by k/1000 (specialized hardware).
int64_t mult_count(const ArchConfig& cfg, bool density_scaled = false);

}  // namespace hfn
