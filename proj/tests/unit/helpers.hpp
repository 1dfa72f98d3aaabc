#pragma once

#include "hfn/model.hpp"

namespace testutil {

// Smallest configuration exercising every mechanism: one block in the early
// stages, folded stages 3 and 4 with two iterations each.
inline hfn::ArchConfig desk_arch(int classes = 10, int img = 12) {
  hfn::ArchConfig cfg;
  cfg.stem = hfn::StemKind::cifar_3x3;
  cfg.stage_blocks = {1, 1, 3, 3};
  cfg.folded = {false, false, true, true};
  cfg.base_channels = 16;
  cfg.num_classes = classes;
  cfg.k_permille = 300;
  cfg.input_size = img;
  return cfg;
}

inline hfn::ArchConfig desk_unfolded(int classes = 10, int img = 12) {
  hfn::ArchConfig cfg = desk_arch(classes, img);
  cfg.folded = {false, false, false, false};
  return cfg;
}

inline bool within(double value, double target, double tol) {
  return std::fabs(value - target) <= tol * std::fabs(target);
}

// Copies a folded model's tensors onto an explicitly unrolled architecture:
// every tail block of the unfolded stage receives the shared block's
// weights/scores/masks and the matching per-iteration BN parameters. The
// unrolled model must have stage_blocks equal to (first block + iterations).
template <typename T>
void unroll_onto(hfn::Model<T>& folded, hfn::Model<T>& unrolled) {
  using namespace hfn;
  auto copy_conv = [](const ConvLayer<T>& src, ConvLayer<T>& dst) {
    dst.w = src.w;
    dst.scores = src.scores;
    dst.mask = src.mask;
    dst.mask_valid = src.mask_valid;
  };
  auto copy_bn = [](const BnLayer<T>& src, BnLayer<T>& dst) { dst.state = src.state; };
  auto copy_block = [&](const PlainBlock<T>& src, PlainBlock<T>& dst) {
    copy_conv(src.convs.c1, dst.convs.c1);
    copy_conv(src.convs.c2, dst.convs.c2);
    copy_conv(src.convs.c3, dst.convs.c3);
    if (src.convs.proj) copy_conv(*src.convs.proj, *dst.convs.proj);
    copy_bn(src.bns.bn1, dst.bns.bn1);
    copy_bn(src.bns.bn2, dst.bns.bn2);
    copy_bn(src.bns.bn3, dst.bns.bn3);
    if (src.proj_bn) copy_bn(*src.proj_bn, *dst.proj_bn);
  };

  copy_conv(folded.stem, unrolled.stem);
  copy_bn(folded.stem_bn, unrolled.stem_bn);
  copy_conv(folded.fc, unrolled.fc);
  for (int s = 0; s < 4; ++s) {
    copy_block(folded.stages[s].first, unrolled.stages[s].first);
    if (folded.stages[s].folded) {
      const FoldedTail<T>& ft = *folded.stages[s].folded;
      for (int i = 0; i < ft.iterations; ++i) {
        PlainBlock<T>& dst = unrolled.stages[s].tail[static_cast<size_t>(i)];
        copy_conv(ft.convs.c1, dst.convs.c1);
        copy_conv(ft.convs.c2, dst.convs.c2);
        copy_conv(ft.convs.c3, dst.convs.c3);
        const BnSet<T>& set = ft.ubn[folded.cfg.ubn ? i : 0];
        copy_bn(set.bn1, dst.bns.bn1);
        copy_bn(set.bn2, dst.bns.bn2);
        copy_bn(set.bn3, dst.bns.bn3);
      }
    } else {
      for (size_t b = 0; b < folded.stages[s].tail.size(); ++b) {
        copy_block(folded.stages[s].tail[b], unrolled.stages[s].tail[b]);
      }
    }
  }
}

}  // namespace testutil
