#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hfn/model_plan.hpp"
#include "hfn/ops.hpp"
#include "hfn/rng.hpp"
#include "hfn/supermask.hpp"
#include "hfn/tensor.hpp"

namespace hfn {

// A convolution (or the classifier) with frozen weights, trainable scores and
// a derived supermask. Under weight-learning methods the mask machinery is
// inert and the weights train instead.
template <typename T>
struct ConvLayer {
  ConvSpec spec;
  Tensor<T> w;
  Tensor<T> scores;
  MaskBits mask;
  bool masked = false;
  bool mask_valid = false;
  int k_permille = 1000;

  Tensor<T> w_grad, s_grad;
  Tensor<T> w_vel, s_vel;

  Tensor<T> effective() const { return masked ? apply_mask(w, mask) : w; }

  void refresh_mask() {
    if (!masked) return;
    mask = topk_mask(scores, k_permille);
    mask_valid = true;
  }

  void ensure_grads() {
    if (masked && s_grad.numel() != scores.numel()) s_grad = Tensor<T>(scores.shape);
    if (!masked && w_grad.numel() != w.numel()) w_grad = Tensor<T>(w.shape);
  }

  void zero_grads() {
    ensure_grads();
    if (masked) s_grad.fill(T(0));
    else w_grad.fill(T(0));
  }

  // Accumulates score (or weight) gradients and returns the input gradient.
  Tensor<T> conv_backward_accum(const Tensor<T>& upstream, const Tensor<T>& input) {
    auto g = conv2d_grad(upstream, input, effective(), spec.stride, spec.pad);
    accum_param_grad(g.grad_weights);
    return std::move(g.grad_input);
  }

  void accum_param_grad(const Tensor<T>& grad_effective) {
    ensure_grads();
    if (masked) {
      for (int64_t i = 0; i < w.numel(); ++i) {
        s_grad[i] += static_cast<T>(static_cast<double>(grad_effective[i]) * static_cast<double>(w[i]));
      }
    } else {
      for (int64_t i = 0; i < w.numel(); ++i) w_grad[i] += grad_effective[i];
    }
  }
};

template <typename T>
struct BnLayer {
  BnSpec spec;
  BnState<T> state;
  Tensor<T> g_grad, b_grad, g_vel, b_vel;

  void ensure_grads() {
    if (state.affine && g_grad.numel() != state.gamma.numel()) {
      g_grad = Tensor<T>(state.gamma.shape);
      b_grad = Tensor<T>(state.beta.shape);
    }
  }

  void zero_grads() {
    ensure_grads();
    if (state.affine) {
      g_grad.fill(T(0));
      b_grad.fill(T(0));
    }
  }
};

template <typename T>
struct BnSet {
  BnLayer<T> bn1, bn2, bn3;
};

template <typename T>
struct BlockLayers {
  ConvLayer<T> c1, c2, c3;
  std::optional<ConvLayer<T>> proj;
};

template <typename T>
struct PlainBlock {
  BlockLayers<T> convs;
  BnSet<T> bns;
  std::optional<BnLayer<T>> proj_bn;
};

template <typename T>
struct FoldedTail {
  BlockLayers<T> convs;           // shared weights/scores, run once per iteration
  std::vector<BnSet<T>> ubn;      // one set per iteration (single set when BN is shared)
  int iterations = 0;
};

template <typename T>
struct Stage {
  StagePlan plan;
  PlainBlock<T> first;
  std::vector<PlainBlock<T>> tail;
  std::optional<FoldedTail<T>> folded;
};

// Saved intermediates for one bottleneck application.
template <typename T>
struct BlockCtx {
  Tensor<T> in;
  Tensor<T> a1, r1, a2, r2, a3;
  Tensor<T> ap;  // projection conv output
  Tensor<T> out;
  BnCache<T> cb1, cb2, cb3, cbp;
};

template <typename T>
struct ModelCtx {
  Tensor<T> input;
  Tensor<T> stem_a, stem_r;
  BnCache<T> stem_bn;
  MaxPoolResult<T> pool;
  std::vector<int> pool_in_shape;
  Tensor<T> trunk_in;  // input to stage 1
  std::array<std::vector<BlockCtx<T>>, 4> blocks;  // first block, then tail/iterations
  Tensor<T> features, pooled, logits;
};

struct DensityRow {
  std::string name;
  int64_t n = 0;
  int64_t ones = 0;
  double density() const { return n ? static_cast<double>(ones) / static_cast<double>(n) : 0.0; }
};

template <typename T>
struct Model {
  ArchConfig cfg;
  Method method = Method::hfn;
  uint64_t seed = 0;
  InitKind init = InitKind::signed_constant;
  LayerPlan plan;

  ConvLayer<T> stem;
  BnLayer<T> stem_bn;
  std::array<Stage<T>, 4> stages;
  ConvLayer<T> fc;

  // --- visitation in plan order (construction == serialization order) ------

  void for_each_conv(const std::function<void(ConvLayer<T>&)>& fn) {
    fn(stem);
    auto visit_block = [&](BlockLayers<T>& b) {
      fn(b.c1);
      fn(b.c2);
      fn(b.c3);
      if (b.proj) fn(*b.proj);
    };
    for (auto& st : stages) {
      visit_block(st.first.convs);
      for (auto& b : st.tail) visit_block(b.convs);
      if (st.folded) visit_block(st.folded->convs);
    }
    fn(fc);
  }

  void for_each_bn(const std::function<void(BnLayer<T>&)>& fn) {
    fn(stem_bn);
    auto visit_block = [&](PlainBlock<T>& b) {
      if (b.proj_bn) fn(*b.proj_bn);
      fn(b.bns.bn1);
      fn(b.bns.bn2);
      fn(b.bns.bn3);
    };
    for (auto& st : stages) {
      visit_block(st.first);
      for (auto& b : st.tail) visit_block(b);
      if (st.folded) {
        for (auto& set : st.folded->ubn) {
          fn(set.bn1);
          fn(set.bn2);
          fn(set.bn3);
        }
      }
    }
  }

  void refresh_masks() {
    for_each_conv([](ConvLayer<T>& c) { c.refresh_mask(); });
  }

  void zero_grads() {
    for_each_conv([](ConvLayer<T>& c) { c.zero_grads(); });
    for_each_bn([](BnLayer<T>& b) { b.zero_grads(); });
  }

  uint64_t weights_checksum() {
    uint64_t h = kFnvOffset;
    for_each_conv([&](ConvLayer<T>& c) { h = fnv1a64(c.w.data.data(), c.w.data.size() * sizeof(T), h); });
    return h;
  }

  uint64_t scores_checksum() {
    uint64_t h = kFnvOffset;
    for_each_conv(
        [&](ConvLayer<T>& c) { h = fnv1a64(c.scores.data.data(), c.scores.data.size() * sizeof(T), h); });
    return h;
  }

  struct ParamTriple {
    Tensor<T>* param;
    Tensor<T>* grad;
    Tensor<T>* vel;
  };

  // Trainable set per method: scores for supermask methods, weights otherwise,
  // plus gamma/beta of every affine BN.
  std::vector<ParamTriple> trainable_params() {
    std::vector<ParamTriple> out;
    const bool supermask = is_supermask(method);
    for_each_conv([&](ConvLayer<T>& c) {
      c.ensure_grads();
      if (supermask) {
        if (c.s_vel.numel() != c.scores.numel()) c.s_vel = Tensor<T>(c.scores.shape);
        out.push_back({&c.scores, &c.s_grad, &c.s_vel});
      } else {
        if (c.w_vel.numel() != c.w.numel()) c.w_vel = Tensor<T>(c.w.shape);
        out.push_back({&c.w, &c.w_grad, &c.w_vel});
      }
    });
    for_each_bn([&](BnLayer<T>& b) {
      if (!b.state.affine) return;
      b.ensure_grads();
      if (b.g_vel.numel() != b.state.gamma.numel()) {
        b.g_vel = Tensor<T>(b.state.gamma.shape);
        b.b_vel = Tensor<T>(b.state.beta.shape);
      }
      out.push_back({&b.state.gamma, &b.g_grad, &b.g_vel});
      out.push_back({&b.state.beta, &b.b_grad, &b.b_vel});
    });
    return out;
  }

  int64_t parameter_count() const { return reported_params(cfg, method); }

  std::vector<DensityRow> density_report() {
    std::vector<DensityRow> rows;
    for_each_conv([&](ConvLayer<T>& c) {
      if (!c.masked) return;
      if (!c.mask_valid) c.refresh_mask();
      rows.push_back({c.spec.name, c.w.numel(), mask_popcount(c.mask)});
    });
    return rows;
  }

  // --- execution ------------------------------------------------------------

  Tensor<T> forward(const Tensor<T>& images, Mode mode, ModelCtx<T>* ctx = nullptr) {
    require_dims(images, 4, "model input");
    if (images.shape[1] != 3) {
      throw std::invalid_argument("model input must have 3 channels, got " + images.shape_str());
    }
    if (mode == Mode::train && !ctx) throw std::invalid_argument("train forward needs a context");
    if (mode == Mode::train) {
      refresh_masks();
    } else {
      for_each_conv([](ConvLayer<T>& c) {
        if (c.masked && !c.mask_valid) c.refresh_mask();
      });
    }

    Tensor<T> a = conv2d(images, stem.effective(), stem.spec.stride, stem.spec.pad);
    Tensor<T> h = batchnorm(a, stem_bn.state, mode, ctx ? &ctx->stem_bn : nullptr);
    Tensor<T> r = relu(h);
    Tensor<T> cur;
    if (plan.stem_maxpool) {
      auto p = maxpool2d(r, 3, 2, 1);
      if (ctx) {
        ctx->pool_in_shape = r.shape;
        ctx->pool = p;
      }
      cur = std::move(p.output);
    } else {
      cur = r;
    }
    if (ctx) {
      ctx->input = images;
      ctx->stem_a = std::move(a);
      ctx->stem_r = std::move(r);
      ctx->trunk_in = cur;
      for (auto& v : ctx->blocks) v.clear();
    }

    for (int s = 0; s < 4; ++s) {
      Stage<T>& st = stages[s];
      cur = block_forward(st.first.convs, st.first.bns, st.first.proj_bn ? &*st.first.proj_bn : nullptr,
                          cur, mode, ctx ? push_ctx(ctx, s) : nullptr);
      if (st.folded) {
        FoldedTail<T>& ft = *st.folded;
        for (int i = 0; i < ft.iterations; ++i) {
          BnSet<T>& set = ft.ubn[cfg.ubn ? i : 0];
          cur = block_forward(ft.convs, set, nullptr, cur, mode, ctx ? push_ctx(ctx, s) : nullptr);
        }
      } else {
        for (auto& b : st.tail) {
          cur = block_forward(b.convs, b.bns, b.proj_bn ? &*b.proj_bn : nullptr, cur, mode,
                              ctx ? push_ctx(ctx, s) : nullptr);
        }
      }
    }

    Tensor<T> pooled = global_avgpool(cur);
    Tensor<T> logits = linear(pooled, fc.effective());
    if (ctx) {
      ctx->features = std::move(cur);
      ctx->pooled = std::move(pooled);
      ctx->logits = logits;
    }
    return logits;
  }

  // Backpropagates into score (or weight) gradients plus affine BN gradients.
  // Shared folded layers accumulate the sum of their per-iteration gradients.
  void backward(const Tensor<T>& grad_logits, ModelCtx<T>& ctx) {
    auto lg = linear_grad(grad_logits, ctx.pooled, fc.effective());
    fc.accum_param_grad(lg.grad_weights);
    Tensor<T> d = global_avgpool_grad(lg.grad_input, ctx.features.shape);

    for (int s = 3; s >= 0; --s) {
      Stage<T>& st = stages[s];
      auto& bctx = ctx.blocks[s];
      size_t at = bctx.size();
      if (st.folded) {
        FoldedTail<T>& ft = *st.folded;
        for (int i = ft.iterations - 1; i >= 0; --i) {
          BnSet<T>& set = ft.ubn[cfg.ubn ? i : 0];
          d = block_backward(ft.convs, set, nullptr, d, bctx[--at]);
        }
      } else {
        for (int b = static_cast<int>(st.tail.size()) - 1; b >= 0; --b) {
          PlainBlock<T>& blk = st.tail[static_cast<size_t>(b)];
          d = block_backward(blk.convs, blk.bns, blk.proj_bn ? &*blk.proj_bn : nullptr, d, bctx[--at]);
        }
      }
      d = block_backward(st.first.convs, st.first.bns,
                         st.first.proj_bn ? &*st.first.proj_bn : nullptr, d, bctx[--at]);
    }

    if (plan.stem_maxpool) d = maxpool2d_grad(d, ctx.pool.argmax, ctx.pool_in_shape);
    d = relu_grad(d, ctx.stem_r);
    auto bg = batchnorm_grad(d, ctx.stem_a, stem_bn.state, ctx.stem_bn);
    accum_bn(stem_bn, bg);
    stem.conv_backward_accum(bg.grad_input, ctx.input);
  }

 private:
  static BlockCtx<T>* push_ctx(ModelCtx<T>* ctx, int stage) {
    ctx->blocks[stage].emplace_back();
    return &ctx->blocks[stage].back();
  }

  static void accum_bn(BnLayer<T>& bn, const BnGrads<T>& g) {
    if (!bn.state.affine) return;
    bn.ensure_grads();
    for (int64_t i = 0; i < bn.g_grad.numel(); ++i) {
      bn.g_grad[i] += g.grad_gamma[i];
      bn.b_grad[i] += g.grad_beta[i];
    }
  }

  Tensor<T> block_forward(BlockLayers<T>& u, BnSet<T>& bns, BnLayer<T>* proj_bn, const Tensor<T>& x,
                          Mode mode, BlockCtx<T>* ctx) {
    Tensor<T> a1 = conv2d(x, u.c1.effective(), u.c1.spec.stride, u.c1.spec.pad);
    Tensor<T> r1 = relu(batchnorm(a1, bns.bn1.state, mode, ctx ? &ctx->cb1 : nullptr));
    Tensor<T> a2 = conv2d(r1, u.c2.effective(), u.c2.spec.stride, u.c2.spec.pad);
    Tensor<T> r2 = relu(batchnorm(a2, bns.bn2.state, mode, ctx ? &ctx->cb2 : nullptr));
    Tensor<T> a3 = conv2d(r2, u.c3.effective(), u.c3.spec.stride, u.c3.spec.pad);
    Tensor<T> h3 = batchnorm(a3, bns.bn3.state, mode, ctx ? &ctx->cb3 : nullptr);

    Tensor<T> shortcut;
    Tensor<T> ap;
    if (u.proj) {
      ap = conv2d(x, u.proj->effective(), u.proj->spec.stride, u.proj->spec.pad);
      shortcut = batchnorm(ap, proj_bn->state, mode, ctx ? &ctx->cbp : nullptr);
    } else {
      shortcut = x;
    }
    if (!h3.same_shape(shortcut)) {
      throw std::invalid_argument("residual add shape mismatch: " + h3.shape_str() + " vs " +
                                  shortcut.shape_str());
    }
    Tensor<T> out(h3.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = h3[i] + shortcut[i];
    out = relu(out);

    if (ctx) {
      ctx->in = x;
      ctx->a1 = std::move(a1);
      ctx->r1 = std::move(r1);
      ctx->a2 = std::move(a2);
      ctx->r2 = std::move(r2);
      ctx->a3 = std::move(a3);
      ctx->ap = std::move(ap);
      ctx->out = out;
    }
    return out;
  }

  Tensor<T> block_backward(BlockLayers<T>& u, BnSet<T>& bns, BnLayer<T>* proj_bn,
                           const Tensor<T>& dy, const BlockCtx<T>& ctx) {
    Tensor<T> ds = relu_grad(dy, ctx.out);

    // main path
    auto g3 = batchnorm_grad(ds, ctx.a3, bns.bn3.state, ctx.cb3);
    accum_bn(bns.bn3, g3);
    Tensor<T> dr2 = u.c3.conv_backward_accum(g3.grad_input, ctx.r2);
    Tensor<T> dh2 = relu_grad(dr2, ctx.r2);
    auto g2 = batchnorm_grad(dh2, ctx.a2, bns.bn2.state, ctx.cb2);
    accum_bn(bns.bn2, g2);
    Tensor<T> dr1 = u.c2.conv_backward_accum(g2.grad_input, ctx.r1);
    Tensor<T> dh1 = relu_grad(dr1, ctx.r1);
    auto g1 = batchnorm_grad(dh1, ctx.a1, bns.bn1.state, ctx.cb1);
    accum_bn(bns.bn1, g1);
    Tensor<T> dx = u.c1.conv_backward_accum(g1.grad_input, ctx.in);

    // shortcut path
    if (u.proj) {
      auto gp = batchnorm_grad(ds, ctx.ap, proj_bn->state, ctx.cbp);
      accum_bn(*proj_bn, gp);
      Tensor<T> dxp = u.proj->conv_backward_accum(gp.grad_input, ctx.in);
      for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += dxp[i];
    } else {
      for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += ds[i];
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Construction

template <typename T>
ConvLayer<T> make_conv_layer(const ConvSpec& spec, const ArchConfig& cfg, Method method,
                             InitKind init, uint64_t seed) {
  ConvLayer<T> layer;
  layer.spec = spec;
  layer.k_permille = cfg.k_permille;
  layer.masked = is_supermask(method);
  const std::vector<int> shape = spec.role == LayerRole::fc
                                     ? std::vector<int>{spec.out_c, spec.in_c}
                                     : std::vector<int>{spec.out_c, spec.in_c, spec.kh, spec.kw};
  InitSpec ws{init, spec.fan_in(), M_SQRT2};
  RngStream wrng(seed, static_cast<uint32_t>(spec.index), RngPurpose::weights);
  layer.w = init_weights<T>(ws, shape, wrng);
  if (layer.masked) {
    RngStream srng(seed, static_cast<uint32_t>(spec.index), RngPurpose::scores);
    layer.scores = init_scores<T>(shape, spec.fan_in(), srng);
    layer.refresh_mask();
  }
  return layer;
}

// SC is the supermask default; weight learning defaults to Kaiming normal.
// init_override selects the other combination for ablation runs.
template <typename T>
Model<T> build_model(const ArchConfig& cfg, uint64_t seed, Method method,
                     std::optional<InitKind> init_override = std::nullopt) {
  cfg.validate_for(method);
  if (cfg.block != BlockKind::bottleneck) {
    throw ConfigError("build_model supports bottleneck blocks only (basic blocks are accounting-only)");
  }
  Model<T> m;
  m.cfg = cfg;
  m.method = method;
  m.seed = seed;
  m.init = init_override.value_or(is_supermask(method) ? InitKind::signed_constant
                                                       : InitKind::kaiming_normal);
  m.plan = make_plan(cfg);

  const bool weight_learning = !is_supermask(method);
  auto bn_layer = [&](const BnSpec& spec) {
    BnLayer<T> b;
    b.spec = spec;
    b.state = BnState<T>::make(spec.channels, weight_learning || spec.ubn);
    return b;
  };
  auto conv = [&](const ConvSpec& spec) { return make_conv_layer<T>(spec, cfg, method, m.init, seed); };
  auto block = [&](const BlockPlan& bp) {
    PlainBlock<T> b;
    b.convs.c1 = conv(bp.convs[0]);
    b.convs.c2 = conv(bp.convs[1]);
    b.convs.c3 = conv(bp.convs[2]);
    if (bp.proj) {
      b.convs.proj = conv(*bp.proj);
      b.proj_bn = bn_layer(*bp.proj_bn);
    }
    b.bns.bn1 = bn_layer(bp.bns[0]);
    b.bns.bn2 = bn_layer(bp.bns[1]);
    b.bns.bn3 = bn_layer(bp.bns[2]);
    return b;
  };

  m.stem = conv(m.plan.stem);
  m.stem_bn = bn_layer(m.plan.stem_bn);
  for (int s = 0; s < 4; ++s) {
    const StagePlan& sp = m.plan.stages[s];
    Stage<T>& st = m.stages[s];
    st.plan = sp;
    st.first = block(sp.first);
    for (const auto& bp : sp.tail) st.tail.push_back(block(bp));
    if (sp.folded) {
      FoldedTail<T> ft;
      const BlockPlan& rp = *sp.recurrent;
      ft.convs.c1 = conv(rp.convs[0]);
      ft.convs.c2 = conv(rp.convs[1]);
      ft.convs.c3 = conv(rp.convs[2]);
      ft.iterations = sp.iterations;
      for (const auto& set : sp.ubn) {
        BnSet<T> bs;
        bs.bn1 = bn_layer(set[0]);
        bs.bn2 = bn_layer(set[1]);
        bs.bn3 = bn_layer(set[2]);
        ft.ubn.push_back(std::move(bs));
      }
      st.folded = std::move(ft);
    }
  }
  m.fc = conv(m.plan.fc);
  return m;
}

// Rebuilds one layer's weight tensor from the seed and its plan position.
template <typename T>
Tensor<T> regenerate_weights(const ConvSpec& spec, InitKind init, uint64_t seed) {
  const std::vector<int> shape = spec.role == LayerRole::fc
                                     ? std::vector<int>{spec.out_c, spec.in_c}
                                     : std::vector<int>{spec.out_c, spec.in_c, spec.kh, spec.kw};
  InitSpec ws{init, spec.fan_in(), M_SQRT2};
  RngStream rng(seed, static_cast<uint32_t>(spec.index), RngPurpose::weights);
  return init_weights<T>(ws, shape, rng);
}

}  // namespace hfn
