#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "hfn/common.hpp"
#include "hfn/tensor.hpp"

namespace hfn {

// All reductions accumulate in double with a fixed (ascending-index) order and
// store back in T. Parallel loops only split independent output elements, so
// results are bitwise identical at any thread count.

namespace detail {

// C[i,j] = sum_k A[i,k] * B[k,j], row-major, K ascending per output element.
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m >= 4)
#endif
  for (int64_t i = 0; i < m; ++i) {
    std::vector<double> acc(static_cast<size_t>(n), 0.0);
    const T* arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = static_cast<double>(arow[kk]);
      const T* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
  }
}

// C[i,j] = sum_k A[k,i] * B[k,j]  (A transposed)
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k, int64_t lda) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m >= 4)
#endif
  for (int64_t i = 0; i < m; ++i) {
    std::vector<double> acc(static_cast<size_t>(n), 0.0);
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = static_cast<double>(a[kk * lda + i]);
      const T* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
  }
}

// Cacc[i,j] += sum_k A[i,k] * B[j,k]  (B transposed, accumulated into double buffer)
template <typename T>
void gemm_nt_add(const T* a, const T* b, double* cacc, int64_t m, int64_t n, int64_t k) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m >= 4)
#endif
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    double* crow = cacc + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      double acc = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += static_cast<double>(arow[kk]) * static_cast<double>(brow[kk]);
      crow[j] += acc;
    }
  }
}

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, oh, ow;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& weights, int stride, int pad) {
  require_dims(input, 4, "conv2d input");
  require_dims(weights, 4, "conv2d weights");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  if (input.shape[1] != weights.shape[1]) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(input.shape[1]) +
                                " != weight channels " + std::to_string(weights.shape[1]));
  }
  ConvDims d;
  d.n = input.shape[0];
  d.cin = input.shape[1];
  d.h = input.shape[2];
  d.w = input.shape[3];
  d.cout = weights.shape[0];
  d.kh = weights.shape[2];
  d.kw = weights.shape[3];
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
    throw std::invalid_argument("conv2d: kernel " + weights.shape_str() +
                                " larger than padded input " + input.shape_str());
  }
  return d;
}

// col is [cin*kh*kw, oh*ow] for one sample.
template <typename T>
void im2col(const T* img, const ConvDims& d, int stride, int pad, T* col) {
  const int64_t ospatial = static_cast<int64_t>(d.oh) * d.ow;
  for (int c = 0; c < d.cin; ++c) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        T* dst = col + ((static_cast<int64_t>(c) * d.kh + ki) * d.kw + kj) * ospatial;
        for (int oi = 0; oi < d.oh; ++oi) {
          const int ii = oi * stride - pad + ki;
          for (int oj = 0; oj < d.ow; ++oj) {
            const int jj = oj * stride - pad + kj;
            const bool in_range = ii >= 0 && ii < d.h && jj >= 0 && jj < d.w;
            dst[static_cast<int64_t>(oi) * d.ow + oj] =
                in_range ? img[(static_cast<int64_t>(c) * d.h + ii) * d.w + jj] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, int stride, int pad, T* img) {
  const int64_t ospatial = static_cast<int64_t>(d.oh) * d.ow;
  for (int c = 0; c < d.cin; ++c) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const T* src = col + ((static_cast<int64_t>(c) * d.kh + ki) * d.kw + kj) * ospatial;
        for (int oi = 0; oi < d.oh; ++oi) {
          const int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= d.h) continue;
          for (int oj = 0; oj < d.ow; ++oj) {
            const int jj = oj * stride - pad + kj;
            if (jj < 0 || jj >= d.w) continue;
            img[(static_cast<int64_t>(c) * d.h + ii) * d.w + jj] += src[static_cast<int64_t>(oi) * d.ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation, no bias. Output H' = (H + 2*pad - kh)/stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, int stride, int pad) {
  const auto d = detail::conv_dims(input, weights, stride, pad);
  Tensor<T> out({d.n, d.cout, d.oh, d.ow});
  const int64_t k = static_cast<int64_t>(d.cin) * d.kh * d.kw;
  const int64_t ospatial = static_cast<int64_t>(d.oh) * d.ow;
  const int64_t ispatial = static_cast<int64_t>(d.h) * d.w;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (d.n > 1)
#endif
  for (int n = 0; n < d.n; ++n) {
    std::vector<T> col(static_cast<size_t>(k * ospatial));
    detail::im2col(input.ptr() + static_cast<int64_t>(n) * d.cin * ispatial, d, stride, pad, col.data());
    // One thread per sample here, so the inner gemm runs sequentially per row.
    T* dst = out.ptr() + static_cast<int64_t>(n) * d.cout * ospatial;
    for (int64_t i = 0; i < d.cout; ++i) {
      std::vector<double> acc(static_cast<size_t>(ospatial), 0.0);
      const T* wrow = weights.ptr() + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double wv = static_cast<double>(wrow[kk]);
        const T* crow = col.data() + kk * ospatial;
        for (int64_t j = 0; j < ospatial; ++j) acc[j] += wv * static_cast<double>(crow[j]);
      }
      for (int64_t j = 0; j < ospatial; ++j) dst[i * ospatial + j] = static_cast<T>(acc[j]);
    }
  }
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> grad_input;
  Tensor<T> grad_weights;
};

// Gradients of sum(upstream . conv2d(input, weights)) wrt input and weights.
template <typename T>
ConvGrads<T> conv2d_grad(const Tensor<T>& upstream, const Tensor<T>& input,
                         const Tensor<T>& weights, int stride, int pad) {
  const auto d = detail::conv_dims(input, weights, stride, pad);
  require_dims(upstream, 4, "conv2d_grad upstream");
  if (upstream.shape != std::vector<int>{d.n, d.cout, d.oh, d.ow}) {
    throw std::invalid_argument("conv2d_grad: upstream shape " + upstream.shape_str() +
                                " does not match forward output");
  }
  const int64_t k = static_cast<int64_t>(d.cin) * d.kh * d.kw;
  const int64_t ospatial = static_cast<int64_t>(d.oh) * d.ow;
  const int64_t ispatial = static_cast<int64_t>(d.h) * d.w;

  ConvGrads<T> g{Tensor<T>({d.n, d.cin, d.h, d.w}), Tensor<T>({d.cout, d.cin, d.kh, d.kw})};

  // grad_weights: accumulate over samples in ascending order into a double buffer.
  std::vector<double> wacc(static_cast<size_t>(d.cout) * k, 0.0);
  std::vector<T> col(static_cast<size_t>(k * ospatial));
  for (int n = 0; n < d.n; ++n) {
    detail::im2col(input.ptr() + static_cast<int64_t>(n) * d.cin * ispatial, d, stride, pad, col.data());
    detail::gemm_nt_add(upstream.ptr() + static_cast<int64_t>(n) * d.cout * ospatial, col.data(),
                        wacc.data(), d.cout, k, ospatial);
  }
  for (size_t i = 0; i < wacc.size(); ++i) g.grad_weights.data[i] = static_cast<T>(wacc[i]);

  // grad_input: per-sample col-space gemm followed by col2im scatter.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (d.n > 1)
#endif
  for (int n = 0; n < d.n; ++n) {
    std::vector<T> colg(static_cast<size_t>(k * ospatial));
    detail::gemm_tn_acc(weights.ptr(), upstream.ptr() + static_cast<int64_t>(n) * d.cout * ospatial,
                        colg.data(), k, ospatial, d.cout, k);
    detail::col2im_add(colg.data(), d, stride, pad,
                       g.grad_input.ptr() + static_cast<int64_t>(n) * d.cin * ispatial);
  }
  return g;
}

// logits[n,k] = sum_f input[n,f] * weights[k,f]; bias-free by convention.
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weights) {
  require_dims(input, 2, "linear input");
  require_dims(weights, 2, "linear weights");
  if (input.shape[1] != weights.shape[1]) {
    throw std::invalid_argument("linear: feature dims disagree, input " + input.shape_str() +
                                " vs weights " + weights.shape_str());
  }
  const int64_t n = input.shape[0], f = input.shape[1], k = weights.shape[0];
  Tensor<T> out({static_cast<int>(n), static_cast<int>(k)});
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n >= 4)
#endif
  for (int64_t i = 0; i < n; ++i) {
    const T* xrow = input.ptr() + i * f;
    T* orow = out.ptr() + i * k;
    for (int64_t j = 0; j < k; ++j) {
      const T* wrow = weights.ptr() + j * f;
      double acc = 0.0;
      for (int64_t ff = 0; ff < f; ++ff) acc += static_cast<double>(xrow[ff]) * static_cast<double>(wrow[ff]);
      orow[j] = static_cast<T>(acc);
    }
  }
  return out;
}

template <typename T>
struct LinearGrads {
  Tensor<T> grad_input;
  Tensor<T> grad_weights;
};

template <typename T>
LinearGrads<T> linear_grad(const Tensor<T>& upstream, const Tensor<T>& input,
                           const Tensor<T>& weights) {
  const int64_t n = input.shape[0], f = input.shape[1], k = weights.shape[0];
  if (upstream.shape != std::vector<int>{static_cast<int>(n), static_cast<int>(k)}) {
    throw std::invalid_argument("linear_grad: upstream shape mismatch");
  }
  LinearGrads<T> g{Tensor<T>(input.shape), Tensor<T>(weights.shape)};
  detail::gemm_nn_acc(upstream.ptr(), weights.ptr(), g.grad_input.ptr(), n, f, k);
  detail::gemm_tn_acc(upstream.ptr(), input.ptr(), g.grad_weights.ptr(), k, f, n, k);
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

// dx from cached forward output (y > 0 iff x > 0).
template <typename T>
Tensor<T> relu_grad(const Tensor<T>& upstream, const Tensor<T>& output) {
  Tensor<T> dx(upstream.shape);
  for (int64_t i = 0; i < upstream.numel(); ++i) dx[i] = output[i] > T(0) ? upstream[i] : T(0);
  return dx;
}

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<int64_t> argmax;  // flat input index per output element
};

template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& input, int k, int stride, int pad = 0) {
  require_dims(input, 4, "maxpool input");
  if (k < 1 || stride < 1) throw std::invalid_argument("maxpool: k and stride must be >= 1");
  const int n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  if (oh < 1 || ow < 1) throw std::invalid_argument("maxpool: window larger than input");
  MaxPoolResult<T> r{Tensor<T>({n, c, oh, ow}), {}};
  r.argmax.assign(static_cast<size_t>(r.output.numel()), -1);
  int64_t o = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = input.ptr() + (static_cast<int64_t>(ni) * c + ci) * h * w;
      for (int oi = 0; oi < oh; ++oi) {
        for (int oj = 0; oj < ow; ++oj, ++o) {
          T best = std::numeric_limits<T>::lowest();
          int64_t besti = -1;
          for (int ki = 0; ki < k; ++ki) {
            const int ii = oi * stride - pad + ki;
            if (ii < 0 || ii >= h) continue;
            for (int kj = 0; kj < k; ++kj) {
              const int jj = oj * stride - pad + kj;
              if (jj < 0 || jj >= w) continue;
              const T v = plane[static_cast<int64_t>(ii) * w + jj];
              if (v > best) {  // first max wins on ties
                best = v;
                besti = (static_cast<int64_t>(ni) * c + ci) * h * w + static_cast<int64_t>(ii) * w + jj;
              }
            }
          }
          r.output[o] = best;
          r.argmax[static_cast<size_t>(o)] = besti;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_grad(const Tensor<T>& upstream, const std::vector<int64_t>& argmax,
                         const std::vector<int>& input_shape) {
  Tensor<T> dx(input_shape);
  for (int64_t i = 0; i < upstream.numel(); ++i) {
    const int64_t src = argmax[static_cast<size_t>(i)];
    if (src >= 0) dx[src] += upstream[i];
  }
  return dx;
}

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& input) {
  require_dims(input, 4, "global_avgpool input");
  const int n = input.shape[0], c = input.shape[1];
  const int64_t spatial = static_cast<int64_t>(input.shape[2]) * input.shape[3];
  Tensor<T> out({n, c});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = input.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      double acc = 0.0;
      for (int64_t i = 0; i < spatial; ++i) acc += static_cast<double>(plane[i]);
      out[static_cast<int64_t>(ni) * c + ci] = static_cast<T>(acc / static_cast<double>(spatial));
    }
  }
  return out;
}

template <typename T>
Tensor<T> global_avgpool_grad(const Tensor<T>& upstream, const std::vector<int>& input_shape) {
  Tensor<T> dx(input_shape);
  const int n = input_shape[0], c = input_shape[1];
  const int64_t spatial = static_cast<int64_t>(input_shape[2]) * input_shape[3];
  const double inv = 1.0 / static_cast<double>(spatial);
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T g = static_cast<T>(static_cast<double>(upstream[static_cast<int64_t>(ni) * c + ci]) * inv);
      T* plane = dx.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      for (int64_t i = 0; i < spatial; ++i) plane[i] = g;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization

enum class Mode { train, eval };

template <typename T>
struct BnState {
  Tensor<T> gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  bool affine = false;
  int channels = 0;

  static BnState make(int channels, bool affine) {
    BnState s;
    s.channels = channels;
    s.affine = affine;
    s.gamma = Tensor<T>({channels}, T(1));
    s.beta = Tensor<T>({channels}, T(0));
    s.running_mean = Tensor<T>({channels}, T(0));
    s.running_var = Tensor<T>({channels}, T(1));
    return s;
  }
};

template <typename T>
struct BnCache {
  std::vector<double> mean, invstd;
};

// Train mode normalizes with batch statistics (biased variance) and updates
// running stats with the unbiased variance, eval mode uses running stats.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, BnState<T>& state, Mode mode, BnCache<T>* cache = nullptr) {
  require_dims(input, 4, "batchnorm input");
  const int n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
  if (c != state.channels) {
    throw std::invalid_argument("batchnorm: channel mismatch, input " + input.shape_str() +
                                " vs state " + std::to_string(state.channels));
  }
  const int64_t m = static_cast<int64_t>(n) * h * w;
  if (mode == Mode::train && m < 2) {
    throw std::invalid_argument("batchnorm: train mode needs at least 2 values per channel");
  }
  Tensor<T> out(input.shape);
  const int64_t spatial = static_cast<int64_t>(h) * w;

  std::vector<double> mean(c), invstd(c);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (c >= 8)
#endif
  for (int ci = 0; ci < c; ++ci) {
    double mu, var;
    if (mode == Mode::train) {
      double acc = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const T* plane = input.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
        for (int64_t i = 0; i < spatial; ++i) acc += static_cast<double>(plane[i]);
      }
      mu = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const T* plane = input.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
          const double d = static_cast<double>(plane[i]) - mu;
          vacc += d * d;
        }
      }
      var = vacc / static_cast<double>(m);
    } else {
      mu = static_cast<double>(state.running_mean[ci]);
      var = static_cast<double>(state.running_var[ci]);
    }
    const double is = 1.0 / std::sqrt(var + state.eps);
    mean[ci] = mu;
    invstd[ci] = is;
    const double g = static_cast<double>(state.gamma[ci]);
    const double b = static_cast<double>(state.beta[ci]);
    for (int ni = 0; ni < n; ++ni) {
      const T* src = input.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      T* dst = out.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        dst[i] = static_cast<T>((static_cast<double>(src[i]) - mu) * is * g + b);
      }
    }
    if (mode == Mode::train) {
      const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
      state.running_mean[ci] = static_cast<T>((1.0 - state.momentum) * static_cast<double>(state.running_mean[ci]) +
                                              state.momentum * mu);
      state.running_var[ci] = static_cast<T>((1.0 - state.momentum) * static_cast<double>(state.running_var[ci]) +
                                             state.momentum * unbiased);
    }
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->invstd = std::move(invstd);
  }
  return out;
}

template <typename T>
struct BnGrads {
  Tensor<T> grad_input;
  Tensor<T> grad_gamma;
  Tensor<T> grad_beta;
};

// Train-mode backward from the cached batch statistics.
template <typename T>
BnGrads<T> batchnorm_grad(const Tensor<T>& upstream, const Tensor<T>& input,
                          const BnState<T>& state, const BnCache<T>& cache) {
  const int n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
  const int64_t m = static_cast<int64_t>(n) * h * w;
  const int64_t spatial = static_cast<int64_t>(h) * w;
  BnGrads<T> g{Tensor<T>(input.shape), Tensor<T>({c}), Tensor<T>({c})};
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (c >= 8)
#endif
  for (int ci = 0; ci < c; ++ci) {
    const double mu = cache.mean[ci];
    const double is = cache.invstd[ci];
    const double gamma = static_cast<double>(state.gamma[ci]);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* dy = upstream.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      const T* x = input.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        const double xhat = (static_cast<double>(x[i]) - mu) * is;
        sum_dy += static_cast<double>(dy[i]);
        sum_dy_xhat += static_cast<double>(dy[i]) * xhat;
      }
    }
    g.grad_gamma[ci] = static_cast<T>(sum_dy_xhat);
    g.grad_beta[ci] = static_cast<T>(sum_dy);
    const double dm = static_cast<double>(m);
    for (int ni = 0; ni < n; ++ni) {
      const T* dy = upstream.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      const T* x = input.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      T* dx = g.grad_input.ptr() + (static_cast<int64_t>(ni) * c + ci) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        const double xhat = (static_cast<double>(x[i]) - mu) * is;
        const double v = gamma * is * (static_cast<double>(dy[i]) - sum_dy / dm - xhat * sum_dy_xhat / dm);
        dx[i] = static_cast<T>(v);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Classification loss

template <typename T>
struct SoftmaxXentResult {
  double loss = 0.0;
  Tensor<T> grad_logits;
};

// Mean cross entropy over the batch, stabilized by max subtraction.
// grad = (softmax - onehot) / N.
template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  require_dims(logits, 2, "softmax logits");
  const int n = logits.shape[0], k = logits.shape[1];
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  SoftmaxXentResult<T> r;
  r.grad_logits = Tensor<T>(logits.shape);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                  " out of range [0," + std::to_string(k) + ")");
    }
    const T* row = logits.ptr() + static_cast<int64_t>(i) * k;
    double mx = static_cast<double>(row[0]);
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    total += std::log(denom) - (static_cast<double>(row[y]) - mx);
    T* grow = r.grad_logits.ptr() + static_cast<int64_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
      grow[j] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, double lr,
              double momentum, double weight_decay) {
  if (!param.same_shape(grad) || !param.same_shape(velocity)) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  for (int64_t i = 0; i < param.numel(); ++i) {
    const double v = momentum * static_cast<double>(velocity[i]) + static_cast<double>(grad[i]) +
                     weight_decay * static_cast<double>(param[i]);
    velocity[i] = static_cast<T>(v);
    param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * v);
  }
}

// Linear warmup to base_lr, then cosine annealing to ~0 at total_epochs.
inline double lr_schedule(int epoch, int total_epochs, double base_lr, int warmup_epochs) {
  if (total_epochs <= warmup_epochs) {
    throw ConfigError("lr_schedule: total_epochs must exceed warmup_epochs");
  }
  if (epoch < 0 || epoch >= total_epochs) {
    throw ConfigError("lr_schedule: epoch out of range");
  }
  if (epoch < warmup_epochs) {
    return base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs);
  }
  const double t = static_cast<double>(epoch - warmup_epochs) /
                   static_cast<double>(total_epochs - warmup_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

}  // namespace hfn
