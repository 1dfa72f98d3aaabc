#pragma once

// Independent reference implementations used to freeze expected values.
// Everything here is deliberately written the slow, obvious way and shares no
// code with the library ops it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "hfn/rng.hpp"
#include "hfn/tensor.hpp"

namespace oracle {

// Plain 6-nested-loop cross-correlation.
template <typename T>
hfn::Tensor<T> conv2d_naive(const hfn::Tensor<T>& in, const hfn::Tensor<T>& w, int stride, int pad) {
  const int n = in.shape[0], cin = in.shape[1], h = in.shape[2], ww = in.shape[3];
  const int cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (ww + 2 * pad - kw) / stride + 1;
  hfn::Tensor<T> out({n, cout, oh, ow});
  for (int ni = 0; ni < n; ++ni)
    for (int co = 0; co < cout; ++co)
      for (int oi = 0; oi < oh; ++oi)
        for (int oj = 0; oj < ow; ++oj) {
          double acc = 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                const int ii = oi * stride - pad + ki;
                const int jj = oj * stride - pad + kj;
                if (ii < 0 || ii >= h || jj < 0 || jj >= ww) continue;
                acc += static_cast<double>(in.at4(ni, ci, ii, jj)) *
                       static_cast<double>(w.at4(co, ci, ki, kj));
              }
          out.at4(ni, co, oi, oj) = static_cast<T>(acc);
        }
  return out;
}

// Central-difference gradient of a scalar functional wrt one tensor.
inline hfn::Tensor<double> finite_diff(hfn::Tensor<double>& x,
                                       const std::function<double()>& eval, double h = 1e-5) {
  hfn::Tensor<double> g(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = eval();
    x[i] = orig - h;
    const double fm = eval();
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_rel_err(const hfn::Tensor<double>& a, const hfn::Tensor<double>& b,
                          double floor = 1e-8) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

template <typename T>
hfn::Tensor<T> random_tensor(const std::vector<int>& shape, uint64_t seed, uint32_t stream = 0,
                             double scale = 1.0) {
  hfn::RngStream rng(seed, stream, hfn::RngPurpose::probe);
  hfn::Tensor<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>((2.0 * rng.uniform01() - 1.0) * scale);
  return t;
}

}  // namespace oracle
