#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include "hfn/trainer.hpp"

namespace hfn {

Dataset load_cifar_binary(const std::string& path, CifarVariant variant) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const int label_bytes = variant == CifarVariant::cifar100 ? 2 : 1;
  const size_t record = static_cast<size_t>(label_bytes) + 3072;
  if (bytes.empty() || bytes.size() % record != 0) {
    throw IoError("truncated or malformed CIFAR file " + path + ": " +
                  std::to_string(bytes.size()) + " bytes is not a multiple of record size " +
                  std::to_string(record));
  }
  const int64_t n = static_cast<int64_t>(bytes.size() / record);

  Dataset d;
  d.classes = variant == CifarVariant::cifar100 ? 100 : 10;
  d.images = Tensor<float>({static_cast<int>(n), 3, 32, 32});
  d.labels.resize(static_cast<size_t>(n));
  if (variant == CifarVariant::cifar100) {
    d.mean = {0.5071f, 0.4865f, 0.4409f};
    d.stddev = {0.2673f, 0.2564f, 0.2762f};
  } else {
    d.mean = {0.4914f, 0.4822f, 0.4465f};
    d.stddev = {0.2470f, 0.2435f, 0.2616f};
  }
  for (int64_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + static_cast<size_t>(i) * record;
    d.labels[static_cast<size_t>(i)] = rec[label_bytes - 1];  // fine label
    float* dst = d.images.ptr() + i * 3072;
    for (int j = 0; j < 3072; ++j) dst[j] = static_cast<float>(rec[label_bytes + j]) / 255.0f;
  }
  return d;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& d, int64_t val_count,
                                            uint64_t split_seed) {
  const int64_t n = d.size();
  if (val_count < 0 || val_count >= n) throw ConfigError("split_train_val: bad val_count");
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), int64_t(0));
  RngStream rng(split_seed, 0, RngPurpose::shuffle);
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = rng.below(static_cast<uint32_t>(i + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  auto take = [&](int64_t begin, int64_t count, const char* split) {
    Dataset out;
    out.classes = d.classes;
    out.mean = d.mean;
    out.stddev = d.stddev;
    out.split = split;
    const int c = d.images.shape[1], h = d.images.shape[2], w = d.images.shape[3];
    const int64_t stride = static_cast<int64_t>(c) * h * w;
    out.images = Tensor<float>({static_cast<int>(count), c, h, w});
    out.labels.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
      const int64_t src = perm[static_cast<size_t>(begin + i)];
      std::copy_n(d.images.ptr() + src * stride, stride, out.images.ptr() + i * stride);
      out.labels[static_cast<size_t>(i)] = d.labels[static_cast<size_t>(src)];
    }
    return out;
  };
  return {take(0, n - val_count, "train"), take(n - val_count, val_count, "val")};
}

Dataset synthetic_dataset(uint64_t seed, int64_t n, int classes, int size, double separation,
                          int64_t sample_offset) {
  if (classes < 2) throw ConfigError("synthetic_dataset: need at least 2 classes");
  if (n < classes) throw ConfigError("synthetic_dataset: n must be >= classes");
  if (separation <= 0) throw ConfigError("synthetic_dataset: separation must be positive");

  // Per-class template: a few spatial Gaussian bumps with random centers,
  // widths and channel mixes, normalized to unit peak.
  const int bumps = 3;
  std::vector<std::vector<float>> templates(static_cast<size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    RngStream trng(seed, static_cast<uint32_t>(c), RngPurpose::data_templates);
    std::vector<double> tpl(static_cast<size_t>(3) * size * size, 0.0);
    for (int b = 0; b < bumps; ++b) {
      const double cx = (0.15 + 0.7 * trng.uniform01()) * (size - 1);
      const double cy = (0.15 + 0.7 * trng.uniform01()) * (size - 1);
      const double sg = (0.10 + 0.15 * trng.uniform01()) * size;
      double chw[3];
      for (double& v : chw) v = trng.uniform01();
      for (int ch = 0; ch < 3; ++ch) {
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            tpl[(static_cast<size_t>(ch) * size + y) * size + x] +=
                chw[ch] * std::exp(-d2 / (2.0 * sg * sg));
          }
        }
      }
    }
    double peak = 0.0;
    for (double v : tpl) peak = std::max(peak, std::fabs(v));
    templates[static_cast<size_t>(c)].resize(tpl.size());
    for (size_t i = 0; i < tpl.size(); ++i) {
      templates[static_cast<size_t>(c)][i] = static_cast<float>(tpl[i] / peak);
    }
  }

  Dataset d;
  d.classes = classes;
  d.split = "synthetic";
  d.images = Tensor<float>({static_cast<int>(n), 3, size, size});
  d.labels.resize(static_cast<size_t>(n));
  const double noise = 1.0 / separation;
  const int64_t stride = static_cast<int64_t>(3) * size * size;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t gid = sample_offset + i;
    const int label = static_cast<int>(gid % classes);
    d.labels[static_cast<size_t>(i)] = label;
    RngStream srng(seed, static_cast<uint32_t>(gid), RngPurpose::data_noise);
    const auto& tpl = templates[static_cast<size_t>(label)];
    float* dst = d.images.ptr() + i * stride;
    for (int64_t j = 0; j < stride; ++j) {
      dst[j] = tpl[static_cast<size_t>(j)] + static_cast<float>(noise * srng.normal());
    }
  }
  return d;
}

std::vector<float> hflip_image(const float* src, int c, int h, int w) {
  std::vector<float> out(static_cast<size_t>(c) * h * w);
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out[(static_cast<size_t>(ci) * h + y) * w + x] =
            src[(static_cast<size_t>(ci) * h + y) * w + (w - 1 - x)];
      }
    }
  }
  return out;
}

// Zero-pads by `pad`, then crops an (h,w) window at offset (dy,dx) in [0,2*pad].
std::vector<float> crop_pad_image(const float* src, int c, int h, int w, int pad, int dy, int dx) {
  std::vector<float> out(static_cast<size_t>(c) * h * w, 0.0f);
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < h; ++y) {
      const int sy = y + dy - pad;
      if (sy < 0 || sy >= h) continue;
      for (int x = 0; x < w; ++x) {
        const int sx = x + dx - pad;
        if (sx < 0 || sx >= w) continue;
        out[(static_cast<size_t>(ci) * h + y) * w + x] =
            src[(static_cast<size_t>(ci) * h + sy) * w + sx];
      }
    }
  }
  return out;
}

Tensor<float> assemble_batch(const Dataset& d, const std::vector<int64_t>& indices,
                             AugmentMode mode, RngStream* rng) {
  const int c = d.images.shape[1], h = d.images.shape[2], w = d.images.shape[3];
  const int64_t stride = static_cast<int64_t>(c) * h * w;
  const int pad = 4;
  Tensor<float> batch({static_cast<int>(indices.size()), c, h, w});
  if (mode != AugmentMode::none && !rng) {
    throw ConfigError("assemble_batch: augmentation needs an RNG stream");
  }
  for (size_t bi = 0; bi < indices.size(); ++bi) {
    const float* src = d.images.ptr() + indices[bi] * stride;
    std::vector<float> img(src, src + stride);
    if (mode != AugmentMode::none) {
      const int dy = static_cast<int>(rng->below(2 * pad + 1));
      const int dx = static_cast<int>(rng->below(2 * pad + 1));
      img = crop_pad_image(img.data(), c, h, w, pad, dy, dx);
      if (mode == AugmentMode::crop_flip && rng->below(2) == 1) {
        img = hflip_image(img.data(), c, h, w);
      }
    }
    float* dst = batch.ptr() + static_cast<int64_t>(bi) * stride;
    for (int ci = 0; ci < c; ++ci) {
      const float m = d.mean[static_cast<size_t>(ci)];
      const float s = d.stddev[static_cast<size_t>(ci)];
      const int64_t plane = static_cast<int64_t>(ci) * h * w;
      for (int64_t j = 0; j < static_cast<int64_t>(h) * w; ++j) {
        dst[plane + j] = (img[static_cast<size_t>(plane + j)] - m) / s;
      }
    }
  }
  return batch;
}

}  // namespace hfn
