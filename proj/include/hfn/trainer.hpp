#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hfn/model.hpp"
#include "hfn/tensor.hpp"

namespace hfn {

struct Dataset {
  Tensor<float> images;  // [N,3,H,W], raw intensity scale
  std::vector<int> labels;
  int classes = 0;
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> stddev{0.5f, 0.5f, 0.5f};
  std::string split = "train";

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int image_size() const { return images.shape[2]; }
};

enum class CifarVariant { cifar10, cifar100 };

// Standard CIFAR binary layout: 1 (cifar10) or 2 (cifar100) label bytes
// followed by 3072 image bytes per record. The fine label is used.
Dataset load_cifar_binary(const std::string& path, CifarVariant variant);

// Deterministic split by seeded shuffle; returns (train, val).
std::pair<Dataset, Dataset> split_train_val(const Dataset& d, int64_t val_count, uint64_t split_seed);

// Class-conditional Gaussian bumps rendered as images. Samples are addressed
// by (seed, sample_offset + i), so disjoint offset ranges give disjoint
// train/test draws from the same class distribution.
Dataset synthetic_dataset(uint64_t seed, int64_t n, int classes, int size, double separation = 3.0,
                          int64_t sample_offset = 0);

enum class AugmentMode { none, crop, crop_flip };

// Single-image helpers (C,H,W panes), exposed for tests.
std::vector<float> hflip_image(const float* src, int c, int h, int w);
std::vector<float> crop_pad_image(const float* src, int c, int h, int w, int pad, int dy, int dx);

// Gathers indices into a normalized batch; train-mode augmentation draws
// (dy, dx, flip) per sample from the stream, in that order.
Tensor<float> assemble_batch(const Dataset& d, const std::vector<int64_t>& indices,
                             AugmentMode mode, RngStream* rng);

struct TrainConfig {
  Method method = Method::hfn;
  int epochs = 200;
  int batch_size = 128;
  double base_lr = 0.1;
  int warmup_epochs = 5;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  uint64_t seed = 1;
  int eval_cadence = 1;
  AugmentMode augment = AugmentMode::crop_flip;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val = 0.0;
  std::optional<Model<float>> best_model;
  uint64_t initial_weight_checksum = 0;
  uint64_t final_weight_checksum = 0;
};

// Runs the full schedule; metrics_log (when given) receives one CSV line per
// epoch: epoch,lr,train_loss,val_top1. Throws NumericError on non-finite loss.
TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, std::ostream* metrics_log = nullptr);

// Deterministic top-1 accuracy in [0,1]; masks cached once, stats frozen.
double evaluate(Model<float>& model, const Dataset& data, int batch_size = 256);

}  // namespace hfn
