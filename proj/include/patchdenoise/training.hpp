#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "patchdenoise/image.hpp"
#include "patchdenoise/model.hpp"
#include "patchdenoise/optim.hpp"

namespace patchdenoise {

struct TrainConfig {
  std::size_t epochs = 80;
  std::size_t batch_size = 1;
  double eta0 = 1e-2;
  double eta_min = 1e-2 / 160.0;
  std::uint64_t seed = 0;
  HuWindow hu_window = HuWindow::abdomen();

  /// Desk-scale preset for the narrow model on 128x128 synthetic data:
  /// 40 epochs, eta0 3e-3 annealed to eta0 / 160. At 1e-2 the narrow model
  /// loses many relu units early and barely beats its noisy input.
  static TrainConfig desk();

  void validate() const;
  CosineSchedule schedule() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct FoldSplit {
  std::size_t fold_index = 0;
  std::vector<std::string> train_patients;
  std::vector<std::string> val_patients;
};

/// Seeded shuffle of the patients, then k contiguous groups as near-equal in
/// size as possible (the first n % k groups get one extra patient).
std::vector<FoldSplit> split_folds(const std::vector<std::string>& patient_ids, std::size_t k,
                                   std::uint64_t seed);

struct ImagePair {
  Image2D noisy;
  Image2D clean;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_psnr = 0.0;  // NaN without validation pairs
  double val_ssim = 0.0;
};

struct TrainResult {
  ModelWeights<float> weights;
  std::vector<EpochRecord> trace;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains a copy of `initial`. Each epoch visits the pairs in an order
/// shuffled from (seed, epoch), takes the mean L1 loss of the unclamped
/// output and steps Adam once per batch at lr_at(epoch). Validation metrics
/// are computed on clamped inference outputs.
TrainResult train(const ModelWeights<float>& initial, std::span<const ImagePair> pairs,
                  const TrainConfig& cfg, std::span<const ImagePair> validation = {},
                  const EpochCallback& on_epoch = {});

struct PairMetrics {
  double psnr = 0.0;  // mean over finite values
  double ssim = 0.0;
};
PairMetrics evaluate_pairs(const ModelWeights<float>& weights, std::span<const ImagePair> pairs);
/// Metrics of the noisy inputs themselves against the clean targets.
PairMetrics evaluate_noisy(std::span<const ImagePair> pairs);

/// epoch,lr,train_loss,val_psnr,val_ssim with 17 significant digits.
void write_trace_csv(std::ostream& os, std::span<const EpochRecord> trace);

}  // namespace patchdenoise
