#include "patchdenoise/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "patchdenoise/error.hpp"
#include "patchdenoise/metrics.hpp"
#include "patchdenoise/ops.hpp"
#include "patchdenoise/random.hpp"

namespace patchdenoise {

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 40;
  c.eta0 = 3e-3;
  c.eta_min = 3e-3 / 160.0;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(eta0 > 0.0) || !(eta_min > 0.0) || eta_min > eta0) {
    throw ConfigError("train: need 0 < eta_min <= eta0");
  }
  try {
    hu_window.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

CosineSchedule TrainConfig::schedule() const {
  return {eta0, eta_min, static_cast<int>(epochs)};
}

std::vector<FoldSplit> split_folds(const std::vector<std::string>& patient_ids, std::size_t k,
                                   std::uint64_t seed) {
  if (k < 1) throw UsageError("split_folds: k must be >= 1");
  if (k > patient_ids.size()) {
    throw UsageError("split_folds: " + std::to_string(k) + " folds requested for " +
                     std::to_string(patient_ids.size()) + " patients");
  }
  auto order = patient_ids;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<FoldSplit> folds(k);
  const std::size_t base = order.size() / k, extra = order.size() % k;
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].fold_index = f;
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& dst = (i >= start && i < start + len) ? folds[f].val_patients : folds[f].train_patients;
      dst.push_back(order[i]);
    }
    start += len;
  }
  return folds;
}

namespace {

// Mean over finite PSNRs; +inf when every pair matched exactly.
double mean_psnr(const std::vector<double>& values) {
  const Summary s = summarize(values);
  return s.count == 0 && !values.empty() ? kInfinitePsnr : s.mean;
}

}  // namespace

PairMetrics evaluate_pairs(const ModelWeights<float>& weights, std::span<const ImagePair> pairs) {
  std::vector<double> p, s;
  for (const auto& pair : pairs) {
    const Image2D out = denoise_image(weights, pair.noisy);
    p.push_back(psnr(out, pair.clean));
    s.push_back(ssim(out, pair.clean));
  }
  return {mean_psnr(p), summarize(s).mean};
}

PairMetrics evaluate_noisy(std::span<const ImagePair> pairs) {
  std::vector<double> p, s;
  for (const auto& pair : pairs) {
    p.push_back(psnr(pair.noisy, pair.clean));
    s.push_back(ssim(pair.noisy, pair.clean));
  }
  return {mean_psnr(p), summarize(s).mean};
}

TrainResult train(const ModelWeights<float>& initial, std::span<const ImagePair> pairs,
                  const TrainConfig& cfg, std::span<const ImagePair> validation,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (pairs.empty()) throw UsageError("train: no training pairs");
  for (const auto& pair : pairs) {
    if (!pair.noisy.same_shape(pair.clean) || !pair.noisy.same_shape(pairs.front().noisy)) {
      throw DimensionError("train: every pair must share one image size");
    }
    if (pair.noisy.range != RangeTag::normalized01 || pair.clean.range != RangeTag::normalized01) {
      throw UsageError("train: images must be normalized to [0, 1]");
    }
  }

  TrainResult result{initial.clone(), {}};
  auto& weights = result.weights;
  for (auto& p : weights.params()) p.set_requires_grad(true);

  std::vector<Tensor<float>> inputs, targets;
  for (const auto& pair : pairs) {
    inputs.push_back(image_to_tensor<float>(pair.noisy));
    targets.push_back(image_to_tensor<float>(pair.clean));
  }

  const CosineSchedule schedule = cfg.schedule();
  AdamState<float> adam;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(schedule, static_cast<int>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto batch = static_cast<float>(stop - start);
      weights.zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        const auto loss = l1_loss(model_forward(weights, inputs[order[i]]), targets[order[i]]);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw DivergedError("training diverged: non-finite loss in epoch " +
                                  std::to_string(epoch),
                              static_cast<int>(epoch));
        }
        loss_sum += value;
        backward(batch == 1.0f ? loss : scale(loss, 1.0f / batch));
      }
      adam_step(std::span(weights.params()), adam, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_psnr = rec.val_ssim = std::numeric_limits<double>::quiet_NaN();
    if (!validation.empty()) {
      const auto m = evaluate_pairs(weights, validation);
      rec.val_psnr = m.psnr;
      rec.val_ssim = m.ssim;
    }
    result.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  weights.zero_grad();
  return result;
}

void write_trace_csv(std::ostream& os, std::span<const EpochRecord> trace) {
  os << "epoch,lr,train_loss,val_psnr,val_ssim\n";
  const auto old = os.precision(17);
  auto field = [&](double v) {
    if (std::isinf(v)) {
      os << (v > 0 ? "inf" : "-inf");
    } else {
      os << v;
    }
  };
  for (const auto& r : trace) {
    os << r.epoch << ',';
    field(r.lr);
    os << ',';
    field(r.train_loss);
    os << ',';
    field(r.val_psnr);
    os << ',';
    field(r.val_ssim);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace patchdenoise
