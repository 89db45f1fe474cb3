#pragma once

#include <cmath>
#include <limits>
#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "handdi/adam.hpp"
#include "handdi/dataset.hpp"
#include "handdi/errors.hpp"
#include "handdi/han.hpp"
#include "handdi/io.hpp"
#include "handdi/metrics.hpp"
#include "handdi/random.hpp"

namespace handdi {

struct TrainOptions {
  AdamOptions adam;
  std::size_t max_epochs = 200;
  std::size_t patience = 100;
  std::size_t batch_size = 0;  // 0: all training pairs in one step
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auroc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stopping_epoch = 0;
  std::size_t best_epoch = 0;

  /// TSV with header `epoch train_loss val_loss val_auroc`.
  std::string to_tsv() const {
    std::ostringstream os;
    os << "epoch\ttrain_loss\tval_loss\tval_auroc\n";
    for (const auto& e : epochs) {
      os << e.epoch << '\t' << io::format_number(e.train_loss) << '\t' << io::format_number(e.val_loss) << '\t'
         << (e.val_auroc ? io::format_number(*e.val_auroc) : std::string("NA")) << '\n';
    }
    return os.str();
  }
};

/// Graph inputs shared by training and scoring.
template <std::floating_point T>
struct ModelInputs {
  const Tensor<T>& features;
  const std::vector<NeighborGraph>& graphs;
};

template <std::floating_point T>
struct TrainResult {
  TrainHistory history;
  ModelParams<T> best;
  std::vector<Tensor<T>> fixed_attention;  // populated for the MP ablation
  std::vector<double> beta;                // meta-path weights of the best model
};

/// Eval-mode pair scores.
template <std::floating_point T>
std::vector<T> predict_scores(const ModelConfig& config, const ModelParams<T>& params, ModelInputs<T> inputs,
                              std::span<const DrugPair> pairs, Variant variant = Variant::Full,
                              const std::vector<Tensor<T>>* fixed_attention = nullptr) {
  if (pairs.empty()) return {};
  ForwardOptions<T> opts;
  opts.variant = variant;
  opts.fixed_attention = fixed_attention;
  auto pass = forward(config, params, inputs.features, inputs.graphs, pairs, opts);
  const auto data = pass.scores.value().data();
  return {data.begin(), data.end()};
}

template <std::floating_point T>
std::vector<double> metapath_weights(const ModelConfig& config, const ModelParams<T>& params, ModelInputs<T> inputs,
                                     Variant variant = Variant::Full,
                                     const std::vector<Tensor<T>>* fixed_attention = nullptr) {
  ForwardOptions<T> opts;
  opts.variant = variant;
  opts.fixed_attention = fixed_attention;
  auto pass = forward(config, params, inputs.features, inputs.graphs, {}, opts);
  const auto data = pass.beta.value().data();
  return {data.begin(), data.end()};
}

template <std::floating_point T>
Metrics evaluate_pairs(const ModelConfig& config, const ModelParams<T>& params, ModelInputs<T> inputs,
                       std::span<const LabeledPair> pairs, Variant variant = Variant::Full,
                       const std::vector<Tensor<T>>* fixed_attention = nullptr) {
  const auto drug_pairs = pairs_of(pairs);
  const auto scores = predict_scores(config, params, inputs, drug_pairs, variant, fixed_attention);
  const auto labels = labels_of<int>(pairs);
  return evaluate(std::span<const T>(scores), std::span<const int>(labels));
}

/// Adam on the summed BCE of the training pairs, one validation pass per
/// epoch, early stopping once validation loss has not improved for
/// `patience` epochs (at least one), and the lowest-validation-loss
/// parameters returned.
template <std::floating_point T>
TrainResult<T> train(const ModelConfig& config, ModelParams<T> params, const SplitBundle& bundle, ModelInputs<T> inputs,
                     const TrainOptions& options) {
  if (bundle.train.empty()) throw ContractError("train: empty training set");
  TrainResult<T> result;
  if (options.variant == Variant::FixedNodeAttention) {
    result.fixed_attention = make_fixed_attention<T>(inputs.graphs, config.seed);
  }
  const auto* fixed = options.variant == Variant::FixedNodeAttention ? &result.fixed_attention : nullptr;

  AdamState<T> adam(options.adam, params.tensors);
  const std::vector<LabeledPair>& val_set = bundle.validation.empty() ? bundle.train : bundle.validation;
  const auto val_pairs = pairs_of(val_set);
  const auto val_labels = labels_of<T>(val_set);
  std::vector<LabeledPair> order = bundle.train;
  Rng batch_rng = make_rng(options.seed, Stream::Split, 1);

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  std::uint64_t step = 0;
  result.best = params;

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const std::size_t batch = options.batch_size == 0 ? order.size() : std::min(options.batch_size, order.size());
    if (options.batch_size != 0) std::shuffle(order.begin(), order.end(), batch_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++step) {
      std::span<const LabeledPair> chunk(order.data() + start, std::min(batch, order.size() - start));
      const auto pairs = pairs_of(chunk);
      const auto labels = labels_of<T>(chunk);
      ForwardOptions<T> opts;
      opts.training = true;
      opts.dropout_seed = derive_seed(options.seed, Stream::Dropout, step);
      opts.variant = options.variant;
      opts.fixed_attention = fixed;
      auto pass = forward(config, params, inputs.features, inputs.graphs, pairs, opts);
      auto loss = bce_loss(pass.logits, std::span<const T>(labels));
      if (!std::isfinite(static_cast<double>(loss.value()[0]))) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      pass.tape->backward(loss);
      std::vector<Tensor<T>> grads;
      grads.reserve(pass.params.size());
      for (const auto& p : pass.params) {
        grads.push_back(pass.tape->grad(p));
        if (!grads.back().all_finite()) {
          throw NumericError("train: non-finite gradient at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
        }
      }
      adam.update(params.tensors, grads);
      epoch_loss += static_cast<double>(loss.value()[0]);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(order.size());
    const auto val_scores = predict_scores(config, params, inputs, val_pairs, options.variant, fixed);
    record.val_loss = mean_bce(std::span<const T>(val_scores), std::span<const T>(val_labels));
    if (!std::isfinite(record.val_loss)) {
      throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    const bool both = std::any_of(val_set.begin(), val_set.end(), [](auto& p) { return p.label == 1; }) &&
                      std::any_of(val_set.begin(), val_set.end(), [](auto& p) { return p.label == 0; });
    if (both) record.val_auroc = auroc(std::span<const T>(val_scores), std::span<const T>(val_labels));
    result.history.epochs.push_back(record);
    result.history.stopping_epoch = epoch;

    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      result.best = params;
      result.history.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= std::max<std::size_t>(options.patience, 1)) {
      break;
    }
  }
  result.beta = metapath_weights(config, result.best, inputs, options.variant, fixed);
  return result;
}

/// Trains one ablation variant from the same initial parameters and returns
/// its test metrics.
template <std::floating_point T>
Metrics ablate(Variant variant, const ModelConfig& config, const ModelParams<T>& init, const SplitBundle& bundle,
               ModelInputs<T> inputs, TrainOptions options, TrainResult<T>* out = nullptr) {
  options.variant = variant;
  auto result = train(config, init, bundle, inputs, options);
  const auto* fixed = variant == Variant::FixedNodeAttention ? &result.fixed_attention : nullptr;
  auto metrics = evaluate_pairs(config, result.best, inputs, bundle.test, variant, fixed);
  if (out) *out = std::move(result);
  return metrics;
}

}  // namespace handdi
