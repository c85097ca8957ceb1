#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gic/autodiff.hpp"
#include "gic/config.hpp"
#include "gic/network.hpp"
#include "gic/params.hpp"

namespace gic {

struct OptimizerState {
  double learning_rate = 0.1;
  double momentum = 0.95;
  std::vector<ad::Tensor> velocity;  // one per parameter, same shape

  OptimizerState() = default;
  OptimizerState(std::span<const NamedParameter> params, double learning_rate, double momentum);
};

/// v <- momentum * v - lr * g; p <- p + v.
void sgd_step(std::span<const NamedParameter> params, std::span<const ad::Tensor> grads, OptimizerState& state);

struct LossAndGrad {
  double loss = 0.0;
  std::size_t prediction = 0;
  std::vector<ad::Tensor> grads;  // aligned with Network::parameters()
};

/// Cross-entropy of one graph and its parameter gradients. With `frozen`, the
/// pooling assignments are reused.
LossAndGrad loss_and_gradients(Network& net, const PreparedGraph& g, const PoolTrace* frozen = nullptr);

struct EpochStats {
  double loss = 0.0;      // mean over graphs
  double accuracy = 0.0;  // training accuracy from the same forward passes
  std::size_t steps = 0;
};

/// One pass in a seeded random order; gradients are averaged over each batch
/// of batch_size graphs before a single optimizer step.
EpochStats train_epoch(Network& net, std::span<const PreparedGraph* const> graphs, OptimizerState& opt,
                       std::mt19937_64& rng, std::size_t batch_size);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const Network& net, std::span<const PreparedGraph* const> graphs);

/// Fold index per graph. Each class is shuffled and dealt round-robin with a
/// counter that continues across classes, so every fold holds within one graph
/// of its share of each class.
std::vector<std::size_t> stratified_folds(std::span<const std::size_t> labels, std::size_t folds, std::uint64_t seed);

struct MetricRecord {
  std::string phase;  // "train", "test" or "final"
  std::size_t epoch = 0;
  std::size_t fold = 0;
  std::size_t repeat = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

nlohmann::json to_json(const MetricRecord& r);

using MetricSink = std::function<void(const MetricRecord&)>;

struct FoldRun {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double test_loss = 0.0;
  double seconds = 0.0;

  /// Wall-clock is excluded.
  bool operator==(const FoldRun& o) const {
    return repeat == o.repeat && fold == o.fold && seed == o.seed && accuracy == o.accuracy &&
           test_loss == o.test_loss;
  }
};

struct FoldReport {
  std::vector<FoldRun> runs;  // repeat-major
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over runs
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::vector<std::string> warnings;

  std::vector<double> accuracies() const;
  /// Wall-clock is excluded.
  bool operator==(const FoldReport& o) const {
    return runs == o.runs && mean == o.mean && stddev == o.stddev && seed == o.seed && epochs == o.epochs &&
           warnings == o.warnings;
  }
};

/// Report without timing fields, suitable for byte-comparison.
nlohmann::json to_json(const FoldReport& r);

/// Worker threads for fold runs: GIC_THREADS if set and positive, otherwise
/// the hardware concurrency.
std::size_t worker_threads();

/// Seeded model trained on `train` for cfg.epochs epochs.
Network fit(std::span<const PreparedGraph* const> train, std::size_t feature_dim, std::size_t num_classes,
            const NetworkConfig& cfg, std::uint64_t seed, const MetricSink& sink = {}, std::size_t fold = 0,
            std::size_t repeat = 0, const char* phase = "train");

/// Stratified cross-validation over cfg.repeats x cfg.folds fresh networks.
/// Metrics are delivered in run order regardless of threading.
FoldReport cross_validate(std::span<const PreparedGraph> graphs, std::size_t feature_dim, std::size_t num_classes,
                          const NetworkConfig& cfg, const MetricSink& sink = {});

}  // namespace gic
