#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <future>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "morphogen/charlm.hpp"
#include "morphogen/data.hpp"
#include "morphogen/model.hpp"
#include "morphogen/search.hpp"

namespace morphogen {

struct TrainConfig {
  std::size_t hidden = 100;
  std::size_t embed_dim = 0;  // 0: size of the character vocabulary
  Variant variant = Variant::Full;
  double l2 = 1e-5;
  std::size_t epochs = 30;
  std::size_t ensemble_k = 5;
  std::uint64_t seed = 1;
  /// Ensemble member seeds; empty means seed, seed+1, ..., seed+k-1.
  std::vector<std::uint64_t> seeds;
  std::size_t beam_width = 20;
  std::size_t max_len_slack = 10;
  double rho = 0.95;
  double adadelta_epsilon = 1e-6;
  /// Initial unconstrained interpolation parameter; lambda = softplus(lambda_init).
  double lambda_init = 0.0;
  bool learn_lambda = true;
  /// Receives one `epoch TAB train_loss TAB dev_accuracy` line per epoch.
  std::ostream* log = nullptr;

  ModelConfig model_config() const { return {hidden, embed_dim, variant}; }
  void validate() const;
};

struct TrainData {
  std::vector<Example> train;
  std::vector<Example> dev;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;    // mean per-example loss over the epoch
  double dev_accuracy = 0.0;  // exact match, greedy decoding
};

struct TrainedModel {
  ModelParams model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  /// Learned interpolation weight (0 for purely supervised models).
  double lambda = 0.0;
};

/// Per-tag decoders over one shared encoder.
struct JointModel {
  std::map<std::string, ModelParams> models;
  std::vector<EpochRecord> history;  // dev_accuracy is the macro average over tags
  std::size_t best_epoch = 0;
};

double softplus(double x);

/// Exact-match accuracy of greedy decoding; 0 for an empty set.
double greedy_accuracy(std::span<const Expert> experts, std::span<const Example> examples,
                       std::size_t max_len_slack, const WittenBellLM* lm = nullptr);

/// One model for `tag`, trained with AdaDelta on single examples; the epoch
/// with the best dev accuracy is returned (earliest on ties; last epoch when
/// there is no dev data for the tag). The vocabulary comes from all of
/// data.train.
TrainedModel train_factored(const TrainData& data, const std::string& tag, const TrainConfig& config);

/// All tags at once with a shared encoder; examples of all tags are
/// interleaved in one shuffled stream.
JointModel train_joint(const TrainData& data, const TrainConfig& config);

/// Like train_factored, with the output distribution interpolated with the
/// language model at every step and lambda = softplus(lambda_hat) learned
/// alongside the network.
TrainedModel train_interpolated(const TrainData& data, const std::string& tag, const WittenBellLM& lm,
                                const TrainConfig& config);

/// Validated member seeds for an ensemble of config.ensemble_k models.
std::vector<std::uint64_t> ensemble_seeds(const TrainConfig& config);

/// Runs train_fn(seed) for every member seed, several at a time, and returns
/// the results in seed order.
template <class TrainFn>
auto train_ensemble(TrainFn&& train_fn, const TrainConfig& config)
    -> std::vector<std::invoke_result_t<TrainFn&, std::uint64_t>> {
  using Result = std::invoke_result_t<TrainFn&, std::uint64_t>;
  const auto seeds = ensemble_seeds(config);
  const std::size_t parallel = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::vector<Result> results;
  results.reserve(seeds.size());
  for (std::size_t begin = 0; begin < seeds.size(); begin += parallel) {
    const std::size_t end = std::min(seeds.size(), begin + parallel);
    std::vector<std::future<Result>> running;
    for (std::size_t i = begin; i < end; ++i) {
      running.push_back(std::async(std::launch::async, [&train_fn, seed = seeds[i]] { return train_fn(seed); }));
    }
    for (auto& f : running) results.push_back(f.get());
  }
  return results;
}

void write_training_log(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace morphogen
