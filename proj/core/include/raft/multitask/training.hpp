#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "raft/numerics/adam.hpp"
#include "raft/numerics/parameters.hpp"

namespace raft::multitask {

struct LossWeights {
  double beta = 2.0;   // rationale
  double gamma = 10.0;  // target
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct LossBreakdown {
  double l_label = 0;
  double l_rationale = 0;
  double l_target = 0;
  double l_total = 0;

  // l_label + beta * l_rationale + gamma * l_target
  static LossBreakdown assemble(double label, double rationale, double target, const LossWeights& w);
};

struct TrainSettings {
  numerics::AdamSettings adam;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
};

void to_json(nlohmann::json& j, const TrainSettings& s);
void from_json(const nlohmann::json& j, TrainSettings& s);

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown losses;  // mean over the epoch's batches
  double dev_metric = 0;
};

nlohmann::ordered_json epoch_to_json(const EpochRecord& r);
void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_metric = 0;
};

// Runs forward/backward on the given training indices; parameter gradients
// are zeroed before each call.
using StepFn = std::function<LossBreakdown(std::span<const std::size_t> indices, Rng& rng)>;
// Dev selection score, compared lexicographically (higher is better). Only
// the primary value is logged.
struct DevScore {
  double primary = 0;
  double secondary = 0;
};
using EvalFn = std::function<DevScore()>;

// Mini-batch Adam with early stopping. On return `params` holds the weights
// of the best dev epoch (first epoch wins ties).
FitResult fit(numerics::ParameterSet<float>& params, const TrainSettings& settings, std::size_t n_train,
              std::uint64_t seed, const StepFn& step, const EvalFn& eval);

}  // namespace raft::multitask
