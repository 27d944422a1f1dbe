#include "raft/multitask/training.hpp"

#include <fstream>
#include <map>
#include <numeric>

#include "raft/numerics/errors.hpp"

namespace raft::multitask {

void to_json(nlohmann::json& j, const LossWeights& w) { j = {{"beta", w.beta}, {"gamma", w.gamma}}; }

void from_json(const nlohmann::json& j, LossWeights& w) {
  const LossWeights d;
  w.beta = j.value("beta", d.beta);
  w.gamma = j.value("gamma", d.gamma);
  if (w.beta < 0 || w.gamma < 0) throw ContractError("loss weights must be nonnegative");
}

LossBreakdown LossBreakdown::assemble(double label, double rationale, double target, const LossWeights& w) {
  return {label, rationale, target, label + w.beta * rationale + w.gamma * target};
}

void to_json(nlohmann::json& j, const TrainSettings& s) {
  j = {{"lr", s.adam.lr},
       {"beta1", s.adam.beta1},
       {"beta2", s.adam.beta2},
       {"eps", s.adam.eps},
       {"batch_size", s.batch_size},
       {"max_epochs", s.max_epochs},
       {"patience", s.patience}};
}

void from_json(const nlohmann::json& j, TrainSettings& s) {
  const TrainSettings d;
  s.adam.lr = j.value("lr", d.adam.lr);
  s.adam.beta1 = j.value("beta1", d.adam.beta1);
  s.adam.beta2 = j.value("beta2", d.adam.beta2);
  s.adam.eps = j.value("eps", d.adam.eps);
  s.batch_size = j.value("batch_size", d.batch_size);
  s.max_epochs = j.value("max_epochs", d.max_epochs);
  s.patience = j.value("patience", d.patience);
  if (s.batch_size == 0 || s.max_epochs == 0) throw ContractError("batch_size and max_epochs must be positive");
}

nlohmann::ordered_json epoch_to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["l_label"] = r.losses.l_label;
  j["l_rationale"] = r.losses.l_rationale;
  j["l_target"] = r.losses.l_target;
  j["l_total"] = r.losses.l_total;
  j["dev_metric"] = r.dev_metric;
  return j;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log " + path.string());
  for (const auto& r : log) out << epoch_to_json(r).dump() << '\n';
}

FitResult fit(numerics::ParameterSet<float>& params, const TrainSettings& settings, std::size_t n_train,
              std::uint64_t seed, const StepFn& step, const EvalFn& eval) {
  if (n_train == 0) throw DataError("training set is empty");
  numerics::AdamState<float> adam(settings.adam);
  Rng rng(seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  std::map<std::string, std::vector<float>> best;
  std::size_t since_best = 0;
  DevScore best_score;
  for (std::size_t epoch = 1; epoch <= settings.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_train; start += settings.batch_size) {
      const auto len = std::min(settings.batch_size, n_train - start);
      params.zero_grad();
      const auto b = step(std::span<const std::size_t>(order.data() + start, len), rng);
      adam.step(params);
      sum.l_label += b.l_label;
      sum.l_rationale += b.l_rationale;
      sum.l_target += b.l_target;
      sum.l_total += b.l_total;
      ++batches;
    }
    const double n = static_cast<double>(batches);
    const DevScore score = eval();
    EpochRecord rec{epoch, {sum.l_label / n, sum.l_rationale / n, sum.l_target / n, sum.l_total / n}, score.primary};
    result.log.push_back(rec);
    if (result.best_epoch == 0 || score.primary > best_score.primary ||
        (score.primary == best_score.primary && score.secondary > best_score.secondary)) {
      result.best_epoch = epoch;
      result.best_metric = rec.dev_metric;
      best_score = score;
      for (const auto& [name, p] : params) best[name] = p.value.data;
      since_best = 0;
    } else if (++since_best >= settings.patience) {
      break;
    }
  }
  for (auto& [name, p] : params) p.value.data = best.at(name);
  return result;
}

}  // namespace raft::multitask
