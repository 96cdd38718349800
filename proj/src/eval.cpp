#include "recdan/eval.hpp"

#include <cmath>

#include "recdan/errors.hpp"
#include "recdan/kernels.hpp"
#include "recdan/ops.hpp"
#include "recdan/random.hpp"

namespace recdan::eval {

using models::DomainKind;
using models::Level;

ErrorPair rmse_mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.empty() || truth.empty()) throw ArgumentError("rmse_mae: empty input");
  if (pred.size() != truth.size()) {
    throw DimensionError("rmse_mae: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " labels");
  }
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    se += e * e;
    ae += std::abs(e);
  }
  const auto n = static_cast<double>(pred.size());
  return {std::sqrt(se / n), ae / n};
}

double delta_metric(double ours, double baseline) {
  if (!(ours > 0.0) || !(baseline > 0.0)) throw ArgumentError("delta_metric: inputs must be positive");
  return 200.0 * std::abs(ours - baseline) / (ours + baseline);
}

std::vector<double> normal_baseline(std::span<const double> train, std::size_t test_size, std::uint64_t seed) {
  if (train.size() < 2) throw ArgumentError("normal_baseline: need at least 2 training ratings");
  double mean = 0.0;
  for (double r : train) mean += r;
  mean /= static_cast<double>(train.size());
  double var = 0.0;
  for (double r : train) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(train.size() - 1));
  std::vector<double> out(test_size, mean);
  if (sd > 0.0) {
    Rng rng(seed);
    for (auto& p : out) p = rng.normal(mean, sd);
  }
  return out;
}

nlohmann::ordered_json EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["rmse"] = rmse;
  j["mae"] = mae;
  j["n"] = n;
  j["variant"] = variant;
  j["seed"] = seed;
  return j;
}

nlohmann::ordered_json AlignmentStats::to_json() const {
  nlohmann::ordered_json j;
  j["d_intra_s"] = d_intra_s;
  j["d_intra_t"] = d_intra_t;
  j["d_cross"] = d_cross;
  j["d_acc"] = d_acc;
  return j;
}

double mean_intra_distance(const Tensor& reps) {
  const std::size_t n = reps.rows();
  if (n < 2) throw ArgumentError("mean_intra_distance: need at least 2 rows");
  const double total = kernels::pairwise_distance_sum(reps.data(), n, reps.data(), n, reps.cols(), true);
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double mean_cross_distance(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw DimensionError("mean_cross_distance: widths differ");
  const double total = kernels::pairwise_distance_sum(a.data(), a.rows(), b.data(), b.rows(), a.cols(), false);
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

double discriminator_accuracy(const models::Discriminator& d, const Tensor& source_reps, const Tensor& target_reps) {
  Tape tape = Tape::inference();
  const Tensor ps = models::discriminate(tape, d, source_reps);
  const Tensor pt = models::discriminate(tape, d, target_reps);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < ps.rows(); ++r) correct += ps.at(r, 0) > ps.at(r, 1) ? 1 : 0;
  for (std::size_t r = 0; r < pt.rows(); ++r) correct += pt.at(r, 1) >= pt.at(r, 0) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(ps.rows() + pt.rows());
}

AlignmentStats alignment_stats(const Tensor& source_reps, const Tensor& target_reps, const models::Discriminator& d) {
  if (source_reps.rows() < 2 || target_reps.rows() < 2) {
    throw ArgumentError("alignment_stats: need at least 2 representations per domain");
  }
  AlignmentStats s;
  s.d_intra_s = mean_intra_distance(source_reps);
  s.d_intra_t = mean_intra_distance(target_reps);
  s.d_cross = mean_cross_distance(source_reps, target_reps);
  s.d_acc = discriminator_accuracy(d, source_reps, target_reps);
  return s;
}

namespace {

constexpr std::size_t kEvalChunk = 512;

template <typename Fn>
void for_each_chunk(const data::DomainPairDataset& data, DomainKind side, data::Split split,
                    const data::FeatureTable* features, models::Modality modality, Fn&& fn) {
  const auto& idx = data.domain(side).split(split);
  if (idx.empty()) throw DataError("split '" + data::to_string(split) + "' is empty");
  for (std::size_t start = 0; start < idx.size(); start += kEvalChunk) {
    const std::size_t len = std::min(kEvalChunk, idx.size() - start);
    fn(data::make_batch(data, side, std::span(idx).subspan(start, len), modality, features));
  }
}

}  // namespace

Tensor collect_representations(const models::GeneratorSet& g, const data::DomainPairDataset& data,
                               DomainKind side, data::Split split, Level level,
                               const data::FeatureTable* features) {
  std::vector<double> values;
  std::size_t rows = 0, width = 0;
  Rng unused(0);
  for_each_chunk(data, side, split, features, g.config.modality, [&](const data::Batch& b) {
    Tape tape = Tape::inference();
    const auto r = models::represent(tape, g, b.input, layers::Mode::eval, unused);
    const Tensor& t = level == Level::user ? r.user : level == Level::item ? r.item : r.interaction;
    values.insert(values.end(), t.data().begin(), t.data().end());
    rows += t.rows();
    width = t.cols();
  });
  return Tensor(Shape{rows, width}, std::move(values));
}

std::vector<double> predict_split(const models::GeneratorSet& g, const models::ScoringHead& head,
                                  const data::DomainPairDataset& data, DomainKind side, data::Split split,
                                  const data::FeatureTable* features) {
  std::vector<double> out;
  for_each_chunk(data, side, split, features, g.config.modality, [&](const data::Batch& b) {
    auto p = models::predict(g, head, b.input);
    out.insert(out.end(), p.begin(), p.end());
  });
  return out;
}

std::vector<double> split_truth(const data::DomainPairDataset& data, DomainKind side, data::Split split,
                                const data::LabelTable* labels) {
  const auto& d = data.domain(side);
  std::vector<double> truth;
  for (std::size_t i : d.split(split)) {
    const auto& r = d.records[i];
    if (labels) {
      auto it = labels->find({r.user_id, r.item_id});
      if (it == labels->end()) throw DataError("no sealed label for (" + r.user_id + ", " + r.item_id + ")");
      truth.push_back(it->second);
    } else {
      if (!r.rating) throw DataError("record (" + r.user_id + ", " + r.item_id + ") has no rating; pass labels");
      truth.push_back(*r.rating);
    }
  }
  return truth;
}

EvalResult evaluate(const models::GeneratorSet& g, const models::ScoringHead& head,
                    const data::DomainPairDataset& data, DomainKind side, data::Split split,
                    const data::LabelTable* labels, const data::FeatureTable* features,
                    const std::string& variant, std::uint64_t seed) {
  const auto truth = split_truth(data, side, split, labels);
  const auto pred = predict_split(g, head, data, side, split, features);
  const auto e = rmse_mae(pred, truth);
  return EvalResult{e.rmse, e.mae, truth.size(), variant, seed};
}

EvalResult source_only_eval(const models::DanModel& model, const data::DomainPairDataset& data, data::Split split,
                            const data::LabelTable* labels, const data::FeatureTable* features, std::uint64_t seed) {
  return evaluate(model.source, model.head, data, DomainKind::target, split, labels, features, "source-only", seed);
}

EvalResult adapted_eval(const models::DanModel& model, const data::DomainPairDataset& data, data::Split split,
                        const data::LabelTable* labels, const data::FeatureTable* features,
                        const std::string& variant, std::uint64_t seed) {
  const auto& g = model.target ? *model.target : model.source;
  return evaluate(g, model.head, data, DomainKind::target, split, labels, features, variant, seed);
}

}  // namespace recdan::eval
