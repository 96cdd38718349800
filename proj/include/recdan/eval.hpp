#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recdan/data.hpp"
#include "recdan/models.hpp"

namespace recdan::eval {

struct ErrorPair {
  double rmse = 0.0;
  double mae = 0.0;
};

ErrorPair rmse_mae(std::span<const double> pred, std::span<const double> truth);

/// 2|a - b| / (a + b), in percent.
double delta_metric(double ours, double baseline);

/// Samples predictions from Normal(mean, sd) of the training ratings (sample
/// standard deviation). A zero sd predicts the mean. Not clipped.
std::vector<double> normal_baseline(std::span<const double> train_ratings, std::size_t test_size,
                                    std::uint64_t seed);

struct EvalResult {
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
  std::string variant;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
};

struct AlignmentStats {
  double d_intra_s = 0.0;
  double d_intra_t = 0.0;
  double d_cross = 0.0;
  double d_acc = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Mean Euclidean distance over distinct pairs within one cloud.
double mean_intra_distance(const Tensor& reps);
/// Mean Euclidean distance over all cross pairs.
double mean_cross_distance(const Tensor& a, const Tensor& b);

/// Fraction of rows classified as their own domain (argmax of [p(source),
/// p(target)]; a tie counts as target).
double discriminator_accuracy(const models::Discriminator& d, const Tensor& source_reps,
                              const Tensor& target_reps);

AlignmentStats alignment_stats(const Tensor& source_reps, const Tensor& target_reps,
                               const models::Discriminator& d);

/// Eval-mode representations at one level for every record of a split, in
/// split order.
Tensor collect_representations(const models::GeneratorSet& g, const data::DomainPairDataset& data,
                               models::DomainKind side, data::Split split, models::Level level,
                               const data::FeatureTable* features = nullptr);

/// Predictions for every record of a split, in split order.
std::vector<double> predict_split(const models::GeneratorSet& g, const models::ScoringHead& head,
                                  const data::DomainPairDataset& data, models::DomainKind side,
                                  data::Split split, const data::FeatureTable* features = nullptr);

/// Ground truth for a split: the records' own ratings, or the sealed labels
/// when given. Missing labels throw DataError.
std::vector<double> split_truth(const data::DomainPairDataset& data, models::DomainKind side,
                                data::Split split, const data::LabelTable* labels = nullptr);

EvalResult evaluate(const models::GeneratorSet& g, const models::ScoringHead& head,
                    const data::DomainPairDataset& data, models::DomainKind side, data::Split split,
                    const data::LabelTable* labels, const data::FeatureTable* features,
                    const std::string& variant, std::uint64_t seed);

/// Target data through the source generators and head.
EvalResult source_only_eval(const models::DanModel& model, const data::DomainPairDataset& data,
                            data::Split split, const data::LabelTable* labels,
                            const data::FeatureTable* features, std::uint64_t seed);

/// Target data through the target generators (source ones if there are none)
/// and the source head.
EvalResult adapted_eval(const models::DanModel& model, const data::DomainPairDataset& data,
                        data::Split split, const data::LabelTable* labels,
                        const data::FeatureTable* features, const std::string& variant,
                        std::uint64_t seed);

}  // namespace recdan::eval
