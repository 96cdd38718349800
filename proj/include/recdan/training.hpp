#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "recdan/data.hpp"
#include "recdan/eval.hpp"
#include "recdan/models.hpp"
#include "recdan/optim.hpp"

namespace recdan::training {

struct TrainConfig {
  std::size_t source_epochs = 50;
  std::size_t adapt_epochs = 300;
  std::size_t finetune_epochs = 30;
  std::size_t batch_size = 512;
  double lr = 1e-4;
  double finetune_multiplier = 1e-3;  // applied to generator steps in fine-tuning
  double adapt_generator_scale = 1.0; // generator lr / discriminator lr during adaptation
  double weight_decay = 1e-4;         // lambda, supervised phase only
  double rho = 0.95;
  double eps = 1e-6;
  std::uint64_t seed = 0;
  models::DanVariant variant = models::DanVariant::ui;
  std::size_t source_patience = 5;
  std::size_t adapt_patience = 10;
  double band_low = 0.4;
  double band_high = 0.6;
  bool non_saturating = false;
  bool record_time = false;  // fills the seconds column; off keeps reports reproducible
  std::size_t probe_epochs = 600;
  double probe_lr = 1.0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

struct PhaseRow {
  std::string phase;
  std::size_t epoch = 0;
  std::optional<double> sup_loss, d_loss, g_loss, d_acc, seconds;
};

struct PhaseReport {
  std::vector<PhaseRow> rows;

  void write_csv(std::ostream& out, bool header = true) const;
  void append(const PhaseReport& other);
};

/// Supervised regression on the source domain. Keeps the parameters with the
/// best validation MSE.
PhaseReport pretrain_source(models::DanModel& model, const data::DomainPairDataset& data,
                            const TrainConfig& cfg, const data::FeatureTable* features = nullptr);

/// mean log D(source) + mean log(1 - D(target)), with D the source probability.
Tensor adversarial_loss_discriminator(Tape& tape, const models::Discriminator& d, const Tensor& source_reps,
                                      const Tensor& target_reps);
/// mean log(1 - D(target)), or -mean log D(target) when non_saturating.
Tensor adversarial_loss_generator(Tape& tape, const models::Discriminator& d, const Tensor& target_reps,
                                  bool non_saturating = false);

/// Fresh discriminator trained on (source_train, target_train); returns its
/// accuracy on the held-out clouds.
double probe_accuracy(const Tensor& source_train, const Tensor& target_train, const Tensor& source_held,
                      const Tensor& target_held, const models::ModelConfig& config, models::Level level,
                      const TrainConfig& cfg);

struct AdaptResult {
  PhaseReport report;
  eval::AlignmentStats initial;
  eval::AlignmentStats final;
  std::vector<eval::AlignmentStats> per_epoch;  // after each epoch
  double initial_probe = 0.0;                   // detectability before adaptation
  double final_probe = 0.0;                     // same measurement afterwards
  std::size_t epochs = 0;
  bool converged = false;  // accuracy stayed in band for `adapt_patience` epochs
};

/// Copies the source generators into a fresh target set, freezes the source
/// side and alternates discriminator ascent / generator descent.
AdaptResult adapt_target(models::DanModel& model, const data::DomainPairDataset& data, const TrainConfig& cfg,
                         const data::FeatureTable* features = nullptr);

struct LevelOutcome {
  models::Level level = models::Level::user;
  double probe_before = 0.0;
  double probe_after = 0.0;
  std::size_t pairs = 0;
};

struct FinetuneResult {
  PhaseReport report;
  std::vector<LevelOutcome> levels;
};

/// Level-wise adversarial fine-tuning on shared objects. No-op for UI-DAN.
FinetuneResult finetune_shared(models::DanModel& model, const data::DomainPairDataset& data,
                               const TrainConfig& cfg, const data::FeatureTable* features = nullptr);

/// Rating from the target generators (source ones before adaptation) and the
/// source head.
std::vector<double> infer(const models::DanModel& model, const models::ModelInput& input);

}  // namespace recdan::training
