#include "recdan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "recdan/errors.hpp"
#include "recdan/ops.hpp"
#include "recdan/random.hpp"

namespace recdan::training {

using models::DomainKind;
using models::Level;
using layers::Mode;

namespace {

constexpr double kLogFloor = 1e-7;

using Clock = std::chrono::steady_clock;

std::vector<NamedTensor> join(std::vector<NamedTensor> a, const std::vector<NamedTensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Gradient buffers exist and are zero before each backward pass.
void reset_grads(const std::vector<NamedTensor>& params) {
  for (const auto& p : params) {
    if (p.tensor.frozen()) continue;
    p.tensor.grad();
    p.tensor.zero_grad();
  }
}

std::optional<double> elapsed(const TrainConfig& cfg, Clock::time_point start) {
  if (!cfg.record_time) return std::nullopt;
  return std::chrono::duration<double>(Clock::now() - start).count();
}

optim::AdadeltaConfig opt_config(const TrainConfig& cfg, double lr, double weight_decay) {
  return optim::AdadeltaConfig{cfg.rho, cfg.eps, lr, weight_decay};
}

void check_finite(double v, const std::string& phase, std::size_t epoch, const char* what) {
  if (!std::isfinite(v)) {
    throw TrainingError(phase + " diverged at epoch " + std::to_string(epoch) + ": " + what + " is not finite");
  }
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double mse(std::span<const double> pred, std::span<const double> truth) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

bool in_band(double acc, const TrainConfig& cfg) { return acc >= cfg.band_low && acc <= cfg.band_high; }

// Rows of `table` picked by `index` as a constant tensor.
Tensor take_rows(const Tensor& table, const std::vector<std::size_t>& index) {
  const std::size_t w = table.cols();
  std::vector<double> v;
  v.reserve(index.size() * w);
  for (std::size_t i : index) {
    auto row = table.data().subspan(i * w, w);
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(Shape{index.size(), w}, std::move(v));
}

struct AdversarialStep {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double correct = 0.0;
  std::size_t samples = 0;
};

// One alternation: the discriminator ascends on the target representations
// as computed now, then the generator descends against the updated
// discriminator through the same (tape-connected) representations.
AdversarialStep adversarial_step(Tape& tape, const Tensor& source_reps, const Tensor& target_reps,
                                 models::Discriminator& d, optim::Adadelta& d_opt,
                                 const std::vector<NamedTensor>& gen_params, optim::Adadelta& gen_opt,
                                 bool non_saturating) {
  AdversarialStep s;
  const auto d_params = d.parameters();
  const Tensor target_fixed = target_reps.detach();
  {
    Tape dtape;
    Tensor loss = adversarial_loss_discriminator(dtape, d, source_reps, target_fixed);
    s.d_loss = loss.item();
    s.samples = source_reps.rows() + target_fixed.rows();
    s.correct = eval::discriminator_accuracy(d, source_reps, target_fixed) * static_cast<double>(s.samples);
    reset_grads(d_params);
    dtape.backward(loss);
    d_opt.step();
  }
  optim::freeze(d_params);
  Tensor loss = adversarial_loss_generator(tape, d, target_reps, non_saturating);
  s.g_loss = loss.item();
  reset_grads(gen_params);
  tape.backward(loss);
  gen_opt.step();
  optim::unfreeze(d_params);
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid training config: " + what); };
  if (source_epochs == 0 || adapt_epochs == 0 || finetune_epochs == 0) fail("epoch caps must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(finetune_multiplier > 0.0 && finetune_multiplier <= 1.0)) fail("finetune_multiplier must lie in (0, 1]");
  if (!(adapt_generator_scale > 0.0)) fail("adapt_generator_scale must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (!(rho > 0.0 && rho < 1.0)) fail("rho must lie in (0, 1)");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (source_patience == 0 || adapt_patience == 0) fail("patience must be positive");
  if (!(band_low >= 0.0 && band_low < band_high && band_high <= 1.0)) fail("accuracy band must satisfy 0 <= low < high <= 1");
  if (probe_epochs == 0 || !(probe_lr > 0.0)) fail("probe settings must be positive");
}

void PhaseReport::write_csv(std::ostream& out, bool header) const {
  if (header) out << "phase,epoch,sup_loss,d_loss,g_loss,d_acc,seconds\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : rows) {
    out << r.phase << ',' << r.epoch << ',' << cell(r.sup_loss) << ',' << cell(r.d_loss) << ','
        << cell(r.g_loss) << ',' << cell(r.d_acc) << ',' << cell(r.seconds) << '\n';
  }
}

void PhaseReport::append(const PhaseReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

PhaseReport pretrain_source(models::DanModel& model, const data::DomainPairDataset& data, const TrainConfig& cfg,
                            const data::FeatureTable* features) {
  cfg.validate();
  if (data.source.train.empty()) throw ConfigError("source training split is empty");
  const auto params = join(model.source.parameters(), model.head.parameters());
  optim::Adadelta opt(params, opt_config(cfg, cfg.lr, cfg.weight_decay));
  Rng rng(derive_seed(cfg.seed, 21));
  const auto modality = model.config.modality;
  const bool have_valid = !data.source.valid.empty();
  std::vector<double> valid_truth;
  if (have_valid) valid_truth = eval::split_truth(data, DomainKind::source, data::Split::valid);

  PhaseReport report;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.source_epochs; ++epoch) {
    const auto start = Clock::now();
    double total = 0.0;
    std::size_t rows = 0;
    for (const auto& b : data::batches(data, DomainKind::source, data::Split::train, cfg.batch_size, cfg.seed,
                                       epoch, modality, features)) {
      Tape tape;
      const auto reps = models::represent(tape, model.source, b.input, Mode::train, rng);
      const Tensor pred = models::predict_rating(tape, model.head, reps.interaction);
      const Tensor loss = ops::mean_squared_error(tape, pred, Tensor::vector(b.ratings));
      check_finite(loss.item(), "source pre-training", epoch, "supervised loss");
      reset_grads(params);
      tape.backward(loss);
      opt.step();
      total += loss.item() * static_cast<double>(b.ratings.size());
      rows += b.ratings.size();
    }
    const double train_loss = total / static_cast<double>(rows);
    double score = train_loss;
    if (have_valid) {
      score = mse(eval::predict_split(model.source, model.head, data, DomainKind::source, data::Split::valid, features),
                  valid_truth);
      check_finite(score, "source pre-training", epoch, "validation loss");
    }
    report.rows.push_back(PhaseRow{"source", epoch, train_loss, std::nullopt, std::nullopt, std::nullopt,
                                   elapsed(cfg, start)});
    if (score < best) {
      best = score;
      stale = 0;
      best_values.clear();
      for (const auto& p : params) best_values.push_back(p.tensor.clone());
    } else if (++stale >= cfg.source_patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor;
    std::copy(best_values[i].data().begin(), best_values[i].data().end(), dst.data().begin());
  }
  return report;
}

Tensor adversarial_loss_discriminator(Tape& tape, const models::Discriminator& d, const Tensor& source_reps,
                                      const Tensor& target_reps) {
  const Tensor ps = models::discriminate(tape, d, source_reps);
  const Tensor pt = models::discriminate(tape, d, target_reps);
  const Tensor a = ops::mean(tape, ops::log_clamped(tape, ops::column(tape, ps, 0), kLogFloor));
  const Tensor b = ops::mean(tape, ops::log_clamped(tape, ops::column(tape, pt, 1), kLogFloor));
  return ops::add(tape, a, b);
}

Tensor adversarial_loss_generator(Tape& tape, const models::Discriminator& d, const Tensor& target_reps,
                                  bool non_saturating) {
  const Tensor pt = models::discriminate(tape, d, target_reps);
  if (non_saturating) {
    return ops::scale(tape, ops::mean(tape, ops::log_clamped(tape, ops::column(tape, pt, 0), kLogFloor)), -1.0);
  }
  return ops::mean(tape, ops::log_clamped(tape, ops::column(tape, pt, 1), kLogFloor));
}

double probe_accuracy(const Tensor& source_train, const Tensor& target_train, const Tensor& source_held,
                      const Tensor& target_held, const models::ModelConfig& config, Level level,
                      const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 31 + static_cast<std::uint64_t>(level)));
  auto d = models::Discriminator::init(level, config, rng);
  const auto params = d.parameters();
  optim::Adadelta opt(params, opt_config(cfg, cfg.probe_lr, 0.0), optim::Direction::ascend);
  for (std::size_t e = 0; e < cfg.probe_epochs; ++e) {
    Tape tape;
    const Tensor loss = adversarial_loss_discriminator(tape, d, source_train, target_train);
    reset_grads(params);
    tape.backward(loss);
    opt.step();
  }
  return eval::discriminator_accuracy(d, source_held, target_held);
}

AdaptResult adapt_target(models::DanModel& model, const data::DomainPairDataset& data, const TrainConfig& cfg,
                         const data::FeatureTable* features) {
  cfg.validate();
  if (data.target.train.empty()) throw ConfigError("target training split is empty");
  const auto modality = model.config.modality;
  Rng init_rng(derive_seed(cfg.seed, 41));
  model.target = models::GeneratorSet::init(model.config, DomainKind::target, init_rng);
  optim::copy_parameters(model.source, *model.target);
  models::GeneratorSet& tgt = *model.target;

  const auto frozen = join(model.source.parameters(), model.head.parameters());
  optim::freeze(frozen);
  const auto gen_params = tgt.parameters();
  const auto d_params = model.d_f.parameters();
  optim::Adadelta gen_opt(gen_params, opt_config(cfg, cfg.lr * cfg.adapt_generator_scale, 0.0));
  optim::Adadelta d_opt(d_params, opt_config(cfg, cfg.lr, 0.0), optim::Direction::ascend);
  optim::check_disjoint({&gen_opt, &d_opt});

  // The source generators are frozen, so the user and item encodings of the
  // source training records are computed once.
  const auto& src_train = data.source.train;
  const Tensor src_user = eval::collect_representations(model.source, data, DomainKind::source, data::Split::train,
                                                        Level::user, features);
  const Tensor src_item = eval::collect_representations(model.source, data, DomainKind::source, data::Split::train,
                                                        Level::item, features);
  std::vector<std::size_t> train_pos(data.source.records.size(), 0);
  for (std::size_t i = 0; i < src_train.size(); ++i) train_pos[src_train[i]] = i;

  const data::Split held = data.source.valid.empty() || data.target.valid.empty() ? data::Split::train
                                                                                   : data::Split::valid;
  auto reps = [&](const models::GeneratorSet& g, DomainKind side, data::Split split) {
    return eval::collect_representations(g, data, side, split, Level::interaction, features);
  };
  const Tensor src_held = reps(model.source, DomainKind::source, held);

  AdaptResult result;
  result.initial = eval::alignment_stats(src_held, reps(tgt, DomainKind::target, held), model.d_f);
  const Tensor src_fit = reps(model.source, DomainKind::source, data::Split::train);
  auto detectability = [&] {
    return probe_accuracy(src_fit, reps(tgt, DomainKind::target, data::Split::train), src_held,
                          reps(tgt, DomainKind::target, held), model.config, Level::interaction, cfg);
  };
  result.initial_probe = detectability();
  result.final = result.initial;

  Rng rng(derive_seed(cfg.seed, 42));
  std::size_t in_band_epochs = 0;
  for (std::size_t epoch = 1; epoch <= cfg.adapt_epochs; ++epoch) {
    const auto start = Clock::now();
    const auto s_batches = data::batches(data, DomainKind::source, data::Split::train, cfg.batch_size, cfg.seed,
                                         epoch, modality, features);
    const auto t_batches = data::batches(data, DomainKind::target, data::Split::train, cfg.batch_size, cfg.seed,
                                         epoch, modality, features);
    double d_loss = 0.0, g_loss = 0.0, correct = 0.0;
    std::size_t steps = 0, samples = 0;
    for (const auto& sb : s_batches) {
      std::vector<std::size_t> pos;
      for (std::size_t r : sb.records) pos.push_back(train_pos[r]);
      Tape stape = Tape::inference();
      const Tensor rs = models::forward_interaction(stape, model.source, take_rows(src_user, pos),
                                                    take_rows(src_item, pos), Mode::train, rng);
      for (const auto& tb : t_batches) {
        Tape tape;
        const Tensor rt = models::represent(tape, tgt, tb.input, Mode::train, rng).interaction;
        const auto s = adversarial_step(tape, rs, rt, model.d_f, d_opt, gen_params, gen_opt, cfg.non_saturating);
        check_finite(s.d_loss, "adaptation", epoch, "discriminator loss");
        check_finite(s.g_loss, "adaptation", epoch, "generator loss");
        d_loss += s.d_loss;
        g_loss += s.g_loss;
        correct += s.correct;
        samples += s.samples;
        ++steps;
      }
    }
    const double acc = correct / static_cast<double>(samples);
    result.report.rows.push_back(PhaseRow{"adapt", epoch, std::nullopt, d_loss / static_cast<double>(steps),
                                          g_loss / static_cast<double>(steps), acc, elapsed(cfg, start)});
    result.per_epoch.push_back(eval::alignment_stats(src_held, reps(tgt, DomainKind::target, held), model.d_f));
    result.final = result.per_epoch.back();
    result.epochs = epoch;
    in_band_epochs = in_band(acc, cfg) ? in_band_epochs + 1 : 0;
    if (in_band_epochs >= cfg.adapt_patience) {
      result.converged = true;
      break;
    }
  }
  result.final_probe = detectability();
  optim::unfreeze(frozen);
  return result;
}

namespace {

Tensor level_reps(Tape& tape, const models::GeneratorSet& g, const data::LevelBatch& b, DomainKind side) {
  if (b.level == Level::user) {
    return models::forward_user(tape, g, side == DomainKind::source ? b.source_users : b.target_users);
  }
  return models::forward_item(tape, g, side == DomainKind::source ? b.source_items : b.target_items);
}

double level_probe(const models::DanModel& model, const data::DomainPairDataset& data, Level level,
                   const std::vector<std::pair<std::size_t, std::size_t>>& train_pairs,
                   const std::vector<std::pair<std::size_t, std::size_t>>& held_pairs, const TrainConfig& cfg,
                   const data::FeatureTable* features) {
  const auto modality = model.config.modality;
  const auto tb = data::make_level_batch(data, level, train_pairs, modality, features);
  const auto hb = data::make_level_batch(data, level, held_pairs, modality, features);
  Tape tape = Tape::inference();
  return probe_accuracy(level_reps(tape, model.source, tb, DomainKind::source),
                        level_reps(tape, *model.target, tb, DomainKind::target),
                        level_reps(tape, model.source, hb, DomainKind::source),
                        level_reps(tape, *model.target, hb, DomainKind::target), model.config, level, cfg);
}

}  // namespace

FinetuneResult finetune_shared(models::DanModel& model, const data::DomainPairDataset& data, const TrainConfig& cfg,
                               const data::FeatureTable* features) {
  cfg.validate();
  FinetuneResult result;
  if (cfg.variant == models::DanVariant::ui) return result;
  if (!model.target) throw StateError("fine-tuning needs an adapted target model; run adapt first");

  std::vector<Level> levels;
  for (Level l : models::active_discriminators(cfg.variant)) {
    if (l != Level::interaction) levels.push_back(l);
  }
  for (Level l : levels) {
    if (data::shared_pairs(data, l).empty()) {
      throw ConfigError(models::variant_label(cfg.variant) + " needs shared " +
                        (l == Level::user ? "items" : "users") + " between the domains, but there are none");
    }
  }

  const auto frozen = join(model.source.parameters(), model.head.parameters());
  optim::freeze(frozen);
  const auto modality = model.config.modality;
  for (Level level : levels) {
    auto all_pairs = data::shared_pairs(data, level);
    Rng split_rng(derive_seed(cfg.seed, 60 + static_cast<std::uint64_t>(level)));
    split_rng.shuffle(all_pairs);
    std::vector<std::pair<std::size_t, std::size_t>> train_pairs = all_pairs, held_pairs = all_pairs;
    if (all_pairs.size() >= 5) {
      const std::size_t n_train = all_pairs.size() * 4 / 5;
      train_pairs.assign(all_pairs.begin(), all_pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
      held_pairs.assign(all_pairs.begin() + static_cast<std::ptrdiff_t>(n_train), all_pairs.end());
    }

    auto& slot = level == Level::user ? model.d_u : model.d_v;
    if (!slot) {
      Rng d_rng(derive_seed(cfg.seed, 50 + static_cast<std::uint64_t>(level)));
      slot = models::Discriminator::init(level, model.config, d_rng);
    }
    models::Discriminator& d = *slot;
    const auto gen_params =
        level == Level::user ? model.target->user_parameters() : model.target->item_parameters();
    optim::Adadelta gen_opt(gen_params, opt_config(cfg, cfg.lr * cfg.finetune_multiplier, 0.0));
    optim::Adadelta d_opt(d.parameters(), opt_config(cfg, cfg.lr, 0.0), optim::Direction::ascend);
    optim::check_disjoint({&gen_opt, &d_opt});

    LevelOutcome outcome;
    outcome.level = level;
    outcome.pairs = all_pairs.size();
    outcome.probe_before = level_probe(model, data, level, train_pairs, held_pairs, cfg, features);

    const std::string phase = std::string("finetune-") + models::to_string(level);
    std::size_t in_band_epochs = 0;
    for (std::size_t epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
      const auto start = Clock::now();
      double d_loss = 0.0, g_loss = 0.0, correct = 0.0;
      std::size_t steps = 0, samples = 0;
      for (const auto& b : data::level_batches(data, level, train_pairs, cfg.batch_size, cfg.seed, epoch, modality,
                                               features)) {
        Tape stape = Tape::inference();
        const Tensor rs = level_reps(stape, model.source, b, DomainKind::source);
        Tape tape;
        const Tensor rt = level_reps(tape, *model.target, b, DomainKind::target);
        const auto s = adversarial_step(tape, rs, rt, d, d_opt, gen_params, gen_opt, cfg.non_saturating);
        check_finite(s.d_loss, phase, epoch, "discriminator loss");
        check_finite(s.g_loss, phase, epoch, "generator loss");
        d_loss += s.d_loss;
        g_loss += s.g_loss;
        correct += s.correct;
        samples += s.samples;
        ++steps;
      }
      const double acc = correct / static_cast<double>(samples);
      result.report.rows.push_back(PhaseRow{phase, epoch, std::nullopt, d_loss / static_cast<double>(steps),
                                            g_loss / static_cast<double>(steps), acc, elapsed(cfg, start)});
      in_band_epochs = in_band(acc, cfg) ? in_band_epochs + 1 : 0;
      if (in_band_epochs >= cfg.adapt_patience) break;
    }
    outcome.probe_after = level_probe(model, data, level, train_pairs, held_pairs, cfg, features);
    result.levels.push_back(outcome);
  }
  optim::unfreeze(frozen);
  return result;
}

std::vector<double> infer(const models::DanModel& model, const models::ModelInput& input) {
  return models::predict(model.target ? *model.target : model.source, model.head, input);
}

}  // namespace recdan::training
