// recdan: command-line front end for data preparation, the three training
// phases, evaluation and prediction.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "recdan/checkpoint.hpp"
#include "recdan/config.hpp"
#include "recdan/data.hpp"
#include "recdan/dataset_dir.hpp"
#include "recdan/errors.hpp"
#include "recdan/eval.hpp"
#include "recdan/gradient_suite.hpp"
#include "recdan/synth.hpp"
#include "recdan/training.hpp"

namespace fs = std::filesystem;
using namespace recdan;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kFailed = 1, kData = 2, kConfig = 3, kTraining = 4 };

struct Globals {
  std::string preset = "full";
  std::optional<std::string> config_path;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string schema = "canonical";
  std::optional<std::string> variant;
  std::optional<std::string> modality;
};

RunConfig build_config(const Globals& g) {
  RunConfig c;
  if (g.preset == "desk") {
    c = desk_config();
  } else if (g.preset != "full") {
    throw ConfigError("unknown preset '" + g.preset + "' (expected full or desk)");
  }
  if (g.config_path) {
    if (!fs::exists(*g.config_path)) throw ConfigError("config file '" + *g.config_path + "' does not exist");
    load_config_file(c, *g.config_path);
  }
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (g.seed) apply_setting(c, "seed", std::to_string(*g.seed));
  if (g.variant) c.train.variant = models::parse_variant(*g.variant);
  if (g.modality) c.model.modality = models::parse_modality(*g.modality);
  c.train.validate();
  return c;
}

fs::path require_out(const Globals& g) {
  if (!g.out) throw ConfigError("--out DIR is required for this command");
  return *g.out;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw DataError("file not found: '" + path + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  io::write_file_atomic(path, text);
}

std::string report_csv(const training::PhaseReport& r) {
  std::ostringstream out;
  r.write_csv(out);
  return out.str();
}

struct Prepared {
  io::PreparedData raw;
  data::DomainPairDataset pair;
  const data::FeatureTable* features() const { return raw.features ? &*raw.features : nullptr; }
};

Prepared load_data(const std::string& dir) {
  if (!fs::exists(dir)) throw DataError("data directory not found: '" + dir + "'");
  Prepared p{io::load_prepared(dir), {}};
  p.pair = io::assemble(p.raw);
  return p;
}

/// Fills the data-dependent model fields and rejects modality/data mismatches.
models::ModelConfig model_for(const RunConfig& c, const Prepared& p) {
  models::ModelConfig m = c.model;
  m.vocab_size = p.pair.vocab.size();
  if (m.modality == models::Modality::visual) {
    if (!p.raw.features) throw ConfigError("the visual modality needs features.jsonl in the data directory");
    m.feature_dim = p.raw.features->dim;
  }
  return m;
}

io::Checkpoint load_phase(const std::string& from, const std::string& expected, const std::string& command,
                          const std::string& remedy) {
  if (!fs::exists(fs::path(from) / "manifest.json")) {
    throw ConfigError(command + " needs a checkpoint from the '" + expected + "' phase but '" + from +
                      "' holds none; " + remedy);
  }
  io::Checkpoint ckpt = io::load_checkpoint(from);
  if (ckpt.phase != expected) {
    throw ConfigError(command + " needs a checkpoint from the '" + expected + "' phase, got '" + ckpt.phase +
                      "'; " + remedy);
  }
  return ckpt;
}

void check_same_vocab(const io::Checkpoint& ckpt, const Prepared& p) {
  if (ckpt.vocab.tokens() != p.pair.vocab.tokens()) {
    throw ConfigError("checkpoint vocabulary does not match the data directory; use the data it was trained on");
  }
}

void save_phase(const fs::path& out, io::Checkpoint& ckpt, const training::PhaseReport& report) {
  io::save_checkpoint(out, ckpt);
  io::write_file_atomic(out / "report.csv", report_csv(report));
}

int print_json(const ordered_json& j) {
  std::cout << j.dump() << '\n';
  return kOk;
}

// ---- data preparation ----

int cmd_ingest(const Globals& g, const std::string& input, bool unlabeled) {
  require_file(input);
  const auto result = data::ingest_reviews(input, data::parse_schema(g.schema), !unlabeled);
  const fs::path out = require_out(g);
  std::ostringstream text;
  data::write_reviews(text, result.records);
  fs::create_directories(out);
  io::write_file_atomic(out / "reviews.jsonl", text.str());
  ordered_json stats{{"users", result.stats.users}, {"items", result.stats.items}, {"samples", result.stats.samples}};
  io::write_file_atomic(out / "stats.json", stats.dump(2) + "\n");
  return print_json(stats);
}

int cmd_vocab(const Globals& g, const std::vector<std::string>& inputs) {
  const RunConfig c = build_config(g);
  std::vector<std::string> texts;
  for (const auto& path : inputs) {
    require_file(path);
    for (auto& r : data::ingest_reviews(path, data::parse_schema(g.schema), false).records) {
      texts.push_back(std::move(r.review_text));
    }
  }
  const auto vocab = data::Vocabulary::build(texts, c.assemble.min_count);
  std::string listing;
  for (const auto& t : vocab.tokens()) listing += t + "\n";
  if (g.out) {
    write_text(*g.out, listing);
  } else {
    std::cout << listing;
  }
  std::cerr << ordered_json{{"vocab_size", vocab.size()}, {"min_count", vocab.min_count()}}.dump() << '\n';
  return kOk;
}

ordered_json pair_summary(const data::DomainPairDataset& p) {
  return {{"vocab_size", p.vocab.size()},
          {"source_samples", p.source.records.size()},
          {"target_samples", p.target.records.size()},
          {"shared_users", p.shared_users.size()},
          {"shared_items", p.shared_items.size()}};
}

int cmd_pair(const Globals& g, const std::string& source, const std::string& target,
             const std::optional<std::string>& features, const std::optional<std::string>& labels) {
  const RunConfig c = build_config(g);
  const fs::path out = require_out(g);
  const auto schema = data::parse_schema(g.schema);
  require_file(source);
  require_file(target);
  io::PreparedData prep;
  prep.options = c.assemble;
  prep.source = data::ingest_reviews(source, schema).records;
  prep.target = data::ingest_reviews(target, schema, false).records;
  // Target ratings never reach training; they are moved to the sealed labels.
  std::vector<data::ReviewRecord> with_ratings;
  for (auto& r : prep.target) {
    if (r.rating) with_ratings.push_back(r);
    r.rating.reset();
  }
  if (labels) {
    require_file(*labels);
    prep.labels = data::read_labels(*labels);
  } else if (!with_ratings.empty()) {
    prep.labels = data::LabelTable{};
    for (const auto& r : with_ratings) (*prep.labels)[{r.user_id, r.item_id}] = *r.rating;
  }
  if (features) {
    require_file(*features);
    prep.features = data::feature_ingest(*features);
  }
  return print_json(pair_summary(io::save_prepared(out, prep)));
}

int cmd_synth(const Globals& g) {
  const RunConfig c = build_config(g);
  const fs::path out = require_out(g);
  const auto s = data::synthesize_domain_pair(c.synth, c.train.seed);
  io::PreparedData prep;
  prep.options = c.assemble;
  prep.source = s.source;
  prep.target = s.target;
  prep.features = s.features;
  prep.labels = data::LabelTable{};
  for (const auto& r : s.target_labels) (*prep.labels)[{r.user_id, r.item_id}] = *r.rating;
  return print_json(pair_summary(io::save_prepared(out, prep)));
}

// ---- training phases ----

int cmd_train_source(const Globals& g, const std::string& data_dir) {
  const RunConfig c = build_config(g);
  const fs::path out = require_out(g);
  const Prepared p = load_data(data_dir);
  io::Checkpoint ckpt{models::DanModel::init(model_for(c, p), c.train.seed), p.pair.vocab, "source",
                      c.train.variant, c.train.seed, p.raw.options.max_tokens};
  const auto report = training::pretrain_source(ckpt.model, p.pair, c.train, p.features());
  save_phase(out, ckpt, report);
  const auto test = eval::evaluate(ckpt.model.source, ckpt.model.head, p.pair, models::DomainKind::source,
                                   data::Split::test, nullptr, p.features(),
                                   models::variant_label(c.train.variant), c.train.seed);
  return print_json({{"phase", "source"}, {"epochs", report.rows.size()}, {"source_test", test.to_json()}});
}

int cmd_adapt(const Globals& g, const std::string& data_dir, const std::string& from) {
  RunConfig c = build_config(g);
  const fs::path out = require_out(g);
  io::Checkpoint ckpt = load_phase(from, "source", "adapt", "run train-source first");
  const Prepared p = load_data(data_dir);
  check_same_vocab(ckpt, p);
  if (!g.variant) c.train.variant = ckpt.variant;
  ckpt.variant = c.train.variant;
  const auto r = training::adapt_target(ckpt.model, p.pair, c.train, p.features());
  ckpt.phase = "adapt";
  save_phase(out, ckpt, r.report);

  ordered_json align;
  align["initial"] = r.initial.to_json();
  align["final"] = r.final.to_json();
  align["initial_probe"] = r.initial_probe;
  align["final_probe"] = r.final_probe;
  align["epochs"] = r.epochs;
  align["converged"] = r.converged;
  ordered_json per_epoch = ordered_json::array();
  for (const auto& s : r.per_epoch) per_epoch.push_back(s.to_json());
  align["per_epoch"] = std::move(per_epoch);
  io::write_file_atomic(out / "alignment.json", align.dump(2) + "\n");
  align.erase("per_epoch");
  align["phase"] = "adapt";
  return print_json(align);
}

int cmd_finetune(const Globals& g, const std::string& data_dir, const std::string& from) {
  RunConfig c = build_config(g);
  const fs::path out = require_out(g);
  io::Checkpoint ckpt = load_phase(from, "adapt", "finetune", "run adapt on a source checkpoint first");
  const Prepared p = load_data(data_dir);
  check_same_vocab(ckpt, p);
  if (!g.variant) c.train.variant = ckpt.variant;
  ckpt.variant = c.train.variant;
  const auto r = training::finetune_shared(ckpt.model, p.pair, c.train, p.features());
  ckpt.phase = "finetune";
  save_phase(out, ckpt, r.report);
  ordered_json levels = ordered_json::array();
  for (const auto& l : r.levels) {
    levels.push_back({{"level", models::to_string(l.level)},
                      {"pairs", l.pairs},
                      {"probe_before", l.probe_before},
                      {"probe_after", l.probe_after}});
  }
  return print_json({{"phase", "finetune"}, {"variant", models::variant_label(c.train.variant)}, {"levels", levels}});
}

// ---- evaluation ----

int cmd_eval(const Globals& g, const std::string& data_dir, const std::string& from, const std::string& split_name,
             const std::string& domain, bool source_only, const std::optional<std::string>& labels_path) {
  const RunConfig c = build_config(g);
  if (!fs::exists(fs::path(from) / "manifest.json")) {
    throw ConfigError("eval needs a trained checkpoint but '" + from + "' holds none; run train-source first");
  }
  const io::Checkpoint ckpt = io::load_checkpoint(from);
  const Prepared p = load_data(data_dir);
  check_same_vocab(ckpt, p);
  const auto split = data::parse_split(split_name);
  const std::string variant = models::variant_label(ckpt.variant);
  const std::uint64_t seed = g.seed ? c.train.seed : ckpt.seed;

  if (domain == "source") {
    return print_json(eval::evaluate(ckpt.model.source, ckpt.model.head, p.pair, models::DomainKind::source, split,
                                     nullptr, p.features(), variant, seed)
                          .to_json());
  }
  if (domain != "target") throw ConfigError("--domain must be source or target, got '" + domain + "'");
  std::optional<data::LabelTable> labels;
  if (labels_path) {
    require_file(*labels_path);
    labels = data::read_labels(*labels_path);
  } else {
    labels = p.raw.labels;
  }
  if (!labels) throw DataError("target evaluation needs sealed labels: pass --labels or prepare them with the data");
  const auto result = source_only ? eval::source_only_eval(ckpt.model, p.pair, split, &*labels, p.features(), seed)
                                  : eval::adapted_eval(ckpt.model, p.pair, split, &*labels, p.features(), variant,
                                                       seed);
  return print_json(result.to_json());
}

std::vector<double> parse_features(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw DataError("item features must be comma-separated numbers, got '" + part + "'");
    }
  }
  return out;
}

std::vector<std::size_t> encode_truncated(const data::Vocabulary& vocab, const std::string& text, std::size_t max) {
  auto ids = vocab.encode(text);
  if (ids.size() > max) ids.resize(max);
  if (ids.empty()) ids.push_back(data::Vocabulary::kUnk);
  return ids;
}

int cmd_predict(const std::string& from, const std::string& user_text, const std::optional<std::string>& item_text,
                const std::optional<std::string>& item_features) {
  if (!fs::exists(fs::path(from) / "manifest.json")) {
    throw ConfigError("predict needs a trained checkpoint but '" + from + "' holds none; run train-source first");
  }
  const io::Checkpoint ckpt = io::load_checkpoint(from);
  const auto& config = ckpt.model.config;
  models::ModelInput input;
  input.users = layers::TokenBatch::from_sequences({encode_truncated(ckpt.vocab, user_text, ckpt.max_tokens)});
  input.user_rows = {0};
  input.item_rows = {0};
  if (config.modality == models::Modality::text) {
    if (!item_text) throw ConfigError("this checkpoint uses the text modality; pass --item-text");
    input.items.tokens =
        layers::TokenBatch::from_sequences({encode_truncated(ckpt.vocab, *item_text, ckpt.max_tokens)});
  } else {
    if (!item_features) throw ConfigError("this checkpoint uses the visual modality; pass --item-features");
    const auto f = parse_features(*item_features);
    if (f.size() != config.feature_dim) {
      throw DataError("expected " + std::to_string(config.feature_dim) + " item features, got " +
                      std::to_string(f.size()));
    }
    input.items.features = Tensor::matrix(1, f.size(), f);
  }
  const double rating = training::infer(ckpt.model, input).at(0);
  std::printf("%.6g\n", rating);
  return kOk;
}

int cmd_gradcheck(const Globals& g) {
  const auto checks = run_gradient_suite(g.seed.value_or(0));
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.report.passed;
    std::printf("%-32s %-4s max_rel_error=%.3e\n", c.name.c_str(), c.report.passed ? "ok" : "FAIL",
                c.report.max_rel_error());
  }
  std::printf("%zu checks, %s\n", checks.size(), ok ? "all passed" : "FAILURES");
  return ok ? kOk : kFailed;
}

int report_error(const char* kind, const std::string& message, int code) {
  std::cerr << ordered_json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial domain adaptation for cross-domain rating prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--preset", g.preset, "Built-in defaults: full or desk (small, fast)")
      ->capture_default_str();
  app.add_option("--config", g.config_path, "key = value settings file");
  app.add_option("--set", g.settings, "Override one setting, key=value (repeatable)");
  app.add_option("--seed", g.seed, "Seed for splits, initialisation and batching");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--schema", g.schema, "Input schema: canonical or amazon")->capture_default_str();
  app.add_option("--variant", g.variant, "ui, u, i or h");
  app.add_option("--modality", g.modality, "text or visual");

  std::string input, source, target, data_dir, from, user_text, split = "test", domain = "target";
  std::vector<std::string> inputs;
  std::optional<std::string> features, labels, item_text, item_features;
  bool unlabeled = false, source_only = false;

  auto* ingest = app.add_subcommand("ingest", "Normalise a JSON Lines review file");
  ingest->add_option("input", input, "Review file")->required();
  ingest->add_flag("--unlabeled", unlabeled, "Ratings are optional");

  auto* vocab = app.add_subcommand("vocab", "Build a vocabulary from review files");
  vocab->add_option("inputs", inputs, "Review files")->required();

  auto* pair = app.add_subcommand("pair", "Split and encode a source/target pair");
  pair->add_option("--source", source, "Labeled source reviews")->required();
  pair->add_option("--target", target, "Target reviews (ratings become sealed labels)")->required();
  pair->add_option("--features", features, "Item feature file");
  pair->add_option("--labels", labels, "Sealed target labels");

  auto* synth = app.add_subcommand("synth", "Write a synthetic domain pair with sealed labels");

  auto* train_source = app.add_subcommand("train-source", "Supervised training on the source domain");
  auto* adapt = app.add_subcommand("adapt", "Adversarial adaptation of the target generators");
  auto* finetune = app.add_subcommand("finetune", "Feature-level fine-tuning on shared users/items");
  auto* evalc = app.add_subcommand("eval", "Print RMSE/MAE as JSON");
  for (auto* sub : {train_source, adapt, finetune, evalc}) {
    sub->add_option("--data", data_dir, "Prepared data directory")->required();
  }
  for (auto* sub : {adapt, finetune, evalc}) sub->add_option("--from", from, "Checkpoint directory")->required();
  evalc->add_option("--split", split, "train, valid or test")->capture_default_str();
  evalc->add_option("--domain", domain, "source or target")->capture_default_str();
  evalc->add_flag("--source-only", source_only, "Score target data with the source generators");
  evalc->add_option("--labels", labels, "Sealed target labels (defaults to the data directory's)");

  auto* predict = app.add_subcommand("predict", "Predict one rating");
  predict->add_option("--from", from, "Checkpoint directory")->required();
  predict->add_option("--user-text", user_text, "Concatenated reviews of the user")->required();
  predict->add_option("--item-text", item_text, "Concatenated reviews of the item");
  predict->add_option("--item-features", item_features, "Comma-separated item features");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kConfig);
  }

  try {
    if (*ingest) return cmd_ingest(g, input, unlabeled);
    if (*vocab) return cmd_vocab(g, inputs);
    if (*pair) return cmd_pair(g, source, target, features, labels);
    if (*synth) return cmd_synth(g);
    if (*train_source) return cmd_train_source(g, data_dir);
    if (*adapt) return cmd_adapt(g, data_dir, from);
    if (*finetune) return cmd_finetune(g, data_dir, from);
    if (*evalc) return cmd_eval(g, data_dir, from, split, domain, source_only, labels);
    if (*predict) return cmd_predict(from, user_text, item_text, item_features);
    if (*gradcheck) return cmd_gradcheck(g);
  } catch (const DataError& e) {
    return report_error(e.kind(), e.what(), kData);
  } catch (const TrainingError& e) {
    return report_error(e.kind(), e.what(), kTraining);
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), kConfig);
  } catch (const fs::filesystem_error& e) {
    return report_error("data", e.what(), kData);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kFailed);
  }
  return kFailed;
}
