// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "recdan/checkpoint.hpp"
#include "recdan/config.hpp"
#include "recdan/eval.hpp"
#include "recdan/gradient_suite.hpp"
#include "recdan/layers.hpp"
#include "recdan/random.hpp"
#include "recdan/synth.hpp"
#include "recdan/text.hpp"
#include "recdan/training.hpp"

namespace fs = std::filesystem;
using namespace recdan;
using models::DanVariant;
using models::DomainKind;
using data::Split;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> bytes for every regular file below dir.
std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  }
  return out;
}

data::LabelTable sealed_labels(const data::SynthResult& syn) {
  data::LabelTable labels;
  for (const auto& r : syn.target_labels) labels[{r.user_id, r.item_id}] = *r.rating;
  return labels;
}

RunConfig seeded(RunConfig c, std::uint64_t seed, DanVariant variant) {
  c.train.seed = seed;
  c.assemble.seed = seed;
  c.train.variant = variant;
  return c;
}

// Synthetic pair through source training, adaptation and (for shared-object
// variants) fine-tuning.
struct Pipeline {
  data::SynthResult syn;
  data::DomainPairDataset data;
  data::LabelTable labels;
  models::DanModel model;
  training::PhaseReport report;
  training::AdaptResult adapt;
  training::FinetuneResult finetune;
  double source_only_rmse = 0.0;
  double adapted_rmse = 0.0;
  double finetuned_rmse = 0.0;
  std::string frozen_digest_before, frozen_digest_after;
  double seconds = 0.0;
};

std::string frozen_digest(const models::DanModel& m) {
  auto params = m.source.parameters();
  const auto head = m.head.parameters();
  params.insert(params.end(), head.begin(), head.end());
  return io::parameter_digest(params);
}

Pipeline run_pipeline(RunConfig c, std::uint64_t seed, const fs::path& ckpt_root = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  Pipeline p;
  p.syn = data::synthesize_domain_pair(c.synth, seed);
  p.labels = sealed_labels(p.syn);
  p.data = data::assemble_pair(p.syn.source, p.syn.target, c.assemble);
  c.model.vocab_size = p.data.vocab.size();
  p.model = models::DanModel::init(c.model, seed);
  const auto variant = models::variant_label(c.train.variant);

  auto save = [&](const std::string& phase) {
    if (ckpt_root.empty()) return;
    io::Checkpoint ck{p.model, p.data.vocab, phase, c.train.variant, seed, c.assemble.max_tokens};
    io::save_checkpoint(ckpt_root / phase, ck);
  };

  p.report = training::pretrain_source(p.model, p.data, c.train);
  save("source");
  p.frozen_digest_before = frozen_digest(p.model);
  p.source_only_rmse = eval::source_only_eval(p.model, p.data, Split::test, &p.labels, nullptr, seed).rmse;

  p.adapt = training::adapt_target(p.model, p.data, c.train);
  p.report.append(p.adapt.report);
  save("adapt");
  p.adapted_rmse = eval::adapted_eval(p.model, p.data, Split::test, &p.labels, nullptr, variant, seed).rmse;
  p.finetuned_rmse = p.adapted_rmse;

  if (c.train.variant != DanVariant::ui) {
    p.finetune = training::finetune_shared(p.model, p.data, c.train);
    p.report.append(p.finetune.report);
    save("finetune");
    p.finetuned_rmse = eval::adapted_eval(p.model, p.data, Split::test, &p.labels, nullptr, variant, seed).rmse;
  }
  p.frozen_digest_after = frozen_digest(p.model);
  p.seconds = seconds_since(t0);
  return p;
}

RunConfig shared_object_config() {
  RunConfig c = desk_config();
  c.synth.shared_user_fraction = 0.3;
  c.synth.shared_item_fraction = 0.3;
  return c;
}

// ---------------------------------------------------------------- criteria

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = run_gradient_suite(7, 1e-5, 1e-5);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& c : checks) {
    if (c.report.max_rel_error() > worst) {
      worst = c.report.max_rel_error();
      worst_name = c.name;
    }
    if (!c.report.passed) failed += " " + c.name;
  }
  const bool losses = std::count_if(checks.begin(), checks.end(), [](const SuiteCheck& c) {
                        return c.name == "discriminator_loss" || c.name == "generator_loss";
                      }) >= 2;
  Verdict v;
  v.pass = !checks.empty() && failed.empty() && worst < 1e-5 && secs < 60.0 && losses;
  v.detail = std::to_string(checks.size()) + " checks, max rel err " + fmt("%.2e", worst) + " (" + worst_name +
             "), " + fmt("%.1f s", secs);
  if (!failed.empty()) v.detail += ", failed:" + failed;
  if (!losses) v.detail += ", adversarial loss checks missing";
  return v;
}

Verdict delta_reproduction() {
  const auto round2 = [](double x) { return std::round(x * 100.0) / 100.0; };
  const double a = eval::delta_metric(0.914, 0.868);
  const double b = eval::delta_metric(0.779, 0.805);
  Verdict v;
  v.pass = round2(a) == 5.16 && round2(b) == 3.28;
  v.detail = fmt("%.4f%%", a) + " and " + fmt("%.4f%%", b);
  return v;
}

struct SeedRuns {
  std::vector<Pipeline> runs;
};

Verdict equilibrium(const SeedRuns& s) {
  Verdict v{true, ""};
  for (std::size_t i = 0; i < s.runs.size(); ++i) {
    const auto& a = s.runs[i].adapt;
    const bool ok = a.initial_probe > 0.8 && a.final.d_acc >= 0.4 && a.final.d_acc <= 0.6 &&
                    a.final_probe >= 0.4 && a.final_probe <= 0.6 && s.runs[i].seconds < 600.0;
    v.pass = v.pass && ok;
    v.detail += "seed " + std::to_string(i + 1) + ": start " + fmt("%.3f", a.initial_probe) + " end D " +
                fmt("%.3f", a.final.d_acc) + " end probe " + fmt("%.3f", a.final_probe) + " " +
                fmt("%.0f s", s.runs[i].seconds) + (i + 1 < s.runs.size() ? "; " : "");
  }
  return v;
}

Verdict adaptation_gain(const SeedRuns& s) {
  double so = 0.0, ad = 0.0;
  std::string per;
  for (const auto& r : s.runs) {
    so += r.source_only_rmse;
    ad += r.adapted_rmse;
    per += " " + fmt("%.4f", r.source_only_rmse) + "->" + fmt("%.4f", r.adapted_rmse);
  }
  so /= static_cast<double>(s.runs.size());
  ad /= static_cast<double>(s.runs.size());
  const double gain = (so - ad) / so;
  Verdict v;
  v.pass = gain >= 0.05;
  v.detail = "mean source-only " + fmt("%.4f", so) + ", adapted " + fmt("%.4f", ad) + ", gain " +
             fmt("%.1f%%", 100.0 * gain) + " [" + per.substr(1) + "]";
  return v;
}

Verdict alignment_monotone(const SeedRuns& s) {
  Verdict v{true, "cross distance"};
  for (const auto& r : s.runs) {
    v.pass = v.pass && r.adapt.final.d_cross < r.adapt.initial.d_cross;
    v.detail += " " + fmt("%.4f", r.adapt.initial.d_cross) + "->" + fmt("%.4f", r.adapt.final.d_cross);
  }
  return v;
}

Verdict freeze_contract(const Pipeline& h, const fs::path& ckpts) {
  bool files_equal = true;
  std::size_t compared = 0;
  const auto before = tree_bytes(ckpts / "source");
  const auto after = tree_bytes(ckpts / "finetune");
  for (const auto& [name, bytes] : before) {
    if (name.rfind("source.", 0) != 0 && name.rfind("head.", 0) != 0) continue;
    ++compared;
    const auto it = after.find(name);
    files_equal = files_equal && it != after.end() && it->second == bytes;
  }
  Verdict v;
  v.pass = h.frozen_digest_before == h.frozen_digest_after && files_equal && compared > 0;
  v.detail = "H-DAN digest " + h.frozen_digest_before.substr(0, 16) + " -> " + h.frozen_digest_after.substr(0, 16) +
             ", " + std::to_string(compared) + " tensor files " + (files_equal ? "identical" : "differ");
  return v;
}

Verdict normal_calibration() {
  constexpr std::size_t n = 100000;
  Rng rng(2024);
  std::vector<double> train(n), test(n);
  for (auto& x : train) x = rng.normal(3.0, 1.0);
  for (auto& x : test) x = rng.normal(3.0, 1.0);
  const auto pred = eval::normal_baseline(train, n, 99);
  const double rmse = eval::rmse_mae(pred, test).rmse;
  Verdict v;
  v.pass = rmse >= 1.394 && rmse <= 1.434;
  v.detail = "rmse " + fmt("%.4f", rmse) + " at n=100000";
  return v;
}

Verdict determinism(const fs::path& root) {
  RunConfig c = shared_object_config();
  c.train.source_epochs = 3;
  c.train.adapt_epochs = 3;
  c.train.finetune_epochs = 2;
  c.train.probe_epochs = 50;
  c = seeded(c, 11, DanVariant::h);
  std::string csv[2];
  for (int k = 0; k < 2; ++k) {
    const auto dir = root / ("run" + std::to_string(k));
    const auto p = run_pipeline(c, 11, dir);
    std::ostringstream out;
    p.report.write_csv(out);
    csv[k] = out.str();
  }
  const auto a = tree_bytes(root / "run0");
  const auto b = tree_bytes(root / "run1");
  Verdict v;
  v.pass = !csv[0].empty() && csv[0] == csv[1] && !a.empty() && a == b;
  v.detail = "csv " + std::string(csv[0] == csv[1] ? "identical" : "differs") + " (" +
             std::to_string(csv[0].size()) + " bytes), " + std::to_string(a.size()) + " checkpoint files " +
             (a == b ? "identical" : "differ");
  return v;
}

Verdict data_invariants() {
  const RunConfig c = seeded(desk_config(), 1, DanVariant::ui);
  const auto syn = data::synthesize_domain_pair(c.synth, 1);
  const auto d = data::assemble_pair(syn.source, syn.target, c.assemble);
  std::vector<std::string> problems;

  for (const auto* dom : {&d.source, &d.target}) {
    const std::size_t n = dom->records.size();
    std::set<std::size_t> seen;
    for (const auto* s : {&dom->train, &dom->valid, &dom->test}) seen.insert(s->begin(), s->end());
    const std::size_t total = dom->train.size() + dom->valid.size() + dom->test.size();
    if (seen.size() != total || total != n) problems.push_back("splits overlap or miss records");
    const auto want_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    const auto want_valid = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    if (dom->train.size() != want_train || dom->valid.size() != want_valid) problems.push_back("split sizes");
  }

  // Recount tokens of the training reviews of both domains.
  std::map<std::string, std::size_t> counts;
  for (const auto* dom : {&d.source, &d.target}) {
    for (std::size_t k : dom->train) {
      for (const auto& t : data::tokenize(dom->records[k].review_text)) ++counts[t];
    }
  }
  std::size_t kept = 0;
  for (const auto& [tok, n] : counts) {
    if (d.vocab.contains(tok) != (n >= 5)) problems.push_back("vocabulary disagrees on '" + tok + "'");
    kept += n >= 5;
  }
  if (d.vocab.size() != kept + 2) problems.push_back("vocabulary size");

  // Padding must not move a real review's encoding.
  auto cfg = c.model;
  cfg.vocab_size = d.vocab.size();
  const auto model = models::DanModel::init(cfg, 1);
  const auto text = d.source.user_text(d.source.records[d.source.train[0]].user_id);
  std::vector<std::size_t> longer = text;
  longer.insert(longer.end(), text.begin(), text.end());
  Tape tape;
  const auto alone = layers::encode_sequence(tape, model.source.user_embedding, model.source.user_lstm,
                                             layers::TokenBatch::from_sequences({text}));
  const auto padded = layers::encode_sequence(tape, model.source.user_embedding, model.source.user_lstm,
                                              layers::TokenBatch::from_sequences({text, longer}));
  for (std::size_t j = 0; j < alone.shape()[1]; ++j) {
    if (alone.at(0, j) != padded.at(0, j)) {
      problems.push_back("padding changes the encoding");
      break;
    }
  }

  // Leakage guard, with the train split as a positive control for the matcher.
  std::size_t leaks = 0, train_hits = 0;
  for (auto side : {DomainKind::source, DomainKind::target}) {
    leaks += data::leaked_reviews(d, side, Split::test).size();
    leaks += data::leaked_reviews(d, side, Split::valid).size();
    train_hits += data::leaked_reviews(d, side, Split::train).size();
  }
  if (leaks != 0) problems.push_back(std::to_string(leaks) + " held-out reviews leak into model text");
  if (train_hits == 0) problems.push_back("leak matcher never fires on training reviews");

  Verdict v;
  v.pass = problems.empty();
  v.detail = "vocab " + std::to_string(d.vocab.size()) + ", held-out leaks " + std::to_string(leaks) +
             ", control hits " + std::to_string(train_hits);
  for (const auto& p : problems) v.detail += "; " + p;
  return v;
}

Verdict variant_coverage(const std::map<DanVariant, Pipeline>& runs) {
  Verdict v{true, ""};
  for (const auto& [variant, p] : runs) {
    const double change = (p.finetuned_rmse - p.adapted_rmse) / p.adapted_rmse;
    bool ok = !p.finetune.levels.empty() && change < 0.05;
    std::string levels;
    for (const auto& l : p.finetune.levels) {
      ok = ok && std::abs(l.probe_after - 0.5) < std::abs(l.probe_before - 0.5);
      levels += " " + models::to_string(l.level) + " " + fmt("%.3f", l.probe_before) + "->" + fmt("%.3f", l.probe_after);
    }
    v.pass = v.pass && ok;
    if (!v.detail.empty()) v.detail += "; ";
    v.detail += models::variant_label(variant) + levels + ", rmse " + fmt("%+.2f%%", 100.0 * change);
  }
  return v;
}

}  // namespace

int main() {
  const auto root = fs::temp_directory_path() / ("recdan_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int id, const std::string& title, const std::function<Verdict()>& run) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("[%s] C%d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "delta metric", delta_reproduction);

  SeedRuns seeds;
  std::string seed_error;
  try {
    for (std::uint64_t s = 1; s <= 3; ++s) seeds.runs.push_back(run_pipeline(seeded(desk_config(), s, DanVariant::ui), s));
  } catch (const std::exception& e) {
    seed_error = e.what();
  }
  auto with_seeds = [&](Verdict (*f)(const SeedRuns&)) {
    return [&, f]() -> Verdict {
      if (!seed_error.empty()) return {false, "pipeline failed: " + seed_error};
      return f(seeds);
    };
  };
  report(3, "equilibrium", with_seeds(equilibrium));
  report(4, "adaptation beats source-only", with_seeds(adaptation_gain));
  report(5, "alignment monotonicity", with_seeds(alignment_monotone));

  std::map<DanVariant, Pipeline> variants;
  std::string variant_error;
  try {
    for (auto variant : {DanVariant::u, DanVariant::i, DanVariant::h}) {
      const auto dir = variant == DanVariant::h ? root / "freeze" : fs::path{};
      variants.emplace(variant, run_pipeline(seeded(shared_object_config(), 1, variant), 1, dir));
    }
  } catch (const std::exception& e) {
    variant_error = e.what();
  }
  report(6, "freeze contract", [&]() -> Verdict {
    if (!variants.count(DanVariant::h)) return {false, "pipeline failed: " + variant_error};
    return freeze_contract(variants.at(DanVariant::h), root / "freeze");
  });
  report(7, "normal baseline calibration", normal_calibration);
  report(8, "determinism", [&] { return determinism(root / "determinism"); });
  report(9, "data invariants", data_invariants);
  report(10, "variant coverage", [&]() -> Verdict {
    if (!variant_error.empty()) return {false, "pipeline failed: " + variant_error};
    return variant_coverage(variants);
  });

  std::error_code ec;
  fs::remove_all(root, ec);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
