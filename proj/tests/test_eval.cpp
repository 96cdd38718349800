#include <gtest/gtest.h>

#include <cmath>

#include "recdan/errors.hpp"
#include "recdan/eval.hpp"
#include "recdan/optim.hpp"
#include "recdan/synth.hpp"
#include "recdan/training.hpp"
#include "test_util.hpp"

using namespace recdan;
using namespace recdan::eval;

namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

struct SmallPair {
  data::DomainPairDataset pair;
  data::LabelTable labels;
  models::DanModel model;
};

SmallPair small_pair() {
  data::SynthConfig sc;
  sc.interactions = 400;
  sc.users = 40;
  sc.items = 30;
  const auto s = data::synthesize_domain_pair(sc, 3);
  data::AssembleOptions opt;
  opt.max_tokens = 20;
  auto pair = data::assemble_pair(s.source, s.target, opt);
  data::LabelTable labels;
  for (const auto& r : s.target_labels) labels[{r.user_id, r.item_id}] = *r.rating;
  models::ModelConfig mc;
  mc.vocab_size = pair.vocab.size();
  mc.embed_dim = 4;
  mc.hidden_dim = 6;
  mc.interaction_dim = 8;
  mc.discriminator_hidden = 8;
  return {std::move(pair), std::move(labels), models::DanModel::init(mc, 4)};
}

}  // namespace

TEST(RmseMae, ClosedForms) {
  const std::vector<double> a{1, 2}, b{1, 4};
  EXPECT_EQ(rmse_mae(a, a).rmse, 0.0);
  EXPECT_EQ(rmse_mae(a, a).mae, 0.0);
  const auto e = rmse_mae(a, b);
  EXPECT_DOUBLE_EQ(e.rmse, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(e.mae, 1.0);
}

TEST(RmseMae, MatchesBruteForce) {
  const auto p = test::values(test::random_tensor({1000}, 1, 1.0, false));
  const auto t = test::values(test::random_tensor({1000}, 2, 1.0, false));
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    se += (p[i] - t[i]) * (p[i] - t[i]);
    ae += std::abs(p[i] - t[i]);
  }
  const auto e = rmse_mae(p, t);
  EXPECT_NEAR(e.rmse, std::sqrt(se / 1000.0), 1e-12);
  EXPECT_NEAR(e.mae, ae / 1000.0, 1e-12);
}

TEST(RmseMae, EmptyOrMismatchedRejected) {
  const std::vector<double> none, one{1.0}, two{1.0, 2.0};
  EXPECT_THROW(rmse_mae(none, none), ArgumentError);
  EXPECT_THROW(rmse_mae(one, two), DimensionError);
}

TEST(DeltaMetric, PublishedRows) {
  EXPECT_DOUBLE_EQ(round2(delta_metric(0.914, 0.868)), 5.16);
  EXPECT_DOUBLE_EQ(round2(delta_metric(0.779, 0.805)), 3.28);
  EXPECT_EQ(delta_metric(0.9, 0.9), 0.0);
  EXPECT_THROW(delta_metric(0.0, 1.0), ArgumentError);
  EXPECT_THROW(delta_metric(1.0, -1.0), ArgumentError);
}

TEST(NormalBaseline, DegenerateAndDeterministic) {
  const std::vector<double> fours(10, 4.0);
  for (double v : normal_baseline(fours, 50, 1)) EXPECT_EQ(v, 4.0);
  const std::vector<double> train{1, 2, 3, 4, 5};
  EXPECT_EQ(normal_baseline(train, 100, 7), normal_baseline(train, 100, 7));
  EXPECT_NE(normal_baseline(train, 100, 7), normal_baseline(train, 100, 8));
  const std::vector<double> single{3.0};
  EXPECT_THROW(normal_baseline(single, 5, 1), ArgumentError);
}

TEST(NormalBaseline, MomentsMatchTrainingData) {
  const std::vector<double> train{1, 2, 3, 4, 5};  // mean 3, sample sd sqrt(2.5)
  const auto p = normal_baseline(train, 200000, 11);
  double m = 0.0, v = 0.0;
  for (double x : p) m += x;
  m /= static_cast<double>(p.size());
  for (double x : p) v += (x - m) * (x - m);
  v /= static_cast<double>(p.size() - 1);
  EXPECT_NEAR(m, 3.0, 0.02);
  EXPECT_NEAR(std::sqrt(v), std::sqrt(2.5), 0.02);
}

TEST(Distances, ConstructedClouds) {
  // points within each cloud coincide; clouds are 10 apart
  const auto a = Tensor::matrix(3, 2, {0, 0, 0, 0, 0, 0});
  const auto b = Tensor::matrix(2, 2, {6, 8, 6, 8});
  EXPECT_DOUBLE_EQ(mean_cross_distance(a, b), 10.0);
  EXPECT_DOUBLE_EQ(mean_intra_distance(a), 0.0);
  const auto c = Tensor::matrix(2, 2, {0, 0, 3, 4});
  EXPECT_DOUBLE_EQ(mean_intra_distance(c), 5.0);
  EXPECT_DOUBLE_EQ(mean_cross_distance(c, c), 2.5);  // (0 + 5 + 5 + 0) / 4
}

TEST(Distances, IdenticalCloudsHaveEqualIntraAndCrossScale) {
  const auto a = test::random_tensor({400, 3}, 5, 1.0, false);
  const auto b = test::random_tensor({400, 3}, 6, 1.0, false);
  EXPECT_NEAR(mean_cross_distance(a, b) / mean_intra_distance(a), 1.0, 0.05);
}

TEST(DiscriminatorAccuracy, TieCountsAsTarget) {
  models::ModelConfig mc;
  mc.interaction_dim = 4;
  mc.discriminator_hidden = 3;
  Rng rng(1);
  auto d = models::Discriminator::init(models::Level::interaction, mc, rng);
  for (const auto& p : d.parameters()) {
    auto t = p.tensor;
    for (auto& v : t.data()) v = 0.0;
  }
  const auto s = test::random_tensor({6, 4}, 7, 1.0, false), t = test::random_tensor({4, 4}, 8, 1.0, false);
  EXPECT_DOUBLE_EQ(discriminator_accuracy(d, s, t), 0.4);
  const auto stats = alignment_stats(s, t, d);
  EXPECT_DOUBLE_EQ(stats.d_acc, 0.4);
  EXPECT_GT(stats.d_cross, 0.0);
}

TEST(Json, Keys) {
  EvalResult r{1.5, 1.25, 10, "UI-DAN", 3};
  EXPECT_EQ(r.to_json().dump(), R"({"rmse":1.5,"mae":1.25,"n":10,"variant":"UI-DAN","seed":3})");
  AlignmentStats a{1, 2, 3, 0.5};
  EXPECT_EQ(a.to_json().dump(), R"({"d_intra_s":1.0,"d_intra_t":2.0,"d_cross":3.0,"d_acc":0.5})");
}

TEST(EvalPaths, SourceOnlyOnSourceEqualsOrdinaryEval) {
  auto sp = small_pair();
  const auto a = evaluate(sp.model.source, sp.model.head, sp.pair, models::DomainKind::source, data::Split::test,
                          nullptr, nullptr, "x", 0);
  const auto preds = predict_split(sp.model.source, sp.model.head, sp.pair, models::DomainKind::source,
                                   data::Split::test);
  const auto truth = split_truth(sp.pair, models::DomainKind::source, data::Split::test);
  EXPECT_EQ(a.rmse, rmse_mae(preds, truth).rmse);
  EXPECT_EQ(a.n, sp.pair.source.test.size());
}

TEST(EvalPaths, InferWithCopiedTargetMatchesSourceOnlyBitwise) {
  auto sp = small_pair();
  const auto before = source_only_eval(sp.model, sp.pair, data::Split::test, &sp.labels, nullptr, 0);
  Rng rng(1);
  sp.model.target = models::GeneratorSet::init(sp.model.config, models::DomainKind::target, rng);
  optim::copy_parameters(sp.model.source, *sp.model.target);
  const auto adapted = adapted_eval(sp.model, sp.pair, data::Split::test, &sp.labels, nullptr, "UI-DAN", 0);
  EXPECT_EQ(before.rmse, adapted.rmse);
  EXPECT_EQ(before.mae, adapted.mae);
  const auto batch = data::make_batch(sp.pair, models::DomainKind::target, sp.pair.target.test,
                                      models::Modality::text);
  EXPECT_EQ(training::infer(sp.model, batch.input),
            models::predict(sp.model.source, sp.model.head, batch.input));
}

TEST(EvalPaths, TargetNeedsLabels) {
  auto sp = small_pair();
  EXPECT_THROW(split_truth(sp.pair, models::DomainKind::target, data::Split::test), DataError);
  data::LabelTable partial;
  EXPECT_THROW(split_truth(sp.pair, models::DomainKind::target, data::Split::test, &partial), DataError);
  EXPECT_EQ(split_truth(sp.pair, models::DomainKind::target, data::Split::test, &sp.labels).size(),
            sp.pair.target.test.size());
}

TEST(EvalPaths, RepresentationsFollowSplitOrder) {
  auto sp = small_pair();
  const auto reps = collect_representations(sp.model.source, sp.pair, models::DomainKind::source,
                                            data::Split::valid, models::Level::user);
  EXPECT_EQ(reps.rows(), sp.pair.source.valid.size());
  EXPECT_EQ(reps.cols(), 6u);
}
