#include "recdan/gradient_suite.hpp"

#include "recdan/layers.hpp"
#include "recdan/models.hpp"
#include "recdan/ops.hpp"
#include "recdan/random.hpp"
#include "recdan/training.hpp"

namespace recdan {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), 0.0, true);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces any output to a scalar with fixed random weights so every output
// entry contributes a distinct gradient.
Tensor weighted_sum(Tape& tape, const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(y.shape());
  for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
  return ops::sum(tape, ops::mul_constant(tape, y, w));
}

std::vector<NamedTensor> named(const std::vector<NamedTensor>& ps) { return ps; }

models::ModelConfig tiny_config(models::Modality modality) {
  models::ModelConfig c;
  c.vocab_size = 9;
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.interaction_dim = 5;
  c.discriminator_hidden = 6;
  c.dropout = 0.5;
  c.modality = modality;
  c.feature_dim = 3;
  c.visual_hidden = 4;
  return c;
}

models::ModelInput tiny_input(models::Modality modality, Rng& rng) {
  models::ModelInput in;
  in.users = layers::TokenBatch::from_sequences({{2, 3, 4}, {5, 1}, {6, 7, 8, 2}});
  in.user_rows = {0, 1, 2, 1};
  if (modality == models::Modality::text) {
    in.items.tokens = layers::TokenBatch::from_sequences({{3, 3}, {8, 2, 6, 5, 4}});
  } else {
    Tensor f(Shape{2, 3});
    for (auto& v : f.data()) v = rng.uniform(-1.0, 1.0);
    in.items.features = f;
  }
  in.item_rows = {1, 0, 0, 1};
  return in;
}

}  // namespace

std::vector<SuiteCheck> run_gradient_suite(std::uint64_t seed, double eps, double tol) {
  std::vector<SuiteCheck> out;
  Rng rng(derive_seed(seed, 900));
  auto check = [&](const std::string& name, const ScalarFunction& f, std::vector<NamedTensor> inputs) {
    out.push_back({name, grad_check(f, std::move(inputs), eps, tol)});
  };

  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    check("matmul", [=](Tape& t) { return weighted_sum(t, ops::matmul(t, a, b), 1); }, {{"a", a}, {"b", b}});
  }
  {
    const std::pair<const char*, ops::Unary> unary[] = {{"sigmoid", ops::Unary::sigmoid},
                                                        {"tanh", ops::Unary::tanh},
                                                        {"relu", ops::Unary::relu},
                                                        {"square", ops::Unary::square}};
    for (auto [name, op] : unary) {
      Tensor x = random_tensor({2, 5}, rng);
      // keep relu inputs away from the kink
      for (auto& v : x.data()) v += v >= 0 ? 0.1 : -0.1;
      check(name, [=](Tape& t) { return weighted_sum(t, ops::elementwise(t, op, x), 2); }, {{"x", x}});
    }
    Tensor x = random_tensor({2, 5}, rng, 0.2, 2.0);
    check("log", [=](Tape& t) { return weighted_sum(t, ops::log(t, x), 3); }, {{"x", x}});
    Tensor y = random_tensor({2, 5}, rng, 0.0, 1.0);
    for (std::size_t i = 0; i < 3; ++i) y[i] = 0.3 + 0.1 * static_cast<double>(i);
    check("log_clamped", [=](Tape& t) { return weighted_sum(t, ops::log_clamped(t, y, 1e-7), 4); }, {{"x", y}});
  }
  {
    const std::pair<const char*, ops::Binary> binary[] = {
        {"add", ops::Binary::add}, {"sub", ops::Binary::sub}, {"mul", ops::Binary::mul}};
    for (auto [name, op] : binary) {
      Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 2}, rng);
      check(name, [=](Tape& t) { return weighted_sum(t, ops::elementwise(t, op, a, b), 5); }, {{"a", a}, {"b", b}});
    }
  }
  {
    Tensor x = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
    check("add_bias", [=](Tape& t) { return weighted_sum(t, ops::add_bias(t, x, b), 6); }, {{"x", x}, {"bias", b}});
    const std::vector<double> w{0.5, -1.0, 2.0};
    check("scale_rows", [=](Tape& t) { return weighted_sum(t, ops::scale_rows(t, x, w), 7); }, {{"x", x}});
    check("softmax", [=](Tape& t) { return weighted_sum(t, ops::softmax(t, x), 8); }, {{"x", x}});
    Tensor y = random_tensor({3, 2}, rng);
    check("concat_cols", [=](Tape& t) { return weighted_sum(t, ops::concat_cols(t, x, y), 9); }, {{"a", x}, {"b", y}});
    check("column", [=](Tape& t) { return weighted_sum(t, ops::column(t, x, 2), 10); }, {{"x", x}});
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    check("gather_rows", [=](Tape& t) { return weighted_sum(t, ops::gather_rows(t, x, idx), 11); }, {{"table", x}});
    Tensor p = random_tensor({5}, rng), q = random_tensor({5}, rng);
    check("mean_squared_error", [=](Tape& t) { return ops::mean_squared_error(t, p, q); }, {{"pred", p}, {"truth", q}});
  }
  {
    auto cell = layers::LstmCell::init(3, 4, rng);
    Tensor x = random_tensor({2, 3}, rng), h = random_tensor({2, 4}, rng), c = random_tensor({2, 4}, rng);
    std::vector<NamedTensor> inputs;
    cell.collect("lstm.", inputs);
    inputs.push_back({"x", x});
    inputs.push_back({"h", h});
    inputs.push_back({"c", c});
    check("lstm_step", [=](Tape& t) {
      auto s = layers::lstm_step(t, cell, x, layers::LstmState{h, c});
      return ops::add(t, weighted_sum(t, s.h, 12), weighted_sum(t, s.c, 13));
    }, inputs);
  }
  {
    auto emb = layers::EmbeddingTable::init(7, 3, rng);
    auto cell = layers::LstmCell::init(3, 4, rng);
    const auto tokens = layers::TokenBatch::from_sequences({{2, 3, 4, 5}, {6, 1}, {3}});
    std::vector<NamedTensor> inputs;
    emb.collect("", inputs);
    cell.collect("lstm.", inputs);
    check("encode_sequence", [=](Tape& t) { return weighted_sum(t, layers::encode_sequence(t, emb, cell, tokens), 14); },
          inputs);
  }
  for (auto act : {layers::Activation::none, layers::Activation::relu, layers::Activation::tanh}) {
    auto layer = layers::DenseLayer::init(4, 3, act, rng);
    for (auto& v : layer.b.data()) v = rng.uniform(-0.5, 0.5);
    Tensor x = random_tensor({3, 4}, rng);
    std::vector<NamedTensor> inputs;
    layer.collect("", inputs);
    inputs.push_back({"x", x});
    const char* name = act == layers::Activation::none ? "dense" : act == layers::Activation::relu ? "dense_relu"
                                                                                                  : "dense_tanh";
    check(name, [=](Tape& t) { return weighted_sum(t, layers::dense_forward(t, layer, x), 15); }, inputs);
  }
  {
    Tensor x = random_tensor({4, 5}, rng);
    const std::uint64_t mask_seed = rng.next();
    check("dropout", [=](Tape& t) {
      Rng mask(mask_seed);  // same mask on every evaluation
      return weighted_sum(t, layers::dropout(t, x, layers::DropoutSpec{0.5, layers::Mode::train}, mask), 16);
    }, {{"x", x}});
  }
  for (auto modality : {models::Modality::text, models::Modality::visual}) {
    const auto cfg = tiny_config(modality);
    auto g = models::GeneratorSet::init(cfg, models::DomainKind::source, rng);
    auto head = models::ScoringHead::init(cfg, rng);
    const auto input = tiny_input(modality, rng);
    auto inputs = named(g.parameters());
    for (const auto& p : head.parameters()) inputs.push_back({"head." + p.name, p.tensor});
    const std::uint64_t mask_seed = rng.next();
    check(std::string("model_") + models::to_string(modality), [=](Tape& t) {
      Rng mask(mask_seed);
      auto r = models::represent(t, g, input, layers::Mode::train, mask);
      return weighted_sum(t, models::predict_rating(t, head, r.interaction), 17);
    }, inputs);
  }
  {
    auto cfg = tiny_config(models::Modality::text);
    cfg.interaction_dim = 8;
    auto d = models::Discriminator::init(models::Level::interaction, cfg, rng);
    Tensor s = random_tensor({4, 8}, rng), tg = random_tensor({3, 8}, rng);
    auto inputs = named(d.parameters());
    inputs.push_back({"source_reps", s});
    inputs.push_back({"target_reps", tg});
    check("discriminator_loss", [=](Tape& t) { return training::adversarial_loss_discriminator(t, d, s, tg); },
          inputs);
    check("generator_loss", [=](Tape& t) { return training::adversarial_loss_generator(t, d, tg, false); }, inputs);
    check("generator_loss_non_saturating",
          [=](Tape& t) { return training::adversarial_loss_generator(t, d, tg, true); }, inputs);
  }
  return out;
}

}  // namespace recdan
