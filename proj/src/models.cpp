#include "recdan/models.hpp"

#include <algorithm>

#include "recdan/errors.hpp"
#include "recdan/ops.hpp"

namespace recdan::models {

using layers::Activation;

std::string to_string(Modality m) { return m == Modality::text ? "text" : "visual"; }

std::string to_string(DanVariant v) {
  switch (v) {
    case DanVariant::ui: return "ui";
    case DanVariant::u: return "u";
    case DanVariant::i: return "i";
    case DanVariant::h: return "h";
  }
  return "ui";
}

std::string to_string(Level l) {
  switch (l) {
    case Level::interaction: return "interaction";
    case Level::user: return "user";
    case Level::item: return "item";
  }
  return "interaction";
}

std::string variant_label(DanVariant v) {
  switch (v) {
    case DanVariant::ui: return "UI-DAN";
    case DanVariant::u: return "U-DAN";
    case DanVariant::i: return "I-DAN";
    case DanVariant::h: return "H-DAN";
  }
  return "UI-DAN";
}

Modality parse_modality(const std::string& s) {
  if (s == "text") return Modality::text;
  if (s == "visual") return Modality::visual;
  throw ConfigError("unknown modality '" + s + "' (expected text|visual)");
}

DanVariant parse_variant(const std::string& s) {
  if (s == "ui" || s == "UI-DAN") return DanVariant::ui;
  if (s == "u" || s == "U-DAN") return DanVariant::u;
  if (s == "i" || s == "I-DAN") return DanVariant::i;
  if (s == "h" || s == "H-DAN") return DanVariant::h;
  throw ConfigError("unknown variant '" + s + "' (expected ui|u|i|h)");
}

std::vector<Level> active_discriminators(DanVariant v) {
  switch (v) {
    case DanVariant::ui: return {Level::interaction};
    case DanVariant::u: return {Level::interaction, Level::user};
    case DanVariant::i: return {Level::interaction, Level::item};
    case DanVariant::h: return {Level::interaction, Level::user, Level::item};
  }
  return {Level::interaction};
}

GeneratorSet GeneratorSet::init(const ModelConfig& config, DomainKind domain, Rng& rng) {
  if (config.vocab_size < 2) throw ConfigError("model needs a vocabulary with PAD and UNK");
  GeneratorSet g;
  g.domain = domain;
  g.config = config;
  g.user_embedding = layers::EmbeddingTable::init(config.vocab_size, config.embed_dim, rng);
  g.user_lstm = layers::LstmCell::init(config.embed_dim, config.hidden_dim, rng);
  if (config.modality == Modality::text) {
    g.item_embedding = config.share_embedding
                           ? g.user_embedding
                           : layers::EmbeddingTable::init(config.vocab_size, config.embed_dim, rng);
    g.item_lstm = layers::LstmCell::init(config.embed_dim, config.hidden_dim, rng);
  } else {
    if (config.feature_dim == 0) throw ConfigError("visual modality needs feature_dim > 0");
    std::size_t width = config.feature_dim;
    if (config.visual_hidden > 0) {
      g.visual_hidden = layers::DenseLayer::init(width, config.visual_hidden, Activation::relu, rng);
      width = config.visual_hidden;
    }
    g.visual_projection = layers::DenseLayer::init(width, config.hidden_dim, Activation::tanh, rng);
  }
  g.interaction =
      layers::DenseLayer::init(2 * config.hidden_dim, config.interaction_dim, Activation::relu, rng);
  return g;
}

std::vector<NamedTensor> GeneratorSet::user_parameters() const {
  std::vector<NamedTensor> out;
  user_embedding.collect("user.", out);
  user_lstm.collect("user.lstm.", out);
  return out;
}

std::vector<NamedTensor> GeneratorSet::item_parameters() const {
  std::vector<NamedTensor> out;
  if (config.modality == Modality::text) {
    if (config.share_embedding) {
      user_embedding.collect("user.", out);
    } else {
      item_embedding.collect("item.", out);
    }
    item_lstm.collect("item.lstm.", out);
  } else {
    if (visual_hidden) visual_hidden->collect("item.visual_hidden.", out);
    visual_projection->collect("item.visual_projection.", out);
  }
  return out;
}

std::vector<NamedTensor> GeneratorSet::interaction_parameters() const {
  std::vector<NamedTensor> out;
  interaction.collect("interaction.", out);
  return out;
}

std::vector<NamedTensor> GeneratorSet::parameters() const {
  std::vector<NamedTensor> out = user_parameters();
  for (auto& p : item_parameters()) {
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&](const NamedTensor& q) { return q.tensor.same_storage(p.tensor); });
    if (!seen) out.push_back(std::move(p));
  }
  for (auto& p : interaction_parameters()) out.push_back(std::move(p));
  return out;
}

Discriminator Discriminator::init(Level level, const ModelConfig& config, Rng& rng) {
  const std::size_t in = level == Level::interaction ? config.interaction_dim : config.hidden_dim;
  Discriminator d;
  d.level = level;
  d.hidden = layers::DenseLayer::init(in, config.discriminator_hidden, Activation::relu, rng);
  d.output = layers::DenseLayer::init(config.discriminator_hidden, 2, Activation::none, rng);
  return d;
}

std::vector<NamedTensor> Discriminator::parameters() const {
  std::vector<NamedTensor> out;
  hidden.collect("hidden.", out);
  output.collect("output.", out);
  return out;
}

ScoringHead ScoringHead::init(const ModelConfig& config, Rng& rng) {
  return ScoringHead{layers::DenseLayer::init(config.interaction_dim, 1, Activation::none, rng)};
}

std::vector<NamedTensor> ScoringHead::parameters() const {
  std::vector<NamedTensor> out;
  net.collect("", out);
  return out;
}

Tensor forward_user(Tape& tape, const GeneratorSet& g, const layers::TokenBatch& users) {
  return layers::encode_sequence(tape, g.user_embedding, g.user_lstm, users);
}

Tensor forward_item(Tape& tape, const GeneratorSet& g, const ItemInput& items) {
  if (g.config.modality == Modality::text) {
    if (!items.tokens) throw ConfigError("forward_item: text generator received feature input");
    return layers::encode_sequence(tape, g.item_embedding, g.item_lstm, *items.tokens);
  }
  if (!items.features) throw ConfigError("forward_item: visual generator received token input");
  Tensor x = *items.features;
  if (g.visual_hidden) x = layers::dense_forward(tape, *g.visual_hidden, x);
  return layers::dense_forward(tape, *g.visual_projection, x);
}

Tensor forward_interaction(Tape& tape, const GeneratorSet& g, const Tensor& x_u, const Tensor& x_v,
                           layers::Mode mode, Rng& rng) {
  const std::size_t d = g.config.hidden_dim;
  if (x_u.rank() != 2 || x_v.rank() != 2 || x_u.cols() != d || x_v.cols() != d) {
    throw DimensionError("forward_interaction: expected two [B x " + std::to_string(d) + "] inputs, got " +
                         shape_string(x_u.shape()) + " and " + shape_string(x_v.shape()));
  }
  Tensor joint = ops::concat_cols(tape, x_u, x_v);
  Tensor hidden = layers::dense_forward(tape, g.interaction, joint);
  return layers::dropout(tape, hidden, layers::DropoutSpec{g.config.dropout, mode}, rng);
}

Tensor predict_rating(Tape& tape, const ScoringHead& head, const Tensor& x_f) {
  return ops::column(tape, layers::dense_forward(tape, head.net, x_f), 0);
}

Tensor discriminate(Tape& tape, const Discriminator& d, const Tensor& rep) {
  if (rep.rank() != 2 || rep.cols() != d.input_width()) {
    throw DimensionError("discriminate: " + to_string(d.level) + " discriminator expects width " +
                         std::to_string(d.input_width()) + ", got " + shape_string(rep.shape()));
  }
  Tensor h = layers::dense_forward(tape, d.hidden, rep);
  return ops::softmax(tape, layers::dense_forward(tape, d.output, h));
}

Representations represent(Tape& tape, const GeneratorSet& g, const ModelInput& input,
                          layers::Mode mode, Rng& rng) {
  if (input.user_rows.size() != input.item_rows.size() || input.user_rows.empty()) {
    throw DimensionError("represent: user and item row maps disagree");
  }
  Tensor users = forward_user(tape, g, input.users);
  Tensor items = forward_item(tape, g, input.items);
  Representations r;
  r.user = ops::gather_rows(tape, users, input.user_rows);
  r.item = ops::gather_rows(tape, items, input.item_rows);
  r.interaction = forward_interaction(tape, g, r.user, r.item, mode, rng);
  return r;
}

std::vector<double> predict(const GeneratorSet& g, const ScoringHead& head, const ModelInput& input) {
  Tape tape = Tape::inference();
  Rng unused(0);
  Representations r = represent(tape, g, input, layers::Mode::eval, unused);
  Tensor y = predict_rating(tape, head, r.interaction);
  return {y.data().begin(), y.data().end()};
}

DanModel DanModel::init(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 101));
  DanModel m{config, GeneratorSet::init(config, DomainKind::source, rng), std::nullopt,
             ScoringHead::init(config, rng), Discriminator::init(Level::interaction, config, rng),
             std::nullopt, std::nullopt};
  return m;
}

std::vector<NamedTensor> DanModel::parameters() const {
  std::vector<NamedTensor> out;
  auto add = [&](const std::string& prefix, const std::vector<NamedTensor>& ps) {
    for (const auto& p : ps) out.push_back({prefix + p.name, p.tensor});
  };
  add("source.", source.parameters());
  if (target) add("target.", target->parameters());
  add("head.", head.parameters());
  add("d_f.", d_f.parameters());
  if (d_u) add("d_u.", d_u->parameters());
  if (d_v) add("d_v.", d_v->parameters());
  return out;
}

}  // namespace recdan::models
