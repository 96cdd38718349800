#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "recdan/gradcheck.hpp"
#include "recdan/layers.hpp"
#include "recdan/random.hpp"
#include "recdan/tensor.hpp"

namespace recdan::models {

enum class Modality { text, visual };
enum class DomainKind { source, target };
enum class Level { interaction, user, item };

/// UI-DAN: no shared objects. U-DAN: shared items, aligns users. I-DAN: shared
/// users, aligns items. H-DAN: both.
enum class DanVariant { ui, u, i, h };

std::string to_string(Modality m);
std::string to_string(DanVariant v);
std::string to_string(Level l);
std::string variant_label(DanVariant v);  // "UI-DAN", ...
Modality parse_modality(const std::string& s);
DanVariant parse_variant(const std::string& s);

/// Discriminators in use for a variant; D_f always comes first.
std::vector<Level> active_discriminators(DanVariant v);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 256;           // width of user/item representations
  std::size_t interaction_dim = 512;      // width of G_f output
  std::size_t discriminator_hidden = 512;
  double dropout = 0.5;
  Modality modality = Modality::text;
  std::size_t feature_dim = 0;            // visual: precomputed feature width
  std::size_t visual_hidden = 4096;       // visual: 0 skips the wide layer
  bool share_embedding = false;           // one table for user and item encoders
};

/// Item side of a model input: token sequences or precomputed feature rows.
struct ItemInput {
  std::optional<layers::TokenBatch> tokens;
  std::optional<Tensor> features;  // [N x feature_dim]
};

/// A batch of (user, item) pairs. Distinct users and items are encoded once
/// and expanded to rows through the index vectors.
struct ModelInput {
  layers::TokenBatch users;
  std::vector<std::size_t> user_rows;
  ItemInput items;
  std::vector<std::size_t> item_rows;

  std::size_t rows() const { return user_rows.size(); }
};

/// M^k = {G_u, G_v, G_f} for one domain.
struct GeneratorSet {
  DomainKind domain = DomainKind::source;
  ModelConfig config;
  layers::EmbeddingTable user_embedding;
  layers::EmbeddingTable item_embedding;  // aliases user_embedding when shared
  layers::LstmCell user_lstm;
  layers::LstmCell item_lstm;             // text modality only
  std::optional<layers::DenseLayer> visual_hidden;
  std::optional<layers::DenseLayer> visual_projection;
  layers::DenseLayer interaction;

  static GeneratorSet init(const ModelConfig& config, DomainKind domain, Rng& rng);

  std::vector<NamedTensor> user_parameters() const;
  std::vector<NamedTensor> item_parameters() const;
  std::vector<NamedTensor> interaction_parameters() const;
  /// All parameters, each tensor once, in a fixed order.
  std::vector<NamedTensor> parameters() const;
};

struct Discriminator {
  Level level = Level::interaction;
  layers::DenseLayer hidden;  // in -> discriminator_hidden, relu
  layers::DenseLayer output;  // -> 2 logits

  static Discriminator init(Level level, const ModelConfig& config, Rng& rng);
  std::size_t input_width() const { return hidden.in(); }
  std::vector<NamedTensor> parameters() const;
};

/// G_y^s: linear unit on the interaction representation.
struct ScoringHead {
  layers::DenseLayer net;

  static ScoringHead init(const ModelConfig& config, Rng& rng);
  std::vector<NamedTensor> parameters() const;
};

Tensor forward_user(Tape& tape, const GeneratorSet& g, const layers::TokenBatch& users);
Tensor forward_item(Tape& tape, const GeneratorSet& g, const ItemInput& items);
/// Dropout(ReLU(Dense(concat(x_u, x_v)))).
Tensor forward_interaction(Tape& tape, const GeneratorSet& g, const Tensor& x_u, const Tensor& x_v,
                           layers::Mode mode, Rng& rng);
Tensor predict_rating(Tape& tape, const ScoringHead& head, const Tensor& x_f);
/// Rows are [p(source), p(target)].
Tensor discriminate(Tape& tape, const Discriminator& d, const Tensor& rep);

/// Representations of one ModelInput, expanded to one row per pair.
struct Representations {
  Tensor user;         // [B x hidden]
  Tensor item;         // [B x hidden]
  Tensor interaction;  // [B x interaction_dim]
};

Representations represent(Tape& tape, const GeneratorSet& g, const ModelInput& input,
                          layers::Mode mode, Rng& rng);

/// The single forward path used for every rating prediction: generators of
/// either domain followed by the source scoring head, in eval mode.
std::vector<double> predict(const GeneratorSet& g, const ScoringHead& head, const ModelInput& input);

/// Everything the CLI persists: both generator sets, head and discriminators.
struct DanModel {
  ModelConfig config;
  GeneratorSet source;
  std::optional<GeneratorSet> target;
  ScoringHead head;
  Discriminator d_f;
  std::optional<Discriminator> d_u;
  std::optional<Discriminator> d_v;

  static DanModel init(const ModelConfig& config, std::uint64_t seed);
  std::vector<NamedTensor> parameters() const;
};

}  // namespace recdan::models
