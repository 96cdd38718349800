#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "recdan/data.hpp"

namespace recdan::data {

/// Planted-preference generator for two domains.
///
/// Every user and item has a latent vector and a bias. A rating is
/// clamp(mean + b_u + b_v + strength * <p_u, q_v> / sqrt(K) + noise, 1, 5).
/// Review text encodes the rating (sentiment words), the user's latent signs
/// and the item's latent signs through a fixed token code, padded with
/// domain-specific filler words. The target domain shares the latent model
/// and differs only in how the code is written: a seeded subset of signal
/// words is replaced by target-only synonyms, and the filler vocabulary is
/// disjoint.
struct SynthConfig {
  std::size_t users = 120;             // per domain
  std::size_t items = 80;              // per domain
  std::size_t interactions = 2000;     // per domain
  std::size_t latent_dim = 4;
  double rating_mean = 3.3;
  double bias_sd = 0.35;
  double strength = 0.9;
  double noise_sd = 0.15;
  std::size_t synonyms = 3;            // surface forms per signal word
  std::size_t filler_words = 40;       // per domain
  std::size_t review_filler = 2;       // filler tokens per review
  double signal_sharpness = 3.0;       // how reliably a review shows a latent sign
  /// Fraction of signal word types rewritten in the target domain. 0 gives
  /// two domains with the same code (apart from filler).
  double remap_fraction = 0.8;
  /// When false the target uses the source filler words too, i.e. no shift.
  bool distinct_filler = true;
  double shared_user_fraction = 0.0;   // of target users that also live in the source
  double shared_item_fraction = 0.0;
  std::size_t feature_dim = 16;        // visual features, A q_v + noise
  double feature_noise = 0.1;
  double feature_offset = 0.5;         // added to target features
};

struct SynthLatents {
  std::vector<std::vector<double>> user_factors, item_factors;
  std::vector<double> user_bias, item_bias;
};

struct SynthResult {
  std::vector<ReviewRecord> source;
  std::vector<ReviewRecord> target;          // ratings removed
  std::vector<ReviewRecord> target_labels;   // sealed: target with ratings
  FeatureTable features;                     // keyed by image_feature_id
  SynthLatents source_latents, target_latents;
  /// Noise-free rating function value per record, same order as the records.
  std::vector<double> source_clean, target_clean;
};

SynthResult synthesize_domain_pair(const SynthConfig& config, std::uint64_t seed);

/// Reads "key=value" overrides into a config; unknown keys throw ConfigError.
void apply_synth_setting(SynthConfig& config, const std::string& key, const std::string& value);

}  // namespace recdan::data
