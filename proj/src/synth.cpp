#include "recdan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "recdan/errors.hpp"
#include "recdan/random.hpp"

namespace recdan::data {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Signal words are identified by a small integer; surface forms are
// "<stem><synonym>" in the source and "<stem>t<synonym>" when rewritten for
// the target.
struct Code {
  std::size_t latent_dim;
  // word ids: sentiment 0..4, user sign words, item sign words, bias words
  std::size_t sentiment(int level) const { return static_cast<std::size_t>(level - 1); }
  std::size_t user_sign(std::size_t k, bool positive) const { return 5 + 2 * k + (positive ? 0 : 1); }
  std::size_t item_sign(std::size_t k, bool positive) const {
    return 5 + 2 * latent_dim + 2 * k + (positive ? 0 : 1);
  }
  std::size_t user_bias(bool positive) const { return 5 + 4 * latent_dim + (positive ? 0 : 1); }
  std::size_t item_bias(bool positive) const { return 7 + 4 * latent_dim + (positive ? 0 : 1); }
  std::size_t words() const { return 9 + 4 * latent_dim; }
};

std::string stem(const Code& code, std::size_t word) {
  if (word < 5) return "sent" + std::to_string(word + 1);
  std::size_t w = word - 5;
  const std::size_t k2 = 2 * code.latent_dim;
  const char* sign = (w % 2 == 0) ? "p" : "n";
  if (w < k2) return "user" + std::to_string(w / 2) + sign;
  w -= k2;
  if (w < k2) return "item" + std::to_string(w / 2) + sign;
  w -= k2;
  return std::string(w < 2 ? "ubias" : "ibias") + sign;
}

struct Entity {
  std::vector<double> factors;
  double bias = 0.0;
};

Entity draw_entity(std::size_t k, double bias_sd, Rng& rng) {
  Entity e;
  e.factors.resize(k);
  for (auto& f : e.factors) f = rng.normal();
  e.bias = rng.normal(0.0, bias_sd);
  return e;
}

struct Domain {
  std::vector<std::string> user_ids, item_ids;
  std::vector<Entity> users, items;
};

// Source ids are s-prefixed, target ids t-prefixed; shared objects keep the
// source id and latent.
Domain make_domain(const SynthConfig& c, const Domain* source, Rng& rng) {
  Domain d;
  const std::string prefix = source ? "t" : "s";
  const auto n_shared_users =
      source ? static_cast<std::size_t>(std::llround(c.shared_user_fraction * static_cast<double>(c.users))) : 0;
  const auto n_shared_items =
      source ? static_cast<std::size_t>(std::llround(c.shared_item_fraction * static_cast<double>(c.items))) : 0;
  for (std::size_t u = 0; u < c.users; ++u) {
    if (u < n_shared_users) {
      d.user_ids.push_back(source->user_ids[u]);
      d.users.push_back(source->users[u]);
    } else {
      d.user_ids.push_back(prefix + "user" + std::to_string(u));
      d.users.push_back(draw_entity(c.latent_dim, c.bias_sd, rng));
    }
  }
  for (std::size_t v = 0; v < c.items; ++v) {
    if (v < n_shared_items) {
      d.item_ids.push_back(source->item_ids[v]);
      d.items.push_back(source->items[v]);
    } else {
      d.item_ids.push_back(prefix + "item" + std::to_string(v));
      d.items.push_back(draw_entity(c.latent_dim, c.bias_sd, rng));
    }
  }
  return d;
}

double clean_rating(const SynthConfig& c, const Entity& u, const Entity& v) {
  double dot = 0.0;
  for (std::size_t k = 0; k < c.latent_dim; ++k) dot += u.factors[k] * v.factors[k];
  return c.rating_mean + u.bias + v.bias + c.strength * dot / std::sqrt(static_cast<double>(c.latent_dim));
}

std::string format_rating(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

struct Renderer {
  const SynthConfig& c;
  Code code;
  std::vector<bool> remapped;  // per signal word, target side
  bool target;

  std::string word(std::size_t id, Rng& rng) const {
    const std::size_t syn = rng.below(c.synonyms);
    const bool rewritten = target && remapped[id];
    return stem(code, id) + (rewritten ? "t" : "") + std::to_string(syn);
  }

  std::string render(const Entity& u, const Entity& v, double rating, Rng& rng) const {
    std::vector<std::string> tokens;
    const int level = std::clamp(static_cast<int>(std::lround(rating)), 1, 5);
    tokens.push_back(word(code.sentiment(level), rng));
    const double s = c.signal_sharpness;
    for (std::size_t k = 0; k < c.latent_dim; ++k) {
      tokens.push_back(word(code.user_sign(k, rng.bernoulli(logistic(s * u.factors[k]))), rng));
      tokens.push_back(word(code.item_sign(k, rng.bernoulli(logistic(s * v.factors[k]))), rng));
    }
    tokens.push_back(word(code.user_bias(rng.bernoulli(logistic(s * u.bias / c.bias_sd))), rng));
    tokens.push_back(word(code.item_bias(rng.bernoulli(logistic(s * v.bias / c.bias_sd))), rng));
    const std::string filler = (target && c.distinct_filler) ? "tfill" : "sfill";
    for (std::size_t i = 0; i < c.review_filler; ++i) {
      tokens.push_back(filler + std::to_string(rng.below(c.filler_words)));
    }
    rng.shuffle(tokens);
    std::string text;
    for (const auto& t : tokens) {
      if (!text.empty()) text += ' ';
      text += t;
    }
    return text;
  }
};

void emit(const SynthConfig& c, const Domain& d, const Renderer& renderer, const std::string& feature_prefix,
          Rng& rng, std::vector<ReviewRecord>& out, std::vector<double>& clean) {
  const std::size_t cells = d.users.size() * d.items.size();
  if (c.interactions > cells) throw ConfigError("synth: more interactions than user-item pairs");
  // Every user and item gets at least one interaction when counts allow.
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  std::vector<std::pair<std::size_t, std::size_t>> order;
  const std::size_t cover = std::max(d.users.size(), d.items.size());
  for (std::size_t i = 0; i < cover && order.size() < c.interactions; ++i) {
    std::pair<std::size_t, std::size_t> cell{i % d.users.size(), (i * 7 + i / d.items.size()) % d.items.size()};
    if (chosen.insert(cell).second) order.push_back(cell);
  }
  while (order.size() < c.interactions) {
    std::pair<std::size_t, std::size_t> cell{rng.below(d.users.size()), rng.below(d.items.size())};
    if (chosen.insert(cell).second) order.push_back(cell);
  }
  rng.shuffle(order);
  for (auto [u, v] : order) {
    const double base = clean_rating(c, d.users[u], d.items[v]);
    const double rating = std::clamp(base + rng.normal(0.0, c.noise_sd), 1.0, 5.0);
    ReviewRecord r;
    r.user_id = d.user_ids[u];
    r.item_id = d.item_ids[v];
    r.rating = std::stod(format_rating(rating));
    r.review_text = renderer.render(d.users[u], d.items[v], *r.rating, rng);
    r.image_feature_id = feature_prefix + d.item_ids[v];
    out.push_back(std::move(r));
    clean.push_back(std::clamp(base, 1.0, 5.0));
  }
}

SynthLatents latents(const Domain& d) {
  SynthLatents l;
  for (const auto& u : d.users) {
    l.user_factors.push_back(u.factors);
    l.user_bias.push_back(u.bias);
  }
  for (const auto& v : d.items) {
    l.item_factors.push_back(v.factors);
    l.item_bias.push_back(v.bias);
  }
  return l;
}

}  // namespace

SynthResult synthesize_domain_pair(const SynthConfig& c, std::uint64_t seed) {
  if (c.users == 0 || c.items == 0 || c.interactions == 0 || c.latent_dim == 0 || c.synonyms == 0 ||
      c.filler_words == 0) {
    throw ConfigError("synth: counts must be positive");
  }
  if (c.remap_fraction < 0.0 || c.remap_fraction > 1.0 || c.shared_user_fraction < 0.0 ||
      c.shared_user_fraction > 1.0 || c.shared_item_fraction < 0.0 || c.shared_item_fraction > 1.0) {
    throw ConfigError("synth: fractions must lie in [0, 1]");
  }
  Rng latent_rng(derive_seed(seed, 11));
  Domain source = make_domain(c, nullptr, latent_rng);
  Domain target = make_domain(c, &source, latent_rng);

  Code code{c.latent_dim};
  Rng remap_rng(derive_seed(seed, 12));
  std::vector<std::size_t> word_ids(code.words());
  for (std::size_t i = 0; i < word_ids.size(); ++i) word_ids[i] = i;
  remap_rng.shuffle(word_ids);
  std::vector<bool> remapped(code.words(), false);
  const auto n_remap = static_cast<std::size_t>(std::llround(c.remap_fraction * static_cast<double>(code.words())));
  for (std::size_t i = 0; i < n_remap; ++i) remapped[word_ids[i]] = true;

  SynthResult out;
  Rng source_rng(derive_seed(seed, 13));
  Rng target_rng(derive_seed(seed, 14));
  emit(c, source, Renderer{c, code, remapped, false}, "img_s_", source_rng, out.source, out.source_clean);
  emit(c, target, Renderer{c, code, remapped, true}, "img_t_", target_rng, out.target_labels, out.target_clean);
  out.target = out.target_labels;
  for (auto& r : out.target) r.rating.reset();

  // Visual features: a fixed random projection of the item factors plus noise.
  Rng feature_rng(derive_seed(seed, 15));
  std::vector<double> projection(c.feature_dim * c.latent_dim);
  for (auto& a : projection) a = feature_rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(c.latent_dim)));
  out.features.dim = c.feature_dim;
  auto add_features = [&](const Domain& d, const std::string& prefix, double offset) {
    for (std::size_t v = 0; v < d.items.size(); ++v) {
      std::vector<double> f(c.feature_dim);
      for (std::size_t j = 0; j < c.feature_dim; ++j) {
        double s = offset + feature_rng.normal(0.0, c.feature_noise);
        for (std::size_t k = 0; k < c.latent_dim; ++k) s += projection[j * c.latent_dim + k] * d.items[v].factors[k];
        f[j] = s;
      }
      out.features.rows[prefix + d.item_ids[v]] = std::move(f);
    }
  };
  add_features(source, "img_s_", 0.0);
  add_features(target, "img_t_", c.feature_offset);

  out.source_latents = latents(source);
  out.target_latents = latents(target);
  return out;
}

void apply_synth_setting(SynthConfig& c, const std::string& key, const std::string& value) {
  auto as_size = [&] {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(value, &pos);
      if (pos != value.size() || v < 0) throw std::invalid_argument(value);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("synth." + key + ": expected a non-negative integer, got '" + value + "'");
    }
  };
  auto as_double = [&] {
    try {
      std::size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("synth." + key + ": expected a number, got '" + value + "'");
    }
  };
  if (key == "users") c.users = as_size();
  else if (key == "items") c.items = as_size();
  else if (key == "interactions") c.interactions = as_size();
  else if (key == "latent_dim") c.latent_dim = as_size();
  else if (key == "rating_mean") c.rating_mean = as_double();
  else if (key == "bias_sd") c.bias_sd = as_double();
  else if (key == "strength") c.strength = as_double();
  else if (key == "noise_sd") c.noise_sd = as_double();
  else if (key == "synonyms") c.synonyms = as_size();
  else if (key == "filler_words") c.filler_words = as_size();
  else if (key == "review_filler") c.review_filler = as_size();
  else if (key == "signal_sharpness") c.signal_sharpness = as_double();
  else if (key == "remap_fraction") c.remap_fraction = as_double();
  else if (key == "distinct_filler") c.distinct_filler = as_size() != 0;
  else if (key == "shared_user_fraction") c.shared_user_fraction = as_double();
  else if (key == "shared_item_fraction") c.shared_item_fraction = as_double();
  else if (key == "feature_dim") c.feature_dim = as_size();
  else if (key == "feature_noise") c.feature_noise = as_double();
  else if (key == "feature_offset") c.feature_offset = as_double();
  else throw ConfigError("unknown synth setting '" + key + "'");
}

}  // namespace recdan::data
