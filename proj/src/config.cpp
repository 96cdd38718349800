#include "recdan/config.hpp"

#include <fstream>

#include "recdan/errors.hpp"

namespace recdan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos == v.size() && x >= 0) return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
  auto& t = c.train;
  auto& m = c.model;
  auto& a = c.assemble;
  if (key.rfind("synth.", 0) == 0) {
    data::apply_synth_setting(c.synth, key.substr(6), v);
  } else if (key == "source_epochs") t.source_epochs = to_size(key, v);
  else if (key == "adapt_epochs") t.adapt_epochs = to_size(key, v);
  else if (key == "finetune_epochs") t.finetune_epochs = to_size(key, v);
  else if (key == "batch_size") t.batch_size = to_size(key, v);
  else if (key == "lr") t.lr = to_double(key, v);
  else if (key == "finetune_multiplier") t.finetune_multiplier = to_double(key, v);
  else if (key == "adapt_generator_scale") t.adapt_generator_scale = to_double(key, v);
  else if (key == "weight_decay") t.weight_decay = to_double(key, v);
  else if (key == "rho") t.rho = to_double(key, v);
  else if (key == "eps") t.eps = to_double(key, v);
  else if (key == "seed") t.seed = a.seed = to_size(key, v);
  else if (key == "variant") t.variant = models::parse_variant(v);
  else if (key == "source_patience") t.source_patience = to_size(key, v);
  else if (key == "adapt_patience") t.adapt_patience = to_size(key, v);
  else if (key == "band_low") t.band_low = to_double(key, v);
  else if (key == "band_high") t.band_high = to_double(key, v);
  else if (key == "non_saturating") t.non_saturating = to_bool(key, v);
  else if (key == "record_time") t.record_time = to_bool(key, v);
  else if (key == "probe_epochs") t.probe_epochs = to_size(key, v);
  else if (key == "probe_lr") t.probe_lr = to_double(key, v);
  else if (key == "embed_dim") m.embed_dim = to_size(key, v);
  else if (key == "hidden_dim") m.hidden_dim = to_size(key, v);
  else if (key == "interaction_dim") m.interaction_dim = to_size(key, v);
  else if (key == "discriminator_hidden") m.discriminator_hidden = to_size(key, v);
  else if (key == "dropout") m.dropout = to_double(key, v);
  else if (key == "modality") m.modality = models::parse_modality(v);
  else if (key == "visual_hidden") m.visual_hidden = to_size(key, v);
  else if (key == "share_embedding") m.share_embedding = to_bool(key, v);
  else if (key == "min_count") a.min_count = to_size(key, v);
  else if (key == "max_tokens") a.max_tokens = to_size(key, v);
  else if (key == "train_fraction") a.train_fraction = to_double(key, v);
  else if (key == "valid_fraction") a.valid_fraction = to_double(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

void load_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    }
    try {
      apply_setting(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

RunConfig desk_config() {
  RunConfig c;
  c.model.embed_dim = 16;
  c.model.hidden_dim = 32;
  c.model.interaction_dim = 64;
  c.model.discriminator_hidden = 64;
  c.model.visual_hidden = 0;
  c.assemble.max_tokens = 48;
  c.train.lr = 1.0;
  c.train.adapt_generator_scale = 0.01;
  c.train.source_epochs = 60;
  c.train.source_patience = 15;
  c.train.adapt_epochs = 30;
  c.train.adapt_patience = 30;
  c.train.finetune_epochs = 30;
  c.train.finetune_multiplier = 0.01;
  return c;
}

}  // namespace recdan
