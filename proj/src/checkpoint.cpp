#include "recdan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "recdan/errors.hpp"
#include "recdan/random.hpp"

namespace recdan::io {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using models::ModelConfig;

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {

ordered_json config_json(const ModelConfig& c) {
  ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["interaction_dim"] = c.interaction_dim;
  j["discriminator_hidden"] = c.discriminator_hidden;
  j["dropout"] = c.dropout;
  j["modality"] = models::to_string(c.modality);
  j["feature_dim"] = c.feature_dim;
  j["visual_hidden"] = c.visual_hidden;
  j["share_embedding"] = c.share_embedding;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.interaction_dim = j.at("interaction_dim").get<std::size_t>();
  c.discriminator_hidden = j.at("discriminator_hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.modality = models::parse_modality(j.at("modality").get<std::string>());
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.visual_hidden = j.at("visual_hidden").get<std::size_t>();
  c.share_embedding = j.at("share_embedding").get<bool>();
  return c;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tensor_file(const std::string& name) { return name + ".f32"; }

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format_version"] = kCheckpointFormat;
  manifest["phase"] = ckpt.phase;
  manifest["variant"] = models::to_string(ckpt.variant);
  manifest["modality"] = models::to_string(ckpt.model.config.modality);
  manifest["seed"] = ckpt.seed;
  manifest["max_tokens"] = ckpt.max_tokens;
  manifest["model"] = config_json(ckpt.model.config);
  manifest["vocabulary"] = {{"min_count", ckpt.vocab.min_count()}, {"tokens", ckpt.vocab.tokens()}};
  ordered_json tensors = ordered_json::array();
  for (const auto& p : ckpt.model.parameters()) {
    std::string bytes(p.tensor.size() * sizeof(float), '\0');
    for (std::size_t i = 0; i < p.tensor.size(); ++i) {
      const float f = static_cast<float>(p.tensor[i]);
      std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
    }
    write_file_atomic(dir / tensor_file(p.name), bytes);
    ordered_json t;
    t["name"] = p.name;
    t["shape"] = p.tensor.shape();
    t["dtype"] = "float32";
    t["file"] = tensor_file(p.name);
    t["bytes"] = bytes.size();
    tensors.push_back(std::move(t));
  }
  manifest["tensors"] = std::move(tensors);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw DataError("no checkpoint at '" + dir.string() + "' (missing manifest.json)");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
  try {
    if (m.at("format_version").get<int>() != kCheckpointFormat) {
      throw DataError("unsupported checkpoint format in '" + dir.string() + "'");
    }
    const ModelConfig config = config_from_json(m.at("model"));
    Checkpoint ckpt{models::DanModel::init(config, 0),
                    data::Vocabulary::from_tokens(m.at("vocabulary").at("tokens").get<std::vector<std::string>>(),
                                                  m.at("vocabulary").at("min_count").get<std::size_t>()),
                    m.at("phase").get<std::string>(), models::parse_variant(m.at("variant").get<std::string>()),
                    m.at("seed").get<std::uint64_t>(), m.at("max_tokens").get<std::size_t>()};
    std::map<std::string, const nlohmann::json*> entries;
    for (const auto& t : m.at("tensors")) entries[t.at("name").get<std::string>()] = &t;
    auto has_prefix = [&](const std::string& prefix) {
      return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.first.rfind(prefix, 0) == 0; });
    };
    Rng rng(0);
    if (has_prefix("target.")) ckpt.model.target = models::GeneratorSet::init(config, models::DomainKind::target, rng);
    if (has_prefix("d_u.")) ckpt.model.d_u = models::Discriminator::init(models::Level::user, config, rng);
    if (has_prefix("d_v.")) ckpt.model.d_v = models::Discriminator::init(models::Level::item, config, rng);

    const auto params = ckpt.model.parameters();
    if (params.size() != entries.size()) {
      throw DataError("checkpoint '" + dir.string() + "' lists " + std::to_string(entries.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
    }
    for (const auto& p : params) {
      auto it = entries.find(p.name);
      if (it == entries.end()) throw DataError("checkpoint '" + dir.string() + "' is missing tensor '" + p.name + "'");
      const auto& e = *it->second;
      if (e.at("shape").get<Shape>() != p.tensor.shape() || e.at("dtype").get<std::string>() != "float32") {
        throw DataError("tensor '" + p.name + "' has shape or dtype incompatible with the model config");
      }
      const std::string bytes = read_file(dir / e.at("file").get<std::string>());
      if (bytes.size() != 4 * p.tensor.size()) {
        throw DataError("tensor file for '" + p.name + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(4 * p.tensor.size()));
      }
      auto dst = p.tensor;
      for (std::size_t i = 0; i < dst.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
        dst[i] = f;
      }
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
}

std::string parameter_digest(const std::vector<NamedTensor>& params) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw StateError("cannot allocate a digest context");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& p : params) {
    EVP_DigestUpdate(ctx, p.name.data(), p.name.size() + 1);  // includes the terminator as a separator
    for (std::size_t extent : p.tensor.shape()) {
      const auto e = static_cast<std::uint64_t>(extent);
      EVP_DigestUpdate(ctx, &e, sizeof e);
    }
    EVP_DigestUpdate(ctx, p.tensor.data().data(), p.tensor.size() * sizeof(double));
  }
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, out, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[out[i] >> 4];
    s += hex[out[i] & 15];
  }
  return s;
}

}  // namespace recdan::io
