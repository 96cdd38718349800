#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "recdan/checkpoint.hpp"
#include "recdan/config.hpp"
#include "recdan/dataset_dir.hpp"
#include "recdan/errors.hpp"
#include "recdan/synth.hpp"

using namespace recdan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("recdan_io_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

io::Checkpoint sample_checkpoint() {
  models::ModelConfig mc;
  mc.vocab_size = 6;
  mc.embed_dim = 3;
  mc.hidden_dim = 4;
  mc.interaction_dim = 5;
  mc.discriminator_hidden = 3;
  auto model = models::DanModel::init(mc, 9);
  Rng rng(2);
  model.target = models::GeneratorSet::init(mc, models::DomainKind::target, rng);
  model.d_u = models::Discriminator::init(models::Level::user, mc, rng);
  return {std::move(model), data::Vocabulary::build({"a b c d"}, 1), "adapt", models::DanVariant::u, 9, 40};
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto a = scratch("ckpt_a"), b = scratch("ckpt_b");
  io::save_checkpoint(a, sample_checkpoint());
  const auto loaded = io::load_checkpoint(a);
  io::save_checkpoint(b, loaded);
  EXPECT_EQ(dir_bytes(a), dir_bytes(b));
  EXPECT_EQ(loaded.phase, "adapt");
  EXPECT_EQ(loaded.variant, models::DanVariant::u);
  EXPECT_EQ(loaded.max_tokens, 40u);
  EXPECT_TRUE(loaded.model.target.has_value());
  EXPECT_TRUE(loaded.model.d_u.has_value());
  EXPECT_FALSE(loaded.model.d_v.has_value());
  EXPECT_EQ(loaded.vocab.tokens(), sample_checkpoint().vocab.tokens());
}

TEST(Checkpoint, ValuesSurviveAsFloat32) {
  const auto dir = scratch("ckpt_f32");
  const auto original = sample_checkpoint();
  io::save_checkpoint(dir, original);
  const auto loaded = io::load_checkpoint(dir);
  const auto pa = original.model.parameters(), pb = loaded.model.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    for (std::size_t i = 0; i < pa[k].tensor.size(); ++i) {
      EXPECT_EQ(pb[k].tensor[i], static_cast<double>(static_cast<float>(pa[k].tensor[i])));
    }
  }
}

TEST(Checkpoint, ByteLengthsMatchShapes) {
  const auto dir = scratch("ckpt_len");
  const auto ckpt = sample_checkpoint();
  io::save_checkpoint(dir, ckpt);
  for (const auto& p : ckpt.model.parameters()) {
    EXPECT_EQ(fs::file_size(dir / (p.name + ".f32")), 4 * p.tensor.size()) << p.name;
  }
}

TEST(Checkpoint, CorruptionIsDataError) {
  EXPECT_THROW(io::load_checkpoint(scratch("nothing")), DataError);
  const auto dir = scratch("ckpt_bad");
  io::save_checkpoint(dir, sample_checkpoint());
  std::ofstream(dir / "head.w.f32", std::ios::binary | std::ios::trunc) << "abc";
  EXPECT_THROW(io::load_checkpoint(dir), DataError);
  std::ofstream(dir / "manifest.json", std::ios::trunc) << "{";
  EXPECT_THROW(io::load_checkpoint(dir), DataError);
}

TEST(Digest, StableAndSensitive) {
  const auto ckpt = sample_checkpoint();
  const auto params = ckpt.model.source.parameters();
  const auto d1 = io::parameter_digest(params);
  EXPECT_EQ(d1.size(), 64u);
  EXPECT_EQ(d1, io::parameter_digest(sample_checkpoint().model.source.parameters()));
  auto t = params[0].tensor;
  t.data()[0] += 1e-12;
  EXPECT_NE(d1, io::parameter_digest(params));
}

TEST(Config, SettingsAndFile) {
  RunConfig c;
  apply_setting(c, "lr", "0.5");
  apply_setting(c, "hidden_dim", "12");
  apply_setting(c, "min_count", "2");
  apply_setting(c, "seed", "42");
  apply_setting(c, "variant", "h");
  apply_setting(c, "synth.users", "33");
  EXPECT_EQ(c.train.lr, 0.5);
  EXPECT_EQ(c.model.hidden_dim, 12u);
  EXPECT_EQ(c.assemble.min_count, 2u);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.assemble.seed, 42u);
  EXPECT_EQ(c.train.variant, models::DanVariant::h);
  EXPECT_EQ(c.synth.users, 33u);
  EXPECT_THROW(apply_setting(c, "nope", "1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "lr", "fast"), ConfigError);

  const auto path = scratch("cfg.txt");
  std::ofstream(path) << "# desk run\nbatch_size = 64   # small\n\nnon_saturating = true\n";
  load_config_file(c, path);
  EXPECT_EQ(c.train.batch_size, 64u);
  EXPECT_TRUE(c.train.non_saturating);
  std::ofstream(path, std::ios::trunc) << "lr = 1\nthis line is wrong\n";
  try {
    load_config_file(c, path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(Config, ValidateRejectsBadRanges) {
  training::TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.band_low = 0.7;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(DatasetDir, RoundTripReassemblesIdentically) {
  data::SynthConfig sc;
  sc.interactions = 300;
  sc.shared_user_fraction = 0.2;
  const auto s = data::synthesize_domain_pair(sc, 4);
  io::PreparedData prep;
  prep.options.seed = 4;
  prep.source = s.source;
  prep.target = s.target;
  prep.features = s.features;
  prep.labels = data::LabelTable{};
  for (const auto& r : s.target_labels) (*prep.labels)[{r.user_id, r.item_id}] = *r.rating;
  const auto dir = scratch("dataset");
  const auto saved = io::save_prepared(dir, prep);
  const auto loaded = io::load_prepared(dir);
  const auto again = io::assemble(loaded);
  EXPECT_EQ(saved.source.train, again.source.train);
  EXPECT_EQ(saved.target.test, again.target.test);
  EXPECT_EQ(saved.vocab.tokens(), again.vocab.tokens());
  EXPECT_EQ(saved.shared_users.size(), again.shared_users.size());
  EXPECT_EQ(*loaded.labels, *prep.labels);
  EXPECT_EQ(loaded.features->rows, prep.features->rows);
  EXPECT_THROW(io::load_prepared(scratch("empty_dataset")), DataError);
}
