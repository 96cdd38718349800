#include "recdan/dataset_dir.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "recdan/checkpoint.hpp"
#include "recdan/errors.hpp"

namespace recdan::io {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kDatasetFormat = 1;

ordered_json domain_json(const data::DomainData& d) {
  const auto stats = data::corpus_stats(d.records);
  ordered_json j;
  j["users"] = stats.users;
  j["items"] = stats.items;
  j["samples"] = stats.samples;
  j["train"] = d.train.size();
  j["valid"] = d.valid.size();
  j["test"] = d.test.size();
  return j;
}

ordered_json splits_json(const data::DomainData& d) {
  ordered_json j;
  j["train"] = d.train;
  j["valid"] = d.valid;
  j["test"] = d.test;
  return j;
}

std::string reviews_text(const std::vector<data::ReviewRecord>& records) {
  std::ostringstream out;
  data::write_reviews(out, records);
  return out.str();
}

}  // namespace

data::DomainPairDataset assemble(const PreparedData& prepared) {
  return data::assemble_pair(prepared.source, prepared.target, prepared.options);
}

data::DomainPairDataset save_prepared(const fs::path& dir, const PreparedData& prepared) {
  auto pair = assemble(prepared);
  fs::create_directories(dir);
  write_file_atomic(dir / "source.jsonl", reviews_text(prepared.source));
  write_file_atomic(dir / "target.jsonl", reviews_text(prepared.target));
  if (prepared.features) {
    std::ostringstream out;
    data::write_features(out, *prepared.features);
    write_file_atomic(dir / "features.jsonl", out.str());
  }
  if (prepared.labels) {
    std::vector<data::ReviewRecord> rows;
    for (const auto& [key, rating] : *prepared.labels) rows.push_back({key.first, key.second, rating, "", {}});
    std::ostringstream out;
    data::write_labels(out, rows);
    write_file_atomic(dir / "labels.jsonl", out.str());
  }

  const auto& o = prepared.options;
  ordered_json manifest;
  manifest["format_version"] = kDatasetFormat;
  manifest["assemble"] = {{"seed", o.seed},
                          {"min_count", o.min_count},
                          {"max_tokens", o.max_tokens},
                          {"train_fraction", o.train_fraction},
                          {"valid_fraction", o.valid_fraction}};
  manifest["vocab_size"] = pair.vocab.size();
  manifest["source"] = domain_json(pair.source);
  manifest["target"] = domain_json(pair.target);
  manifest["shared_users"] = pair.shared_users.size();
  manifest["shared_items"] = pair.shared_items.size();
  manifest["features"] = prepared.features.has_value();
  manifest["labels"] = prepared.labels.has_value();
  write_file_atomic(dir / "dataset.json", manifest.dump(2) + "\n");

  ordered_json splits;
  splits["source"] = splits_json(pair.source);
  splits["target"] = splits_json(pair.target);
  write_file_atomic(dir / "splits.json", splits.dump() + "\n");

  std::string vocab;
  for (const auto& t : pair.vocab.tokens()) vocab += t + "\n";
  write_file_atomic(dir / "vocab.txt", vocab);
  return pair;
}

PreparedData load_prepared(const fs::path& dir) {
  const fs::path manifest_path = dir / "dataset.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("no prepared dataset at '" + dir.string() + "' (missing dataset.json)");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed '" + manifest_path.string() + "': " + e.what());
  }
  PreparedData p;
  try {
    if (m.at("format_version").get<int>() != kDatasetFormat) {
      throw DataError("unsupported dataset format in '" + dir.string() + "'");
    }
    const auto& a = m.at("assemble");
    p.options.seed = a.at("seed").get<std::uint64_t>();
    p.options.min_count = a.at("min_count").get<std::size_t>();
    p.options.max_tokens = a.at("max_tokens").get<std::size_t>();
    p.options.train_fraction = a.at("train_fraction").get<double>();
    p.options.valid_fraction = a.at("valid_fraction").get<double>();
    p.source = data::ingest_reviews((dir / "source.jsonl").string(), data::Schema::canonical).records;
    p.target = data::ingest_reviews((dir / "target.jsonl").string(), data::Schema::canonical, false).records;
    if (m.at("features").get<bool>()) p.features = data::feature_ingest((dir / "features.jsonl").string());
    if (m.at("labels").get<bool>()) p.labels = data::read_labels((dir / "labels.jsonl").string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid '" + manifest_path.string() + "': " + e.what());
  }
  return p;
}

}  // namespace recdan::io
