#include "recdan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "recdan/errors.hpp"
#include "recdan/random.hpp"

namespace recdan::data {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using models::DomainKind;
using models::Level;
using models::Modality;

Schema parse_schema(const std::string& s) {
  if (s == "canonical") return Schema::canonical;
  if (s == "amazon") return Schema::amazon;
  throw ConfigError("unknown schema '" + s + "' (expected canonical|amazon)");
}

CorpusStats corpus_stats(const std::vector<ReviewRecord>& records) {
  std::set<std::string> users, items;
  for (const auto& r : records) {
    users.insert(r.user_id);
    items.insert(r.item_id);
  }
  return CorpusStats{users.size(), items.size(), records.size()};
}

namespace {

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::string required_string(const json& obj, const char* key, const std::string& at, bool allow_missing) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (allow_missing) return {};
    throw DataError(at + "missing field '" + key + "'");
  }
  if (!it->is_string()) throw DataError(at + "field '" + key + "' must be a string");
  return it->get<std::string>();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

}  // namespace

IngestResult ingest_reviews(std::istream& in, const std::string& source_name, Schema schema,
                            bool require_rating) {
  const bool amazon = schema == Schema::amazon;
  const char* k_user = amazon ? "reviewerID" : "user_id";
  const char* k_item = amazon ? "asin" : "item_id";
  const char* k_rating = amazon ? "overall" : "rating";
  const char* k_text = amazon ? "reviewText" : "review_text";

  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where(source_name, line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(at + "malformed JSON (" + std::string(e.what()) + ")");
    }
    if (!obj.is_object()) throw DataError(at + "expected a JSON object");

    ReviewRecord r;
    r.user_id = required_string(obj, k_user, at, false);
    r.item_id = required_string(obj, k_item, at, false);
    if (r.user_id.empty() || r.item_id.empty()) throw DataError(at + "empty user or item id");
    r.review_text = required_string(obj, k_text, at, amazon);
    auto rating = obj.find(k_rating);
    if (rating == obj.end() || rating->is_null()) {
      if (require_rating) throw DataError(at + "missing field '" + k_rating + "'");
    } else {
      if (!rating->is_number()) throw DataError(at + "field '" + k_rating + "' must be a number");
      const double v = rating->get<double>();
      if (!(v >= 1.0 && v <= 5.0)) {
        throw DataError(at + "rating " + std::to_string(v) + " outside [1, 5]");
      }
      r.rating = v;
    }
    if (!amazon) {
      auto feat = obj.find("image_feature_id");
      if (feat != obj.end() && !feat->is_null()) {
        if (!feat->is_string()) throw DataError(at + "field 'image_feature_id' must be a string");
        r.image_feature_id = feat->get<std::string>();
      }
    }
    result.records.push_back(std::move(r));
  }
  result.stats = corpus_stats(result.records);
  return result;
}

IngestResult ingest_reviews(const std::string& path, Schema schema, bool require_rating) {
  auto in = open_input(path);
  return ingest_reviews(in, path, schema, require_rating);
}

void write_reviews(std::ostream& out, const std::vector<ReviewRecord>& records) {
  for (const auto& r : records) {
    ordered_json j;
    j["user_id"] = r.user_id;
    j["item_id"] = r.item_id;
    if (r.rating) j["rating"] = *r.rating;
    j["review_text"] = r.review_text;
    if (r.image_feature_id) j["image_feature_id"] = *r.image_feature_id;
    out << j.dump() << '\n';
  }
}

const std::vector<double>& FeatureTable::at(const std::string& id) const {
  auto it = rows.find(id);
  if (it == rows.end()) throw DataError("no feature vector for '" + id + "'");
  return it->second;
}

FeatureTable feature_ingest(std::istream& in, const std::string& source_name) {
  FeatureTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where(source_name, line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(at + "malformed JSON (" + std::string(e.what()) + ")");
    }
    const std::string id = required_string(obj, "item_id", at, false);
    auto f = obj.find("features");
    if (f == obj.end() || !f->is_array() || f->empty()) {
      throw DataError(at + "item '" + id + "' needs a non-empty 'features' array");
    }
    std::vector<double> values;
    for (const auto& v : *f) {
      if (!v.is_number()) throw DataError(at + "item '" + id + "' has a non-numeric feature");
      values.push_back(v.get<double>());
    }
    if (table.rows.empty()) {
      table.dim = values.size();
    } else if (values.size() != table.dim) {
      throw DataError(at + "item '" + id + "' has " + std::to_string(values.size()) +
                      " features, expected " + std::to_string(table.dim));
    }
    table.rows[id] = std::move(values);
  }
  return table;
}

FeatureTable feature_ingest(const std::string& path) {
  auto in = open_input(path);
  return feature_ingest(in, path);
}

void write_features(std::ostream& out, const FeatureTable& table) {
  for (const auto& [id, values] : table.rows) {
    ordered_json j;
    j["item_id"] = id;
    j["features"] = values;
    out << j.dump() << '\n';
  }
}

LabelTable read_labels(std::istream& in, const std::string& source_name) {
  LabelTable labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where(source_name, line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(at + "malformed JSON (" + std::string(e.what()) + ")");
    }
    auto rating = obj.find("rating");
    if (rating == obj.end() || !rating->is_number()) throw DataError(at + "label needs a numeric 'rating'");
    labels[{required_string(obj, "user_id", at, false), required_string(obj, "item_id", at, false)}] =
        rating->get<double>();
  }
  return labels;
}

LabelTable read_labels(const std::string& path) {
  auto in = open_input(path);
  return read_labels(in, path);
}

void write_labels(std::ostream& out, const std::vector<ReviewRecord>& labeled) {
  for (const auto& r : labeled) {
    ordered_json j;
    j["user_id"] = r.user_id;
    j["item_id"] = r.item_id;
    j["rating"] = r.rating.value();
    out << j.dump() << '\n';
  }
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

const std::vector<std::size_t>& DomainData::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::valid: return valid;
    case Split::test: return test;
  }
  return train;
}

std::vector<std::size_t> DomainData::user_text(const std::string& user_id) const {
  auto it = user_tokens.find(user_id);
  if (it == user_tokens.end() || it->second.empty()) return {Vocabulary::kUnk};
  return it->second;
}

std::vector<std::size_t> DomainData::item_text(const std::string& item_id) const {
  auto it = item_tokens.find(item_id);
  if (it == item_tokens.end() || it->second.empty()) return {Vocabulary::kUnk};
  return it->second;
}

namespace {

void split_domain(DomainData& d, const AssembleOptions& o, std::uint64_t stream) {
  const std::size_t n = d.records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(o.seed, stream));
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(o.train_fraction * static_cast<double>(n)));
  const auto n_valid = std::min(n - n_train,
                                static_cast<std::size_t>(std::llround(o.valid_fraction * static_cast<double>(n))));
  d.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  d.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), order.end());
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.valid.begin(), d.valid.end());
  std::sort(d.test.begin(), d.test.end());
  for (std::size_t i : d.train) {
    d.user_reviews[d.records[i].user_id].push_back(i);
    d.item_reviews[d.records[i].item_id].push_back(i);
  }
}

std::vector<std::size_t> concatenate(const DomainData& d, const std::vector<std::size_t>& reviews,
                                     const Vocabulary& vocab, std::size_t max_tokens) {
  std::vector<std::size_t> ids;
  for (std::size_t r : reviews) {
    for (std::size_t id : vocab.encode(d.records[r].review_text)) {
      if (ids.size() == max_tokens) return ids;
      ids.push_back(id);
    }
  }
  return ids;
}

void encode_texts(DomainData& d, const Vocabulary& vocab, std::size_t max_tokens) {
  for (const auto& [user, reviews] : d.user_reviews) d.user_tokens[user] = concatenate(d, reviews, vocab, max_tokens);
  for (const auto& [item, reviews] : d.item_reviews) d.item_tokens[item] = concatenate(d, reviews, vocab, max_tokens);
}

std::vector<SharedObject> align_shared(const std::map<std::string, std::vector<std::size_t>>& source,
                                       const std::map<std::string, std::vector<std::size_t>>& target,
                                       Rng& rng) {
  std::vector<SharedObject> shared;
  for (const auto& [id, s_reviews] : source) {
    auto t = target.find(id);
    if (t == target.end()) continue;
    SharedObject obj{id, s_reviews, t->second};
    const std::size_t keep = std::min(obj.source_reviews.size(), obj.target_reviews.size());
    for (auto* side : {&obj.source_reviews, &obj.target_reviews}) {
      if (side->size() > keep) {
        rng.shuffle(*side);
        side->resize(keep);
        std::sort(side->begin(), side->end());
      }
    }
    shared.push_back(std::move(obj));
  }
  return shared;
}

}  // namespace

DomainPairDataset assemble_pair(std::vector<ReviewRecord> source, std::vector<ReviewRecord> target,
                                const AssembleOptions& options) {
  if (!(options.train_fraction > 0.0 && options.valid_fraction >= 0.0 &&
        options.train_fraction + options.valid_fraction <= 1.0)) {
    throw ConfigError("split fractions must be positive and sum to at most 1");
  }
  if (options.max_tokens == 0) throw ConfigError("max_tokens must be positive");
  for (const auto& r : source) {
    if (!r.rating) throw DataError("source record (" + r.user_id + ", " + r.item_id + ") has no rating");
  }
  DomainPairDataset d;
  d.options = options;
  d.source.domain_label = 1;
  d.target.domain_label = 0;
  d.source.records = std::move(source);
  d.target.records = std::move(target);
  split_domain(d.source, options, 1);
  split_domain(d.target, options, 2);
  if (d.source.train.empty()) throw ConfigError("source domain has no training interactions");
  if (d.target.train.empty()) throw ConfigError("target domain has no training interactions");

  std::vector<std::string> texts;
  for (const DomainData* dom : {&d.source, &d.target}) {
    for (std::size_t i : dom->train) texts.push_back(dom->records[i].review_text);
  }
  d.vocab = Vocabulary::build(texts, options.min_count);
  encode_texts(d.source, d.vocab, options.max_tokens);
  encode_texts(d.target, d.vocab, options.max_tokens);

  Rng rng(derive_seed(options.seed, 3));
  d.shared_users = align_shared(d.source.user_reviews, d.target.user_reviews, rng);
  d.shared_items = align_shared(d.source.item_reviews, d.target.item_reviews, rng);
  return d;
}

namespace {

std::vector<double> feature_row(const DomainData& d, std::size_t record, const FeatureTable& features) {
  const auto& r = d.records[record];
  return features.at(r.image_feature_id.value_or(r.item_id));
}

models::ItemInput item_input(const DomainData& d, const std::vector<std::size_t>& first_records,
                             Modality modality, const FeatureTable* features) {
  models::ItemInput items;
  if (modality == Modality::text) {
    std::vector<std::vector<std::size_t>> seqs;
    for (std::size_t r : first_records) seqs.push_back(d.item_text(d.records[r].item_id));
    items.tokens = layers::TokenBatch::from_sequences(seqs);
  } else {
    if (!features || features->dim == 0) throw ConfigError("visual modality needs item features");
    std::vector<double> values;
    for (std::size_t r : first_records) {
      auto row = feature_row(d, r, *features);
      values.insert(values.end(), row.begin(), row.end());
    }
    items.features = Tensor(Shape{first_records.size(), features->dim}, std::move(values));
  }
  return items;
}

}  // namespace

std::vector<std::size_t> leaked_reviews(const DomainPairDataset& data, models::DomainKind side, Split split) {
  const DomainData& d = data.domain(side);
  auto contains = [](const std::vector<std::size_t>& hay, const std::vector<std::size_t>& needle) {
    return !needle.empty() && std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
  };
  std::vector<std::size_t> leaks;
  for (std::size_t k : d.split(split)) {
    const auto& r = d.records[k];
    const auto own = data.vocab.encode(r.review_text);
    if (contains(d.user_text(r.user_id), own) || contains(d.item_text(r.item_id), own)) leaks.push_back(k);
  }
  return leaks;
}

Batch make_batch(const DomainPairDataset& data, DomainKind side, std::span<const std::size_t> records,
                 Modality modality, const FeatureTable* features) {
  if (records.empty()) throw ArgumentError("make_batch: no records");
  const DomainData& d = data.domain(side);
  Batch b;
  std::map<std::string, std::size_t> user_slot, item_slot;
  std::vector<std::vector<std::size_t>> user_seqs;
  std::vector<std::size_t> item_first_record;
  for (std::size_t r : records) {
    const auto& rec = d.records.at(r);
    auto [u, u_new] = user_slot.emplace(rec.user_id, user_seqs.size());
    if (u_new) user_seqs.push_back(d.user_text(rec.user_id));
    auto [v, v_new] = item_slot.emplace(rec.item_id, item_first_record.size());
    if (v_new) item_first_record.push_back(r);
    b.input.user_rows.push_back(u->second);
    b.input.item_rows.push_back(v->second);
    b.records.push_back(r);
    if (rec.rating) b.ratings.push_back(*rec.rating);
    b.domain_labels.push_back(d.domain_label);
  }
  if (!b.ratings.empty() && b.ratings.size() != b.records.size()) b.ratings.clear();
  b.input.users = layers::TokenBatch::from_sequences(user_seqs);
  b.input.items = item_input(d, item_first_record, modality, features);
  return b;
}

std::vector<Batch> batches(const DomainPairDataset& data, DomainKind side, Split split,
                           std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                           Modality modality, const FeatureTable* features) {
  if (batch_size == 0) throw ArgumentError("batch size must be positive");
  std::vector<std::size_t> order = data.domain(side).split(split);
  Rng rng(derive_seed(seed, 1000 + 2 * epoch + (side == DomainKind::source ? 0 : 1)));
  rng.shuffle(order);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.push_back(make_batch(data, side, std::span(order).subspan(start, end - start), modality, features));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> shared_pairs(const DomainPairDataset& data, Level level) {
  if (level == Level::interaction) throw ArgumentError("shared_pairs: interaction level has no shared subset");
  const auto& shared = level == Level::user ? data.shared_items : data.shared_users;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& obj : shared) {
    for (std::size_t k = 0; k < obj.source_reviews.size(); ++k) {
      pairs.emplace_back(obj.source_reviews[k], obj.target_reviews[k]);
    }
  }
  return pairs;
}

LevelBatch make_level_batch(const DomainPairDataset& data, Level level,
                            std::span<const std::pair<std::size_t, std::size_t>> pairs,
                            Modality modality, const FeatureTable* features) {
  if (pairs.empty()) throw ArgumentError("make_level_batch: no pairs");
  LevelBatch b;
  b.level = level;
  b.rows = pairs.size();
  if (level == Level::user) {
    std::vector<std::vector<std::size_t>> s, t;
    for (auto [rs, rt] : pairs) {
      s.push_back(data.source.user_text(data.source.records.at(rs).user_id));
      t.push_back(data.target.user_text(data.target.records.at(rt).user_id));
    }
    b.source_users = layers::TokenBatch::from_sequences(s);
    b.target_users = layers::TokenBatch::from_sequences(t);
  } else {
    std::vector<std::size_t> s, t;
    for (auto [rs, rt] : pairs) {
      s.push_back(rs);
      t.push_back(rt);
    }
    b.source_items = item_input(data.source, s, modality, features);
    b.target_items = item_input(data.target, t, modality, features);
  }
  return b;
}

std::vector<LevelBatch> level_batches(const DomainPairDataset& data, Level level,
                                      std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                      std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                                      Modality modality, const FeatureTable* features) {
  if (batch_size == 0) throw ArgumentError("batch size must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> order(pairs.begin(), pairs.end());
  Rng rng(derive_seed(seed, 5000 + epoch));
  rng.shuffle(order);
  std::vector<LevelBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.push_back(make_level_batch(data, level, std::span(order).subspan(start, end - start), modality, features));
  }
  return out;
}

}  // namespace recdan::data
