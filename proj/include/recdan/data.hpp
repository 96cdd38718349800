#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "recdan/models.hpp"
#include "recdan/text.hpp"

namespace recdan::data {

struct ReviewRecord {
  std::string user_id;
  std::string item_id;
  std::optional<double> rating;  // absent for unlabeled target data
  std::string review_text;
  std::optional<std::string> image_feature_id;
};

/// canonical: user_id/item_id/rating/review_text[/image_feature_id];
/// amazon: reviewerID/asin/overall/reviewText.
enum class Schema { canonical, amazon };
Schema parse_schema(const std::string& s);

struct CorpusStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t samples = 0;
};

struct IngestResult {
  std::vector<ReviewRecord> records;
  CorpusStats stats;
};

CorpusStats corpus_stats(const std::vector<ReviewRecord>& records);

/// Parses JSON Lines. Blank lines are skipped. Errors name the line number.
IngestResult ingest_reviews(std::istream& in, const std::string& source_name, Schema schema,
                            bool require_rating = true);
IngestResult ingest_reviews(const std::string& path, Schema schema, bool require_rating = true);

/// Canonical JSON Lines, keys in the documented order. Ratings are written
/// only when present.
void write_reviews(std::ostream& out, const std::vector<ReviewRecord>& records);

/// item (or image feature) id -> feature vector of uniform width.
struct FeatureTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> rows;

  const std::vector<double>& at(const std::string& id) const;
};

FeatureTable feature_ingest(std::istream& in, const std::string& source_name);
FeatureTable feature_ingest(const std::string& path);
void write_features(std::ostream& out, const FeatureTable& table);

/// Sealed ratings keyed by (user_id, item_id).
using LabelTable = std::map<std::pair<std::string, std::string>, double>;
LabelTable read_labels(std::istream& in, const std::string& source_name);
LabelTable read_labels(const std::string& path);
void write_labels(std::ostream& out, const std::vector<ReviewRecord>& labeled);

enum class Split { train, valid, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct AssembleOptions {
  std::uint64_t seed = 0;
  std::size_t min_count = 5;
  std::size_t max_tokens = 500;
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
};

struct DomainData {
  int domain_label = 1;  // 1 source, 0 target
  std::vector<ReviewRecord> records;
  std::vector<std::size_t> train, valid, test;  // record indices
  /// Training review indices per user / item, in record order.
  std::map<std::string, std::vector<std::size_t>> user_reviews, item_reviews;
  /// Encoded concatenation of a user's / item's training reviews, truncated.
  std::map<std::string, std::vector<std::size_t>> user_tokens, item_tokens;

  const std::vector<std::size_t>& split(Split s) const;
  /// Tokens for a user or item; [UNK] when it has no training reviews.
  std::vector<std::size_t> user_text(const std::string& user_id) const;
  std::vector<std::size_t> item_text(const std::string& item_id) const;
};

/// A shared user or item with equally many training reviews drawn from each
/// domain (the larger side is down-sampled).
struct SharedObject {
  std::string id;
  std::vector<std::size_t> source_reviews;
  std::vector<std::size_t> target_reviews;
};

struct DomainPairDataset {
  AssembleOptions options;
  Vocabulary vocab;
  DomainData source;
  DomainData target;
  std::vector<SharedObject> shared_users;
  std::vector<SharedObject> shared_items;

  const DomainData& domain(models::DomainKind k) const {
    return k == models::DomainKind::source ? source : target;
  }
};

DomainPairDataset assemble_pair(std::vector<ReviewRecord> source, std::vector<ReviewRecord> target,
                                const AssembleOptions& options);

/// Records of a split whose own encoded review occurs as a contiguous run in
/// the user or item text the model sees for that record. Zero for a sound
/// pipeline on the valid and test splits.
std::vector<std::size_t> leaked_reviews(const DomainPairDataset& data, models::DomainKind side, Split split);

/// Rows of one domain ready for the model.
struct Batch {
  models::ModelInput input;
  std::vector<std::size_t> records;  // indices into the domain's records
  std::vector<double> ratings;       // empty for unlabeled rows
  std::vector<int> domain_labels;
};

/// Builds the model input for the given records. `features` is required for
/// the visual modality and ignored otherwise.
Batch make_batch(const DomainPairDataset& data, models::DomainKind side,
                 std::span<const std::size_t> records, models::Modality modality,
                 const FeatureTable* features = nullptr);

/// One epoch of batches over a split: shuffled with (seed, epoch), last
/// partial batch kept.
std::vector<Batch> batches(const DomainPairDataset& data, models::DomainKind side, Split split,
                           std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                           models::Modality modality, const FeatureTable* features = nullptr);

/// Paired source/target inputs for the feature-level discriminators. For the
/// user level the rows come from shared items (source reviewer vs. target
/// reviewer of the same item); for the item level from shared users.
struct LevelBatch {
  models::Level level = models::Level::user;
  layers::TokenBatch source_users, target_users;
  models::ItemInput source_items, target_items;
  std::size_t rows = 0;
};

/// Pairs (source record, target record) of the shared subset feeding a level.
std::vector<std::pair<std::size_t, std::size_t>> shared_pairs(const DomainPairDataset& data,
                                                              models::Level level);

LevelBatch make_level_batch(const DomainPairDataset& data, models::Level level,
                            std::span<const std::pair<std::size_t, std::size_t>> pairs,
                            models::Modality modality, const FeatureTable* features = nullptr);

std::vector<LevelBatch> level_batches(const DomainPairDataset& data, models::Level level,
                                      std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                      std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                                      models::Modality modality, const FeatureTable* features = nullptr);

}  // namespace recdan::data
