#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "recdan/data.hpp"

namespace recdan::io {

/// Inputs of a prepared domain pair as stored on disk. Reassembling them with
/// the stored options reproduces the same splits and vocabulary.
struct PreparedData {
  std::vector<data::ReviewRecord> source;
  std::vector<data::ReviewRecord> target;
  std::optional<data::FeatureTable> features;
  std::optional<data::LabelTable> labels;  // sealed target ratings
  data::AssembleOptions options;
};

/// Writes source.jsonl, target.jsonl, optional features.jsonl / labels.jsonl,
/// dataset.json (options and counts), splits.json and vocab.txt. Returns the
/// assembled pair.
data::DomainPairDataset save_prepared(const std::filesystem::path& dir, const PreparedData& prepared);

/// Throws DataError when the directory is not a prepared dataset.
PreparedData load_prepared(const std::filesystem::path& dir);

data::DomainPairDataset assemble(const PreparedData& prepared);

}  // namespace recdan::io
