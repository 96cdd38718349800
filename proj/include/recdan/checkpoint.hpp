#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recdan/models.hpp"
#include "recdan/text.hpp"

namespace recdan::io {

inline constexpr int kCheckpointFormat = 1;

/// A directory holding manifest.json and one little-endian float32 file per
/// tensor. Parameters are cast from double on save.
struct Checkpoint {
  models::DanModel model;
  data::Vocabulary vocab;
  std::string phase;  // "source", "adapt" or "finetune"
  models::DanVariant variant = models::DanVariant::ui;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 500;  // text truncation used when the model was trained
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
/// Throws DataError on a missing or inconsistent checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Hex SHA-256 over names, shapes and the raw double values of the tensors.
std::string parameter_digest(const std::vector<NamedTensor>& params);

}  // namespace recdan::io
