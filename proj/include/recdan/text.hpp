#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace recdan::data {

/// Lowercase (ASCII), drop punctuation, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// Token <-> index map. Index 0 is PAD and 1 is UNK; the remaining tokens are
/// ordered by descending training frequency, ties broken lexicographically.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();
  /// Keeps tokens seen at least `min_count` times across `texts`.
  static Vocabulary build(const std::vector<std::string>& texts, std::size_t min_count);
  /// Rebuilds a vocabulary from its full token list (PAD and UNK included).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }
  std::size_t index(const std::string& token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool contains(const std::string& token) const { return lookup_.count(token) != 0; }

  std::vector<std::size_t> encode(std::string_view text) const;
  std::string decode(const std::vector<std::size_t>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::size_t min_count_ = 1;
};

}  // namespace recdan::data
