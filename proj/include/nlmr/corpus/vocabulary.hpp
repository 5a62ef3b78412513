#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nlmr/common.hpp"

namespace nlmr::corpus {

inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kClassOpen = "<class>";
inline constexpr std::string_view kClassClose = "</class>";

/// Closed word list. Ids are dense and bijective with words; any string not
/// in the list looks up as <unk>.
class Vocabulary {
 public:
  /// Validates uniqueness and the presence of <unk>, <s>, </s>.
  explicit Vocabulary(std::vector<std::string> words);

  static Vocabulary Read(const std::filesystem::path& path);
  void Write(const std::filesystem::path& path) const;

  std::size_t size() const { return words_.size(); }
  std::span<const std::string> words() const { return words_; }
  const std::string& Word(TokenId id) const;

  /// Id of `word`, or unk() when absent.
  TokenId Lookup(std::string_view word) const;
  std::optional<TokenId> Find(std::string_view word) const;

  /// True for ordinary (non-reserved) entries of the list.
  bool ContainsWord(std::string_view word) const;
  bool IsReserved(TokenId id) const;

  TokenId unk() const { return unk_; }
  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  std::optional<TokenId> class_open() const { return class_open_; }
  std::optional<TokenId> class_close() const { return class_close_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> index_;
  TokenId unk_ = 0;
  TokenId bos_ = 0;
  TokenId eos_ = 0;
  std::optional<TokenId> class_open_;
  std::optional<TokenId> class_close_;
};

/// True for <unk>, <s>, </s>, <class>, </class>.
bool IsReservedWord(std::string_view word);

/// The reserved entries in their canonical id order (0..4).
std::vector<std::string> ReservedWords();

/// Reserved entries followed by the `size_limit` most frequent words of
/// `lines` (whitespace-split). Frequency ties break by byte-wise string order.
/// Throws DataError("empty corpus") when `lines` contain no words.
Vocabulary BuildVocab(std::span<const std::string> lines, std::size_t size_limit);

}  // namespace nlmr::corpus
