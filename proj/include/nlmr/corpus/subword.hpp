#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nlmr/common.hpp"
#include "nlmr/corpus/corpus.hpp"
#include "nlmr/corpus/vocabulary.hpp"

namespace nlmr::corpus {

using MergePair = std::pair<std::string, std::string>;

// Byte-pair-merge codec over UTF-8 code points.
//
// Text is cut into chunks that start at every whitespace character ("ab cd"
// -> "ab", " cd"); merges never cross a chunk boundary. Decoding concatenates
// symbol strings, so decode(encode(x)) == x for any x over the alphabet.
class SubwordCodec {
 public:
  /// Greedy highest-frequency pair merging; ties break on (left, right)
  /// byte-wise order. Stops early when no pair is left.
  static SubwordCodec Train(std::span<const std::string> lines, std::size_t num_merges);

  SubwordCodec(std::vector<std::string> alphabet, std::vector<MergePair> merges);

  static SubwordCodec Read(const std::filesystem::path& path);
  void Write(const std::filesystem::path& path) const;

  std::vector<TokenId> Encode(std::string_view text) const;
  /// Throws DataError on an id outside the symbol table.
  std::string Decode(std::span<const TokenId> ids) const;

  std::span<const std::string> alphabet() const { return alphabet_; }
  std::span<const MergePair> merges() const { return merges_; }
  /// Symbol strings by id: alphabet first, then merge products in merge order.
  std::span<const std::string> symbols() const { return symbols_; }
  std::size_t size() const { return symbols_.size(); }

 private:
  void EncodeChunk(std::string_view chunk, std::vector<TokenId>& out) const;

  std::vector<std::string> alphabet_;
  std::vector<MergePair> merges_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> symbol_ids_;
  // (left id, right id) -> (merge rank, product id)
  std::unordered_map<std::uint64_t, std::pair<std::size_t, TokenId>> merge_rank_;
};

/// Splits UTF-8 text into code points (invalid bytes become single-byte units).
std::vector<std::string> SplitCodePoints(std::string_view text);

/// Word-model view of a codec: reserved entries at ids 0..4, then codec
/// symbol i at id 5 + i.
Vocabulary SubwordVocabulary(const SubwordCodec& codec);
inline constexpr TokenId kSubwordIdOffset = 5;

/// Framed subword sentence: <s>, codec ids shifted by kSubwordIdOffset, </s>.
Sentence TokenizeSubwords(std::string_view text, const SubwordCodec& codec);
Corpus MakeSubwordCorpus(std::string name, std::span<const std::string> lines, const SubwordCodec& codec);

}  // namespace nlmr::corpus
