#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlmr/common.hpp"
#include "nlmr/corpus/vocabulary.hpp"

namespace nlmr::corpus {

using Sentence = std::vector<TokenId>;

/// A tokenized corpus. Every sentence is framed <s> ... </s>.
struct Corpus {
  std::string name;
  std::vector<Sentence> sentences;
  /// Predicted events: every token except the leading <s>.
  std::size_t word_count = 0;

  bool empty() const { return sentences.empty(); }
};

/// Whitespace split; no normalization.
std::vector<std::string> SplitWords(std::string_view text);

/// One sentence per line (trailing '\r' stripped, blank lines kept).
std::vector<std::string> ReadLines(const std::filesystem::path& path);
void WriteLines(const std::filesystem::path& path, std::span<const std::string> lines);

/// Maps words to ids (OOV -> <unk>) and adds <s>/</s> framing.
Sentence Tokenize(std::string_view text, const Vocabulary& vocab);

Corpus MakeCorpus(std::string name, std::span<const std::string> lines, const Vocabulary& vocab);
Corpus MakeCorpus(std::string name, std::vector<Sentence> sentences);

/// Joins the words of a framed sentence, dropping <s>/</s>.
std::string Detokenize(std::span<const TokenId> sentence, const Vocabulary& vocab);

}  // namespace nlmr::corpus
