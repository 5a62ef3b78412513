#include "nlmr/corpus/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "nlmr/corpus/corpus.hpp"

namespace nlmr::corpus {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    auto [it, inserted] = index_.emplace(words_[i], static_cast<TokenId>(i));
    if (!inserted) throw DataError("vocabulary: duplicate entry '" + words_[i] + "'");
  }
  auto require = [&](std::string_view w) {
    auto id = Find(w);
    if (!id) throw DataError("vocabulary: missing required entry " + std::string(w));
    return *id;
  };
  unk_ = require(kUnk);
  bos_ = require(kBos);
  eos_ = require(kEos);
  class_open_ = Find(kClassOpen);
  class_close_ = Find(kClassClose);
  if (class_open_.has_value() != class_close_.has_value()) {
    throw DataError("vocabulary: <class> and </class> must both be present or both absent");
  }
}

Vocabulary Vocabulary::Read(const std::filesystem::path& path) {
  auto lines = ReadLines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return Vocabulary(std::move(lines));
}

void Vocabulary::Write(const std::filesystem::path& path) const { WriteLines(path, words_); }

const std::string& Vocabulary::Word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::Find(std::string_view word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::Lookup(std::string_view word) const { return Find(word).value_or(unk_); }

bool Vocabulary::ContainsWord(std::string_view word) const {
  return !IsReservedWord(word) && index_.find(word) != index_.end();
}

bool Vocabulary::IsReserved(TokenId id) const {
  return id == unk_ || id == bos_ || id == eos_ || id == class_open_ || id == class_close_;
}

bool IsReservedWord(std::string_view word) {
  return word == kUnk || word == kBos || word == kEos || word == kClassOpen || word == kClassClose;
}

std::vector<std::string> ReservedWords() {
  return {std::string(kUnk), std::string(kBos), std::string(kEos), std::string(kClassOpen),
          std::string(kClassClose)};
}

Vocabulary BuildVocab(std::span<const std::string> lines, std::size_t size_limit) {
  if (size_limit < 1) throw Error("build_vocab: size_limit must be >= 1");
  std::map<std::string, std::size_t, std::less<>> counts;
  for (const auto& line : lines) {
    for (auto& w : SplitWords(line)) {
      if (IsReservedWord(w)) continue;
      ++counts[w];
    }
  }
  if (counts.empty()) throw DataError("empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic; stable sort keeps that order on ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > size_limit) ranked.resize(size_limit);

  auto words = ReservedWords();
  for (auto& [w, _] : ranked) words.push_back(w);
  return Vocabulary(std::move(words));
}

}  // namespace nlmr::corpus
