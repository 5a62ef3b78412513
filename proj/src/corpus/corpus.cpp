#include "nlmr/corpus/corpus.hpp"

#include <fstream>

namespace nlmr::corpus {

namespace {

bool IsSpace(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> SplitWords(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && IsSpace(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !IsSpace(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void WriteLines(const std::filesystem::path& path, std::span<const std::string> lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

Sentence Tokenize(std::string_view text, const Vocabulary& vocab) {
  Sentence ids;
  ids.push_back(vocab.bos());
  for (const auto& w : SplitWords(text)) ids.push_back(vocab.Lookup(w));
  ids.push_back(vocab.eos());
  return ids;
}

Corpus MakeCorpus(std::string name, std::span<const std::string> lines, const Vocabulary& vocab) {
  std::vector<Sentence> sentences;
  sentences.reserve(lines.size());
  for (const auto& l : lines) sentences.push_back(Tokenize(l, vocab));
  return MakeCorpus(std::move(name), std::move(sentences));
}

Corpus MakeCorpus(std::string name, std::vector<Sentence> sentences) {
  Corpus c;
  c.name = std::move(name);
  for (const auto& s : sentences) {
    if (s.size() < 2) throw DataError("corpus " + c.name + ": sentence without <s>/</s> framing");
    c.word_count += s.size() - 1;
  }
  c.sentences = std::move(sentences);
  return c;
}

std::string Detokenize(std::span<const TokenId> sentence, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : sentence) {
    if (id == vocab.bos() || id == vocab.eos()) continue;
    if (!out.empty()) out += ' ';
    out += vocab.Word(id);
  }
  return out;
}

}  // namespace nlmr::corpus
