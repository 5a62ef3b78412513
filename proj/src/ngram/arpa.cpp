#include "nlmr/ngram/arpa.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nlmr/corpus/corpus.hpp"

namespace nlmr::ngram {

namespace {

std::string FormatLog(double v) {
  char buf[64];
  if (v <= kLog10Zero) v = kLog10Zero;
  std::snprintf(buf, sizeof buf, "%.7f", v);
  return buf;
}

double ParseDouble(const std::string& s, const std::string& src, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(src, line, "bad number '" + s + "'");
  return v;
}

}  // namespace

void WriteArpa(const NGramModel& model, std::ostream& out) {
  const auto& vocab = model.vocab();
  out << "\\data\\\n";
  for (int n = 1; n <= model.order(); ++n) out << "ngram " << n << "=" << model.Count(n) << "\n";
  for (int n = 1; n <= model.order(); ++n) {
    out << "\n\\" << n << "-grams:\n";
    const bool with_backoff = n < model.order();
    for (const auto& g : model.SortedNGrams(n)) {
      const NGramEntry* e = model.Find(g);
      out << FormatLog(e->log10_prob) << '\t';
      for (std::size_t i = 0; i < g.size(); ++i) out << (i ? " " : "") << vocab.Word(g[i]);
      if (with_backoff) out << '\t' << FormatLog(e->log10_backoff);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

void WriteArpa(const NGramModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  WriteArpa(model, out);
  if (!out) throw DataError("write failed: " + path.string());
}

NGramModel ReadArpa(std::istream& in, const std::string& src) {
  std::string line;
  std::size_t ln = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  auto skip_blank = [&]() -> bool {
    while (next_line()) {
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  // Header.
  bool found = false;
  while (next_line()) {
    if (line == "\\data\\") {
      found = true;
      break;
    }
  }
  if (!found) throw ParseError(src, ln, "missing \\data\\ header");
  std::vector<std::size_t> declared;
  while (skip_blank()) {
    if (line.rfind("ngram ", 0) != 0) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(src, ln, "malformed ngram count line");
    int n = 0;
    std::size_t count = 0;
    try {
      n = std::stoi(line.substr(6, eq - 6));
      count = std::stoull(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw ParseError(src, ln, "malformed ngram count line");
    }
    if (n != static_cast<int>(declared.size()) + 1) throw ParseError(src, ln, "ngram counts out of order");
    declared.push_back(count);
  }
  if (declared.empty()) throw ParseError(src, ln, "no ngram counts in \\data\\ section");
  if (declared.size() > static_cast<std::size_t>(kMaxOrder)) throw ParseError(src, ln, "order exceeds 5");
  const int order = static_cast<int>(declared.size());

  struct RawEntry {
    std::vector<std::string> words;
    double prob;
    double backoff;
  };
  std::vector<std::vector<RawEntry>> sections(declared.size());
  // `line` now holds the first section header (or something unexpected).
  for (int n = 1; n <= order; ++n) {
    const std::string header = "\\" + std::to_string(n) + "-grams:";
    if (line != header) throw ParseError(src, ln, "expected " + header);
    auto& entries = sections[n - 1];
    while (skip_blank()) {
      if (!line.empty() && line[0] == '\\') break;
      std::istringstream fields(line);
      std::string tok;
      std::vector<std::string> toks;
      while (fields >> tok) toks.push_back(tok);
      const std::size_t need = 1 + static_cast<std::size_t>(n);
      if (toks.size() != need && toks.size() != need + 1) {
        throw ParseError(src, ln, header + " entry needs " + std::to_string(n) + " words");
      }
      RawEntry e;
      e.prob = ParseDouble(toks[0], src, ln);
      e.words.assign(toks.begin() + 1, toks.begin() + static_cast<long>(need));
      e.backoff = toks.size() == need + 1 ? ParseDouble(toks[need], src, ln) : 0.0;
      entries.push_back(std::move(e));
    }
    if (entries.size() != declared[n - 1]) {
      throw ParseError(src, ln,
                       header + " section has " + std::to_string(entries.size()) + " entries but header declares " +
                           std::to_string(declared[n - 1]));
    }
  }
  if (line != "\\end\\") throw ParseError(src, ln, "missing \\end\\");

  std::vector<std::string> words;
  bool has_unk = false;
  for (const auto& e : sections[0]) {
    words.push_back(e.words[0]);
    if (e.words[0] == corpus::kUnk) has_unk = true;
  }
  if (!has_unk) words.emplace_back(corpus::kUnk);
  std::shared_ptr<const corpus::Vocabulary> vocab;
  try {
    vocab = std::make_shared<const corpus::Vocabulary>(std::move(words));
  } catch (const DataError& err) {
    throw ParseError(src, ln, std::string("unigram section: ") + err.what());
  }

  NGramModel model(vocab, order);
  if (!has_unk) {
    const TokenId unk[1] = {vocab->unk()};
    model.Set(unk, {kLog10Zero, 0.0});
  }
  for (int n = 1; n <= order; ++n) {
    std::vector<TokenId> ids(static_cast<std::size_t>(n));
    for (const auto& e : sections[n - 1]) {
      for (int i = 0; i < n; ++i) {
        auto id = vocab->Find(e.words[i]);
        if (!id) throw ParseError(src, ln, "word '" + e.words[i] + "' missing from unigram section");
        ids[i] = *id;
      }
      model.Set(ids, {e.prob, e.backoff});
    }
  }
  return model;
}

NGramModel ReadArpa(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return ReadArpa(in, path.string());
}

}  // namespace nlmr::ngram
