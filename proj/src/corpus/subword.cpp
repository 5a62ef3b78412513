#include "nlmr/corpus/subword.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace nlmr::corpus {

namespace {

std::uint64_t PairKey(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

bool IsSpaceCodePoint(std::string_view cp) {
  return cp.size() == 1 && (cp[0] == ' ' || cp[0] == '\t' || cp[0] == '\n' || cp[0] == '\r' ||
                            cp[0] == '\f' || cp[0] == '\v');
}

// Chunks start at each whitespace code point.
std::vector<std::vector<std::string>> Chunks(std::string_view text) {
  std::vector<std::vector<std::string>> chunks;
  for (auto& cp : SplitCodePoints(text)) {
    if (chunks.empty() || IsSpaceCodePoint(cp)) chunks.emplace_back();
    chunks.back().push_back(std::move(cp));
  }
  return chunks;
}

std::string Escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case ' ': out += "\\s"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string Unescape(std::string_view s, const std::string& source, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw ParseError(source, line, "dangling escape");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 's': out += ' '; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: throw ParseError(source, line, "unknown escape");
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> SplitCodePoints(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

SubwordCodec SubwordCodec::Train(std::span<const std::string> lines, std::size_t num_merges) {
  std::map<std::string, std::size_t> chunk_counts;
  std::set<std::string> alphabet;
  for (const auto& line : lines) {
    for (auto& chunk : Chunks(line)) {
      std::string joined;
      for (auto& cp : chunk) {
        alphabet.insert(cp);
        joined += cp;
      }
      ++chunk_counts[joined];
    }
  }
  if (chunk_counts.empty()) throw DataError("empty corpus");

  std::vector<std::string> symbols(alphabet.begin(), alphabet.end());
  std::unordered_map<std::string, TokenId> ids;
  for (std::size_t i = 0; i < symbols.size(); ++i) ids[symbols[i]] = static_cast<TokenId>(i);

  struct Piece {
    std::vector<TokenId> seq;
    std::size_t count;
  };
  std::vector<Piece> pieces;
  for (const auto& [chunk, count] : chunk_counts) {
    Piece p{{}, count};
    for (auto& cp : SplitCodePoints(chunk)) p.seq.push_back(ids.at(cp));
    pieces.push_back(std::move(p));
  }

  std::vector<MergePair> merges;
  std::unordered_map<std::uint64_t, std::size_t> pair_counts;
  for (std::size_t m = 0; m < num_merges; ++m) {
    pair_counts.clear();
    for (const auto& p : pieces) {
      for (std::size_t i = 0; i + 1 < p.seq.size(); ++i) pair_counts[PairKey(p.seq[i], p.seq[i + 1])] += p.count;
    }
    if (pair_counts.empty()) break;

    std::uint64_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [key, count] : pair_counts) {
      if (count < best_count) continue;
      if (count == best_count) {
        const auto& l = symbols[key >> 32];
        const auto& r = symbols[key & 0xffffffffu];
        const auto& bl = symbols[best >> 32];
        const auto& br = symbols[best & 0xffffffffu];
        if (std::tie(l, r) >= std::tie(bl, br)) continue;
      }
      best = key;
      best_count = count;
    }
    const auto left = static_cast<TokenId>(best >> 32);
    const auto right = static_cast<TokenId>(best & 0xffffffffu);
    const std::string product = symbols[left] + symbols[right];
    TokenId product_id;
    if (auto it = ids.find(product); it != ids.end()) {
      product_id = it->second;
    } else {
      product_id = static_cast<TokenId>(symbols.size());
      symbols.push_back(product);
      ids.emplace(product, product_id);
    }
    merges.emplace_back(symbols[left], symbols[right]);

    for (auto& p : pieces) {
      std::vector<TokenId> merged;
      merged.reserve(p.seq.size());
      for (std::size_t i = 0; i < p.seq.size(); ++i) {
        if (i + 1 < p.seq.size() && p.seq[i] == left && p.seq[i + 1] == right) {
          merged.push_back(product_id);
          ++i;
        } else {
          merged.push_back(p.seq[i]);
        }
      }
      p.seq = std::move(merged);
    }
  }
  return SubwordCodec(std::vector<std::string>(alphabet.begin(), alphabet.end()), std::move(merges));
}

SubwordCodec::SubwordCodec(std::vector<std::string> alphabet, std::vector<MergePair> merges)
    : alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
  for (const auto& a : alphabet_) {
    if (SplitCodePoints(a).size() != 1) throw DataError("subword codec: alphabet entry is not one character");
    if (!symbol_ids_.emplace(a, static_cast<TokenId>(symbols_.size())).second) {
      throw DataError("subword codec: duplicate alphabet entry");
    }
    symbols_.push_back(a);
  }
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& [l, r] = merges_[rank];
    auto li = symbol_ids_.find(l);
    auto ri = symbol_ids_.find(r);
    if (li == symbol_ids_.end() || ri == symbol_ids_.end()) {
      throw DataError("subword codec: merge " + std::to_string(rank) + " uses an unknown symbol");
    }
    const std::string product = l + r;
    auto [pi, inserted] = symbol_ids_.emplace(product, static_cast<TokenId>(symbols_.size()));
    if (inserted) symbols_.push_back(product);
    // First occurrence of a pair wins; a repeated pair can never fire again.
    merge_rank_.emplace(PairKey(li->second, ri->second), std::make_pair(rank, pi->second));
  }
}

void SubwordCodec::EncodeChunk(std::string_view chunk, std::vector<TokenId>& out) const {
  std::vector<TokenId> seq;
  for (const auto& cp : SplitCodePoints(chunk)) {
    auto it = symbol_ids_.find(cp);
    if (it == symbol_ids_.end() || static_cast<std::size_t>(it->second) >= alphabet_.size()) {
      throw DataError("subword encode: character '" + cp + "' is not in the codec alphabet");
    }
    seq.push_back(it->second);
  }
  // Apply the lowest-rank applicable merge everywhere, repeat.
  while (seq.size() > 1) {
    std::size_t best_rank = SIZE_MAX;
    TokenId best_product = -1;
    TokenId best_l = -1, best_r = -1;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      auto it = merge_rank_.find(PairKey(seq[i], seq[i + 1]));
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_product = it->second.second;
        best_l = seq[i];
        best_r = seq[i + 1];
      }
    }
    if (best_product < 0) break;
    std::vector<TokenId> merged;
    merged.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i + 1 < seq.size() && seq[i] == best_l && seq[i + 1] == best_r) {
        merged.push_back(best_product);
        ++i;
      } else {
        merged.push_back(seq[i]);
      }
    }
    seq = std::move(merged);
  }
  out.insert(out.end(), seq.begin(), seq.end());
}

std::vector<TokenId> SubwordCodec::Encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= text.size(); ++i) {
    if (i == text.size() || IsSpaceCodePoint(text.substr(i, 1))) {
      EncodeChunk(text.substr(start, i - start), out);
      start = i;
    }
  }
  return out;
}

std::string SubwordCodec::Decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
      throw DataError("subword decode: unknown id " + std::to_string(id));
    }
    out += symbols_[static_cast<std::size_t>(id)];
  }
  return out;
}

void SubwordCodec::Write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "#subword-codec 1\n#alphabet " << alphabet_.size() << '\n';
  for (const auto& a : alphabet_) out << Escape(a) << '\n';
  out << "#merges " << merges_.size() << '\n';
  for (const auto& [l, r] : merges_) out << Escape(l) << ' ' << Escape(r) << '\n';
}

SubwordCodec SubwordCodec::Read(const std::filesystem::path& path) {
  const auto lines = ReadLines(path);
  const std::string src = path.string();
  std::size_t ln = 0;
  auto next = [&]() -> const std::string& {
    if (ln >= lines.size()) throw ParseError(src, ln, "unexpected end of file");
    return lines[ln++];
  };
  if (next() != "#subword-codec 1") throw ParseError(src, 1, "missing '#subword-codec 1' header");
  auto count_after = [&](std::string_view tag) {
    const std::string& l = next();
    if (l.rfind(tag, 0) != 0) throw ParseError(src, ln, "expected " + std::string(tag));
    try {
      return static_cast<std::size_t>(std::stoull(l.substr(tag.size())));
    } catch (const std::exception&) {
      throw ParseError(src, ln, "bad count");
    }
  };
  const std::size_t n_alpha = count_after("#alphabet ");
  std::vector<std::string> alphabet;
  for (std::size_t i = 0; i < n_alpha; ++i) {
    const std::string& l = next();
    alphabet.push_back(Unescape(l, src, ln));
  }
  const std::size_t n_merges = count_after("#merges ");
  std::vector<MergePair> merges;
  for (std::size_t i = 0; i < n_merges; ++i) {
    const std::string& l = next();
    const auto sp = l.find(' ');
    if (sp == std::string::npos) throw ParseError(src, ln, "merge line needs two symbols");
    merges.emplace_back(Unescape(std::string_view(l).substr(0, sp), src, ln),
                        Unescape(std::string_view(l).substr(sp + 1), src, ln));
  }
  return SubwordCodec(std::move(alphabet), std::move(merges));
}

Vocabulary SubwordVocabulary(const SubwordCodec& codec) {
  auto words = ReservedWords();
  for (const auto& s : codec.symbols()) {
    if (IsReservedWord(s)) throw DataError("subword symbol collides with reserved token " + s);
    words.push_back(s);
  }
  return Vocabulary(std::move(words));
}

Sentence TokenizeSubwords(std::string_view text, const SubwordCodec& codec) {
  Sentence s;
  s.push_back(1);  // <s>
  for (TokenId id : codec.Encode(text)) s.push_back(id + kSubwordIdOffset);
  s.push_back(2);  // </s>
  return s;
}

Corpus MakeSubwordCorpus(std::string name, std::span<const std::string> lines, const SubwordCodec& codec) {
  std::vector<Sentence> sentences;
  sentences.reserve(lines.size());
  for (const auto& l : lines) sentences.push_back(TokenizeSubwords(l, codec));
  return MakeCorpus(std::move(name), std::move(sentences));
}

}  // namespace nlmr::corpus
