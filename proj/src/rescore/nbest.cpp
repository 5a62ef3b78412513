#include "nlmr/rescore/nbest.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "nlmr/corpus/vocabulary.hpp"

namespace nlmr::rescore {

using json = nlohmann::json;

std::vector<bool> Hypothesis::InClass() const {
  std::vector<bool> in(words.size(), false);
  if (tag_error) return in;
  for (const auto& [b, e] : class_spans) {
    for (std::size_t i = b; i < e; ++i) in[i] = true;
  }
  return in;
}

double Hypothesis::FirstPassLm() const { return std::accumulate(lm_logprobs.begin(), lm_logprobs.end(), 0.0); }

void DeriveSpans(Hypothesis& hyp) {
  hyp.words.clear();
  hyp.class_spans.clear();
  hyp.tag_error.reset();
  std::optional<std::size_t> open;
  bool inline_tags = false;
  for (const auto& t : hyp.tokens) {
    if (t == corpus::kClassOpen) {
      inline_tags = true;
      if (open) {
        hyp.tag_error = "nested <class> tag";
      } else {
        open = hyp.words.size();
      }
    } else if (t == corpus::kClassClose) {
      inline_tags = true;
      if (!open) {
        hyp.tag_error = "</class> without <class>";
      } else {
        hyp.class_spans.emplace_back(*open, hyp.words.size());
        open.reset();
      }
    } else {
      hyp.words.push_back(t);
    }
  }
  if (open && !hyp.tag_error) hyp.tag_error = "unterminated <class> tag";
  if (hyp.explicit_spans) {
    if (inline_tags) {
      hyp.tag_error = "both inline tags and class_spans given";
    } else {
      hyp.class_spans = *hyp.explicit_spans;
      std::size_t prev_end = 0;
      for (const auto& [b, e] : hyp.class_spans) {
        if (b > e || e > hyp.words.size() || b < prev_end) {
          hyp.tag_error = "class_spans out of range or overlapping";
          break;
        }
        prev_end = e;
      }
    }
  }
  if (hyp.tag_error) hyp.class_spans.clear();
}

void Validate(const NBestList& list) {
  const std::string where = "utterance '" + list.utt_id + "'";
  if (list.hyps.empty()) throw DataError(where + ": empty n-best list");
  for (std::size_t i = 0; i < list.hyps.size(); ++i) {
    const auto& h = list.hyps[i];
    const std::string hw = where + " hypothesis " + std::to_string(i + 1);
    if (h.lm_logprobs.size() != h.words.size()) {
      throw DataError(hw + ": " + std::to_string(h.lm_logprobs.size()) + " lm_logprobs for " +
                      std::to_string(h.words.size()) + " words");
    }
    if (std::abs(h.acoustic + h.FirstPassLm() - h.total) > 1e-4) {
      throw DataError(hw + ": total does not equal acoustic + sum(lm_logprobs)");
    }
    if (i > 0 && h.total > list.hyps[i - 1].total + 1e-9) {
      throw DataError(hw + ": hypotheses are not in first-pass rank order");
    }
  }
}

NBestList ParseNBest(const std::string& json_line, const std::string& source, std::size_t line) {
  try {
    const auto j = json::parse(json_line);
    NBestList list;
    list.utt_id = j.at("utt_id").get<std::string>();
    for (const auto& jh : j.at("hyps")) {
      Hypothesis h;
      h.tokens = jh.at("words").get<std::vector<std::string>>();
      if (jh.contains("class_spans")) {
        std::vector<Span> spans;
        for (const auto& s : jh.at("class_spans")) spans.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
        h.explicit_spans = std::move(spans);
      }
      h.lm_logprobs = jh.at("lm_logprobs").get<std::vector<double>>();
      h.acoustic = jh.at("acoustic").get<double>();
      h.total = jh.at("total").get<double>();
      DeriveSpans(h);
      h.first_pass_rank = list.hyps.size() + 1;
      list.hyps.push_back(std::move(h));
    }
    Validate(list);
    return list;
  } catch (const json::exception& e) {
    throw ParseError(source, line, std::string("bad n-best record: ") + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const DataError& e) {
    throw ParseError(source, line, e.what());
  }
}

std::vector<NBestList> ReadNBestFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<NBestList> lists;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lists.push_back(ParseNBest(line, path.string(), n));
  }
  return lists;
}

std::string FormatNBest(const NBestList& list, bool with_scores) {
  json j;
  j["utt_id"] = list.utt_id;
  json hyps = json::array();
  for (const auto& h : list.hyps) {
    json jh;
    jh["words"] = h.tokens;
    if (h.explicit_spans) {
      json spans = json::array();
      for (const auto& [b, e] : *h.explicit_spans) spans.push_back({b, e});
      jh["class_spans"] = spans;
    }
    jh["lm_logprobs"] = h.lm_logprobs;
    jh["acoustic"] = h.acoustic;
    jh["total"] = h.total;
    if (with_scores) {
      jh["nlm_scores"] = h.nlm_scores;
      jh["combined"] = h.combined;
      jh["new_rank"] = h.new_rank;
      jh["first_pass_rank"] = h.first_pass_rank;
      if (h.tag_error) jh["flag"] = *h.tag_error;
    }
    hyps.push_back(std::move(jh));
  }
  j["hyps"] = std::move(hyps);
  if (with_scores) j["rescore_ms"] = list.rescore_ms;
  return j.dump();
}

void WriteNBestFile(const std::filesystem::path& path, const std::vector<NBestList>& lists, bool with_scores) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : lists) out << FormatNBest(l, with_scores) << '\n';
}

}  // namespace nlmr::rescore
