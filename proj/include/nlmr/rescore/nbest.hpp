#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlmr/common.hpp"

namespace nlmr::rescore {

/// [begin, end) word indices of a class span.
using Span = std::pair<std::size_t, std::size_t>;

struct Hypothesis {
  /// Tokens exactly as read; may contain inline <class>/</class> tags.
  std::vector<std::string> tokens;
  /// Explicit spans from the record's `class_spans` field, when present.
  std::optional<std::vector<Span>> explicit_spans;
  std::vector<double> lm_logprobs;  // natural log, one per word (tags excluded)
  double acoustic = 0.0;
  double total = 0.0;

  // Derived on load.
  std::vector<std::string> words;  // tokens without tags
  std::vector<Span> class_spans;
  /// Set when the tags or spans are malformed; the hypothesis then keeps
  /// its first-pass score.
  std::optional<std::string> tag_error;

  // Filled by rescoring.
  std::size_t first_pass_rank = 0;  // 1-based
  std::size_t new_rank = 0;         // 1-based
  std::vector<double> nlm_scores;
  double combined = 0.0;

  /// True when word i lies inside a class span.
  std::vector<bool> InClass() const;
  double FirstPassLm() const;
};

struct NBestList {
  std::string utt_id;
  std::vector<Hypothesis> hyps;
  double rescore_ms = 0.0;
};

/// Splits inline tags out of `tokens` and validates spans. Records problems
/// in `tag_error` instead of throwing.
void DeriveSpans(Hypothesis& hyp);

/// Validates list invariants: non-empty, one log-prob per word, total =
/// acoustic + sum(lm) within 1e-4, and first-pass rank order. Throws DataError.
void Validate(const NBestList& list);

/// One JSON object per line (see docs/nbest_schema.md).
NBestList ParseNBest(const std::string& json_line, const std::string& source = "<nbest>", std::size_t line = 0);
std::vector<NBestList> ReadNBestFile(const std::filesystem::path& path);
std::string FormatNBest(const NBestList& list, bool with_scores);
void WriteNBestFile(const std::filesystem::path& path, const std::vector<NBestList>& lists, bool with_scores);

}  // namespace nlmr::rescore
