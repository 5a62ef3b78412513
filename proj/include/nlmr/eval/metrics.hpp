#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlmr/corpus/corpus.hpp"
#include "nlmr/scorer.hpp"

namespace nlmr::eval {

enum class EditKind { kMatch, kSubstitution, kDeletion, kInsertion };

struct AlignmentOp {
  EditKind kind;
  int ref_index;  // -1 for insertions
  int hyp_index;  // -1 for deletions
};

/// Minimal unit-cost Levenshtein alignment. Among equal-cost paths the
/// backtrace (from the end) prefers match, then substitution, then deletion,
/// then insertion. Ops are returned in reference order.
std::vector<AlignmentOp> Align(std::span<const std::string> ref, std::span<const std::string> hyp);
std::size_t AlignmentCost(std::span<const AlignmentOp> ops);

struct ErrorCounts {
  std::size_t ref_words = 0;
  std::size_t matches = 0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double rate() const;
  ErrorCounts& operator+=(const ErrorCounts& o);
};

ErrorCounts CountErrors(std::span<const AlignmentOp> ops);

/// Corpus-pooled WER. Throws DataError on mismatched sizes or zero reference words.
ErrorCounts Wer(std::span<const std::vector<std::string>> refs, std::span<const std::vector<std::string>> hyps);

/// (a - b) / a.
double RelativeReduction(double baseline, double system);

/// Reference words with entity flags, parsed from inline `[ent]...[/ent]` markers.
struct TaggedReference {
  std::vector<std::string> words;
  std::vector<bool> entity;
};

/// Markers may wrap one word (`[ent]john[/ent]`) or several
/// (`[ent]john smith[/ent]`). Throws DataError on unbalanced markers.
TaggedReference ParseEntityTags(std::string_view line);

/// (substitutions + deletions on tagged reference words) / tagged reference
/// words. Insertions are never counted. Throws DataError("no entities in
/// reference") when nothing is tagged. `ref_words` holds the tagged count.
ErrorCounts EntityWer(std::span<const TaggedReference> refs, std::span<const std::vector<std::string>> hyps);

/// Nearest-rank percentiles: the ceil(p/100 * n)-th smallest value (rank at
/// least 1). Throws DataError on empty input.
std::vector<double> Percentiles(std::span<const double> values, std::span<const double> ps);

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::map<std::string, double> counts;
};

EvalReport WerReport(const ErrorCounts& counts, const std::string& metric = "wer");
EvalReport LatencyReport(std::span<const double> millis);

/// Perplexity over `dev` with the shared event-counting convention.
EvalReport PplReport(const SentenceScorer& scorer, const corpus::Corpus& dev, const std::string& metric = "ppl");

/// Tab-separated rows: metric, value, then key=value counts in key order.
void WriteReport(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace nlmr::eval
