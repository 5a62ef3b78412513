#include "nlmr/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace nlmr::eval {

std::vector<AlignmentOp> Align(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  std::vector<AlignmentOp> ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t cur = at(i, j);
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && cur == at(i - 1, j - 1)) {
      ops.push_back({EditKind::kMatch, static_cast<int>(i - 1), static_cast<int>(j - 1)});
      --i;
      --j;
    } else if (i > 0 && j > 0 && cur == at(i - 1, j - 1) + 1) {
      ops.push_back({EditKind::kSubstitution, static_cast<int>(i - 1), static_cast<int>(j - 1)});
      --i;
      --j;
    } else if (i > 0 && cur == at(i - 1, j) + 1) {
      ops.push_back({EditKind::kDeletion, static_cast<int>(i - 1), -1});
      --i;
    } else {
      ops.push_back({EditKind::kInsertion, -1, static_cast<int>(j - 1)});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

std::size_t AlignmentCost(std::span<const AlignmentOp> ops) {
  return static_cast<std::size_t>(
      std::count_if(ops.begin(), ops.end(), [](const auto& op) { return op.kind != EditKind::kMatch; }));
}

double ErrorCounts::rate() const {
  return ref_words == 0 ? 0.0 : static_cast<double>(errors()) / static_cast<double>(ref_words);
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  ref_words += o.ref_words;
  matches += o.matches;
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  return *this;
}

ErrorCounts CountErrors(std::span<const AlignmentOp> ops) {
  ErrorCounts c;
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditKind::kMatch: ++c.matches; ++c.ref_words; break;
      case EditKind::kSubstitution: ++c.substitutions; ++c.ref_words; break;
      case EditKind::kDeletion: ++c.deletions; ++c.ref_words; break;
      case EditKind::kInsertion: ++c.insertions; break;
    }
  }
  return c;
}

ErrorCounts Wer(std::span<const std::vector<std::string>> refs, std::span<const std::vector<std::string>> hyps) {
  if (refs.size() != hyps.size()) {
    throw DataError("reference and hypothesis sets differ in size (" + std::to_string(refs.size()) + " vs " +
                    std::to_string(hyps.size()) + ")");
  }
  ErrorCounts total;
  for (std::size_t u = 0; u < refs.size(); ++u) total += CountErrors(Align(refs[u], hyps[u]));
  if (total.ref_words == 0) throw DataError("empty reference corpus");
  return total;
}

double RelativeReduction(double baseline, double system) {
  if (baseline == 0.0) throw DataError("relative reduction of a zero baseline");
  return (baseline - system) / baseline;
}

TaggedReference ParseEntityTags(std::string_view line) {
  static constexpr std::string_view kOpen = "[ent]";
  static constexpr std::string_view kClose = "[/ent]";
  TaggedReference ref;
  bool inside = false;
  for (auto word : corpus::SplitWords(line)) {
    std::string_view w = word;
    bool opens = false, closes = false;
    if (w.substr(0, kOpen.size()) == kOpen) {
      if (inside) throw DataError("nested [ent] marker in: " + std::string(line));
      opens = true;
      w.remove_prefix(kOpen.size());
    }
    if (w.size() >= kClose.size() && w.substr(w.size() - kClose.size()) == kClose) {
      if (!inside && !opens) throw DataError("[/ent] without [ent] in: " + std::string(line));
      closes = true;
      w.remove_suffix(kClose.size());
    }
    if (w.empty()) throw DataError("empty entity marker in: " + std::string(line));
    if (w.find("[ent]") != std::string_view::npos || w.find("[/ent]") != std::string_view::npos) {
      throw DataError("misplaced entity marker in: " + std::string(line));
    }
    ref.words.emplace_back(w);
    ref.entity.push_back(inside || opens);
    if (opens) inside = true;
    if (closes) inside = false;
  }
  if (inside) throw DataError("unterminated [ent] marker in: " + std::string(line));
  return ref;
}

ErrorCounts EntityWer(std::span<const TaggedReference> refs, std::span<const std::vector<std::string>> hyps) {
  if (refs.size() != hyps.size()) throw DataError("reference and hypothesis sets differ in size");
  ErrorCounts c;
  for (std::size_t u = 0; u < refs.size(); ++u) {
    const auto& r = refs[u];
    c.ref_words += static_cast<std::size_t>(std::count(r.entity.begin(), r.entity.end(), true));
    for (const auto& op : Align(r.words, hyps[u])) {
      if (op.ref_index < 0 || !r.entity[static_cast<std::size_t>(op.ref_index)]) continue;
      if (op.kind == EditKind::kSubstitution) ++c.substitutions;
      if (op.kind == EditKind::kDeletion) ++c.deletions;
      if (op.kind == EditKind::kMatch) ++c.matches;
    }
  }
  if (c.ref_words == 0) throw DataError("no entities in reference");
  return c;
}

std::vector<double> Percentiles(std::span<const double> values, std::span<const double> ps) {
  if (values.empty()) throw DataError("percentiles of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  for (double p : ps) {
    if (!(p >= 0 && p <= 100)) throw Error("percentile outside [0, 100]");
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    out.push_back(sorted[rank - 1]);
  }
  return out;
}

EvalReport WerReport(const ErrorCounts& c, const std::string& metric) {
  EvalReport r;
  r.metric = metric;
  r.value = c.rate();
  r.counts = {{"ref_words", static_cast<double>(c.ref_words)},
              {"sub", static_cast<double>(c.substitutions)},
              {"del", static_cast<double>(c.deletions)},
              {"ins", static_cast<double>(c.insertions)}};
  return r;
}

EvalReport LatencyReport(std::span<const double> millis) {
  const double ps[] = {50, 90, 99};
  const auto v = Percentiles(millis, ps);
  EvalReport r;
  r.metric = "latency_ms";
  r.value = v[0];
  r.counts = {{"n", static_cast<double>(millis.size())}, {"p50", v[0]}, {"p90", v[1]}, {"p99", v[2]}};
  return r;
}

EvalReport PplReport(const SentenceScorer& scorer, const corpus::Corpus& dev, const std::string& metric) {
  const auto p = ComputePerplexity(scorer, dev);
  EvalReport r;
  r.metric = metric;
  r.value = p.perplexity;
  r.counts = {{"events", static_cast<double>(p.events)}, {"sentences", static_cast<double>(dev.sentences.size())}};
  return r;
}

void WriteReport(std::ostream& out, std::span<const EvalReport> reports) {
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.6g", r.value);
    out << r.metric << '\t' << buf;
    for (const auto& [k, v] : r.counts) {
      std::snprintf(buf, sizeof buf, "%.6g", v);
      out << '\t' << k << '=' << buf;
    }
    out << '\n';
  }
}

}  // namespace nlmr::eval
