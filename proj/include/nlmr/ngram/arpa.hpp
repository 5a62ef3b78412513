#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>

#include "nlmr/ngram/model.hpp"

namespace nlmr::ngram {

// ARPA back-off format: \data\ header with "ngram N=count" lines, one
// \N-grams: section per order, \end\. Values are log10, written with seven
// decimals. Unigrams are written in vocabulary id order, higher orders sorted
// by id sequence. Every entry below the top order carries a back-off column.
void WriteArpa(const NGramModel& model, std::ostream& out);
void WriteArpa(const NGramModel& model, const std::filesystem::path& path);

/// The vocabulary is taken from the unigram section in file order; <unk> is
/// appended with log10 -99 when the file has none. Throws ParseError with the
/// line number on malformed input or a count mismatch.
NGramModel ReadArpa(std::istream& in, const std::string& source_name = "<arpa>");
NGramModel ReadArpa(const std::filesystem::path& path);

}  // namespace nlmr::ngram
