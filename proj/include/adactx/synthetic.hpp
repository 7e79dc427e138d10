#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "adactx/corpus.hpp"

// Synthetic document translation task with a known minimal context per
// sentence. Source content words s<k> map one-to-one onto t<k>; every
// sentence carries one marker (ma/mb -> MA/MB). An ambiguous word is
// translated according to neighbouring markers:
//   ap -> AP<m(prev)>      needs the previous sentence
//   an -> AN<m(next)>      needs the next sentence
//   ax -> AX<m(prev)><m(next)> needs both
// Sentences without an ambiguous word need no context.
namespace adactx {

inline constexpr int kTaskTokenCount = 15;

struct SyntheticConfig {
  std::uint64_t seed = 1;
  int n_docs = 250;
  int doc_len = 8;
  int vocab_size = 41;  // 6 reserved + 15 task tokens + 2 * content words
  // Corpus-level share of sentences per needed context, in option order
  // none/prev/next/both. Interior sentences are reweighted to make up for
  // the labels edge sentences cannot carry (exact for doc_len >= 3 when
  // attainable).
  std::array<double, 4> fractions{0.15, 0.25, 0.15, 0.45};
  int min_content = 3;
  int max_content = 5;

  int content_words() const { return (vocab_size - tok::kReservedCount - kTaskTokenCount) / 2; }
  void validate() const;
};

Vocabulary synthetic_vocabulary(int vocab_size);

// Labels are filled in; documents hold exactly doc_len sentences.
DocumentCorpus generate_synthetic(const SyntheticConfig& cfg);

// Rule-based reference translation of one source sentence. Missing context
// resolves the ambiguous word to variant 0.
TokenIds rule_translate(const Vocabulary& vocab, std::span<const std::int32_t> src,
                        const TokenIds* prev_src, const TokenIds* next_src);

// Target-side index of the ambiguous word, -1 if absent.
int ambiguous_position(const Vocabulary& vocab, std::span<const std::int32_t> src);

}  // namespace adactx
