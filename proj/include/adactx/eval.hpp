#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adactx/corpus.hpp"
#include "adactx/model.hpp"

namespace adactx {

// ---- BLEU ----------------------------------------------------------------------

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

BleuStats bleu_stats(std::span<const std::vector<std::string>> hyps,
                     std::span<const std::vector<std::string>> refs);
// BLEU-4 in [0, 100] from corpus counts. `smooth` adds one to the n >= 2
// match and total counts.
double bleu_score(const BleuStats& s, bool smooth = false);
double corpus_bleu(std::span<const std::vector<std::string>> hyps,
                   std::span<const std::vector<std::string>> refs, bool smooth = false);
double corpus_bleu(std::span<const TokenIds> hyps, std::span<const TokenIds> refs,
                   bool smooth = false);

// ---- option selection --------------------------------------------------------------

struct SelectionStats {
  VariantKind kind = VariantKind::Concatenate;
  std::vector<std::size_t> counts;  // option order
  std::size_t total = 0;

  // Rounded to two decimals, as printed.
  std::vector<double> percentages() const;
  // Aligned-column table: index, option name, num, percentage.
  std::string render_table() const;
  // One `selection option=<i> name=<...> num=<n> percentage=<p>` line per option.
  std::string render_records() const;
};

SelectionStats make_selection_stats(VariantKind kind, std::span<const std::size_t> counts);

// Option chosen at inference for one sentence (source-only encoding, argmax).
int predict_option(const DocumentCorpus& corpus, std::size_t doc, std::size_t sent,
                   const ModelParams& params);
// Per-sentence predicted options, document-major.
std::vector<std::vector<int>> predict_options(const DocumentCorpus& corpus,
                                              const ModelParams& params);
SelectionStats selection_stats(const DocumentCorpus& corpus, const ModelParams& params);

// ---- translation and timing -------------------------------------------------------------

// sentence: empty-context option; full: widest context (concatenate option 3,
// context-unit option 0); adaptive: predictor choice; fixed: a given option.
enum class TranslateMode { Sentence, Full, Adaptive, Fixed };
std::string_view to_string(TranslateMode m);
std::optional<TranslateMode> parse_translate_mode(std::string_view s);

struct TimingRow {
  std::string model;
  std::size_t src_tokens = 0;  // encoder input tokens of the decoded variants
  std::size_t tgt_tokens = 0;  // decoder output tokens incl. forced prefix and <eos>
  double seconds = 0.0;
  std::size_t sentences = 0;
  std::size_t all_tokens() const { return src_tokens + tgt_tokens; }
};

struct TimingReport {
  std::vector<TimingRow> rows;
  std::string render_table() const;
  std::string render_records() const;
};

struct Translation {
  std::vector<std::vector<TokenIds>> hypotheses;  // current-sentence tokens
  std::vector<std::vector<int>> options;          // option used per sentence
  std::vector<std::string> failures;              // "doc:sent: message"
  TimingRow timing;
};

// Sequential, batch size one. Previous hypotheses of the same document feed
// the forced target prefix of "pre" options. Failing sentences yield an empty
// hypothesis and a failure entry.
Translation translate_corpus(const DocumentCorpus& corpus, const ModelParams& params,
                             TranslateMode mode, const DecodeOptions& decode = {},
                             int fixed_option = 0);

// ---- synthetic task --------------------------------------------------------------

struct SyntheticAccuracy {
  std::size_t ambiguous_total = 0;
  std::size_t ambiguous_correct = 0;
  std::size_t token_total = 0;
  std::size_t token_correct = 0;
  std::size_t agreement_total = 0;
  std::size_t agreement_hits = 0;
  std::array<std::size_t, 4> label_total{};
  std::array<std::size_t, 4> label_hits{};
  std::array<std::size_t, 4> label_ambiguous_total{};
  std::array<std::size_t, 4> label_ambiguous_correct{};

  double ambiguous_accuracy() const;
  double overall_accuracy() const;
  double selection_agreement() const;
  std::string render_records() const;
};

// Token accuracy is position-wise against the reference. Agreement compares the
// selected option with the minimal sufficient context; for concatenate the
// label is the option id, for context-unit labels none/prev/next map to
// empty/previous/next and "both" (not representable) is excluded.
SyntheticAccuracy synthetic_accuracy(const DocumentCorpus& corpus,
                                     const std::vector<std::vector<TokenIds>>& hypotheses,
                                     const std::vector<std::vector<int>>* options = nullptr,
                                     VariantKind kind = VariantKind::Concatenate);

}  // namespace adactx
