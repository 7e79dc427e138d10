#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "adactx/rng.hpp"
#include "adactx/variant.hpp"
#include "adactx/vocabulary.hpp"

namespace adactx {

struct SentencePair {
  TokenIds src;
  TokenIds tgt;
  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

using Document = std::vector<SentencePair>;

// Minimal sufficient context of a synthetic sentence, in concatenate option
// order: 0 none, 1 previous, 2 next, 3 both.
enum NeededContext : int { kNeedNone = 0, kNeedPrev = 1, kNeedNext = 2, kNeedBoth = 3 };

// Generator ground truth; never fed to a model.
struct SentenceLabel {
  int needed = kNeedNone;
  int amb_pos = -1;  // target index of the context-dependent token, -1 if none
  friend bool operator==(const SentenceLabel&, const SentenceLabel&) = default;
};

struct DocumentCorpus {
  Vocabulary vocab;
  std::vector<Document> documents;
  // Parallel to documents when present.
  std::vector<std::vector<SentenceLabel>> labels;

  std::size_t sentence_count() const;
  bool has_labels() const { return !labels.empty(); }
  // Throws Config on empty documents/sentences or label misalignment.
  void validate() const;

  friend bool operator==(const DocumentCorpus&, const DocumentCorpus&) = default;
};

// Table-2 row names for the concatenate options and the context-unit options.
std::string_view option_name(VariantKind kind, int option);

// Exactly N variants in option order. Missing neighbours at document edges
// fall back to the empty context while keeping the option id.
std::vector<ContextVariant> build_variants(const DocumentCorpus& corpus, std::size_t doc,
                                           std::size_t sent, VariantKind kind);

// The option whose input carries no context (concatenate 0, context-unit 2).
int empty_context_option(VariantKind kind);

struct MaskedSource {
  ContextVariant variant;
  std::vector<std::size_t> positions;  // indices into variant.src_ids
  TokenIds original_ids;
};

// BERT-style corruption of current-sentence source tokens: each eligible
// position is picked with probability mask_rate; picked tokens become <mask>
// (80%), a random non-reserved token (10%) or stay unchanged (10%).
MaskedSource apply_source_mask(const ContextVariant& variant, Rng& rng, double mask_rate,
                               int vocab_size);

// `source ||| target` per line, blank line between documents.
void write_corpus(const std::filesystem::path& path, const DocumentCorpus& corpus);
// With `vocab` the ids follow it (unknown -> <unk>); otherwise a vocabulary is
// built in order of first appearance.
DocumentCorpus read_corpus(const std::filesystem::path& path, const Vocabulary* vocab = nullptr);

// `needed amb_pos` per line, same layout as the corpus file.
void write_labels(const std::filesystem::path& path, const DocumentCorpus& corpus);
void read_labels(const std::filesystem::path& path, DocumentCorpus& corpus);

// Hypotheses: one sentence per line, documents blank-line separated. Empty
// hypotheses are empty lines, so reading needs the expected document sizes.
void write_hypotheses(const std::filesystem::path& path, const Vocabulary& vocab,
                      const std::vector<std::vector<TokenIds>>& docs);
std::vector<std::vector<std::vector<std::string>>> read_hypotheses(
    const std::filesystem::path& path, std::span<const std::size_t> doc_sizes);

}  // namespace adactx
