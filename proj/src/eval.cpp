#include "adactx/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "adactx/error.hpp"
#include "adactx/predictor.hpp"

namespace adactx {

// ---- BLEU ----------------------------------------------------------------------

BleuStats bleu_stats(std::span<const std::vector<std::string>> hyps,
                     std::span<const std::vector<std::string>> refs) {
  if (hyps.size() != refs.size())
    throw Error(ErrorKind::Shape, "hypothesis and reference counts differ");
  if (hyps.empty()) throw Error(ErrorKind::EmptyInput, "empty corpus");
  BleuStats s;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& h = hyps[i];
    const auto& r = refs[i];
    s.hyp_len += h.size();
    s.ref_len += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      if (h.size() < n) continue;
      std::map<std::vector<std::string>, std::size_t> ref_counts;
      for (std::size_t j = 0; j + n <= r.size(); ++j)
        ++ref_counts[std::vector<std::string>(r.begin() + j, r.begin() + j + n)];
      std::map<std::vector<std::string>, std::size_t> hyp_counts;
      for (std::size_t j = 0; j + n <= h.size(); ++j)
        ++hyp_counts[std::vector<std::string>(h.begin() + j, h.begin() + j + n)];
      for (const auto& [gram, c] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      }
      s.totals[n - 1] += h.size() - n + 1;
    }
  }
  return s;
}

double bleu_score(const BleuStats& s, bool smooth) {
  if (s.hyp_len == 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = static_cast<double>(s.matches[n]);
    double t = static_cast<double>(s.totals[n]);
    if (smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_p += 0.25 * std::log(m / t);
  }
  const double c = static_cast<double>(s.hyp_len);
  const double r = static_cast<double>(s.ref_len);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_p);
}

double corpus_bleu(std::span<const std::vector<std::string>> hyps,
                   std::span<const std::vector<std::string>> refs, bool smooth) {
  return bleu_score(bleu_stats(hyps, refs), smooth);
}

double corpus_bleu(std::span<const TokenIds> hyps, std::span<const TokenIds> refs, bool smooth) {
  auto conv = [](std::span<const TokenIds> xs) {
    std::vector<std::vector<std::string>> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
      std::vector<std::string> v;
      v.reserve(x.size());
      for (auto id : x) v.push_back(std::to_string(id));
      out.push_back(std::move(v));
    }
    return out;
  };
  return corpus_bleu(conv(hyps), conv(refs), smooth);
}

// ---- option selection --------------------------------------------------------------

std::vector<double> SelectionStats::percentages() const {
  std::vector<double> p;
  for (auto c : counts)
    p.push_back(total == 0 ? 0.0
                           : std::round(10000.0 * static_cast<double>(c) /
                                        static_cast<double>(total)) /
                                 100.0);
  return p;
}

std::string SelectionStats::render_table() const {
  const char* head = kind == VariantKind::Concatenate ? "concatenate" : "context-unit";
  const auto pct = percentages();
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-3s %-20s %8s %11s\n", "", head, "num", "percentage");
  out += buf;
  for (std::size_t o = 0; o < counts.size(); ++o) {
    std::snprintf(buf, sizeof buf, "%-3zu %-20s %8zu %10.2f%%\n", o + 1,
                  std::string(option_name(kind, static_cast<int>(o))).c_str(), counts[o], pct[o]);
    out += buf;
  }
  return out;
}

std::string SelectionStats::render_records() const {
  const auto pct = percentages();
  std::string out;
  char buf[160];
  for (std::size_t o = 0; o < counts.size(); ++o) {
    std::snprintf(buf, sizeof buf, "selection option=%zu name=%s num=%zu percentage=%.2f\n", o,
                  std::string(option_name(kind, static_cast<int>(o))).c_str(), counts[o], pct[o]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "selection total=%zu\n", total);
  return out + buf;
}

SelectionStats make_selection_stats(VariantKind kind, std::span<const std::size_t> counts) {
  if (static_cast<int>(counts.size()) != ModelConfig::options_for(kind))
    throw Error(ErrorKind::Option, "count vector does not match the option set");
  SelectionStats s{kind, {counts.begin(), counts.end()}, 0};
  for (auto c : counts) s.total += c;
  return s;
}

int predict_option(const DocumentCorpus& corpus, std::size_t doc, std::size_t sent,
                   const ModelParams& params) {
  const VariantKind kind = params.config().variant;
  const auto variants = build_variants(corpus, doc, sent, kind);
  const EncoderOutput enc =
      encode_variant(variants[static_cast<std::size_t>(empty_context_option(kind))], params);
  return select_option(pool(enc), predictor_head(params));
}

std::vector<std::vector<int>> predict_options(const DocumentCorpus& corpus,
                                              const ModelParams& params) {
  std::vector<std::vector<int>> out;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    out.emplace_back();
    for (std::size_t s = 0; s < corpus.documents[d].size(); ++s)
      out.back().push_back(predict_option(corpus, d, s, params));
  }
  return out;
}

SelectionStats selection_stats(const DocumentCorpus& corpus, const ModelParams& params) {
  const VariantKind kind = params.config().variant;
  std::vector<std::size_t> counts(static_cast<std::size_t>(ModelConfig::options_for(kind)), 0);
  for (const auto& doc : predict_options(corpus, params))
    for (int o : doc) ++counts[static_cast<std::size_t>(o)];
  return make_selection_stats(kind, counts);
}

// ---- translation and timing -------------------------------------------------------------

std::string_view to_string(TranslateMode m) {
  switch (m) {
    case TranslateMode::Sentence: return "sentence";
    case TranslateMode::Full: return "full";
    case TranslateMode::Adaptive: return "adaptive";
    case TranslateMode::Fixed: return "fixed";
  }
  return "?";
}

std::optional<TranslateMode> parse_translate_mode(std::string_view s) {
  for (auto m : {TranslateMode::Sentence, TranslateMode::Full, TranslateMode::Adaptive,
                 TranslateMode::Fixed})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::string TimingReport::render_table() const {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %12s %12s\n", "model", "src tokens",
                "tgt tokens", "all tokens", "all time");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %12zu %12zu %12zu %11.1fs\n", r.model.c_str(),
                  r.src_tokens, r.tgt_tokens, r.all_tokens(), r.seconds);
    out += buf;
  }
  return out;
}

std::string TimingReport::render_records() const {
  std::string out;
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "timing model=%s sentences=%zu src_tokens=%zu tgt_tokens=%zu all_tokens=%zu "
                  "seconds=%.6f\n",
                  r.model.c_str(), r.sentences, r.src_tokens, r.tgt_tokens, r.all_tokens(),
                  r.seconds);
    out += buf;
  }
  return out;
}

Translation translate_corpus(const DocumentCorpus& corpus, const ModelParams& params,
                             TranslateMode mode, const DecodeOptions& decode_opts,
                             int fixed_option) {
  const ModelConfig& cfg = params.config();
  const VariantKind kind = cfg.variant;
  const int empty = empty_context_option(kind);
  const int full = kind == VariantKind::Concatenate ? 3 : 0;
  if (mode == TranslateMode::Fixed && (fixed_option < 0 || fixed_option >= cfg.n_options))
    throw Error(ErrorKind::Option, "fixed option out of range");
  const PredictorHead head = predictor_head(params);

  Translation tr;
  tr.timing.model = std::string(to_string(mode));
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    tr.hypotheses.emplace_back();
    tr.options.emplace_back();
    TokenIds prev_hyp;
    for (std::size_t s = 0; s < corpus.documents[d].size(); ++s) {
      TokenIds hyp;
      int option = empty;
      try {
        auto variants = build_variants(corpus, d, s, kind);
        std::optional<EncoderOutput> enc;
        switch (mode) {
          case TranslateMode::Sentence: option = empty; break;
          case TranslateMode::Full: option = full; break;
          case TranslateMode::Fixed: option = fixed_option; break;
          case TranslateMode::Adaptive: {
            enc = encode_variant(variants[static_cast<std::size_t>(empty)], params);
            option = select_option(pool(*enc), head);
            if (option != empty) enc.reset();
            break;
          }
        }
        ContextVariant& v = variants[static_cast<std::size_t>(option)];
        if (!v.forced_tgt_prefix.empty()) {
          v.forced_tgt_prefix = prev_hyp;
          v.forced_tgt_prefix.push_back(tok::kSep);
        }
        if (!enc) enc = encode_variant(v, params);
        const DecodeResult r =
            decode(*enc, params, v.forced_tgt_prefix, decoder_depth(cfg, option), decode_opts);
        hyp = r.current;
        tr.timing.src_tokens += v.src_ids.size() + v.ctx_ids.size();
        tr.timing.tgt_tokens += r.full.size() + (r.finished ? 1 : 0);
      } catch (const Error& e) {
        tr.failures.push_back(std::to_string(d) + ":" + std::to_string(s) + ": " + e.what());
        hyp.clear();
      }
      ++tr.timing.sentences;
      tr.options.back().push_back(option);
      tr.hypotheses.back().push_back(hyp);
      prev_hyp = std::move(hyp);
    }
  }
  tr.timing.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return tr;
}

// ---- synthetic task --------------------------------------------------------------

namespace {
double ratio(std::size_t a, std::size_t b) {
  return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
}
}  // namespace

double SyntheticAccuracy::ambiguous_accuracy() const {
  return ratio(ambiguous_correct, ambiguous_total);
}
double SyntheticAccuracy::overall_accuracy() const { return ratio(token_correct, token_total); }
double SyntheticAccuracy::selection_agreement() const {
  return ratio(agreement_hits, agreement_total);
}

std::string SyntheticAccuracy::render_records() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "synthetic ambiguous_accuracy=%.4f ambiguous_total=%zu overall_accuracy=%.4f "
                "agreement=%.4f agreement_total=%zu\n",
                ambiguous_accuracy(), ambiguous_total, overall_accuracy(), selection_agreement(),
                agreement_total);
  std::string out = buf;
  static constexpr const char* names[] = {"none", "prev", "next", "both"};
  for (int l = 0; l < 4; ++l) {
    if (label_total[l] == 0 && label_ambiguous_total[l] == 0) continue;
    std::snprintf(buf, sizeof buf,
                  "synthetic label=%s total=%zu agreement=%.4f ambiguous_accuracy=%.4f\n", names[l],
                  label_total[l], ratio(label_hits[l], label_total[l]),
                  ratio(label_ambiguous_correct[l], label_ambiguous_total[l]));
    out += buf;
  }
  return out;
}

SyntheticAccuracy synthetic_accuracy(const DocumentCorpus& corpus,
                                     const std::vector<std::vector<TokenIds>>& hypotheses,
                                     const std::vector<std::vector<int>>* options,
                                     VariantKind kind) {
  if (!corpus.has_labels()) throw Error(ErrorKind::Config, "corpus carries no labels");
  if (hypotheses.size() != corpus.documents.size())
    throw Error(ErrorKind::Shape, "hypotheses do not match the corpus");
  SyntheticAccuracy a;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const auto& doc = corpus.documents[d];
    if (hypotheses[d].size() != doc.size() || (options && (*options)[d].size() != doc.size()))
      throw Error(ErrorKind::Shape, "hypotheses do not match document " + std::to_string(d));
    for (std::size_t s = 0; s < doc.size(); ++s) {
      const TokenIds& ref = doc[s].tgt;
      const TokenIds& hyp = hypotheses[d][s];
      const SentenceLabel& lab = corpus.labels[d][s];
      for (std::size_t i = 0; i < ref.size(); ++i) {
        ++a.token_total;
        if (i < hyp.size() && hyp[i] == ref[i]) ++a.token_correct;
      }
      if (lab.amb_pos >= 0) {
        const auto p = static_cast<std::size_t>(lab.amb_pos);
        const auto l = static_cast<std::size_t>(lab.needed);
        ++a.ambiguous_total;
        ++a.label_ambiguous_total[l];
        if (p < hyp.size() && p < ref.size() && hyp[p] == ref[p]) {
          ++a.ambiguous_correct;
          ++a.label_ambiguous_correct[l];
        }
      }
      if (options == nullptr) continue;
      int want = lab.needed;
      if (kind == VariantKind::ContextUnit) {
        static constexpr int map[] = {2, 0, 1, -1};
        want = map[lab.needed];
        if (want < 0) continue;
      }
      const auto l = static_cast<std::size_t>(lab.needed);
      ++a.label_total[l];
      ++a.agreement_total;
      if ((*options)[d][s] == want) {
        ++a.label_hits[l];
        ++a.agreement_hits;
      }
    }
  }
  return a;
}

}  // namespace adactx
