#include "adactx/synthetic.hpp"

#include <algorithm>
#include <numeric>

#include "adactx/error.hpp"
#include "adactx/rng.hpp"

namespace adactx {

namespace {

constexpr const char* kTaskTokens[kTaskTokenCount] = {
    "ma", "mb", "MA", "MB", "ap", "an", "ax", "AP0", "AP1", "AN0", "AN1", "AX00", "AX01", "AX10", "AX11"};

std::string both_token(int prev, int next) {
  return std::string("AX") + static_cast<char>('0' + prev) + static_cast<char>('0' + next);
}

int marker_of(const Vocabulary& v, const TokenIds* sent) {
  if (sent == nullptr) return -1;
  const auto ma = v.id("ma");
  const auto mb = v.id("mb");
  for (auto t : *sent) {
    if (t == ma) return 0;
    if (t == mb) return 1;
  }
  return -1;
}

// Label distribution of a sentence given which neighbours exist.
std::array<double, 4> feasible(std::array<double, 4> w, bool has_prev, bool has_next) {
  if (!has_prev) w[kNeedPrev] = w[kNeedBoth] = 0.0;
  if (!has_next) w[kNeedNext] = w[kNeedBoth] = 0.0;
  const double total = w[0] + w[1] + w[2] + w[3];
  for (double& x : w) x /= total;
  return w;
}

// Interior-sentence weights whose document-level mix matches `target` once
// the edge sentences drop their infeasible labels.
std::array<double, 4> calibrate(const std::array<double, 4>& target, int doc_len) {
  std::array<double, 4> w = feasible(target, true, true);
  if (doc_len < 3) return w;
  const double n = doc_len;
  for (int it = 0; it < 500; ++it) {
    const auto first = feasible(w, false, true);
    const auto last = feasible(w, true, false);
    std::array<double, 4> next{};
    double total = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double mix = ((n - 2) * w[i] + first[i] + last[i]) / n;
      next[i] = mix > 0.0 ? w[i] * target[i] / mix : 0.0;
      total += next[i];
    }
    for (double& x : next) x /= total;
    w = next;
  }
  return w;
}

}  // namespace

void SyntheticConfig::validate() const {
  const int rest = vocab_size - tok::kReservedCount - kTaskTokenCount;
  if (rest < 2 || rest % 2 != 0)
    throw Error(ErrorKind::Config, "vocab_size must be 21 + 2k with k >= 1");
  if (n_docs < 1 || doc_len < 1) throw Error(ErrorKind::Config, "n_docs and doc_len must be >= 1");
  if (min_content < 1 || max_content < min_content)
    throw Error(ErrorKind::Config, "need 1 <= min_content <= max_content");
  double s = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorKind::Config, "fractions must be non-negative");
    s += f;
  }
  if (!(s > 0.0)) throw Error(ErrorKind::Config, "fractions must not all be zero");
  if (fractions[0] <= 0.0)
    throw Error(ErrorKind::Config, "the no-context fraction must be positive");
}

Vocabulary synthetic_vocabulary(int vocab_size) {
  SyntheticConfig c;
  c.vocab_size = vocab_size;
  c.validate();
  Vocabulary v;
  const int k = c.content_words();
  for (int i = 0; i < k; ++i) v.add("s" + std::to_string(i));
  for (int i = 0; i < k; ++i) v.add("t" + std::to_string(i));
  for (const char* t : kTaskTokens) v.add(t);
  return v;
}

DocumentCorpus generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  DocumentCorpus c;
  c.vocab = synthetic_vocabulary(cfg.vocab_size);
  const Vocabulary& v = c.vocab;
  const int k = cfg.content_words();
  Rng rng = make_rng({cfg.seed, 0x5E17});
  const std::array<double, 4> interior = calibrate(cfg.fractions, cfg.doc_len);

  for (int d = 0; d < cfg.n_docs; ++d) {
    const int n = cfg.doc_len;
    std::vector<int> marker(static_cast<std::size_t>(n));
    std::vector<int> need(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      marker[s] = static_cast<int>(uniform_index(rng, 2));
      const bool has_prev = s > 0, has_next = s + 1 < n;
      const std::array<double, 4> w = feasible(interior, has_prev, has_next);
      double r = uniform01(rng);
      int label = 0;
      for (int i = 0; i < 4; ++i) {
        if (w[i] <= 0.0) continue;
        label = i;
        if (r < w[i]) break;
        r -= w[i];
      }
      need[s] = label;
    }

    Document doc;
    std::vector<SentenceLabel> labels;
    for (int s = 0; s < n; ++s) {
      const int len = cfg.min_content +
                      static_cast<int>(uniform_index(
                          rng, static_cast<std::uint64_t>(cfg.max_content - cfg.min_content + 1)));
      std::vector<int> words(static_cast<std::size_t>(len));
      for (auto& w : words) w = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(k)));
      // Token codes: >= 0 content word, -1 marker, -2 ambiguous word.
      std::vector<int> slots = words;
      slots.insert(slots.begin() + static_cast<long>(uniform_index(rng, slots.size() + 1)), -1);
      if (need[s] != kNeedNone)
        slots.insert(slots.begin() + static_cast<long>(uniform_index(rng, slots.size() + 1)), -2);

      SentencePair p;
      SentenceLabel lab{need[s], -1};
      for (std::size_t i = 0; i < slots.size(); ++i) {
        const int x = slots[i];
        if (x >= 0) {
          p.src.push_back(v.id("s" + std::to_string(x)));
          p.tgt.push_back(v.id("t" + std::to_string(x)));
        } else if (x == -1) {
          p.src.push_back(v.id(marker[s] ? "mb" : "ma"));
          p.tgt.push_back(v.id(marker[s] ? "MB" : "MA"));
        } else {
          lab.amb_pos = static_cast<int>(i);
          if (need[s] == kNeedPrev) {
            p.src.push_back(v.id("ap"));
            p.tgt.push_back(v.id(marker[s - 1] ? "AP1" : "AP0"));
          } else if (need[s] == kNeedNext) {
            p.src.push_back(v.id("an"));
            p.tgt.push_back(v.id(marker[s + 1] ? "AN1" : "AN0"));
          } else {
            p.src.push_back(v.id("ax"));
            p.tgt.push_back(v.id(both_token(marker[s - 1], marker[s + 1])));
          }
        }
      }
      doc.push_back(std::move(p));
      labels.push_back(lab);
    }
    c.documents.push_back(std::move(doc));
    c.labels.push_back(std::move(labels));
  }
  return c;
}

TokenIds rule_translate(const Vocabulary& vocab, std::span<const std::int32_t> src,
                        const TokenIds* prev_src, const TokenIds* next_src) {
  const int mp = marker_of(vocab, prev_src);
  const int mn = marker_of(vocab, next_src);
  TokenIds out;
  out.reserve(src.size());
  for (auto id : src) {
    const std::string& t = vocab.token(id);
    std::string r;
    if (t == "ma") r = "MA";
    else if (t == "mb") r = "MB";
    else if (t == "ap") r = mp == 1 ? "AP1" : "AP0";
    else if (t == "an") r = mn == 1 ? "AN1" : "AN0";
    else if (t == "ax") r = both_token(std::max(mp, 0), std::max(mn, 0));
    else if (t.size() > 1 && t[0] == 's') r = "t" + t.substr(1);
    else r = t;
    out.push_back(vocab.id(r));
  }
  return out;
}

int ambiguous_position(const Vocabulary& vocab, std::span<const std::int32_t> src) {
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::string& t = vocab.token(src[i]);
    if (t == "ap" || t == "an" || t == "ax") return static_cast<int>(i);
  }
  return -1;
}

}  // namespace adactx
