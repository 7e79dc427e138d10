#include "adactx/corpus.hpp"

#include <fstream>
#include <sstream>

#include "adactx/error.hpp"
#include "adactx/model.hpp"

namespace adactx {

std::size_t DocumentCorpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.size();
  return n;
}

void DocumentCorpus::validate() const {
  for (std::size_t d = 0; d < documents.size(); ++d) {
    if (documents[d].empty())
      throw Error(ErrorKind::Config, "document " + std::to_string(d) + " is empty");
    for (const auto& p : documents[d])
      if (p.src.empty() || p.tgt.empty())
        throw Error(ErrorKind::Config, "empty sentence in document " + std::to_string(d));
  }
  if (has_labels()) {
    if (labels.size() != documents.size())
      throw Error(ErrorKind::Config, "labels do not match documents");
    for (std::size_t d = 0; d < documents.size(); ++d)
      if (labels[d].size() != documents[d].size())
        throw Error(ErrorKind::Config, "labels do not match document " + std::to_string(d));
  }
}

std::string_view option_name(VariantKind kind, int option) {
  static constexpr std::string_view concat[] = {"non||source||non", "pre||source||non",
                                                "non||source||pos", "pre||source||pos"};
  static constexpr std::string_view unit[] = {"previous", "next", "empty"};
  if (kind == VariantKind::Concatenate && option >= 0 && option < 4) return concat[option];
  if (kind == VariantKind::ContextUnit && option >= 0 && option < 3) return unit[option];
  throw Error(ErrorKind::Option, "option " + std::to_string(option) + " out of range");
}

int empty_context_option(VariantKind kind) { return kind == VariantKind::Concatenate ? 0 : 2; }

namespace {

void append(TokenIds& ids, TokenIds& segs, const TokenIds& src, std::int32_t segment) {
  ids.insert(ids.end(), src.begin(), src.end());
  segs.insert(segs.end(), src.size(), segment);
}

}  // namespace

std::vector<ContextVariant> build_variants(const DocumentCorpus& corpus, std::size_t doc,
                                           std::size_t sent, VariantKind kind) {
  if (doc >= corpus.documents.size() || sent >= corpus.documents[doc].size())
    throw Error(ErrorKind::Option, "sentence index out of range");
  const Document& d = corpus.documents[doc];
  const SentencePair& cur = d[sent];
  const SentencePair* prev = sent > 0 ? &d[sent - 1] : nullptr;
  const SentencePair* next = sent + 1 < d.size() ? &d[sent + 1] : nullptr;

  const int n = ModelConfig::options_for(kind);
  std::vector<ContextVariant> out(static_cast<std::size_t>(n));
  for (int o = 0; o < n; ++o) {
    ContextVariant& v = out[static_cast<std::size_t>(o)];
    v.option = o;
    if (kind == VariantKind::Concatenate) {
      const bool use_pre = (o == 1 || o == 3) && prev != nullptr;
      const bool use_post = (o == 2 || o == 3) && next != nullptr;
      if (use_pre) {
        append(v.src_ids, v.src_segments, prev->src, seg::kPre);
        v.src_ids.push_back(tok::kSep);
        v.src_segments.push_back(seg::kSeparator);
        append(v.tgt_ids, v.tgt_segments, prev->tgt, seg::kPre);
        v.tgt_ids.push_back(tok::kSep);
        v.tgt_segments.push_back(seg::kSeparator);
        v.forced_tgt_prefix = v.tgt_ids;
      }
      append(v.src_ids, v.src_segments, cur.src, seg::kCurrent);
      if (use_post) {
        v.src_ids.push_back(tok::kSep);
        v.src_segments.push_back(seg::kSeparator);
        append(v.src_ids, v.src_segments, next->src, seg::kPost);
      }
      v.dec_depth_delta = kConcatDepthDelta[o];
    } else {
      append(v.src_ids, v.src_segments, cur.src, seg::kCurrent);
      if (o == 0 && prev != nullptr)
        append(v.ctx_ids, v.ctx_segments, prev->src, seg::kPre);
      else if (o == 1 && next != nullptr)
        append(v.ctx_ids, v.ctx_segments, next->src, seg::kPost);
      else
        append(v.ctx_ids, v.ctx_segments, cur.src, seg::kCurrent);
    }
    v.tgt_loss_mask.assign(v.tgt_ids.size(), 0);
    append(v.tgt_ids, v.tgt_segments, cur.tgt, seg::kCurrent);
    v.tgt_ids.push_back(tok::kEos);
    v.tgt_segments.push_back(seg::kCurrent);
    v.tgt_loss_mask.resize(v.tgt_ids.size(), 1);
  }
  return out;
}

MaskedSource apply_source_mask(const ContextVariant& variant, Rng& rng, double mask_rate,
                               int vocab_size) {
  if (!(mask_rate >= 0.0 && mask_rate < 1.0))
    throw Error(ErrorKind::Config, "mask_rate must be in [0, 1)");
  MaskedSource out{variant, {}, {}};
  if (mask_rate == 0.0) return out;
  const auto content = static_cast<std::uint64_t>(vocab_size - tok::kReservedCount);
  for (std::size_t i = 0; i < variant.src_ids.size(); ++i) {
    if (variant.src_segments[i] != seg::kCurrent) continue;
    if (uniform01(rng) >= mask_rate) continue;
    out.positions.push_back(i);
    out.original_ids.push_back(variant.src_ids[i]);
    const double r = uniform01(rng);
    if (r < 0.8) {
      out.variant.src_ids[i] = tok::kMask;
    } else if (r < 0.9 && content > 0) {
      out.variant.src_ids[i] =
          tok::kReservedCount + static_cast<std::int32_t>(uniform_index(rng, content));
    }
  }
  return out;
}

// ---- text formats -------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Error parse_error(const std::filesystem::path& p, std::size_t line, const std::string& what) {
  return Error(ErrorKind::Parse, p.string() + ":" + std::to_string(line) + ": " + what);
}

// Splits a file into blank-line separated blocks of (line number, text).
std::vector<std::vector<std::pair<std::size_t, std::string>>> read_blocks(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::vector<std::vector<std::pair<std::size_t, std::string>>> blocks(1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) {
      if (blocks.back().empty()) throw parse_error(path, lineno, "empty document");
      blocks.emplace_back();
    } else {
      blocks.back().emplace_back(lineno, t);
    }
  }
  if (blocks.back().empty()) {
    if (blocks.size() == 1) throw parse_error(path, lineno, "no documents");
    throw parse_error(path, lineno, "empty document at end of file");
  }
  return blocks;
}

}  // namespace

void write_corpus(const std::filesystem::path& path, const DocumentCorpus& corpus) {
  corpus.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (d > 0) os << '\n';
    for (const auto& p : corpus.documents[d])
      os << corpus.vocab.decode(p.src) << " ||| " << corpus.vocab.decode(p.tgt) << '\n';
  }
  if (!os) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

DocumentCorpus read_corpus(const std::filesystem::path& path, const Vocabulary* vocab) {
  DocumentCorpus c;
  if (vocab != nullptr) c.vocab = *vocab;
  for (const auto& block : read_blocks(path)) {
    Document doc;
    for (const auto& [lineno, text] : block) {
      const auto bar = text.find("|||");
      if (bar == std::string::npos) throw parse_error(path, lineno, "missing '|||'");
      if (text.find("|||", bar + 3) != std::string::npos)
        throw parse_error(path, lineno, "more than one '|||'");
      const auto src = split_whitespace(text.substr(0, bar));
      const auto tgt = split_whitespace(text.substr(bar + 3));
      if (src.empty() || tgt.empty()) throw parse_error(path, lineno, "empty side");
      SentencePair p;
      for (const auto& t : src) p.src.push_back(vocab ? c.vocab.id(t) : c.vocab.add(t));
      for (const auto& t : tgt) p.tgt.push_back(vocab ? c.vocab.id(t) : c.vocab.add(t));
      doc.push_back(std::move(p));
    }
    c.documents.push_back(std::move(doc));
  }
  return c;
}

void write_labels(const std::filesystem::path& path, const DocumentCorpus& corpus) {
  corpus.validate();
  if (!corpus.has_labels()) throw Error(ErrorKind::Config, "corpus carries no labels");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (std::size_t d = 0; d < corpus.labels.size(); ++d) {
    if (d > 0) os << '\n';
    for (const auto& l : corpus.labels[d]) os << l.needed << ' ' << l.amb_pos << '\n';
  }
}

void read_labels(const std::filesystem::path& path, DocumentCorpus& corpus) {
  std::vector<std::vector<SentenceLabel>> labels;
  for (const auto& block : read_blocks(path)) {
    std::vector<SentenceLabel> doc;
    for (const auto& [lineno, text] : block) {
      std::istringstream ss(text);
      SentenceLabel l;
      std::string extra;
      if (!(ss >> l.needed >> l.amb_pos) || (ss >> extra) || l.needed < 0 || l.needed > 3)
        throw parse_error(path, lineno, "expected '<needed 0-3> <amb_pos>'");
      doc.push_back(l);
    }
    labels.push_back(std::move(doc));
  }
  corpus.labels = std::move(labels);
  corpus.validate();
}

void write_hypotheses(const std::filesystem::path& path, const Vocabulary& vocab,
                      const std::vector<std::vector<TokenIds>>& docs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d > 0) os << '\n';
    for (const auto& s : docs[d]) os << vocab.decode(s) << '\n';
  }
  if (!os) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

std::vector<std::vector<std::vector<std::string>>> read_hypotheses(
    const std::filesystem::path& path, std::span<const std::size_t> doc_sizes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::vector<std::vector<std::vector<std::string>>> out;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(is, line)) throw parse_error(path, lineno + 1, what);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  for (std::size_t d = 0; d < doc_sizes.size(); ++d) {
    if (d > 0) {
      next("missing document break");
      if (!trim(line).empty()) throw parse_error(path, lineno, "expected a blank line");
    }
    std::vector<std::vector<std::string>> doc;
    for (std::size_t s = 0; s < doc_sizes[d]; ++s) {
      next("fewer hypotheses than reference sentences");
      doc.push_back(split_whitespace(line));
    }
    out.push_back(std::move(doc));
  }
  while (std::getline(is, line)) {
    ++lineno;
    if (!trim(line).empty()) throw parse_error(path, lineno, "more hypotheses than references");
  }
  return out;
}

}  // namespace adactx
