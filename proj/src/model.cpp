#include "adactx/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <utility>

#include "adactx/error.hpp"

namespace adactx {

// ---- configuration ----------------------------------------------------------

std::string_view to_string(VariantKind v) {
  return v == VariantKind::ContextUnit ? "context-unit" : "concatenate";
}

std::optional<VariantKind> parse_variant(std::string_view name) {
  if (name == "context-unit" || name == "context_unit" || name == "cu")
    return VariantKind::ContextUnit;
  if (name == "concatenate" || name == "concat") return VariantKind::Concatenate;
  return std::nullopt;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (d_model <= 0 || n_heads <= 0 || ffn_dim <= 0 || enc_layers <= 0 || dec_layers <= 0 ||
      max_positions <= 0)
    fail("model dimensions must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (vocab_size <= tok::kReservedCount) fail("vocab_size must exceed the reserved block");
  if (n_options != options_for(variant))
    fail("n_options must be " + std::to_string(options_for(variant)) + " for " +
         std::string(to_string(variant)));
  if (variant == VariantKind::Concatenate && dec_layers < 3)
    fail("concatenate model needs dec_layers >= 3");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

int decoder_depth(const ModelConfig& cfg, int option) {
  if (option < 0 || option >= cfg.n_options)
    throw Error(ErrorKind::Option, "option " + std::to_string(option) + " out of range");
  int depth = cfg.dec_layers;
  if (cfg.variant == VariantKind::Concatenate && cfg.adaptive_depth)
    depth -= kConcatDepthDelta[option];
  if (depth < 1) throw Error(ErrorKind::Config, "decoder depth below one layer");
  return depth;
}

// ---- parameters -------------------------------------------------------------

int ModelParams::add(std::string name, std::size_t rows, std::size_t cols) {
  const int id = static_cast<int>(values_.size());
  index_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.emplace_back(rows, cols);
  return id;
}

void ModelParams::build_layout() {
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto f = static_cast<std::size_t>(cfg_.ffn_dim);
  const auto v = static_cast<std::size_t>(cfg_.vocab_size);
  const auto n = static_cast<std::size_t>(cfg_.n_options);

  auto attn = [&](const std::string& pre) {
    AttnIds a{};
    a.ln_g = add(pre + ".ln.g", 1, d);
    a.ln_b = add(pre + ".ln.b", 1, d);
    a.wq = add(pre + ".wq", d, d);
    a.bq = add(pre + ".bq", 1, d);
    a.wk = add(pre + ".wk", d, d);
    a.bk = add(pre + ".bk", 1, d);
    a.wv = add(pre + ".wv", d, d);
    a.bv = add(pre + ".bv", 1, d);
    a.wo = add(pre + ".wo", d, d);
    a.bo = add(pre + ".bo", 1, d);
    return a;
  };
  auto ffn = [&](const std::string& pre) {
    FfnIds x{};
    x.ln_g = add(pre + ".ln.g", 1, d);
    x.ln_b = add(pre + ".ln.b", 1, d);
    x.w1 = add(pre + ".w1", d, f);
    x.b1 = add(pre + ".b1", 1, f);
    x.w2 = add(pre + ".w2", f, d);
    x.b2 = add(pre + ".b2", 1, d);
    return x;
  };
  auto cross = [&](const std::string& pre) {
    CrossIds c{};
    c.attn = attn(pre);
    c.lnkv_g = add(pre + ".lnkv.g", 1, d);
    c.lnkv_b = add(pre + ".lnkv.b", 1, d);
    return c;
  };

  layout_.tok_emb = add("embed.token", v, d);
  layout_.seg_emb = add("embed.segment", seg::kCount, d);
  for (int i = 0; i < cfg_.enc_layers; ++i) {
    const std::string pre = "enc." + std::to_string(i);
    layout_.enc.push_back({attn(pre + ".self"), ffn(pre + ".ffn")});
  }
  layout_.enc_ln_g = add("enc.ln.g", 1, d);
  layout_.enc_ln_b = add("enc.ln.b", 1, d);
  if (cfg_.variant == VariantKind::ContextUnit) {
    ContextUnitIds cu;
    for (int i = 0; i < cfg_.enc_layers; ++i) {
      const std::string pre = "ctx." + std::to_string(i);
      cu.ctx_layers.push_back({attn(pre + ".self"), ffn(pre + ".ffn")});
    }
    for (int i = 0; i + 1 < cfg_.enc_layers; ++i)
      cu.shared_cross.push_back(cross("cross." + std::to_string(i)));
    for (std::size_t o = 0; o < n; ++o)
      cu.last_cross.push_back(cross("cross.last.opt" + std::to_string(o)));
    cu.alpha = add("ctx.alpha", n, static_cast<std::size_t>(cfg_.enc_layers));
    layout_.cu = std::move(cu);
  }
  for (int i = 0; i < cfg_.dec_layers; ++i) {
    const std::string pre = "dec." + std::to_string(i);
    layout_.dec.push_back({attn(pre + ".self"), attn(pre + ".cross"), ffn(pre + ".ffn")});
  }
  layout_.dec_ln_g = add("dec.ln.g", 1, d);
  layout_.dec_ln_b = add("dec.ln.b", 1, d);
  layout_.out_w = add("out.w", d, v);
  layout_.out_b = add("out.b", 1, v);
  layout_.mask_w = add("mask_head.w", d, v);
  layout_.mask_b = add("mask_head.b", 1, v);
  layout_.pred_w = add("predictor.w", d, n);
  layout_.pred_b = add("predictor.b", 1, n);
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.cfg_ = cfg;
  p.build_layout();
  return p;
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  for (std::size_t i = 0; i < p.count(); ++i) {
    const std::string& name = p.names_[i];
    Matrix& m = p.values_[i];
    if (ends_with(name, ".g")) {
      m.fill(1.0);
      continue;
    }
    // biases, context gates and the predictor start at zero
    if (m.rows() == 1 || name == "ctx.alpha" || name.starts_with("predictor.")) continue;
    double stddev;
    if (name.starts_with("embed."))
      stddev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    else
      stddev = std::sqrt(2.0 / static_cast<double>(m.rows() + m.cols()));
    Rng rng = make_rng({seed, 0x1A17ULL, i});
    for (double& x : m.flat()) x = stddev * normal(rng);
  }
  return p;
}

std::optional<std::size_t> ModelParams::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Matrix& ModelParams::at(std::string_view name) {
  auto i = find(name);
  if (!i) throw Error(ErrorKind::Config, "unknown parameter " + std::string(name));
  return values_[*i];
}

const Matrix& ModelParams::at(std::string_view name) const {
  auto i = find(name);
  if (!i) throw Error(ErrorKind::Config, "unknown parameter " + std::string(name));
  return values_[*i];
}

ParamGrads ModelParams::zeros_like() const {
  ParamGrads g;
  g.reserve(values_.size());
  for (const Matrix& m : values_) g.emplace_back(m.rows(), m.cols());
  return g;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix& m : values_) n += m.size();
  return n;
}

// ---- graph ------------------------------------------------------------------

const Matrix& positional_table(int max_positions, int d_model) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, Matrix> cache;
  std::lock_guard lock(mu);
  auto [it, inserted] = cache.try_emplace({max_positions, d_model});
  if (inserted) {
    Matrix& pe = it->second;
    pe.resize(static_cast<std::size_t>(max_positions), static_cast<std::size_t>(d_model));
    for (int pos = 0; pos < max_positions; ++pos)
      for (int i = 0; i < d_model; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / d_model);
        pe(pos, i) = std::sin(pos * freq);
        if (i + 1 < d_model) pe(pos, i + 1) = std::cos(pos * freq);
      }
  }
  return it->second;
}

void decoder_inputs(std::span<const std::int32_t> prefix, std::size_t context_len, TokenIds& ids,
                    TokenIds& segments) {
  ids.clear();
  segments.clear();
  ids.push_back(tok::kBos);
  segments.push_back(context_len > 0 ? seg::kPre : seg::kCurrent);
  for (std::size_t j = 0; j < prefix.size(); ++j) {
    ids.push_back(prefix[j]);
    if (j + 1 < context_len)
      segments.push_back(seg::kPre);
    else if (j + 1 == context_len)
      segments.push_back(seg::kSeparator);
    else
      segments.push_back(seg::kCurrent);
  }
}

ModelGraph::ModelGraph(ag::Tape& tape, const ModelParams& params, ParamGrads* grads,
                       ForwardOptions opts)
    : tape_(tape),
      params_(params),
      grads_(grads),
      opts_(opts),
      dropout_rng_(mix_seed({opts.dropout_seed, 0xD70FULL})),
      bound_(params.count()) {}

ag::Var ModelGraph::param(int id) {
  ag::Var& v = bound_[static_cast<std::size_t>(id)];
  if (!v.valid())
    v = tape_.parameter(params_.value(static_cast<std::size_t>(id)),
                        grads_ != nullptr ? &(*grads_)[static_cast<std::size_t>(id)] : nullptr);
  return v;
}

ag::Var ModelGraph::drop(ag::Var x) {
  const double p = params_.config().dropout;
  if (!opts_.training || p <= 0.0) return x;
  return ag::dropout(tape_, x, p, dropout_rng_);
}

ag::Var ModelGraph::embed(std::span<const std::int32_t> ids,
                          std::span<const std::int32_t> segments) {
  const ModelConfig& cfg = params_.config();
  if (ids.size() != segments.size()) throw Error(ErrorKind::Shape, "ids/segments length mismatch");
  if (ids.empty()) throw Error(ErrorKind::EmptyInput, "empty token sequence");
  if (ids.size() > static_cast<std::size_t>(cfg.max_positions))
    throw Error(ErrorKind::InputTooLong, std::to_string(ids.size()) + " tokens > max_positions " +
                                             std::to_string(cfg.max_positions));
  for (auto id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw Error(ErrorKind::Vocab, "token id " + std::to_string(id) + " outside vocabulary");
  for (auto s : segments)
    if (s < 0 || s >= seg::kCount)
      throw Error(ErrorKind::Vocab, "segment id " + std::to_string(s) + " outside range");

  const Layout& L = params_.layout();
  ag::Var x = ag::gather_rows(tape_, param(L.tok_emb), ids, std::sqrt(double(cfg.d_model)));
  const Matrix& pe = positional_table(cfg.max_positions, cfg.d_model);
  Matrix pos(ids.size(), pe.cols());
  std::copy(pe.data(), pe.data() + pos.size(), pos.data());
  x = ag::add(tape_, x, tape_.constant(std::move(pos)));
  if (cfg.use_segments) x = ag::add(tape_, x, ag::gather_rows(tape_, param(L.seg_emb), segments));
  return drop(x);
}

ag::Var ModelGraph::self_attention(const AttnIds& a, ag::Var x, std::span<const std::uint8_t> keep,
                                   bool causal) {
  ag::Var h = ag::layer_norm(tape_, x, param(a.ln_g), param(a.ln_b));
  ag::Var q = ag::affine(tape_, h, param(a.wq), param(a.bq));
  ag::Var k = ag::affine(tape_, h, param(a.wk), param(a.bk));
  ag::Var v = ag::affine(tape_, h, param(a.wv), param(a.bv));
  ag::Var att = ag::attention(tape_, q, k, v, params_.config().n_heads, keep, causal);
  ag::Var o = ag::affine(tape_, att, param(a.wo), param(a.bo));
  return ag::add(tape_, x, drop(o));
}

ag::Var ModelGraph::cross_attention(const AttnIds& a, ag::Var x, ag::Var memory,
                                    std::span<const std::uint8_t> memory_keep, int lnkv_g,
                                    int lnkv_b) {
  ag::Var h = ag::layer_norm(tape_, x, param(a.ln_g), param(a.ln_b));
  ag::Var kv = lnkv_g >= 0 ? ag::layer_norm(tape_, memory, param(lnkv_g), param(lnkv_b)) : memory;
  ag::Var q = ag::affine(tape_, h, param(a.wq), param(a.bq));
  ag::Var k = ag::affine(tape_, kv, param(a.wk), param(a.bk));
  ag::Var v = ag::affine(tape_, kv, param(a.wv), param(a.bv));
  ag::Var att = ag::attention(tape_, q, k, v, params_.config().n_heads, memory_keep, false);
  return ag::affine(tape_, att, param(a.wo), param(a.bo));
}

ag::Var ModelGraph::feed_forward(const FfnIds& f, ag::Var x) {
  ag::Var h = ag::layer_norm(tape_, x, param(f.ln_g), param(f.ln_b));
  h = ag::gelu(tape_, ag::affine(tape_, h, param(f.w1), param(f.b1)));
  h = ag::affine(tape_, h, param(f.w2), param(f.b2));
  return ag::add(tape_, x, drop(h));
}

ag::Var ModelGraph::encoder_layer(const EncLayerIds& ids, ag::Var x,
                                  std::span<const std::uint8_t> keep) {
  return feed_forward(ids.ffn, self_attention(ids.self, x, keep, false));
}

namespace {

std::vector<std::uint8_t> keep_mask(std::span<const std::int32_t> ids) {
  std::vector<std::uint8_t> keep(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) keep[i] = ids[i] != tok::kPad;
  return keep;
}

}  // namespace

ag::Var ModelGraph::encode(std::span<const std::int32_t> ids,
                           std::span<const std::int32_t> segments,
                           std::vector<std::uint8_t>& keep) {
  const Layout& L = params_.layout();
  keep = keep_mask(ids);
  ag::Var x = embed(ids, segments);
  for (const EncLayerIds& layer : L.enc) x = encoder_layer(layer, x, keep);
  return ag::layer_norm(tape_, x, param(L.enc_ln_g), param(L.enc_ln_b));
}

ag::Var ModelGraph::encode_context_unit(std::span<const std::int32_t> src,
                                        std::span<const std::int32_t> src_segments,
                                        std::span<const std::int32_t> ctx,
                                        std::span<const std::int32_t> ctx_segments, int option,
                                        std::vector<std::uint8_t>& keep) {
  const ModelConfig& cfg = params_.config();
  const Layout& L = params_.layout();
  if (!L.cu) throw Error(ErrorKind::Config, "model has no context unit");
  if (option < 0 || option >= cfg.n_options)
    throw Error(ErrorKind::Option, "option " + std::to_string(option) + " out of range");
  const ContextUnitIds& cu = *L.cu;

  keep = keep_mask(src);
  const std::vector<std::uint8_t> ctx_keep = keep_mask(ctx);
  ag::Var x = embed(src, src_segments);
  ag::Var c = embed(ctx, ctx_segments);
  ag::Var alpha = param(cu.alpha);
  const int last = cfg.enc_layers - 1;
  for (int i = 0; i <= last; ++i) {
    ag::Var f_src = encoder_layer(L.enc[static_cast<std::size_t>(i)], x, keep);
    ag::Var f_ctx = encoder_layer(cu.ctx_layers[static_cast<std::size_t>(i)], c, ctx_keep);
    const CrossIds& cross = i == last ? cu.last_cross[static_cast<std::size_t>(option)]
                                      : cu.shared_cross[static_cast<std::size_t>(i)];
    ag::Var mixed = cross_attention(cross.attn, f_src, f_ctx, ctx_keep, cross.lnkv_g, cross.lnkv_b);
    ag::Var gate = ag::element(tape_, alpha, static_cast<std::size_t>(option),
                               static_cast<std::size_t>(i));
    x = ag::add(tape_, f_src, ag::mul_scalar(tape_, drop(mixed), gate));
    c = f_ctx;
  }
  return ag::layer_norm(tape_, x, param(L.enc_ln_g), param(L.enc_ln_b));
}

ag::Var ModelGraph::encode_variant(const ContextVariant& v, std::vector<std::uint8_t>& keep) {
  if (params_.config().variant == VariantKind::ContextUnit)
    return encode_context_unit(v.src_ids, v.src_segments, v.ctx_ids, v.ctx_segments, v.option,
                               keep);
  return encode(v.src_ids, v.src_segments, keep);
}

ag::Var ModelGraph::decode(ag::Var memory, std::span<const std::uint8_t> memory_keep,
                           std::span<const std::int32_t> dec_ids,
                           std::span<const std::int32_t> dec_segments, int depth) {
  const Layout& L = params_.layout();
  if (depth < 1 || depth > static_cast<int>(L.dec.size()))
    throw Error(ErrorKind::Config, "decoder depth " + std::to_string(depth) + " out of range");
  const std::vector<std::uint8_t> self_keep(dec_ids.size(), 1);
  ag::Var y = embed(dec_ids, dec_segments);
  for (int i = 0; i < depth; ++i) {
    const DecLayerIds& layer = L.dec[static_cast<std::size_t>(i)];
    y = self_attention(layer.self, y, self_keep, true);
    y = ag::add(tape_, y, drop(cross_attention(layer.cross, y, memory, memory_keep)));
    y = feed_forward(layer.ffn, y);
  }
  last_decoder_layers_ = depth;
  y = ag::layer_norm(tape_, y, param(L.dec_ln_g), param(L.dec_ln_b));
  return ag::affine(tape_, y, param(L.out_w), param(L.out_b));
}

ag::Var ModelGraph::mask_head(ag::Var hidden) {
  const Layout& L = params_.layout();
  return ag::affine(tape_, hidden, param(L.mask_w), param(L.mask_b));
}

ag::Var ModelGraph::predictor_logits(ag::Var pooled) {
  const Layout& L = params_.layout();
  return ag::affine(tape_, pooled, param(L.pred_w), param(L.pred_b));
}

// ---- value-level ------------------------------------------------------------

namespace {

EncoderOutput to_output(ag::Tape& t, ag::Var h, std::vector<std::uint8_t> keep) {
  EncoderOutput out;
  out.hidden = t.value(h);
  out.pad_mask.resize(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) out.pad_mask[i] = keep[i] ? 0 : 1;
  if (!out.hidden.all_finite()) throw Error(ErrorKind::Numeric, "non-finite encoder output");
  return out;
}

}  // namespace

EncoderOutput encode(std::span<const std::int32_t> tokens, std::span<const std::int32_t> segments,
                     const ModelParams& params) {
  ag::Tape t(false);
  ModelGraph g(t, params, nullptr);
  std::vector<std::uint8_t> keep;
  ag::Var h = g.encode(tokens, segments, keep);
  return to_output(t, h, std::move(keep));
}

EncoderOutput context_unit_forward(std::span<const std::int32_t> src,
                                   std::span<const std::int32_t> src_segments,
                                   std::span<const std::int32_t> ctx,
                                   std::span<const std::int32_t> ctx_segments, int option,
                                   const ModelParams& params) {
  ag::Tape t(false);
  ModelGraph g(t, params, nullptr);
  std::vector<std::uint8_t> keep;
  ag::Var h = g.encode_context_unit(src, src_segments, ctx, ctx_segments, option, keep);
  return to_output(t, h, std::move(keep));
}

EncoderOutput encode_variant(const ContextVariant& v, const ModelParams& params) {
  ag::Tape t(false);
  ModelGraph g(t, params, nullptr);
  std::vector<std::uint8_t> keep;
  ag::Var h = g.encode_variant(v, keep);
  return to_output(t, h, std::move(keep));
}

ConcatForwardResult concat_forward(const ContextVariant& v, const ModelParams& params,
                                   std::span<const std::int32_t> target_prefix) {
  const ModelConfig& cfg = params.config();
  if (cfg.variant != VariantKind::Concatenate)
    throw Error(ErrorKind::Config, "concat_forward needs a concatenate model");
  if (v.option < 0 || v.option > 3)
    throw Error(ErrorKind::Option, "concatenate option must be in 0..3");
  const int depth = decoder_depth(cfg, v.option);
  ag::Tape t(false);
  ModelGraph g(t, params, nullptr);
  std::vector<std::uint8_t> keep;
  ag::Var mem = g.encode(v.src_ids, v.src_segments, keep);
  TokenIds ids, segs;
  decoder_inputs(target_prefix, std::min(v.forced_tgt_prefix.size(), target_prefix.size()), ids,
                 segs);
  ag::Var logits = g.decode(mem, keep, ids, segs, depth);
  return {t.value(logits), g.last_decoder_layers()};
}

namespace {

struct Hypothesis {
  TokenIds tokens;  // generated part only
  double score = 0.0;
  bool ended = false;  // emitted <eos>
};

// Log-probabilities of the next token after forced + generated.
std::vector<double> next_log_probs(const EncoderOutput& memory, const ModelParams& params,
                                   std::span<const std::int32_t> forced, const TokenIds& generated,
                                   int depth, int& layers) {
  TokenIds prefix(forced.begin(), forced.end());
  prefix.insert(prefix.end(), generated.begin(), generated.end());
  TokenIds ids, segs;
  decoder_inputs(prefix, forced.size(), ids, segs);
  ag::Tape t(false);
  ModelGraph g(t, params, nullptr);
  std::vector<std::uint8_t> keep(memory.pad_mask.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = memory.pad_mask[i] ? 0 : 1;
  ag::Var mem = t.constant(memory.hidden);
  ag::Var logits = g.decode(mem, keep, ids, segs, depth);
  layers = g.last_decoder_layers();
  const Matrix& lv = t.value(logits);
  auto last = lv.row(lv.rows() - 1);
  std::vector<double> lp(last.begin(), last.end());
  const double mx = *std::max_element(lp.begin(), lp.end());
  double s = 0.0;
  for (double x : lp) s += std::exp(x - mx);
  const double lse = mx + std::log(s);
  for (double& x : lp) x -= lse;
  return lp;
}

}  // namespace

DecodeResult decode(const EncoderOutput& memory, const ModelParams& params,
                    std::span<const std::int32_t> forced_prefix, int depth,
                    const DecodeOptions& opts) {
  const ModelConfig& cfg = params.config();
  if (memory.hidden.rows() == 0) throw Error(ErrorKind::Decode, "empty encoder output");
  const int max_len = opts.max_len > 0 ? opts.max_len : cfg.max_positions;
  if (max_len > cfg.max_positions)
    throw Error(ErrorKind::Config, "max_len exceeds max_positions");
  const int beam = opts.mode == SearchMode::Greedy ? 1 : opts.beam;
  if (beam < 1) throw Error(ErrorKind::Config, "beam size must be >= 1");
  if (static_cast<int>(forced_prefix.size()) >= max_len)
    throw Error(ErrorKind::Decode, "forced prefix leaves no room to decode");

  const std::size_t budget = static_cast<std::size_t>(max_len) - forced_prefix.size();
  DecodeResult result;
  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> finished;

  while (!alive.empty()) {
    struct Candidate {
      double score;
      std::size_t parent;
      std::int32_t token;
    };
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      auto lp = next_log_probs(memory, params, forced_prefix, alive[h].tokens, depth,
                               result.decoder_layers);
      for (std::size_t tkn = 0; tkn < lp.size(); ++tkn) {
        if (tkn == static_cast<std::size_t>(tok::kPad) || tkn == static_cast<std::size_t>(tok::kBos))
          continue;
        cands.push_back({alive[h].score + lp[tkn], h, static_cast<std::int32_t>(tkn)});
      }
    }
    const std::size_t keep_n = std::min<std::size_t>(static_cast<std::size_t>(beam), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep_n),
                      cands.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep_n; ++i) {
      const Candidate& c = cands[i];
      Hypothesis h{alive[c.parent].tokens, c.score, false};
      if (c.token == tok::kEos) {
        h.ended = true;
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        if (h.tokens.size() >= budget)
          finished.push_back(std::move(h));
        else
          next.push_back(std::move(h));
      }
    }
    if (finished.size() >= static_cast<std::size_t>(beam)) break;
    alive = std::move(next);
  }

  // first-best by score; earlier completion wins ties
  const Hypothesis* best = nullptr;
  for (const Hypothesis& h : finished)
    if (best == nullptr || h.score > best->score) best = &h;
  result.current = best->tokens;
  result.finished = best->ended;
  result.full.assign(forced_prefix.begin(), forced_prefix.end());
  result.full.insert(result.full.end(), result.current.begin(), result.current.end());
  return result;
}

DecodeResult translate_variant(const ContextVariant& v, const ModelParams& params,
                               const DecodeOptions& opts) {
  const EncoderOutput mem = encode_variant(v, params);
  return decode(mem, params, v.forced_tgt_prefix, decoder_depth(params.config(), v.option), opts);
}

}  // namespace adactx
