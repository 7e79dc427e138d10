#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adactx/autograd.hpp"
#include "adactx/rng.hpp"
#include "adactx/tensor.hpp"
#include "adactx/variant.hpp"

namespace adactx {

struct ModelConfig {
  int d_model = 32;
  int n_heads = 4;
  int ffn_dim = 64;
  int enc_layers = 3;
  int dec_layers = 3;
  int vocab_size = 0;
  int max_positions = 96;
  VariantKind variant = VariantKind::Concatenate;
  int n_options = 4;
  double dropout = 0.0;
  // "Doc tips": segment embeddings and option-dependent decoder depth.
  bool use_segments = true;
  bool adaptive_depth = true;

  static int options_for(VariantKind v) { return v == VariantKind::ContextUnit ? 3 : 4; }
  // Throws ErrorKind::Config on any violated invariant.
  void validate() const;
};

std::string_view to_string(VariantKind v);
std::optional<VariantKind> parse_variant(std::string_view name);

// Decoder layers skipped per Concatenate option:
// non|src|non, pre|src|non, non|src|pos, pre|src|pos.
inline constexpr int kConcatDepthDelta[4] = {2, 1, 1, 0};

// Executed decoder depth for an option. Throws Config if it would be < 1.
int decoder_depth(const ModelConfig& cfg, int option);

struct EncoderOutput {
  Matrix hidden;                       // S x d_model, after the final layer norm
  std::vector<std::uint8_t> pad_mask;  // 1 where the input token is <pad>
};

using ParamGrads = std::vector<Matrix>;

// Indices into ModelParams for one attention block (pre-norm included).
struct AttnIds {
  int ln_g, ln_b, wq, bq, wk, bk, wv, bv, wo, bo;
};
struct FfnIds {
  int ln_g, ln_b, w1, b1, w2, b2;
};
struct EncLayerIds {
  AttnIds self;
  FfnIds ffn;
};
struct DecLayerIds {
  AttnIds self;
  AttnIds cross;
  FfnIds ffn;
};
// Cross-attention from the source stream into the context stream; the
// key/value side gets its own norm.
struct CrossIds {
  AttnIds attn;
  int lnkv_g, lnkv_b;
};
struct ContextUnitIds {
  std::vector<EncLayerIds> ctx_layers;
  std::vector<CrossIds> shared_cross;  // layers 0 .. L-2
  std::vector<CrossIds> last_cross;    // one per option, final layer only
  int alpha;                           // n_options x enc_layers
};
struct Layout {
  int tok_emb, seg_emb;
  std::vector<EncLayerIds> enc;
  int enc_ln_g, enc_ln_b;
  std::vector<DecLayerIds> dec;
  int dec_ln_g, dec_ln_b;
  int out_w, out_b;
  int mask_w, mask_b;
  int pred_w, pred_b;
  std::optional<ContextUnitIds> cu;
};

// All transformer weights plus the predictor head, addressed by name.
// Names under "predictor." belong to the context predictor.
class ModelParams {
 public:
  ModelParams() = default;
  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);
  // Empty tensors with the right shapes; used by checkpoint loading.
  static ModelParams zeros(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  ModelConfig& mutable_config() noexcept { return cfg_; }
  const Layout& layout() const noexcept { return layout_; }

  std::size_t count() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  std::optional<std::size_t> find(std::string_view name) const;
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;

  ParamGrads zeros_like() const;
  std::size_t scalar_count() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  int add(std::string name, std::size_t rows, std::size_t cols);
  void build_layout();

  ModelConfig cfg_;
  Layout layout_{};
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ForwardOptions {
  bool training = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
};

// One evaluation of the model on a tape. Parameter leaves are created lazily,
// once per tape; gradients go to `grads` when it is non-null.
class ModelGraph {
 public:
  ModelGraph(ag::Tape& tape, const ModelParams& params, ParamGrads* grads,
             ForwardOptions opts = {});

  ag::Tape& tape() noexcept { return tape_; }
  const ModelConfig& config() const noexcept { return params_.config(); }
  ag::Var param(int id);

  // Plain encoder (sentence-level or concatenated input). Returns hidden after
  // the final norm; keep[j] = 0 for pad positions.
  ag::Var encode(std::span<const std::int32_t> ids, std::span<const std::int32_t> segments,
                 std::vector<std::uint8_t>& keep);
  // Dual-stream context-unit encoder; option selects alpha row and the final
  // layer cross-attention set.
  ag::Var encode_context_unit(std::span<const std::int32_t> src,
                              std::span<const std::int32_t> src_segments,
                              std::span<const std::int32_t> ctx,
                              std::span<const std::int32_t> ctx_segments, int option,
                              std::vector<std::uint8_t>& keep);
  // Decoder logits for every input position, running `depth` layers.
  ag::Var decode(ag::Var memory, std::span<const std::uint8_t> memory_keep,
                 std::span<const std::int32_t> dec_ids, std::span<const std::int32_t> dec_segments,
                 int depth);
  ag::Var mask_head(ag::Var hidden);
  ag::Var predictor_logits(ag::Var pooled);

  // Encodes a variant with the model's own variant kind.
  ag::Var encode_variant(const ContextVariant& v, std::vector<std::uint8_t>& keep);

  // Instrumentation: decoder layers executed by the most recent decode().
  int last_decoder_layers() const noexcept { return last_decoder_layers_; }

 private:
  ag::Var embed(std::span<const std::int32_t> ids, std::span<const std::int32_t> segments);
  ag::Var self_attention(const AttnIds& ids, ag::Var x, std::span<const std::uint8_t> keep,
                         bool causal);
  ag::Var cross_attention(const AttnIds& ids, ag::Var x, ag::Var memory,
                          std::span<const std::uint8_t> memory_keep, int lnkv_g = -1,
                          int lnkv_b = -1);
  ag::Var feed_forward(const FfnIds& ids, ag::Var x);
  ag::Var encoder_layer(const EncLayerIds& ids, ag::Var x, std::span<const std::uint8_t> keep);
  ag::Var drop(ag::Var x);

  ag::Tape& tape_;
  const ModelParams& params_;
  ParamGrads* grads_;
  ForwardOptions opts_;
  Rng dropout_rng_;
  std::vector<ag::Var> bound_;
  int last_decoder_layers_ = 0;
};

// Sinusoidal position table shared by every evaluation (rows = positions).
const Matrix& positional_table(int max_positions, int d_model);

// Decoder input ids/segments for a target prefix. `context_len` is the length
// of the target-side context (forced prefix incl. <sep>) at the start of
// `prefix`.
void decoder_inputs(std::span<const std::int32_t> prefix, std::size_t context_len,
                    TokenIds& ids, TokenIds& segments);

// ---- value-level entry points -------------------------------------------

EncoderOutput encode(std::span<const std::int32_t> tokens, std::span<const std::int32_t> segments,
                     const ModelParams& params);

// option: 0 previous sentence, 1 next sentence, 2 empty (context = source).
EncoderOutput context_unit_forward(std::span<const std::int32_t> src,
                                   std::span<const std::int32_t> src_segments,
                                   std::span<const std::int32_t> ctx,
                                   std::span<const std::int32_t> ctx_segments, int option,
                                   const ModelParams& params);

EncoderOutput encode_variant(const ContextVariant& v, const ModelParams& params);

struct ConcatForwardResult {
  Matrix logits;  // (1 + prefix_len) x vocab
  int decoder_layers = 0;
};

// Next-token logits for <bos> + target_prefix under a Concatenate variant.
ConcatForwardResult concat_forward(const ContextVariant& v, const ModelParams& params,
                                   std::span<const std::int32_t> target_prefix);

enum class SearchMode { Greedy, Beam };

struct DecodeOptions {
  SearchMode mode = SearchMode::Greedy;
  int beam = 1;
  int max_len = 0;  // 0: max_positions
};

struct DecodeResult {
  TokenIds full;     // forced prefix + generated, without <bos>/<eos>
  TokenIds current;  // generated part only (context stripped)
  bool finished = false;
  int decoder_layers = 0;
};

DecodeResult decode(const EncoderOutput& memory, const ModelParams& params,
                    std::span<const std::int32_t> forced_prefix, int depth,
                    const DecodeOptions& opts);

// Encodes the variant and decodes with its forced prefix and option depth.
DecodeResult translate_variant(const ContextVariant& v, const ModelParams& params,
                               const DecodeOptions& opts);

}  // namespace adactx
