#pragma once

#include <cstdint>
#include <vector>

namespace adactx {

using TokenIds = std::vector<std::int32_t>;

// Reserved vocabulary ids; identical in every vocabulary.
namespace tok {
inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kBos = 1;
inline constexpr std::int32_t kEos = 2;
inline constexpr std::int32_t kSep = 3;
inline constexpr std::int32_t kMask = 4;
inline constexpr std::int32_t kUnk = 5;
inline constexpr std::int32_t kReservedCount = 6;
}  // namespace tok

// Segment roles added through the segment embedding.
namespace seg {
inline constexpr std::int32_t kPre = 0;
inline constexpr std::int32_t kCurrent = 1;
inline constexpr std::int32_t kPost = 2;
inline constexpr std::int32_t kSeparator = 3;
inline constexpr std::int32_t kCount = 4;
}  // namespace seg

enum class VariantKind { ContextUnit, Concatenate };

// One concrete model input for one context option of one sentence.
//
// tgt_ids is the gold decoder output (ending in <eos>); the decoder input is
// <bos> followed by tgt_ids without its last token. tgt_loss_mask marks the
// current-sentence span plus <eos>. forced_tgt_prefix holds the target-side
// context (previous translation + <sep>) that precedes the current sentence;
// it is a prefix of tgt_ids during training and is replaced by the previously
// produced hypothesis at inference. ctx_ids is used by the context-unit model
// only.
struct ContextVariant {
  int option = 0;
  TokenIds src_ids;
  TokenIds src_segments;
  TokenIds ctx_ids;
  TokenIds ctx_segments;
  TokenIds tgt_ids;
  TokenIds tgt_segments;
  std::vector<std::uint8_t> tgt_loss_mask;
  TokenIds forced_tgt_prefix;
  int dec_depth_delta = 0;
};

}  // namespace adactx
