#ifndef BPT_TOKENS_HPP
#define BPT_TOKENS_HPP

#include <cstddef>

namespace bpt {

// Reserved vocabulary slots shared by the corpus loaders and the model.
// Id 0 embeds to the zero vector and is excluded from losses; it also
// serves as the zero-embedding placeholder prepended by shift evaluation.
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kEosId = 2;
inline constexpr std::size_t kNumReservedIds = 3;

/// Sentinel for "no padding id" (every id is a real token).
inline constexpr std::size_t kNoPadId = static_cast<std::size_t>(-1);

}  // namespace bpt

#endif  // BPT_TOKENS_HPP
