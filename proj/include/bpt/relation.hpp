#ifndef BPT_RELATION_HPP
#define BPT_RELATION_HPP

#include <cstdint>
#include <string>

#include "bpt/errors.hpp"

namespace bpt {

enum class Side : std::uint8_t { left = 0, right = 1 };

enum class RelKind : std::uint8_t { self = 0, ctx = 1, anc = 2 };

/// Symbolic edge label. An edge is either a self-loop, a contextual edge
/// from the i-th node joining at source level `level` on one side, or an
/// affiliated edge from a token up to its level-`level` ancestor span.
struct RelationId {
  RelKind kind = RelKind::self;
  Side side = Side::left;   // ctx only
  int level = 0;            // ctx: source node level; anc: ancestor level
  int join_index = 0;       // ctx only, 1-based, <= k + 1

  static RelationId self_rel() { return RelationId{}; }

  static RelationId ctx(Side side, int level, int join_index) {
    return RelationId{RelKind::ctx, side, level, join_index};
  }

  static RelationId anc(int level) {
    return RelationId{RelKind::anc, Side::left, level, 0};
  }

  friend bool operator==(const RelationId &a, const RelationId &b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case RelKind::self: return true;
      case RelKind::anc: return a.level == b.level;
      case RelKind::ctx:
        return a.side == b.side && a.level == b.level && a.join_index == b.join_index;
    }
    return false;
  }

  std::string to_string() const {
    switch (kind) {
      case RelKind::self: return "self";
      case RelKind::anc: return "anc:" + std::to_string(level);
      case RelKind::ctx:
        return std::string("ctx:") + (side == Side::left ? "left" : "right") + ":" +
               std::to_string(level) + ":" + std::to_string(join_index);
    }
    return "?";
  }

  static RelationId parse(const std::string &text) {
    if (text == "self") return self_rel();
    if (text.rfind("anc:", 0) == 0) return anc(std::stoi(text.substr(4)));
    if (text.rfind("ctx:", 0) == 0) {
      const auto p1 = text.find(':', 4);
      const auto p2 = text.find(':', p1 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos)
        throw InvalidInputError("bad relation string: " + text);
      const std::string side_s = text.substr(4, p1 - 4);
      if (side_s != "left" && side_s != "right")
        throw InvalidInputError("bad relation side: " + text);
      return ctx(side_s == "left" ? Side::left : Side::right,
                 std::stoi(text.substr(p1 + 1, p2 - p1 - 1)),
                 std::stoi(text.substr(p2 + 1)));
    }
    throw InvalidInputError("bad relation string: " + text);
  }
};

/// Dense index space for every label a (levels, k) graph can carry:
///   0                          self
///   1 .. L-1                   anc levels 1..L-1
///   L ..                       ctx, grouped by (side, level), join 1..k+1
///
/// Size is 1 + (L-1) + 2*(L-1)*(k+1). Context nodes never sit at the root
/// level, so ctx levels run 0..L-2.
class RelationSet {
 public:
  RelationSet() = default;
  RelationSet(int levels, std::int64_t k) : levels_(levels), k_(k) {}

  std::size_t size() const {
    const std::size_t lc = ctx_levels();
    return 1 + lc + 2 * lc * joins();
  }

  std::size_t index_of(const RelationId &rel) const {
    switch (rel.kind) {
      case RelKind::self:
        return 0;
      case RelKind::anc:
        if (rel.level < 1 || rel.level > levels_ - 1)
          throw InvalidInputError("anc level out of range: " + rel.to_string());
        return 1 + static_cast<std::size_t>(rel.level - 1);
      case RelKind::ctx: {
        if (rel.level < 0 || static_cast<std::size_t>(rel.level) >= ctx_levels())
          throw InvalidInputError("ctx level out of range: " + rel.to_string());
        if (rel.join_index < 1 || static_cast<std::size_t>(rel.join_index) > joins())
          throw InvalidInputError("ctx join index out of range: " + rel.to_string());
        const std::size_t side = rel.side == Side::left ? 0 : 1;
        const std::size_t group = side * ctx_levels() + static_cast<std::size_t>(rel.level);
        return ctx_base() + group * joins() + static_cast<std::size_t>(rel.join_index - 1);
      }
    }
    throw InvalidInputError("bad relation kind");
  }

  RelationId at(std::size_t index) const {
    if (index == 0) return RelationId::self_rel();
    if (index < ctx_base()) return RelationId::anc(static_cast<int>(index));
    std::size_t rest = index - ctx_base();
    if (rest >= 2 * ctx_levels() * joins())
      throw InvalidInputError("relation index out of range");
    const std::size_t join = rest % joins();
    const std::size_t group = rest / joins();
    const Side side = group < ctx_levels() ? Side::left : Side::right;
    const std::size_t level = group % ctx_levels();
    return RelationId::ctx(side, static_cast<int>(level), static_cast<int>(join + 1));
  }

  int levels() const { return levels_; }
  std::int64_t k() const { return k_; }

 private:
  std::size_t ctx_levels() const {
    return levels_ > 1 ? static_cast<std::size_t>(levels_ - 1) : 0;
  }
  std::size_t joins() const { return static_cast<std::size_t>(k_ + 1); }
  std::size_t ctx_base() const { return 1 + ctx_levels(); }

  int levels_ = 1;
  std::int64_t k_ = 1;
};

}  // namespace bpt

#endif  // BPT_RELATION_HPP
