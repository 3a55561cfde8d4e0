#ifndef PROPSCHED_DOMAIN_HPP_
#define PROPSCHED_DOMAIN_HPP_

#include <bit>
#include <cstdint>
#include <vector>

namespace propsched {

using Value = int;

/**
 * Finite set of small non-negative value ids in [0, capacity).
 *
 * Capacities up to 64 live in a single inline word, so copies (snapshots,
 * lookahead) never allocate. Larger capacities spill to a word vector.
 */
class Domain {
 public:
  Domain() = default;
  explicit Domain(int capacity, bool full = false);

  int capacity() const { return capacity_; }
  int size() const { return size_; }
  bool empty() const { return size_ == 0; }

  bool contains(Value v) const {
    if (v < 0 || v >= capacity_) return false;
    return (word(v >> 6) >> (v & 63)) & 1u;
  }

  /// Returns true iff v was absent.
  bool insert(Value v);
  /// Returns true iff v was present.
  bool erase(Value v);
  void clear();

  /// Smallest / largest member; undefined on an empty domain.
  Value min() const;
  Value max() const;

  template <typename F>
  void for_each(F&& f) const {
    for (int w = 0; w < num_words(); ++w) {
      std::uint64_t bits = word(w);
      while (bits != 0) {
        const int b = std::countr_zero(bits);
        f(static_cast<Value>(w * 64 + b));
        bits &= bits - 1;
      }
    }
  }

  std::vector<Value> values() const;

  friend bool operator==(const Domain& a, const Domain& b) {
    if (a.capacity_ != b.capacity_ || a.size_ != b.size_) return false;
    for (int w = 0; w < a.num_words(); ++w) {
      if (a.word(w) != b.word(w)) return false;
    }
    return true;
  }

 private:
  int num_words() const { return (capacity_ + 63) / 64; }
  std::uint64_t word(int w) const { return capacity_ <= 64 ? inline_ : spill_[w]; }
  std::uint64_t& word(int w) { return capacity_ <= 64 ? inline_ : spill_[w]; }

  int capacity_ = 0;
  int size_ = 0;
  std::uint64_t inline_ = 0;
  std::vector<std::uint64_t> spill_;
};

}  // namespace propsched

#endif  // PROPSCHED_DOMAIN_HPP_
