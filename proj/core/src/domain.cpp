#include "propsched/domain.hpp"

#include <stdexcept>

namespace propsched {

Domain::Domain(int capacity, bool full) : capacity_(capacity) {
  if (capacity < 0) throw std::invalid_argument("negative domain capacity");
  if (capacity > 64) spill_.assign(num_words(), 0);
  if (full) {
    for (Value v = 0; v < capacity; ++v) insert(v);
  }
}

bool Domain::insert(Value v) {
  if (v < 0 || v >= capacity_) throw std::out_of_range("value id outside domain capacity");
  std::uint64_t& w = word(v >> 6);
  const std::uint64_t bit = std::uint64_t{1} << (v & 63);
  if (w & bit) return false;
  w |= bit;
  ++size_;
  return true;
}

bool Domain::erase(Value v) {
  if (v < 0 || v >= capacity_) return false;
  std::uint64_t& w = word(v >> 6);
  const std::uint64_t bit = std::uint64_t{1} << (v & 63);
  if (!(w & bit)) return false;
  w &= ~bit;
  --size_;
  return true;
}

void Domain::clear() {
  inline_ = 0;
  for (auto& w : spill_) w = 0;
  size_ = 0;
}

Value Domain::min() const {
  for (int w = 0; w < num_words(); ++w) {
    if (word(w) != 0) return w * 64 + std::countr_zero(word(w));
  }
  return -1;
}

Value Domain::max() const {
  for (int w = num_words() - 1; w >= 0; --w) {
    if (word(w) != 0) return w * 64 + 63 - std::countl_zero(word(w));
  }
  return -1;
}

std::vector<Value> Domain::values() const {
  std::vector<Value> out;
  out.reserve(size_);
  for_each([&](Value v) { out.push_back(v); });
  return out;
}

}  // namespace propsched
