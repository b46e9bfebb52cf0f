#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pmuidx {

// Word-Aligned Hybrid compressed bit vector with 32-bit words.
//
// Word layout (bit 31 = MSB):
//   literal: bit 31 = 0, bits 0..30 carry 31 consecutive bits, first bit in bit 0
//   fill:    bit 31 = 1, bit 30 = fill value, bits 0..29 = number of 31-bit groups
//
// The vector is kept canonical: literal words are never all-zero or all-one
// (those become fills) and two adjacent fills never share a fill value, so
// two vectors holding the same bits have identical words. Bits that do not
// yet fill a group live in the active word.
class WahVector {
 public:
  static constexpr unsigned kGroupBits = 31;
  static constexpr std::uint32_t kFillFlag = 0x8000'0000u;
  static constexpr std::uint32_t kFillValue = 0x4000'0000u;
  static constexpr std::uint32_t kCountMask = 0x3FFF'FFFFu;
  static constexpr std::uint32_t kLiteralMask = 0x7FFF'FFFFu;

  WahVector() = default;

  static WahVector from_bits(const std::vector<bool>& bits);
  // Rebuilds a vector from stored parts; throws FormatError unless the parts
  // satisfy every word-format invariant.
  static WahVector from_parts(std::vector<std::uint32_t> words, std::uint32_t active_word,
                              unsigned active_bits);

  void append(bool bit);
  void append_run(bool bit, std::uint64_t n);
  // Appends zeros until size() == n. No-op when already that long.
  void pad_to(std::uint64_t n);

  std::uint64_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::uint64_t count() const;
  bool test(std::uint64_t pos) const;
  std::vector<bool> to_bits() const;
  std::vector<std::uint64_t> set_positions() const;

  const std::vector<std::uint32_t>& words() const { return words_; }
  std::uint32_t active_word() const { return active_; }
  unsigned active_bits() const { return active_bits_; }
  // Bytes needed to store the words plus the active word.
  std::size_t compressed_bytes() const { return (words_.size() + 1) * sizeof(std::uint32_t); }

  // Calls f(position) for every set bit in increasing order. Zero fills are
  // skipped in constant time.
  template <class F>
  void for_each_set(F&& f) const;

  friend bool operator==(const WahVector&, const WahVector&) = default;

 private:
  friend class WahBuilder;

  void push_fill(bool bit, std::uint64_t groups);
  void push_group(std::uint32_t literal);

  std::vector<std::uint32_t> words_;
  std::uint32_t active_ = 0;
  unsigned active_bits_ = 0;
  std::uint64_t size_ = 0;
};

WahVector wah_and(const WahVector& a, const WahVector& b);
WahVector wah_or(const WahVector& a, const WahVector& b);
WahVector wah_not(const WahVector& a);

template <class F>
void WahVector::for_each_set(F&& f) const {
  std::uint64_t pos = 0;
  for (const std::uint32_t w : words_) {
    if (w & kFillFlag) {
      const std::uint64_t n = static_cast<std::uint64_t>(w & kCountMask) * kGroupBits;
      if (w & kFillValue) {
        for (std::uint64_t i = 0; i < n; ++i) f(pos + i);
      }
      pos += n;
    } else {
      std::uint32_t bits = w;
      while (bits) {
        f(pos + static_cast<std::uint64_t>(std::countr_zero(bits)));
        bits &= bits - 1;
      }
      pos += kGroupBits;
    }
  }
  std::uint32_t bits = active_;
  while (bits) {
    f(pos + static_cast<std::uint64_t>(std::countr_zero(bits)));
    bits &= bits - 1;
  }
}

}  // namespace pmuidx
