// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdlink/random.hpp"

namespace qkdlink {

/// Packed bit sequence. Bit i lives in word i/64, bit i%64 (LSB first).
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(size_t nbits, bool value = false)
      : nbits_(nbits), words_((nbits + 63) / 64, value ? ~0ull : 0ull) {
    trim();
  }

  static BitVector random(size_t nbits, RandomStream& rng) {
    BitVector v(nbits);
    for (auto& w : v.words_) w = rng.next_u64();
    v.trim();
    return v;
  }

  size_t size() const { return nbits_; }
  bool empty() const { return nbits_ == 0; }

  bool get(size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1ull; }

  void set(size_t i, bool v) {
    const uint64_t mask = 1ull << (i & 63);
    if (v)
      words_[i >> 6] |= mask;
    else
      words_[i >> 6] &= ~mask;
  }

  void push_back(bool v) {
    if ((nbits_ & 63) == 0) words_.push_back(0);
    ++nbits_;
    set(nbits_ - 1, v);
  }

  void append(const BitVector& other) {
    for (size_t i = 0; i < other.size(); ++i) push_back(other.get(i));
  }

  size_t popcount() const {
    size_t n = 0;
    for (uint64_t w : words_) n += std::popcount(w);
    return n;
  }

  size_t hamming_distance(const BitVector& other) const {
    require_same_length(other);
    size_t n = 0;
    for (size_t i = 0; i < words_.size(); ++i) n += std::popcount(words_[i] ^ other.words_[i]);
    return n;
  }

  BitVector xor_with(const BitVector& other) const {
    require_same_length(other);
    BitVector out = *this;
    for (size_t i = 0; i < words_.size(); ++i) out.words_[i] ^= other.words_[i];
    return out;
  }

  bool operator==(const BitVector& other) const {
    return nbits_ == other.nbits_ && words_ == other.words_;
  }
  bool operator!=(const BitVector& other) const { return !(*this == other); }

  /// Hex dump, low nibble first; used for key files.
  std::string to_hex() const {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve((nbits_ + 3) / 4);
    for (size_t i = 0; i < nbits_; i += 4) {
      unsigned nibble = 0;
      for (size_t j = 0; j < 4 && i + j < nbits_; ++j) nibble |= unsigned(get(i + j)) << j;
      out.push_back(digits[nibble]);
    }
    return out;
  }

  const std::vector<uint64_t>& words() const { return words_; }

 private:
  void trim() {
    if (nbits_ & 63) words_.back() &= (~0ull >> (64 - (nbits_ & 63)));
  }
  void require_same_length(const BitVector& other) const {
    if (nbits_ != other.nbits_)
      throw std::length_error("BitVector: length mismatch (" + std::to_string(nbits_) + " vs " +
                              std::to_string(other.nbits_) + ")");
  }

  size_t nbits_ = 0;
  std::vector<uint64_t> words_;
};

}  // namespace qkdlink
