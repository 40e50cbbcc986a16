// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qkdlink/bitvector.hpp"

namespace qkdlink {

/// Running disparity state threaded through 8B/10B symbol selection.
enum class Disparity : int8_t { Negative = -1, Positive = +1 };

inline Disparity flip(Disparity d) {
  return d == Disparity::Negative ? Disparity::Positive : Disparity::Negative;
}

/// A data byte or one of the twelve valid control codes (K28.0..K28.7,
/// K23.7, K27.7, K29.7, K30.7). Data D<x>.<y> has x = byte & 31, y = byte >> 5.
class CodeUnit {
 public:
  static CodeUnit data(uint8_t byte) { return CodeUnit(false, byte); }
  static CodeUnit control(int x, int y);  // throws on anything outside the control set

  bool is_control() const { return control_; }
  uint8_t byte() const { return byte_; }
  int x() const { return byte_ & 0x1f; }
  int y() const { return byte_ >> 5; }

  bool operator==(const CodeUnit& o) const = default;

 private:
  CodeUnit(bool control, uint8_t byte) : control_(control), byte_(byte) {}
  bool control_ = false;
  uint8_t byte_ = 0;
};

inline const CodeUnit kK28_5 = CodeUnit::control(28, 5);

/// 10-bit line symbol. bits holds the transmission order abcdeifghj with 'a'
/// in bit 9 and 'j' in bit 0, so the binary literal reads in wire order.
/// Within each sub-block the least-significant source bit maps to the first
/// transmitted bit (A -> a, F -> f).
struct TenBitSymbol {
  uint16_t bits = 0;

  int ones() const;
  int disparity_effect() const { return 2 * ones() - 10; }  // -2, 0 or +2
  bool operator==(const TenBitSymbol& o) const = default;

  /// Appends a..j as 0/1 bytes.
  void append_bits(std::vector<uint8_t>& stream) const;
};

struct EncodeResult {
  TenBitSymbol symbol;
  Disparity rd_out;
};

/// Standard 8B/10B encoding (5b/6b + 3b/4b partitions, disparity selection,
/// D.x.A7 substitution). Throws on an invalid control unit.
EncodeResult encode(CodeUnit unit, Disparity rd);

enum class DecodeStatus : uint8_t { Ok, InvalidSymbol, DisparityError };

struct DecodeResult {
  DecodeStatus status = DecodeStatus::InvalidSymbol;
  CodeUnit unit = CodeUnit::data(0);
  Disparity rd_out = Disparity::Negative;  // rd_in on error
};

/// Table decode. A 10-bit value with no entry reports InvalidSymbol; an entry
/// that exists only for the other running disparity reports DisparityError.
DecodeResult decode(TenBitSymbol symbol, Disparity rd);

/// Comma patterns (abcdeif of K28.1/5/7): singular in any valid stream.
bool is_comma_at(std::span<const uint8_t> bits, size_t pos);

/// Word-boundary recovery: offset in 0..9 of the first comma found, or
/// nullopt when the stream carries none.
std::optional<int> align(std::span<const uint8_t> bits);

/// Convenience serializer holding the running disparity across symbols.
class StreamEncoder {
 public:
  explicit StreamEncoder(Disparity rd = Disparity::Negative) : rd_(rd) {}
  void push(CodeUnit unit);
  Disparity rd() const { return rd_; }
  const std::vector<uint8_t>& bits() const { return bits_; }

 private:
  Disparity rd_;
  std::vector<uint8_t> bits_;
};

/// XOR embedding of the sparse quantum-channel data into the coded classical
/// stream, and its inverse (the same operation).
BitVector mix_quantum(const BitVector& classical_bits, const BitVector& quantum_bits);
BitVector recover_quantum(const BitVector& mixed_bits, const BitVector& classical_bits);

}  // namespace qkdlink
