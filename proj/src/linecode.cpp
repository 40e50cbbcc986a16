// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/linecode.hpp"

#include <array>
#include <bit>
#include <stdexcept>

namespace qkdlink {

namespace {

// 5b/6b sub-blocks (abcdei, 'a' in bit 5) for running disparity negative.
// Blocks with four ones are complemented at RD+; x=7 is balanced but still
// has an alternate form (000111) at RD+.
constexpr uint8_t kSix[32] = {
    0b100111, 0b011101, 0b101101, 0b110001, 0b110101, 0b101001, 0b011001, 0b111000,
    0b111001, 0b100101, 0b010101, 0b110100, 0b001101, 0b101100, 0b011100, 0b010111,
    0b011011, 0b100011, 0b010011, 0b110010, 0b001011, 0b101010, 0b011010, 0b111010,
    0b110011, 0b100110, 0b010110, 0b110110, 0b001110, 0b101110, 0b011110, 0b101011,
};
constexpr uint8_t kSixK28 = 0b001111;

// 3b/4b sub-blocks (fghj, 'f' in bit 3) for the disparity-negative column.
constexpr uint8_t kFour[8] = {0b1011, 0b1001, 0b0101, 0b1100, 0b1101, 0b1010, 0b0110, 0b1110};
constexpr uint8_t kFourA7 = 0b0111;

constexpr bool is_valid_control(int x, int y) {
  if (x == 28) return y >= 0 && y <= 7;
  return (x == 23 || x == 27 || x == 29 || x == 30) && y == 7;
}

struct DecodeEntry {
  bool valid = false;
  bool control = false;
  uint8_t byte = 0;
  Disparity rd_out = Disparity::Negative;
};

// decode table indexed by [symbol bits][rd_in == Positive]
struct DecodeTables {
  std::array<std::array<DecodeEntry, 2>, 1024> entries{};

  DecodeTables() {
    auto insert = [&](CodeUnit u, Disparity rd) {
      const auto enc = encode(u, rd);
      auto& e = entries[enc.symbol.bits][rd == Disparity::Positive];
      if (e.valid) throw std::logic_error("8b10b table collision");
      e = {true, u.is_control(), u.byte(), enc.rd_out};
    };
    for (int b = 0; b < 256; ++b)
      for (Disparity rd : {Disparity::Negative, Disparity::Positive})
        insert(CodeUnit::data(uint8_t(b)), rd);
    for (int y = 0; y <= 7; ++y)
      for (Disparity rd : {Disparity::Negative, Disparity::Positive})
        insert(CodeUnit::control(28, y), rd);
    for (int x : {23, 27, 29, 30})
      for (Disparity rd : {Disparity::Negative, Disparity::Positive})
        insert(CodeUnit::control(x, 7), rd);
  }
};

const DecodeTables& decode_tables() {
  static const DecodeTables tables;
  return tables;
}

}  // namespace

CodeUnit CodeUnit::control(int x, int y) {
  if (!is_valid_control(x, y)) throw std::invalid_argument("CodeUnit: not a valid K.x.y code");
  return CodeUnit(true, uint8_t((y << 5) | x));
}

int TenBitSymbol::ones() const { return std::popcount(uint32_t(bits & 0x3ff)); }

void TenBitSymbol::append_bits(std::vector<uint8_t>& stream) const {
  for (int i = 9; i >= 0; --i) stream.push_back(uint8_t((bits >> i) & 1));
}

EncodeResult encode(CodeUnit unit, Disparity rd) {
  const int x = unit.x();
  const int y = unit.y();
  if (unit.is_control() && !is_valid_control(x, y))
    throw std::invalid_argument("encode: not a valid control code");

  // 5b/6b block.
  const uint8_t six_neg = (unit.is_control() && x == 28) ? kSixK28 : kSix[x];
  uint8_t six;
  Disparity rd2;
  if (std::popcount(six_neg) == 4) {
    six = rd == Disparity::Negative ? six_neg : uint8_t(~six_neg & 0x3f);
    rd2 = flip(rd);
  } else if (!unit.is_control() && x == 7) {
    six = rd == Disparity::Negative ? six_neg : uint8_t(~six_neg & 0x3f);
    rd2 = rd;
  } else {
    six = six_neg;
    rd2 = rd;
  }

  // 3b/4b block, chosen against the disparity after the 6-bit block.
  uint8_t four;
  Disparity rd3;
  if (y == 7) {
    bool use_a7 = unit.is_control();
    if (!use_a7) {
      use_a7 = (rd2 == Disparity::Positive && (x == 11 || x == 13 || x == 14)) ||
               (rd2 == Disparity::Negative && (x == 17 || x == 18 || x == 20));
    }
    const uint8_t base = use_a7 ? kFourA7 : kFour[7];
    four = rd2 == Disparity::Negative ? base : uint8_t(~base & 0xf);
    rd3 = flip(rd2);
  } else if (y == 0 || y == 4) {
    four = rd2 == Disparity::Negative ? kFour[y] : uint8_t(~kFour[y] & 0xf);
    rd3 = flip(rd2);
  } else if (y == 3) {
    four = rd2 == Disparity::Negative ? kFour[y] : uint8_t(~kFour[y] & 0xf);
    rd3 = rd2;
  } else {
    // Balanced codes; control units use the complementary form at RD- so the
    // K28 comma sequences stay free of long runs.
    if (unit.is_control())
      four = rd2 == Disparity::Positive ? kFour[y] : uint8_t(~kFour[y] & 0xf);
    else
      four = kFour[y];
    rd3 = rd2;
  }

  return {TenBitSymbol{uint16_t((six << 4) | four)}, rd3};
}

DecodeResult decode(TenBitSymbol symbol, Disparity rd) {
  const auto& tables = decode_tables().entries;
  const uint16_t bits = symbol.bits & 0x3ff;
  const auto& same = tables[bits][rd == Disparity::Positive];
  if (same.valid) {
    const CodeUnit unit =
        same.control ? CodeUnit::control(same.byte & 0x1f, same.byte >> 5) : CodeUnit::data(same.byte);
    return {DecodeStatus::Ok, unit, same.rd_out};
  }
  const auto& other = tables[bits][rd != Disparity::Positive];
  if (other.valid) return {DecodeStatus::DisparityError, CodeUnit::data(0), rd};
  return {DecodeStatus::InvalidSymbol, CodeUnit::data(0), rd};
}

bool is_comma_at(std::span<const uint8_t> bits, size_t pos) {
  if (pos + 7 > bits.size()) return false;
  const uint8_t first = bits[pos];
  const uint8_t second = bits[pos + 1];
  if (first != second) return false;
  for (size_t i = 2; i < 7; ++i)
    if (bits[pos + i] == first) return false;
  return true;
}

std::optional<int> align(std::span<const uint8_t> bits) {
  if (bits.size() < 7) return std::nullopt;
  for (size_t p = 0; p + 7 <= bits.size(); ++p)
    if (is_comma_at(bits, p)) return int(p % 10);
  return std::nullopt;
}

void StreamEncoder::push(CodeUnit unit) {
  const auto r = encode(unit, rd_);
  r.symbol.append_bits(bits_);
  rd_ = r.rd_out;
}

BitVector mix_quantum(const BitVector& classical_bits, const BitVector& quantum_bits) {
  return classical_bits.xor_with(quantum_bits);
}

BitVector recover_quantum(const BitVector& mixed_bits, const BitVector& classical_bits) {
  return mixed_bits.xor_with(classical_bits);
}

}  // namespace qkdlink
