// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Symmetric block-wise quantization to signed 8-bit or 4-bit codes.
//
// Each block of `block_size` consecutive elements gets its own scale
// absmax / qmax (qmax = 127 or 7). Codes are round-half-to-even of
// x * qmax / absmax and never take the most negative value (-128 / -8), so the
// scheme stays symmetric. An all-zero block has scale 0 and codes 0.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace zerotopo {

inline constexpr std::size_t kDefaultBlockSize = 256;
inline constexpr std::size_t kDefaultScaleWidth = 2;

class QuantizedTensor {
public:
    QuantizedTensor() = default;

    int bits() const noexcept { return mBits; }
    std::size_t block_size() const noexcept { return mBlockSize; }
    std::size_t size() const noexcept { return mLength; }
    std::size_t num_blocks() const noexcept { return mScales.size(); }
    int qmax() const noexcept { return mBits == 8 ? 127 : 7; }

    std::span<const std::uint8_t> packed_codes() const noexcept { return mPacked; }
    std::span<const double> scales() const noexcept { return mScales; }

    /// Decoded signed code of element i.
    int code(std::size_t i) const;
    double scale_of(std::size_t i) const { return mScales[i / mBlockSize]; }

    /// Bytes on the wire: packed codes, and scales at `scale_width` bytes each.
    std::size_t payload_bytes() const noexcept { return mPacked.size(); }
    std::size_t metadata_bytes(std::size_t scale_width = kDefaultScaleWidth) const noexcept {
        return mScales.size() * scale_width;
    }

    friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;

private:
    friend QuantizedTensor quantize_blocks(std::span<const double>, int, std::size_t);

    int mBits = 8;
    std::size_t mBlockSize = kDefaultBlockSize;
    std::size_t mLength = 0;
    std::vector<std::uint8_t> mPacked;
    std::vector<double> mScales;
};

/// Throws std::invalid_argument for bits not in {4, 8} or block_size == 0, and
/// NumericError (with the element position) for non-finite input.
QuantizedTensor quantize_blocks(std::span<const double> x, int bits,
                                std::size_t block_size = kDefaultBlockSize);

std::vector<double> dequantize_blocks(const QuantizedTensor& q);

/// Adds dequantized values onto `out` (out[i] += code_i * scale). Used by the
/// receive side of quantized reductions.
void dequantize_accumulate(const QuantizedTensor& q, std::span<double> out);

/// ceil(length * bits / 8) + num_blocks * scale_width.
std::size_t quantized_size_bytes(std::size_t length, int bits, std::size_t block_size,
                                 std::size_t scale_width = kDefaultScaleWidth);

// Two's-complement nibble packing, low nibble first. Codes must lie in [-8, 7].
std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> codes);
std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> packed, std::size_t count);

}  // namespace zerotopo
