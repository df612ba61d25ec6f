// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "zerotopo/error.hpp"

namespace zerotopo {

namespace {

void check_bits(int bits) {
    if (bits != 8 && bits != 4) {
        throw std::invalid_argument(fmt::format("unsupported quantization width {} bits", bits));
    }
}

std::int8_t nibble_to_code(std::uint8_t nib) {
    return static_cast<std::int8_t>(nib & 0x8 ? static_cast<int>(nib) - 16 : static_cast<int>(nib));
}

}  // namespace

int QuantizedTensor::code(std::size_t i) const {
    if (i >= mLength) throw std::out_of_range("QuantizedTensor::code");
    if (mBits == 8) return static_cast<std::int8_t>(mPacked[i]);
    const std::uint8_t byte = mPacked[i / 2];
    return nibble_to_code(i % 2 == 0 ? byte & 0x0F : byte >> 4);
}

QuantizedTensor quantize_blocks(std::span<const double> x, int bits, std::size_t block_size) {
    check_bits(bits);
    if (block_size == 0) throw std::invalid_argument("block_size must be >= 1");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) {
            throw NumericError(i, fmt::format("non-finite input at element {}", i));
        }
    }

    QuantizedTensor q;
    q.mBits = bits;
    q.mBlockSize = block_size;
    q.mLength = x.size();
    const double qmax = bits == 8 ? 127.0 : 7.0;
    const std::size_t nblocks = (x.size() + block_size - 1) / block_size;
    q.mScales.resize(nblocks, 0.0);

    std::vector<std::int8_t> codes(x.size(), 0);
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t lo = b * block_size;
        const std::size_t hi = std::min(lo + block_size, x.size());
        double absmax = 0.0;
        for (std::size_t i = lo; i < hi; ++i) absmax = std::max(absmax, std::abs(x[i]));
        if (absmax == 0.0) continue;
        q.mScales[b] = absmax / qmax;
        for (std::size_t i = lo; i < hi; ++i) {
            // x * qmax / absmax keeps exact ties (e.g. 0.5 -> 63.5) that x / scale would blur.
            double c = std::nearbyint(x[i] * qmax / absmax);
            c = std::clamp(c, -qmax, qmax);
            codes[i] = static_cast<std::int8_t>(c);
        }
    }

    if (bits == 8) {
        q.mPacked.resize(codes.size());
        std::transform(codes.begin(), codes.end(), q.mPacked.begin(),
                       [](std::int8_t c) { return static_cast<std::uint8_t>(c); });
    } else {
        q.mPacked = pack_int4(codes);
    }
    return q;
}

void dequantize_accumulate(const QuantizedTensor& q, std::span<double> out) {
    if (out.size() != q.size()) throw std::invalid_argument("dequantize_accumulate: length mismatch");
    const auto packed = q.packed_codes();
    const auto scales = q.scales();
    const std::size_t bs = q.block_size();
    if (q.bits() == 8) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += static_cast<std::int8_t>(packed[i]) * scales[i / bs];
        }
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const std::uint8_t byte = packed[i / 2];
            out[i] += nibble_to_code(i % 2 == 0 ? byte & 0x0F : byte >> 4) * scales[i / bs];
        }
    }
}

std::vector<double> dequantize_blocks(const QuantizedTensor& q) {
    std::vector<double> out(q.size(), 0.0);
    dequantize_accumulate(q, out);
    return out;
}

std::size_t quantized_size_bytes(std::size_t length, int bits, std::size_t block_size,
                                 std::size_t scale_width) {
    check_bits(bits);
    if (block_size == 0) throw std::invalid_argument("block_size must be >= 1");
    const std::size_t code_bytes = (length * static_cast<std::size_t>(bits) + 7) / 8;
    const std::size_t nblocks = (length + block_size - 1) / block_size;
    return code_bytes + nblocks * scale_width;
}

std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> codes) {
    std::vector<std::uint8_t> packed((codes.size() + 1) / 2, 0);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] < -8 || codes[i] > 7) {
            throw std::invalid_argument(fmt::format("code {} outside 4-bit range", codes[i]));
        }
        const auto nib = static_cast<std::uint8_t>(codes[i]) & 0x0F;
        packed[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? nib : nib << 4);
    }
    return packed;
}

std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> packed, std::size_t count) {
    if (packed.size() * 2 < count) throw std::invalid_argument("unpack_int4: buffer too short");
    std::vector<std::int8_t> codes(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t byte = packed[i / 2];
        codes[i] = nibble_to_code(i % 2 == 0 ? byte & 0x0F : byte >> 4);
    }
    return codes;
}

}  // namespace zerotopo
