// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/half.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include <fmt/core.h>

#include "zerotopo/error.hpp"

namespace zerotopo {

namespace {

// 2^k for k in the normal exponent range.
double pow2(int k) {
    return std::bit_cast<double>(static_cast<std::uint64_t>(k + 1023) << 52);
}

double round_one(double x, std::size_t index) {
    if (!std::isfinite(x)) {
        throw NumericError(index, fmt::format("non-finite value at element {}", index));
    }
    if (x == 0.0) return x;
    // |x| in [2^(exp-1), 2^exp), read off the biased exponent field.
    const int field = static_cast<int>((std::bit_cast<std::uint64_t>(x) >> 52) & 0x7FF);
    const int exp = field == 0 ? -1073 : field - 1022;
    // 10 fraction bits below the leading bit; exponent floor at the subnormal range.
    const int quantum_exp = std::max(exp - 1, -14) - 10;
    const double r = std::nearbyint(x * pow2(-quantum_exp)) * pow2(quantum_exp);
    if (std::abs(r) > kHalfMax) {
        throw NumericError(index, fmt::format("half-precision overflow at element {} ({})", index, x));
    }
    return r;
}

}  // namespace

double half_round(double x) { return round_one(x, 0); }

std::vector<double> half_round(std::span<const double> x) {
    std::vector<double> out(x.begin(), x.end());
    half_round_inplace(out);
    return out;
}

void half_round_inplace(std::span<double> x) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = round_one(x[i], i);
}

}  // namespace zerotopo
