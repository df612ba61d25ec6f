// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <span>
#include <vector>

namespace zerotopo {

inline constexpr double kHalfMax = 65504.0;

/// Nearest IEEE binary16 value (round-half-to-even, subnormals included).
/// Throws NumericError when the value overflows to infinity or is not finite.
double half_round(double x);

std::vector<double> half_round(std::span<const double> x);
void half_round_inplace(std::span<double> x);

}  // namespace zerotopo
