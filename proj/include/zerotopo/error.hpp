// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zerotopo {

/// Invalid user-supplied configuration. `field()` names the offending input.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(what), mField(std::move(field)) {}

    const std::string& field() const noexcept { return mField; }

private:
    std::string mField;
};

/// A value left the finite range (non-finite input, half-precision overflow,
/// diverging loss). `index()` is the element position or step index.
class NumericError : public std::runtime_error {
public:
    NumericError(std::size_t index, const std::string& what)
        : std::runtime_error(what), mIndex(index) {}

    std::size_t index() const noexcept { return mIndex; }

private:
    std::size_t mIndex;
};

}  // namespace zerotopo
