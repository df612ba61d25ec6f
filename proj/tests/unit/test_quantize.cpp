// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "zerotopo/error.hpp"
#include "zerotopo/half.hpp"
#include "zerotopo/quantize.hpp"

using namespace zerotopo;

namespace {

// Nearest code by exhaustive search, ties to the even code.
int brute_code(double x, double absmax, int qmax) {
    int best = 0;
    long double best_err = std::numeric_limits<long double>::infinity();
    for (int c = -qmax; c <= qmax; ++c) {
        const long double err = std::fabs(static_cast<long double>(x) * qmax / absmax - c);
        if (err < best_err || (err == best_err && c % 2 == 0)) {
            best = c;
            best_err = err;
        }
    }
    return best;
}

std::vector<int> codes_of(const QuantizedTensor& q) {
    std::vector<int> out;
    for (std::size_t i = 0; i < q.size(); ++i) out.push_back(q.code(i));
    return out;
}

// Slack for the final rounding of code * scale.
double ulp_slack(double scale) { return scale * 1e-12; }

}  // namespace

TEST_CASE("all-zero vector quantizes to zero codes and scales") {
    const std::vector<double> x(600, 0.0);
    const QuantizedTensor q = quantize_blocks(x, 8, 256);
    CHECK(q.num_blocks() == 3);
    for (double s : q.scales()) CHECK(s == 0.0);
    for (int c : codes_of(q)) CHECK(c == 0);
    for (double v : dequantize_blocks(q)) CHECK(v == 0.0);
}

TEST_CASE("INT8 block example") {
    const std::vector<double> x = {-1.0, 0.5, 1.0};
    const QuantizedTensor q = quantize_blocks(x, 8, 256);
    CHECK(q.scales()[0] == doctest::Approx(1.0 / 127.0));
    CHECK(codes_of(q) == std::vector<int>{-127, 64, 127});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(q.code(i) == brute_code(x[i], 1.0, 127));
    const auto d = dequantize_blocks(q);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(d[i] - x[i]) <= q.scales()[0] / 2);
}

TEST_CASE("INT4 block example with a half tie") {
    const std::vector<double> x = {8.0, -8.0, 4.0, 2.0};
    const QuantizedTensor q = quantize_blocks(x, 4, 256);
    CHECK(q.scales()[0] == doctest::Approx(8.0 / 7.0));
    CHECK(codes_of(q) == std::vector<int>{7, -7, 4, 2});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(q.code(i) == brute_code(x[i], 8.0, 7));
    CHECK(q.payload_bytes() == 2);
}

TEST_CASE("lattice points round-trip exactly") {
    const double scale = 0.25;
    std::vector<double> x;
    for (int c = -127; c <= 127; ++c) x.push_back(c * scale);
    const QuantizedTensor q = quantize_blocks(x, 8, x.size());
    CHECK(dequantize_blocks(q) == x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(q.code(i) == static_cast<int>(i) - 127);
}

TEST_CASE("quantize_blocks rejects bad input") {
    std::vector<double> x = {1.0, 2.0, std::nan(""), 4.0};
    try {
        quantize_blocks(x, 8, 2);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.index() == 2);
    }
    x[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(quantize_blocks(x, 4, 2), NumericError);
    CHECK_THROWS_AS(quantize_blocks(std::vector<double>{1.0}, 5, 2), std::invalid_argument);
    CHECK_THROWS_AS(quantize_blocks(std::vector<double>{1.0}, 8, 0), std::invalid_argument);
}

TEST_CASE("quantized_size_bytes") {
    CHECK(quantized_size_bytes(1024, 8, 256, 2) == 1032);
    CHECK(quantized_size_bytes(1024, 4, 256, 2) == 520);
    CHECK(quantized_size_bytes(1, 4, 256, 2) == 3);
    CHECK(quantized_size_bytes(1, 4, 256, 4) == 5);
    const QuantizedTensor q = quantize_blocks(std::vector<double>(1000, 1.5), 4, 256);
    CHECK(q.payload_bytes() + q.metadata_bytes(2) == quantized_size_bytes(1000, 4, 256, 2));
}

TEST_CASE("int4 packing is low nibble first") {
    const std::vector<std::int8_t> codes = {1, -1, 7, -7, 3};
    const auto packed = pack_int4(codes);
    REQUIRE(packed.size() == 3);
    CHECK(packed[0] == 0xF1);
    CHECK(packed[1] == 0x97);
    CHECK(packed[2] == 0x03);
    CHECK(unpack_int4(packed, codes.size()) == codes);
    CHECK_THROWS_AS(pack_int4(std::vector<std::int8_t>{9}), std::invalid_argument);
}

TEST_CASE("property: round-trip error within half a block scale") {
    oracle::Gen gen(2026);
    for (int bits : {8, 4}) {
        for (std::size_t bs : {std::size_t{1}, std::size_t{3}, std::size_t{256}, std::size_t{2048}}) {
            std::size_t checked = 0;
            while (checked < 30'000) {
                std::size_t n = gen.size(1, 5000);
                if (n % bs == 0 && bs > 1) ++n;  // lengths not divisible by the block size
                const auto x = gen.vector(n);
                const QuantizedTensor q = quantize_blocks(x, bits, bs);
                REQUIRE(q.num_blocks() == (n + bs - 1) / bs);
                const auto d = dequantize_blocks(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double s = q.scale_of(i);
                    REQUIRE(std::abs(q.code(i)) <= q.qmax());
                    REQUIRE(std::abs(d[i] - x[i]) <= s / 2 + ulp_slack(s));
                    // Sign is kept or the value collapses to zero.
                    REQUIRE((d[i] == 0.0 || std::signbit(d[i]) == std::signbit(x[i])));
                }
                for (std::size_t b = 0; b < q.num_blocks(); ++b) {
                    bool all_zero = true;
                    for (std::size_t i = b * bs; i < std::min(n, (b + 1) * bs); ++i) all_zero = all_zero && x[i] == 0.0;
                    REQUIRE(q.scales()[b] >= 0.0);
                    REQUIRE((q.scales()[b] == 0.0) == all_zero);
                }
                checked += n;
            }
        }
    }
}

TEST_CASE("property: quantization is idempotent") {
    oracle::Gen gen(7);
    for (int trial = 0; trial < 300; ++trial) {
        const int bits = gen.coin() ? 8 : 4;
        const std::size_t bs = gen.size(1, 300);
        const auto x = gen.vector(gen.size(1, 2000));
        const QuantizedTensor q = quantize_blocks(x, bits, bs);
        const QuantizedTensor again = quantize_blocks(dequantize_blocks(q), bits, bs);
        REQUIRE(again == q);
    }
}

TEST_CASE("property: int4 packing is bijective") {
    oracle::Gen gen(3);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::int8_t> codes(gen.size(0, 257));
        for (auto& c : codes) c = static_cast<std::int8_t>(static_cast<int>(gen.size(0, 15)) - 8);
        REQUIRE(unpack_int4(pack_int4(codes), codes.size()) == codes);
    }
}

TEST_CASE("half_round examples") {
    CHECK(half_round(1.0) == 1.0);
    CHECK(half_round(0.5) == 0.5);
    CHECK(half_round(65504.0) == 65504.0);
    CHECK(half_round(1.0 + std::ldexp(1.0, -13)) == 1.0);
    CHECK(half_round(1.0 + std::ldexp(1.0, -10)) == 1.0 + std::ldexp(1.0, -10));
    CHECK(half_round(std::ldexp(1.0, -24)) == std::ldexp(1.0, -24));
    CHECK(half_round(std::ldexp(1.0, -26)) == 0.0);
    CHECK(half_round(-3.0) == -3.0);
    try {
        half_round(70000.0);
        FAIL("expected overflow");
    } catch (const NumericError&) {
    }
    std::vector<double> v = {1.0, 2.0, 1e9};
    try {
        half_round_inplace(v);
        FAIL("expected overflow");
    } catch (const NumericError& e) {
        CHECK(e.index() == 2);
    }
    CHECK_THROWS_AS(half_round(std::nan("")), NumericError);
}

TEST_CASE("property: half_round matches the binary16 lattice") {
    oracle::Gen gen(99);
    for (int i = 0; i < 200'000; ++i) {
        const double x = (gen.coin() ? 1 : -1) * std::pow(2.0, gen.real(-30.0, 16.5));
        const double want = oracle::half_nearest(x);
        if (std::isnan(want)) {
            REQUIRE_THROWS_AS(half_round(x), NumericError);
        } else {
            REQUIRE(half_round(x) == want);
        }
    }
    // Every lattice point and every midpoint between neighbours.
    const auto& lat = oracle::half_lattice();
    for (std::size_t i = 0; i + 1 < lat.size(); ++i) {
        REQUIRE(half_round(lat[i]) == lat[i]);
        const double mid = (lat[i] + lat[i + 1]) / 2;
        REQUIRE(half_round(mid) == oracle::half_nearest(mid));
    }
}
