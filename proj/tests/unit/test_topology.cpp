// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <set>
#include <string>

#include "oracles.hpp"
#include "zerotopo/error.hpp"
#include "zerotopo/topology.hpp"

using namespace zerotopo;

namespace {

const char* kFrontierDoc = R"({"num_nodes": 2, "gpus_per_node": 4, "gcds_per_gpu": 2,
    "bandwidth_gcd": 200, "bandwidth_intra": 50, "bandwidth_inter": 100})";

std::string config_error_field(const std::string& doc) {
    try {
        load_topology(doc);
    } catch (const ConfigError& e) {
        return e.field() + ": " + e.what();
    }
    return "no error";
}

}  // namespace

TEST_CASE("load_topology reads a Frontier document") {
    const Topology t = load_topology(kFrontierDoc);
    CHECK(t.num_nodes() == 2);
    CHECK(t.devices_per_node() == 8);
    CHECK(t.bandwidth_gcd() == 200.0);
    CHECK(t.bandwidth_intra() == 50.0);
    CHECK(t.bandwidth_inter() == 100.0);
    CHECK(t == builtin_frontier(2));
}

TEST_CASE("load_topology reports the offending field") {
    CHECK(config_error_field(R"({"num_nodes": 0, "gpus_per_node": 4, "gcds_per_gpu": 2,
        "bandwidth_gcd": 200, "bandwidth_intra": 50, "bandwidth_inter": 100})") ==
          "num_nodes: non-positive count: num_nodes");
    CHECK(config_error_field(R"({"num_nodes": 2, "gpus_per_node": 4, "gcds_per_gpu": 2,
        "bandwidth_gcd": 200, "bandwidth_intra": 50})") ==
          "bandwidth_inter: missing field: bandwidth_inter");
    CHECK(config_error_field(R"({"num_nodes": 2, "gpus_per_node": 4, "gcds_per_gpu": 2,
        "bandwidth_gcd": 200, "bandwidth_intra": -1, "bandwidth_inter": 100})") ==
          "bandwidth_intra: non-positive bandwidth: bandwidth_intra");
    CHECK(config_error_field(R"({"num_nodes": 2, "gpus_per_node": 4, "gcds_per_gpu": 2, "nics": 4,
        "bandwidth_gcd": 200, "bandwidth_intra": 50, "bandwidth_inter": 100})") == "nics: unknown field: nics");
    CHECK(config_error_field(R"({"num_nodes": 1.5, "gpus_per_node": 4, "gcds_per_gpu": 2,
        "bandwidth_gcd": 200, "bandwidth_intra": 50, "bandwidth_inter": 100})")
              .rfind("num_nodes:", 0) == 0);
    CHECK(config_error_field("{not json").find("parse failure") != std::string::npos);
    CHECK(config_error_field("[1, 2]").find("parse failure") != std::string::npos);
}

TEST_CASE("load_topology_file reads the shipped config") {
    CHECK(load_topology_file(std::string(ZEROTOPO_SOURCE_DIR) + "/configs/frontier2.json") == builtin_frontier(2));
    CHECK_THROWS_AS(load_topology_file("/nonexistent/topology.json"), ConfigError);
}

TEST_CASE("built-in Frontier") {
    const Topology one = builtin_frontier(1);
    CHECK(one.device_count() == 8);
    CHECK(one.bandwidth(LinkClass::GcdPair) == 200.0);
    CHECK(one.bandwidth(LinkClass::IntraNode) == 50.0);
    CHECK(one.bandwidth(LinkClass::InterNode) == 100.0);
    CHECK(one.bandwidth_gcd() >= one.bandwidth_intra());
    CHECK(builtin_frontier(48).device_count() == 384);
    CHECK_THROWS_AS(builtin_frontier(0), ConfigError);
}

TEST_CASE("built-in DGX") {
    const Topology one = builtin_dgx(1);
    CHECK(one.device_count() == 8);
    CHECK(one.gcds_per_gpu() == 1);
    CHECK(one.bandwidth_intra() == 600.0);
    CHECK(one.bandwidth_gcd() == 600.0);
    CHECK(one.bandwidth_inter() == 200.0);
    CHECK(builtin_dgx(2).device_count() == 16);
    CHECK_THROWS_AS(builtin_dgx(0), ConfigError);
}

TEST_CASE("link_class by distance") {
    const Topology t = builtin_frontier(2);
    CHECK(t.link_class(DeviceId{0, 0, 0}, DeviceId{0, 0, 1}) == LinkClass::GcdPair);
    CHECK(t.link_class(DeviceId{0, 0, 0}, DeviceId{0, 1, 0}) == LinkClass::IntraNode);
    CHECK(t.link_class(DeviceId{0, 0, 0}, DeviceId{1, 0, 0}) == LinkClass::InterNode);
    CHECK_THROWS_AS(t.link_class(DeviceId{0, 0, 0}, DeviceId{0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(t.link_class(DeviceId{0, 0, 0}, DeviceId{2, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(t.link_class(DeviceId{0, 0, 0}, DeviceId{0, 0, 2}), std::invalid_argument);
    CHECK(LinkClass::GcdPair < LinkClass::IntraNode);
    CHECK(LinkClass::IntraNode < LinkClass::InterNode);
    CHECK(to_string(LinkClass::IntraNode) == "intra_node");
}

TEST_CASE("rank order is node-major, then GPU, then GCD") {
    const Topology t = builtin_frontier(2);
    CHECK(t.device(0) == DeviceId{0, 0, 0});
    CHECK(t.device(1) == DeviceId{0, 0, 1});
    CHECK(t.device(2) == DeviceId{0, 1, 0});
    CHECK(t.device(9) == DeviceId{1, 0, 1});
    CHECK_THROWS_AS(t.device(16), std::invalid_argument);
}

TEST_CASE("property: device enumeration is a bijection and link_class is symmetric") {
    oracle::Gen gen(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Topology t = gen.topology(5);
        std::set<std::size_t> seen;
        for (std::size_t r = 0; r < t.device_count(); ++r) {
            const DeviceId d = t.device(r);
            REQUIRE(t.contains(d));
            REQUIRE(t.rank_of(d) == r);
            seen.insert(t.rank_of(d));
        }
        REQUIRE(seen.size() == t.device_count());
        for (int k = 0; k < 20 && t.device_count() > 1; ++k) {
            const std::size_t a = gen.size(0, t.device_count() - 1);
            std::size_t b = gen.size(0, t.device_count() - 1);
            if (a == b) continue;
            REQUIRE(t.link_class(a, b) == t.link_class(b, a));
        }
    }
}
