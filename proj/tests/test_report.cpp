#include <gtest/gtest.h>

#include <limits>

#include "maccoop/report.hpp"

using maccoop::canonical_json;
using maccoop::format_number;
using nlohmann::json;

TEST(Number, TwelveSignificantDigits) {
    EXPECT_EQ(format_number(1.0 / 9.0), "0.111111111111");
    EXPECT_EQ(format_number(0.75), "0.75");
    EXPECT_EQ(format_number(1e-20), "1e-20");
    EXPECT_EQ(format_number(123456789012345.0), "1.23456789012e+14");
}

TEST(Number, SignedZeroAndNonFinite) {
    EXPECT_EQ(format_number(-0.0), "0");
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "null");
    EXPECT_EQ(format_number(std::nan("")), "null");
}

TEST(Canonical, SortedKeysAndLayout) {
    json j;
    j["zeta"] = 1;
    j["alpha"] = {{"b", 0.5}, {"a", true}};
    j["list"] = {1, 2, 3};
    j["rows"] = json::array({json::array({0, 1}), json::array({1, 0})});
    const std::string want =
        "{\n"
        "  \"alpha\": {\n"
        "    \"a\": true,\n"
        "    \"b\": 0.5\n"
        "  },\n"
        "  \"list\": [1, 2, 3],\n"
        "  \"rows\": [\n"
        "    [0, 1],\n"
        "    [1, 0]\n"
        "  ],\n"
        "  \"zeta\": 1\n"
        "}\n";
    EXPECT_EQ(canonical_json(j), want);
}

TEST(Canonical, CompactForm) {
    const json j = {{"b", {1.0 / 3.0, -0.0}}, {"a", "x"}, {"e", json::object()}, {"f", json::array()}};
    EXPECT_EQ(canonical_json(j, -1), "{\"a\":\"x\",\"b\":[0.333333333333,0],\"e\":{},\"f\":[]}\n");
}

TEST(Canonical, ParsesBackToSameValue) {
    const json j = {{"x", {{"y", {1, 2, {{"z", 0.125}}}}}}, {"s", "quote\"d"}};
    EXPECT_EQ(json::parse(canonical_json(j)), j);
}

TEST(Canonical, InsertionOrderIrrelevant) {
    json a, b;
    a["one"] = 1;
    a["two"] = 2.5;
    b["two"] = 2.5;
    b["one"] = 1;
    EXPECT_EQ(canonical_json(a), canonical_json(b));
}
