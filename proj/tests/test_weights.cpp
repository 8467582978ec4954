#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <random>

#include "doctest.h"
#include "ntpu/golden.hpp"
#include "ntpu/network.hpp"
#include "ntpu/weights.hpp"

using namespace ntpu;

namespace {

NetworkDesc tiny_net() {
    return parse_network(
        "input 2 6 6\n"
        "conv out=3 k=3 act=relu rq=1:4\n"
        "pool w=2\n"
        "fc out=4 rq=1:3\n");
}

} // namespace

TEST_CASE("generated weights validate and are deterministic") {
    NetworkDesc net = tiny_net();
    NetworkWeights a = gen_random_weights(7, net);
    NetworkWeights b = gen_random_weights(7, net);
    NetworkWeights c = gen_random_weights(8, net);
    CHECK(a == b);
    CHECK(a != c);
    CHECK_NOTHROW(validate_weights(net, a));

    REQUIRE(a.layers.size() == 2); // pool carries no parameters
    CHECK(a.layers[0].layer_index == 0);
    CHECK(a.layers[1].layer_index == 2);
    CHECK(a.layers[0].weights.shape == std::vector<uint32_t>{3, 3, 3, 2});
    CHECK(a.layers[0].biases.size() == 3);
    CHECK(a.layers[1].weights.shape == std::vector<uint32_t>{4, 3 * 2 * 2});
    CHECK(a.layers[1].biases.size() == 4);
}

TEST_CASE("serialization round-trips random networks") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 40; ++i) {
        CAPTURE(i);
        auto [net, w] = gen_random_network(rng(), SizeClass::Tiny);
        auto bytes = serialize_weights(w);
        NetworkWeights back = deserialize_weights(bytes);
        REQUIRE(back == w);
        CHECK_NOTHROW(validate_weights(net, back));
    }
}

TEST_CASE("weights files round-trip on disk") {
    NetworkDesc net = tiny_net();
    NetworkWeights w = gen_random_weights(3, net);
    const char* path = "test_weights_roundtrip.ntpuwgt";
    write_weights_file(path, w);
    CHECK(read_weights_file(path) == w);
    std::remove(path);
    CHECK_THROWS_AS(read_weights_file("no_such.ntpuwgt"), IoError);
}

TEST_CASE("validation rejects mismatched weights") {
    NetworkDesc net = tiny_net();
    NetworkWeights good = gen_random_weights(1, net);

    SUBCASE("missing entry") {
        NetworkWeights w = good;
        w.layers.pop_back();
        CHECK_THROWS_WITH_AS(validate_weights(net, w),
                             "weights missing for layer 2", IoError);
    }
    SUBCASE("wrong layer index") {
        NetworkWeights w = good;
        w.layers[0].layer_index = 1;
        CHECK_THROWS_WITH_AS(validate_weights(net, w),
                             "weights entry for layer 1 where layer 0 was expected",
                             IoError);
    }
    SUBCASE("out-of-order entries") {
        NetworkWeights w = good;
        std::swap(w.layers[0], w.layers[1]);
        CHECK_THROWS_AS(validate_weights(net, w), IoError);
    }
    SUBCASE("wrong shape") {
        NetworkWeights w = good;
        w.layers[0].weights = QTensor::zeros({3, 3, 3, 1});
        CHECK_THROWS_WITH_AS(
            validate_weights(net, w),
            "layer 0 weight shape 3x3x3x1 does not match network (expected 3x3x3x2)",
            IoError);
    }
    SUBCASE("data length drifts from shape") {
        NetworkWeights w = good;
        w.layers[0].weights.data.pop_back();
        CHECK_THROWS_WITH_AS(validate_weights(net, w),
                             doctest::Contains("data length"), IoError);
    }
    SUBCASE("bias count") {
        NetworkWeights w = good;
        w.layers[1].biases.resize(2);
        CHECK_THROWS_WITH_AS(validate_weights(net, w),
                             "layer 2 has 2 biases, expected 4", IoError);
    }
    SUBCASE("extra entries") {
        NetworkWeights w = good;
        w.layers.push_back(good.layers[1]);
        w.layers.back().layer_index = 9;
        CHECK_THROWS_WITH_AS(validate_weights(net, w),
                             doctest::Contains("extra layer entries"), IoError);
    }
}

TEST_CASE("container parsing rejects damage") {
    NetworkWeights w = gen_random_weights(2, tiny_net());
    std::vector<uint8_t> bytes = serialize_weights(w);

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        CHECK_THROWS_WITH_AS(deserialize_weights(bytes),
                             "bad weights magic (expected NTPUWGT)", IoError);
    }
    SUBCASE("bad version") {
        bytes[7] = 9;
        CHECK_THROWS_WITH_AS(deserialize_weights(bytes),
                             "unsupported weights version 9", IoError);
    }
    SUBCASE("truncation anywhere") {
        for (size_t cut = 8; cut < bytes.size(); cut += 7) {
            std::vector<uint8_t> t(bytes.begin(), bytes.begin() + long(cut));
            CHECK_THROWS_AS(deserialize_weights(t), IoError);
        }
    }
    SUBCASE("trailing garbage") {
        bytes.push_back(0);
        CHECK_THROWS_WITH_AS(deserialize_weights(bytes),
                             "trailing bytes after last weights entry", IoError);
    }
    SUBCASE("empty file") {
        CHECK_THROWS_AS(deserialize_weights({}), IoError);
    }
}
