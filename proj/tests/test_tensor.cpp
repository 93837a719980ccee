#include <doctest.h>

#include <cstring>
#include <limits>
#include <sstream>

#include "evfuse/errors.hpp"
#include "evfuse/tensor.hpp"
#include "oracles.hpp"

using namespace evfuse;

TEST_CASE("from_data validates element count") {
    CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({0}, {}), ShapeError);
}

TEST_CASE("item requires a scalar") {
    CHECK(Tensor::scalar(4.5).item() == 4.5);
    CHECK_THROWS_AS(Tensor::zeros({2}).item(), ContractError);
}

TEST_CASE("dump format round trips bitwise") {
    Tensor t = oracle::random_tensor({3, 4, 5}, 42, -100.0, 100.0);
    t.set(0, 0.0);
    t.set(1, -0.0);
    t.set(2, 1e-308);

    std::stringstream ss;
    t.save(ss);
    Tensor back = Tensor::load(ss);

    REQUIRE(back.shape() == t.shape());
    CHECK(std::memcmp(back.data(), t.data(), t.size() * sizeof(double)) == 0);
}

TEST_CASE("dump header layout is pinned") {
    Tensor t = Tensor::from_data({2}, {1.0, 2.0});
    std::stringstream ss;
    t.save(ss);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 4 + 4 + 4 + 16);
    CHECK(bytes.substr(0, 4) == "HFT1");
    // u32 LE ndim = 1, extent = 2
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);
    // f64 LE 1.0 = 00 00 00 00 00 00 f0 3f
    CHECK(static_cast<unsigned char>(bytes[12 + 6]) == 0xF0);
    CHECK(static_cast<unsigned char>(bytes[12 + 7]) == 0x3F);
}

TEST_CASE("load rejects bad magic") {
    std::stringstream ss("XXXX");
    CHECK_THROWS_AS(Tensor::load(ss), ParseError);
}

TEST_CASE("with_shape shares the buffer") {
    Tensor t = Tensor::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
    Tensor v = t.with_shape({3, 2});
    CHECK(v.data() == t.data());
    CHECK(v.at(2, 1) == 5.0);
    CHECK_THROWS_AS(t.with_shape({4}), ShapeError);
}

TEST_CASE("all_finite flags NaN and Inf") {
    Tensor t = Tensor::zeros({3});
    CHECK(t.all_finite());
    t.set(1, std::numeric_limits<double>::infinity());
    CHECK_FALSE(t.all_finite());
}
