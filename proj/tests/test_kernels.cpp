#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "evfuse/kernels.hpp"
#include "evfuse/rng.hpp"

using namespace evfuse;

namespace {

std::vector<double> random_buf(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.next_uniform(-2.0, 2.0);
    return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("scalar and avx2 backends are bit-identical") {
    const kernels::Table* avx2 = kernels::avx2_table();
    if (avx2 == nullptr) {
        MESSAGE("AVX2 backend unavailable on this machine; skipping equivalence");
        return;
    }
    const kernels::Table& ref = kernels::scalar_table();
    // sizes straddling the 4-lane stripe, including tails
    for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{4}, std::size_t{5},
                          std::size_t{16}, std::size_t{17}, std::size_t{1023}}) {
        const auto a = random_buf(n, 11 * n + 1);
        const auto b = random_buf(n, 13 * n + 7);

        std::vector<double> r1(n), r2(n);
        ref.add(a.data(), b.data(), r1.data(), n);
        avx2->add(a.data(), b.data(), r2.data(), n);
        CHECK(bits_equal(r1, r2));

        ref.sub(a.data(), b.data(), r1.data(), n);
        avx2->sub(a.data(), b.data(), r2.data(), n);
        CHECK(bits_equal(r1, r2));

        ref.mul(a.data(), b.data(), r1.data(), n);
        avx2->mul(a.data(), b.data(), r2.data(), n);
        CHECK(bits_equal(r1, r2));

        ref.scale(a.data(), 1.7, r1.data(), n);
        avx2->scale(a.data(), 1.7, r2.data(), n);
        CHECK(bits_equal(r1, r2));

        r1 = b;
        r2 = b;
        ref.axpy(-0.3, a.data(), r1.data(), n);
        avx2->axpy(-0.3, a.data(), r2.data(), n);
        CHECK(bits_equal(r1, r2));

        const double d1 = ref.dot(a.data(), b.data(), n);
        const double d2 = avx2->dot(a.data(), b.data(), n);
        CHECK(std::memcmp(&d1, &d2, sizeof(double)) == 0);

        const double s1 = ref.sum(a.data(), n);
        const double s2 = avx2->sum(a.data(), n);
        CHECK(std::memcmp(&s1, &s2, sizeof(double)) == 0);
    }
}

TEST_CASE("kernel reductions agree with naive loops") {
    for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{64}, std::size_t{257}}) {
        const auto a = random_buf(n, 100 + n);
        const auto b = random_buf(n, 200 + n);
        double naive_dot = 0.0, naive_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            naive_dot += a[i] * b[i];
            naive_sum += a[i];
        }
        CHECK(kernels::active().dot(a.data(), b.data(), n) == doctest::Approx(naive_dot).epsilon(1e-13));
        CHECK(kernels::active().sum(a.data(), n) == doctest::Approx(naive_sum).epsilon(1e-13));
    }
}

TEST_CASE("active backend is usable") {
    const auto& t = kernels::active();
    CHECK(t.name != nullptr);
    double out = 0.0;
    const double x = 2.0, y = 3.0;
    t.add(&x, &y, &out, 1);
    CHECK(out == 5.0);
}
