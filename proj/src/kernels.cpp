#include "evfuse/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace evfuse::kernels {

namespace {

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Striped 4-lane schedule; see kernels.hpp for the contract.
double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4) {
        acc0 += a[i + 0] * b[i + 0];
        acc1 += a[i + 1] * b[i + 1];
        acc2 += a[i + 2] * b[i + 2];
        acc3 += a[i + 3] * b[i + 3];
    }
    double s = (acc0 + acc1) + (acc2 + acc3);
    for (std::size_t i = n4; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_scalar(const double* a, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4) {
        acc0 += a[i + 0];
        acc1 += a[i + 1];
        acc2 += a[i + 2];
        acc3 += a[i + 3];
    }
    double s = (acc0 + acc1) + (acc2 + acc3);
    for (std::size_t i = n4; i < n; ++i) s += a[i];
    return s;
}

constexpr Table kScalarTable = {
    "scalar", add_scalar, sub_scalar, mul_scalar, scale_scalar, axpy_scalar, dot_scalar, sum_scalar,
};

const Table* select_active() {
    const char* env = std::getenv("EVFUSE_KERNELS");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return &kScalarTable;
        if (std::strcmp(env, "avx2") == 0) {
            const Table* t = avx2_table();
            if (t != nullptr) return t;
            // Requested backend unavailable; fall back rather than abort.
            return &kScalarTable;
        }
    }
    if (const Table* t = avx2_table()) return t;
    return &kScalarTable;
}

}  // namespace

const Table& scalar_table() { return kScalarTable; }

#if !defined(EVFUSE_WITH_AVX2)
const Table* avx2_table() { return nullptr; }
#endif

const Table& active() {
    static const Table* chosen = select_active();
    return *chosen;
}

}  // namespace evfuse::kernels
