#pragma once

#include <cstddef>

namespace evfuse::kernels {

// Contiguous-f64 kernels behind every tensor op. Two backends: a scalar
// reference and an AVX2 variant, selected once at startup.
//
// Both backends implement the same fixed accumulation schedule so results
// are bit-identical regardless of which one runs:
//   - elementwise ops have no reduction order to disagree on;
//   - dot/sum accumulate into four striped lanes (lane l takes elements
//     4*i + l), combine lanes as (l0+l1) + (l2+l3), then fold the tail
//     (n % 4 trailing elements) sequentially;
//   - no fused multiply-add anywhere (builds use -ffp-contract=off, the
//     AVX2 backend uses separate mul/add intrinsics).
// The equivalence tests assert exact equality between backends.

struct Table {
    const char* name;
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    void (*scale)(const double* a, double s, double* out, std::size_t n);
    void (*axpy)(double a, const double* x, double* y, std::size_t n);  // y += a*x
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
};

const Table& scalar_table();

// nullptr when the binary lacks the AVX2 translation unit or the CPU lacks
// AVX2.
const Table* avx2_table();

// Backend chosen on first call: EVFUSE_KERNELS=scalar|avx2 overrides,
// otherwise AVX2 when available, scalar otherwise.
const Table& active();

}  // namespace evfuse::kernels
