#include "aptm/numcore/kernels.hpp"

// AVX2/FMA variants of the reference kernels. This translation unit is built
// with -mavx2 -mfma; callers must gate on avx2_available() before using it.

#if defined(__x86_64__) || defined(_M_X64)
#define APTM_X86 1
#else
#define APTM_X86 0
#endif

#if APTM_X86
#include <immintrin.h>

#include <algorithm>
#include <cstring>

namespace aptm::numcore::kernels {
namespace {

// ---- f32, 8 lanes ----

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f32(float alpha, const float* x, float* out, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) out[i] = alpha * x[i];
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

float hsum_f32(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

float dot_f32(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    }
    float s = hsum_f32(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float sum_f32(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum_f32(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float max_f32(const float* x, std::size_t n) {
    float m = x[0];
    std::size_t i = 0;
    if (n >= 8) {
        __m256 vm = _mm256_loadu_ps(x);
        for (i = 8; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
        alignas(32) float tmp[8];
        _mm256_store_ps(tmp, vm);
        m = tmp[0];
        for (int j = 1; j < 8; ++j) m = std::max(m, tmp[j]);
    }
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

void gemm_nn_f32(std::size_t m, std::size_t n, std::size_t k,
                 const float* a, const float* b, float* c, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(float));
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = a[i * k + p];
            const float* brow = b + p * n;
            const __m256 va = _mm256_set1_ps(aip);
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                _mm256_storeu_ps(crow + j,
                                 _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
            }
            for (; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_nt_f32(std::size_t m, std::size_t n, std::size_t k,
                 const float* a, const float* b, float* c, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const float s = dot_f32(a + i * k, b + j * k, k);
            float* cij = c + i * n + j;
            *cij = acc ? *cij + s : s;
        }
    }
}

void gemm_tn_f32(std::size_t m, std::size_t n, std::size_t k,
                 const float* a, const float* b, float* c, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(float));
    for (std::size_t p = 0; p < k; ++p) {
        const float* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const float api = a[p * m + i];
            float* crow = c + i * n;
            const __m256 va = _mm256_set1_ps(api);
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                _mm256_storeu_ps(crow + j,
                                 _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
            }
            for (; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

// ---- f64, 4 lanes ----

void add_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f64(double alpha, const double* x, double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) out[i] = alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double hsum_f64(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_f64(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double s = hsum_f64(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_f64(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum_f64(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double max_f64(const double* x, std::size_t n) {
    double m = x[0];
    std::size_t i = 0;
    if (n >= 4) {
        __m256d vm = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        alignas(32) double tmp[4];
        _mm256_store_pd(tmp, vm);
        m = tmp[0];
        for (int j = 1; j < 4; ++j) m = std::max(m, tmp[j]);
    }
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

void gemm_nn_f64(std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            const __m256d va = _mm256_set1_pd(aip);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                _mm256_storeu_pd(crow + j,
                                 _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
            }
            for (; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_nt_f64(std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_f64(a + i * k, b + j * k, k);
            double* cij = c + i * n + j;
            *cij = acc ? *cij + s : s;
        }
    }
}

void gemm_tn_f64(std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = a[p * m + i];
            double* crow = c + i * n;
            const __m256d va = _mm256_set1_pd(api);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                _mm256_storeu_pd(crow + j,
                                 _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
            }
            for (; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

}  // namespace

bool avx2_available() {
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
}

const Backend<float>* avx2_backend_f32() {
    if (!avx2_available()) return nullptr;
    static const Backend<float> b = [] {
        Backend<float> k;
        k.add = add_f32;
        k.sub = sub_f32;
        k.mul = mul_f32;
        k.scale = scale_f32;
        k.axpy = axpy_f32;
        k.dot = dot_f32;
        k.sum = sum_f32;
        k.max = max_f32;
        k.gemm_nn = gemm_nn_f32;
        k.gemm_nt = gemm_nt_f32;
        k.gemm_tn = gemm_tn_f32;
        return k;
    }();
    return &b;
}

const Backend<double>* avx2_backend_f64() {
    if (!avx2_available()) return nullptr;
    static const Backend<double> b = [] {
        Backend<double> k;
        k.add = add_f64;
        k.sub = sub_f64;
        k.mul = mul_f64;
        k.scale = scale_f64;
        k.axpy = axpy_f64;
        k.dot = dot_f64;
        k.sum = sum_f64;
        k.max = max_f64;
        k.gemm_nn = gemm_nn_f64;
        k.gemm_nt = gemm_nt_f64;
        k.gemm_tn = gemm_tn_f64;
        return k;
    }();
    return &b;
}

}  // namespace aptm::numcore::kernels

#else  // non-x86 builds keep the scalar path only

namespace aptm::numcore::kernels {

bool avx2_available() { return false; }
const Backend<float>* avx2_backend_f32() { return nullptr; }
const Backend<double>* avx2_backend_f64() { return nullptr; }

}  // namespace aptm::numcore::kernels

#endif
