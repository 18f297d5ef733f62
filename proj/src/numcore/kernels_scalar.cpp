#include "aptm/numcore/kernels.hpp"

#include <algorithm>
#include <cstring>

// Reference kernels. These define the semantics the SIMD variants are tested
// against; keep them as plain loops.

namespace aptm::numcore::kernels {
namespace {

template <class S>
void add_ref(const S* a, const S* b, S* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class S>
void sub_ref(const S* a, const S* b, S* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class S>
void mul_ref(const S* a, const S* b, S* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class S>
void scale_ref(S alpha, const S* x, S* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <class S>
void axpy_ref(S alpha, const S* x, S* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class S>
S dot_ref(const S* a, const S* b, std::size_t n) {
    S acc{0};
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class S>
S sum_ref(const S* x, std::size_t n) {
    S acc{0};
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <class S>
S max_ref(const S* x, std::size_t n) {
    S m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

template <class S>
void gemm_nn_ref(std::size_t m, std::size_t n, std::size_t k,
                 const S* a, const S* b, S* c, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(S));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const S aip = a[i * k + p];
            const S* brow = b + p * n;
            S* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <class S>
void gemm_nt_ref(std::size_t m, std::size_t n, std::size_t k,
                 const S* a, const S* b, S* c, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            S s = dot_ref(a + i * k, b + j * k, k);
            S* cij = c + i * n + j;
            *cij = acc ? *cij + s : s;
        }
    }
}

template <class S>
void gemm_tn_ref(std::size_t m, std::size_t n, std::size_t k,
                 const S* a, const S* b, S* c, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(S));
    for (std::size_t p = 0; p < k; ++p) {
        const S* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const S api = a[p * m + i];
            S* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

template <class S>
Backend<S> make_scalar() {
    Backend<S> b;
    b.add = add_ref<S>;
    b.sub = sub_ref<S>;
    b.mul = mul_ref<S>;
    b.scale = scale_ref<S>;
    b.axpy = axpy_ref<S>;
    b.dot = dot_ref<S>;
    b.sum = sum_ref<S>;
    b.max = max_ref<S>;
    b.gemm_nn = gemm_nn_ref<S>;
    b.gemm_nt = gemm_nt_ref<S>;
    b.gemm_tn = gemm_tn_ref<S>;
    return b;
}

}  // namespace

const Backend<float>& scalar_backend_f32() {
    static const Backend<float> b = make_scalar<float>();
    return b;
}

const Backend<double>& scalar_backend_f64() {
    static const Backend<double> b = make_scalar<double>();
    return b;
}

}  // namespace aptm::numcore::kernels
