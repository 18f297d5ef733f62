#pragma once
#include <cstddef>
#include <string_view>

namespace aptm::numcore::kernels {

// Dense arithmetic primitives behind the tensor ops. Each entry has a scalar
// reference implementation and, on capable x86-64 hosts, an AVX2/FMA variant.
// The active backend is chosen once at startup: APTM_KERNEL=scalar|avx2
// overrides auto-detection. All buffers are contiguous row-major.
template <class S>
struct Backend {
    void (*add)(const S* a, const S* b, S* out, std::size_t n);
    void (*sub)(const S* a, const S* b, S* out, std::size_t n);
    void (*mul)(const S* a, const S* b, S* out, std::size_t n);
    void (*scale)(S alpha, const S* x, S* out, std::size_t n);
    void (*axpy)(S alpha, const S* x, S* y, std::size_t n);  // y += alpha*x
    S (*dot)(const S* a, const S* b, std::size_t n);
    S (*sum)(const S* x, std::size_t n);
    S (*max)(const S* x, std::size_t n);  // n >= 1

    // C[m x n] = A*B (+C when acc). gemm_nt takes B as [n x k] and multiplies
    // by its transpose; gemm_tn takes A as [k x m].
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const S* a, const S* b, S* c, bool acc);
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const S* a, const S* b, S* c, bool acc);
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const S* a, const S* b, S* c, bool acc);
};

const Backend<float>& scalar_backend_f32();
const Backend<double>& scalar_backend_f64();

bool avx2_available();
// nullptr when the host lacks AVX2/FMA or the build has no x86 support.
const Backend<float>* avx2_backend_f32();
const Backend<double>* avx2_backend_f64();

template <class S>
const Backend<S>& backend();

std::string_view active_backend_name();

}  // namespace aptm::numcore::kernels
