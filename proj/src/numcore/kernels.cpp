#include "aptm/numcore/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace aptm::numcore::kernels {
namespace {

enum class Choice { Scalar, Avx2 };

Choice select() {
    const char* env = std::getenv("APTM_KERNEL");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return Choice::Scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Choice::Avx2;
        if (std::strcmp(env, "avx2") == 0) return Choice::Scalar;  // requested but unsupported
    }
    return avx2_available() ? Choice::Avx2 : Choice::Scalar;
}

Choice active() {
    static const Choice c = select();
    return c;
}

}  // namespace

template <>
const Backend<float>& backend<float>() {
    if (active() == Choice::Avx2) return *avx2_backend_f32();
    return scalar_backend_f32();
}

template <>
const Backend<double>& backend<double>() {
    if (active() == Choice::Avx2) return *avx2_backend_f64();
    return scalar_backend_f64();
}

std::string_view active_backend_name() {
    return active() == Choice::Avx2 ? "avx2" : "scalar";
}

}  // namespace aptm::numcore::kernels
