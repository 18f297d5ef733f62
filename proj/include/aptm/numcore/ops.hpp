#pragma once
#include <cmath>
#include <cstddef>
#include <vector>

#include "aptm/numcore/kernels.hpp"
#include "aptm/numcore/tensor.hpp"

// Differentiable tensor ops. Forward paths route dense arithmetic through the
// kernel backend; backward closures accumulate into parent grads directly.

namespace aptm::numcore {

namespace detail {

template <class S>
TensorT<S> make_op(Shape shape, std::vector<TensorT<S>> parents,
                   std::function<void(TensorT<S>&)> bw) {
    bool rg = false;
    if (grad_enabled()) {
        for (const auto& p : parents) rg = rg || p.requires_grad;
    }
    TensorT<S> out = TensorT<S>::zeros(std::move(shape), rg);
    if (rg) {
        out.node = std::make_shared<NodeT<S>>();
        out.node->parents = std::move(parents);
        out.node->backward = std::move(bw);
    }
    return out;
}

template <class S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
    }
}

template <class S>
void require_rank(const TensorT<S>& t, int rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape));
    }
}

// Rows of the trailing axis: a [n] tensor is one row, a [m x n] tensor m rows.
template <class S>
std::pair<std::size_t, std::size_t> row_view(const TensorT<S>& t, const char* op) {
    if (t.rank() == 1) return {1, static_cast<std::size_t>(t.extent(0))};
    if (t.rank() == 2) {
        return {static_cast<std::size_t>(t.extent(0)), static_cast<std::size_t>(t.extent(1))};
    }
    throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(t.shape));
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "add");
    TensorT<S> out = detail::make_op<S>(a.shape, {a, b}, [](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const auto& K = kernels::backend<S>();
        if (pa.requires_grad) {
            pa.ensure_grad();
            K.axpy(S{1}, o.grads(), pa.grads(), o.size());
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            K.axpy(S{1}, o.grads(), pb.grads(), o.size());
        }
    });
    kernels::backend<S>().add(a.values(), b.values(), out.values(), out.size());
    return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "sub");
    TensorT<S> out = detail::make_op<S>(a.shape, {a, b}, [](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const auto& K = kernels::backend<S>();
        if (pa.requires_grad) {
            pa.ensure_grad();
            K.axpy(S{1}, o.grads(), pa.grads(), o.size());
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            K.axpy(S{-1}, o.grads(), pb.grads(), o.size());
        }
    });
    kernels::backend<S>().sub(a.values(), b.values(), out.values(), out.size());
    return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "mul");
    TensorT<S> out = detail::make_op<S>(a.shape, {a, b}, [](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const std::size_t n = o.size();
        const S* g = o.grads();
        if (pa.requires_grad) {
            pa.ensure_grad();
            S* ga = pa.grads();
            const S* bv = pb.values();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            S* gb = pb.grads();
            const S* av = pa.values();
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
        }
    });
    kernels::backend<S>().mul(a.values(), b.values(), out.values(), out.size());
    return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S c) {
    TensorT<S> out = detail::make_op<S>(a.shape, {a}, [c](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        if (pa.requires_grad) {
            pa.ensure_grad();
            kernels::backend<S>().axpy(c, o.grads(), pa.grads(), o.size());
        }
    });
    kernels::backend<S>().scale(c, a.values(), out.values(), out.size());
    return out;
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
    TensorT<S> out = detail::make_op<S>(a.shape, {a}, [](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        if (pa.requires_grad) {
            pa.ensure_grad();
            kernels::backend<S>().axpy(S{1}, o.grads(), pa.grads(), o.size());
        }
    });
    const S* av = a.values();
    S* ov = out.values();
    for (std::size_t i = 0; i < out.size(); ++i) ov[i] = av[i] + c;
    return out;
}

template <class S>
TensorT<S> neg(const TensorT<S>& a) {
    return scale(a, S{-1});
}

// --------------------------------------------------------------------- matmul

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape) + " x " +
                         shape_str(b.shape));
    }
    TensorT<S> out = detail::make_op<S>({m, n}, {a, b}, [m, n, k](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const auto& K = kernels::backend<S>();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA = dC * B^T
            K.gemm_nt(m, k, n, o.grads(), pb.values(), pa.grads(), true);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB = A^T * dC
            K.gemm_tn(k, n, m, pa.values(), o.grads(), pb.grads(), true);
        }
    });
    kernels::backend<S>().gemm_nn(m, n, k, a.values(), b.values(), out.values(), false);
    return out;
}

// a [m x k] times b^T where b is [n x k].
template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_rank(a, 2, "matmul_nt");
    detail::require_rank(b, 2, "matmul_nt");
    const int m = a.extent(0), k = a.extent(1), n = b.extent(0);
    if (b.extent(1) != k) {
        throw ShapeError("matmul_nt: inner extents differ, " + shape_str(a.shape) + " x " +
                         shape_str(b.shape) + "^T");
    }
    TensorT<S> out = detail::make_op<S>({m, n}, {a, b}, [m, n, k](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const auto& K = kernels::backend<S>();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA = dC * B
            K.gemm_nn(m, k, n, o.grads(), pb.values(), pa.grads(), true);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB = dC^T * A
            K.gemm_tn(n, k, m, o.grads(), pa.values(), pb.grads(), true);
        }
    });
    kernels::backend<S>().gemm_nt(m, n, k, a.values(), b.values(), out.values(), false);
    return out;
}

template <class S>
TensorT<S> transpose(const TensorT<S>& a) {
    detail::require_rank(a, 2, "transpose");
    const int m = a.extent(0), n = a.extent(1);
    TensorT<S> out = detail::make_op<S>({n, m}, {a}, [m, n](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const S* g = o.grads();
        S* ga = pa.grads();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) ga[j * n + i] += g[i * m + j];
        }
    });
    const S* av = a.values();
    S* ov = out.values();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
    }
    return out;
}

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.size()) {
        throw ShapeError("reshape: element count mismatch " + shape_str(a.shape) + " -> " +
                         shape_str(new_shape));
    }
    TensorT<S> out = detail::make_op<S>(new_shape, {a}, [](TensorT<S>& o) {
        auto& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        kernels::backend<S>().axpy(S{1}, o.grads(), pa.grads(), o.size());
    });
    std::copy(a.values(), a.values() + a.size(), out.values());
    return out;
}

// ------------------------------------------------------- broadcasting helpers

// x [m x n] plus row vector b [n].
template <class S>
TensorT<S> add_rowvec(const TensorT<S>& x, const TensorT<S>& b) {
    detail::require_rank(x, 2, "add_rowvec");
    detail::require_rank(b, 1, "add_rowvec");
    const int m = x.extent(0), n = x.extent(1);
    if (b.extent(0) != n) {
        throw ShapeError("add_rowvec: width mismatch " + shape_str(x.shape) + " + " +
                         shape_str(b.shape));
    }
    TensorT<S> out = detail::make_op<S>({m, n}, {x, b}, [m, n](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        auto& pb = o.node->parents[1];
        const auto& K = kernels::backend<S>();
        if (px.requires_grad) {
            px.ensure_grad();
            K.axpy(S{1}, o.grads(), px.grads(), o.size());
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            const S* g = o.grads();
            S* gb = pb.grads();
            for (int i = 0; i < m; ++i) K.axpy(S{1}, g + std::size_t(i) * n, gb, n);
        }
    });
    const auto& K = kernels::backend<S>();
    for (int i = 0; i < m; ++i) {
        K.add(x.values() + std::size_t(i) * n, b.values(), out.values() + std::size_t(i) * n, n);
    }
    return out;
}

// ------------------------------------------------------------ rows and slices

template <class S>
TensorT<S> row(const TensorT<S>& x, int i) {
    detail::require_rank(x, 2, "row");
    const int m = x.extent(0), n = x.extent(1);
    if (i < 0 || i >= m) throw ShapeError("row: index out of range");
    TensorT<S> out = detail::make_op<S>({n}, {x}, [i, n](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        kernels::backend<S>().axpy(S{1}, o.grads(), px.grads() + std::size_t(i) * n, n);
    });
    std::copy(x.values() + std::size_t(i) * n, x.values() + std::size_t(i + 1) * n, out.values());
    return out;
}

template <class S>
TensorT<S> gather_rows(const TensorT<S>& x, std::vector<int> ids) {
    detail::require_rank(x, 2, "gather_rows");
    const int m = x.extent(0), n = x.extent(1);
    if (ids.empty()) throw ShapeError("gather_rows: empty index list");
    for (int id : ids) {
        if (id < 0 || id >= m) throw ShapeError("gather_rows: index out of range");
    }
    const int k = static_cast<int>(ids.size());
    TensorT<S> out = detail::make_op<S>({k, n}, {x}, [ids, n](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const auto& K = kernels::backend<S>();
        for (std::size_t r = 0; r < ids.size(); ++r) {
            K.axpy(S{1}, o.grads() + r * n, px.grads() + std::size_t(ids[r]) * n, n);
        }
    });
    for (int r = 0; r < k; ++r) {
        std::copy(x.values() + std::size_t(ids[std::size_t(r)]) * n,
                  x.values() + std::size_t(ids[std::size_t(r)] + 1) * n,
                  out.values() + std::size_t(r) * n);
    }
    return out;
}

template <class S>
TensorT<S> slice_cols(const TensorT<S>& x, int c0, int c1) {
    detail::require_rank(x, 2, "slice_cols");
    const int m = x.extent(0), n = x.extent(1);
    if (c0 < 0 || c1 > n || c0 >= c1) throw ShapeError("slice_cols: bad column range");
    const int w = c1 - c0;
    TensorT<S> out = detail::make_op<S>({m, w}, {x}, [m, n, c0, w](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const S* g = o.grads();
        S* gx = px.grads();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) gx[std::size_t(i) * n + c0 + j] += g[std::size_t(i) * w + j];
        }
    });
    for (int i = 0; i < m; ++i) {
        std::copy(x.values() + std::size_t(i) * n + c0, x.values() + std::size_t(i) * n + c1,
                  out.values() + std::size_t(i) * w);
    }
    return out;
}

template <class S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int m = parts[0].extent(0);
    int total = 0;
    for (const auto& p : parts) {
        detail::require_rank(p, 2, "concat_cols");
        if (p.extent(0) != m) throw ShapeError("concat_cols: row count mismatch");
        total += p.extent(1);
    }
    std::vector<int> widths;
    for (const auto& p : parts) widths.push_back(p.extent(1));
    TensorT<S> out = detail::make_op<S>({m, total}, parts, [m, total, widths](TensorT<S>& o) {
        int off = 0;
        for (std::size_t pi = 0; pi < o.node->parents.size(); ++pi) {
            auto& p = o.node->parents[pi];
            const int w = widths[pi];
            if (p.requires_grad) {
                p.ensure_grad();
                const S* g = o.grads();
                S* gp = p.grads();
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < w; ++j) {
                        gp[std::size_t(i) * w + j] += g[std::size_t(i) * total + off + j];
                    }
                }
            }
            off += w;
        }
    });
    int off = 0;
    for (const auto& p : parts) {
        const int w = p.extent(1);
        for (int i = 0; i < m; ++i) {
            std::copy(p.values() + std::size_t(i) * w, p.values() + std::size_t(i + 1) * w,
                      out.values() + std::size_t(i) * total + off);
        }
        off += w;
    }
    return out;
}

template <class S>
TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int n = parts[0].extent(parts[0].rank() - 1);
    int rows = 0;
    for (const auto& p : parts) {
        const auto [r, w] = detail::row_view(p, "concat_rows");
        if (static_cast<int>(w) != n) throw ShapeError("concat_rows: width mismatch");
        rows += static_cast<int>(r);
    }
    TensorT<S> out = detail::make_op<S>({rows, n}, parts, [n](TensorT<S>& o) {
        std::size_t off = 0;
        const auto& K = kernels::backend<S>();
        for (auto& p : o.node->parents) {
            const std::size_t cnt = p.size();
            if (p.requires_grad) {
                p.ensure_grad();
                K.axpy(S{1}, o.grads() + off, p.grads(), cnt);
            }
            off += cnt;
        }
    });
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.values(), p.values() + p.size(), out.values() + off);
        off += p.size();
    }
    return out;
}

// Stack rank-1 tensors of equal width into a [k x n] matrix.
template <class S>
TensorT<S> stack_rows(const std::vector<TensorT<S>>& rows_in) {
    for (const auto& r : rows_in) detail::require_rank(r, 1, "stack_rows");
    return concat_rows(rows_in);
}

// ----------------------------------------------------------------- reductions

template <class S>
TensorT<S> sum(const TensorT<S>& x) {
    TensorT<S> out = detail::make_op<S>({1}, {x}, [](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const S g = (*o.grad)[0];
        S* gx = px.grads();
        for (std::size_t i = 0; i < px.size(); ++i) gx[i] += g;
    });
    (*out.data)[0] = kernels::backend<S>().sum(x.values(), x.size());
    return out;
}

template <class S>
TensorT<S> mean(const TensorT<S>& x) {
    const S inv = S{1} / static_cast<S>(x.size());
    return scale(sum(x), inv);
}

template <class S>
TensorT<S> dot(const TensorT<S>& u, const TensorT<S>& v) {
    detail::require_same_shape(u, v, "dot");
    TensorT<S> out = detail::make_op<S>({1}, {u, v}, [](TensorT<S>& o) {
        auto& pu = o.node->parents[0];
        auto& pv = o.node->parents[1];
        const S g = (*o.grad)[0];
        const auto& K = kernels::backend<S>();
        if (pu.requires_grad) {
            pu.ensure_grad();
            K.axpy(g, pv.values(), pu.grads(), pu.size());
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            K.axpy(g, pu.values(), pv.grads(), pv.size());
        }
    });
    (*out.data)[0] = kernels::backend<S>().dot(u.values(), v.values(), u.size());
    return out;
}

// ------------------------------------------------------------- nonlinearities

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    TensorT<S> out = detail::make_op<S>(x.shape, {x}, [](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const S* y = o.values();
        const S* g = o.grads();
        S* gx = px.grads();
        for (std::size_t i = 0; i < o.size(); ++i) gx[i] += g[i] * y[i] * (S{1} - y[i]);
    });
    const S* xv = x.values();
    S* ov = out.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const S v = xv[i];
        ov[i] = v >= S{0} ? S{1} / (S{1} + std::exp(-v))
                          : std::exp(v) / (S{1} + std::exp(v));
    }
    return out;
}

template <class S>
TensorT<S> gelu(const TensorT<S>& x) {
    TensorT<S> out = detail::make_op<S>(x.shape, {x}, [](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const S* xv = px.values();
        const S* g = o.grads();
        S* gx = px.grads();
        constexpr S inv_sqrt2 = S{0.7071067811865475244};
        constexpr S inv_sqrt2pi = S{0.3989422804014326779};
        for (std::size_t i = 0; i < o.size(); ++i) {
            const S v = xv[i];
            const S cdf = S{0.5} * (S{1} + std::erf(v * inv_sqrt2));
            const S pdf = inv_sqrt2pi * std::exp(S{-0.5} * v * v);
            gx[i] += g[i] * (cdf + v * pdf);
        }
    });
    const S* xv = x.values();
    S* ov = out.values();
    constexpr S inv_sqrt2 = S{0.7071067811865475244};
    for (std::size_t i = 0; i < out.size(); ++i) {
        ov[i] = S{0.5} * xv[i] * (S{1} + std::erf(xv[i] * inv_sqrt2));
    }
    return out;
}

// ------------------------------------------------------- softmax family

namespace detail {

template <class S>
void check_finite_rows(const TensorT<S>& x, const char* op) {
    const S* v = x.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(v[i])) throw NumericError(std::string(op) + ": non-finite input");
    }
}

}  // namespace detail

// Softmax over the trailing axis, stabilized by max subtraction.
template <class S>
TensorT<S> softmax(const TensorT<S>& x) {
    const auto [rows, n] = detail::row_view(x, "softmax");
    detail::check_finite_rows(x, "softmax");
    TensorT<S> out = detail::make_op<S>(x.shape, {x}, [rows = rows, n = n](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const auto& K = kernels::backend<S>();
        for (std::size_t r = 0; r < rows; ++r) {
            const S* y = o.values() + r * n;
            const S* g = o.grads() + r * n;
            S* gx = px.grads() + r * n;
            const S gy = K.dot(g, y, n);
            for (std::size_t j = 0; j < n; ++j) gx[j] += (g[j] - gy) * y[j];
        }
    });
    const auto& K = kernels::backend<S>();
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xv = x.values() + r * n;
        S* ov = out.values() + r * n;
        const S m = K.max(xv, n);
        S s{0};
        for (std::size_t j = 0; j < n; ++j) {
            ov[j] = std::exp(xv[j] - m);
            s += ov[j];
        }
        K.scale(S{1} / s, ov, ov, n);
    }
    return out;
}

template <class S>
TensorT<S> log_softmax(const TensorT<S>& x) {
    const auto [rows, n] = detail::row_view(x, "log_softmax");
    detail::check_finite_rows(x, "log_softmax");
    TensorT<S> out = detail::make_op<S>(x.shape, {x}, [rows = rows, n = n](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const auto& K = kernels::backend<S>();
        for (std::size_t r = 0; r < rows; ++r) {
            const S* y = o.values() + r * n;  // log-probabilities
            const S* g = o.grads() + r * n;
            S* gx = px.grads() + r * n;
            const S gs = K.sum(g, n);
            for (std::size_t j = 0; j < n; ++j) gx[j] += g[j] - gs * std::exp(y[j]);
        }
    });
    const auto& K = kernels::backend<S>();
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xv = x.values() + r * n;
        S* ov = out.values() + r * n;
        const S m = K.max(xv, n);
        S s{0};
        for (std::size_t j = 0; j < n; ++j) s += std::exp(xv[j] - m);
        const S lse = m + std::log(s);
        for (std::size_t j = 0; j < n; ++j) ov[j] = xv[j] - lse;
    }
    return out;
}

// -------------------------------------------------------------- normalization

template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      S eps = S{1e-5}) {
    const auto [rows, n] = detail::row_view(x, "layer_norm");
    detail::require_rank(gamma, 1, "layer_norm");
    detail::require_rank(beta, 1, "layer_norm");
    if (gamma.extent(0) != static_cast<int>(n) || beta.extent(0) != static_cast<int>(n)) {
        throw ShapeError("layer_norm: gamma/beta width mismatch");
    }
    // Cache per-row inverse stddev and normalized values for the backward pass.
    auto inv_std = std::make_shared<std::vector<S>>(rows);
    auto xhat = std::make_shared<std::vector<S>>(rows * n);

    TensorT<S> out = detail::make_op<S>(
        x.shape, {x, gamma, beta}, [rows = rows, n = n, inv_std, xhat](TensorT<S>& o) {
            auto& px = o.node->parents[0];
            auto& pg = o.node->parents[1];
            auto& pb = o.node->parents[2];
            const auto& K = kernels::backend<S>();
            const S inv_n = S{1} / static_cast<S>(n);
            for (std::size_t r = 0; r < rows; ++r) {
                const S* g = o.grads() + r * n;
                const S* xh = xhat->data() + r * n;
                if (pg.requires_grad) {
                    pg.ensure_grad();
                    S* gg = pg.grads();
                    for (std::size_t j = 0; j < n; ++j) gg[j] += g[j] * xh[j];
                }
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    K.axpy(S{1}, g, pb.grads(), n);
                }
                if (px.requires_grad) {
                    px.ensure_grad();
                    S* gx = px.grads() + r * n;
                    const S* gm = pg.values();
                    S mean_dxhat{0}, mean_dxhat_xhat{0};
                    for (std::size_t j = 0; j < n; ++j) {
                        const S dxh = g[j] * gm[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh[j];
                    }
                    mean_dxhat *= inv_n;
                    mean_dxhat_xhat *= inv_n;
                    const S is = (*inv_std)[r];
                    for (std::size_t j = 0; j < n; ++j) {
                        const S dxh = g[j] * gm[j];
                        gx[j] += is * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                    }
                }
            }
        });
    const S inv_n = S{1} / static_cast<S>(n);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xv = x.values() + r * n;
        S* ov = out.values() + r * n;
        S* xh = xhat->data() + r * n;
        S mu{0};
        for (std::size_t j = 0; j < n; ++j) mu += xv[j];
        mu *= inv_n;
        S var{0};
        for (std::size_t j = 0; j < n; ++j) {
            const S d = xv[j] - mu;
            var += d * d;
        }
        var *= inv_n;
        const S is = S{1} / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        const S* gm = gamma.values();
        const S* bt = beta.values();
        for (std::size_t j = 0; j < n; ++j) {
            xh[j] = (xv[j] - mu) * is;
            ov[j] = gm[j] * xh[j] + bt[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------- losses etc.

// -sum(target * log_softmax(logits)) per row; scalar for rank-1 input,
// [rows] for rank-2. Target rows must sum to 1 and carry no gradient.
template <class S>
TensorT<S> cross_entropy(const TensorT<S>& logits, const TensorT<S>& target) {
    detail::require_same_shape(logits, target, "cross_entropy");
    if (target.requires_grad) {
        throw ContractError("cross_entropy: target must not require grad");
    }
    const auto [rows, n] = detail::row_view(logits, "cross_entropy");
    detail::check_finite_rows(logits, "cross_entropy");
    const auto& K = kernels::backend<S>();
    for (std::size_t r = 0; r < rows; ++r) {
        const S s = K.sum(target.values() + r * n, n);
        if (std::fabs(static_cast<double>(s) - 1.0) > 1e-5) {
            throw ContractError("cross_entropy: target row does not sum to 1");
        }
    }
    // Cache softmax for backward.
    auto probs = std::make_shared<std::vector<S>>(rows * n);
    Shape out_shape = logits.rank() == 1 ? Shape{1} : Shape{static_cast<int>(rows)};
    TensorT<S> out = detail::make_op<S>(
        out_shape, {logits, target}, [rows = rows, n = n, probs](TensorT<S>& o) {
            auto& pl = o.node->parents[0];
            auto& pt = o.node->parents[1];
            if (!pl.requires_grad) return;
            pl.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const S g = (*o.grad)[o.size() == 1 ? 0 : r];
                const S* p = probs->data() + r * n;
                const S* t = pt.values() + r * n;
                S* gl = pl.grads() + r * n;
                for (std::size_t j = 0; j < n; ++j) gl[j] += g * (p[j] - t[j]);
            }
        });
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xv = logits.values() + r * n;
        const S* t = target.values() + r * n;
        S* p = probs->data() + r * n;
        const S m = K.max(xv, n);
        S s{0};
        for (std::size_t j = 0; j < n; ++j) {
            p[j] = std::exp(xv[j] - m);
            s += p[j];
        }
        const S lse = m + std::log(s);
        K.scale(S{1} / s, p, p, n);
        S ce{0};
        for (std::size_t j = 0; j < n; ++j) {
            if (t[j] != S{0}) ce -= t[j] * (xv[j] - lse);
        }
        (*out.data)[out.size() == 1 ? 0 : r] = ce;
    }
    return out;
}

// Per-element binary cross-entropy from logits: softplus(z) - y*z.
// Targets are probabilities in [0,1] and carry no gradient.
template <class S>
TensorT<S> bce_with_logits(const TensorT<S>& logits, const TensorT<S>& target) {
    detail::require_same_shape(logits, target, "bce_with_logits");
    if (target.requires_grad) {
        throw ContractError("bce_with_logits: target must not require grad");
    }
    TensorT<S> out = detail::make_op<S>(logits.shape, {logits, target}, [](TensorT<S>& o) {
        auto& pl = o.node->parents[0];
        auto& pt = o.node->parents[1];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const S* z = pl.values();
        const S* y = pt.values();
        const S* g = o.grads();
        S* gl = pl.grads();
        for (std::size_t i = 0; i < o.size(); ++i) {
            const S p = z[i] >= S{0} ? S{1} / (S{1} + std::exp(-z[i]))
                                     : std::exp(z[i]) / (S{1} + std::exp(z[i]));
            gl[i] += g[i] * (p - y[i]);
        }
    });
    const S* z = logits.values();
    const S* y = target.values();
    S* ov = out.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const S sp = z[i] > S{0} ? z[i] + std::log1p(std::exp(-z[i]))
                                 : std::log1p(std::exp(z[i]));
        ov[i] = sp - y[i] * z[i];
    }
    return out;
}

// ------------------------------------------------------------ vector geometry

template <class S>
TensorT<S> l2_normalize(const TensorT<S>& v) {
    detail::require_rank(v, 1, "l2_normalize");
    const std::size_t n = v.size();
    const S norm2 = kernels::backend<S>().dot(v.values(), v.values(), n);
    const S norm = std::sqrt(norm2);
    if (!(norm > S{1e-12})) throw NumericError("l2_normalize: zero-norm vector");
    TensorT<S> out = detail::make_op<S>(v.shape, {v}, [norm](TensorT<S>& o) {
        auto& pv = o.node->parents[0];
        if (!pv.requires_grad) return;
        pv.ensure_grad();
        const auto& K = kernels::backend<S>();
        const std::size_t n = o.size();
        const S* y = o.values();
        const S* g = o.grads();
        const S gy = K.dot(g, y, n);
        S* gv = pv.grads();
        const S inv = S{1} / norm;
        for (std::size_t i = 0; i < n; ++i) gv[i] += inv * (g[i] - gy * y[i]);
    });
    kernels::backend<S>().scale(S{1} / norm, v.values(), out.values(), n);
    return out;
}

template <class S>
TensorT<S> cosine_similarity(const TensorT<S>& u, const TensorT<S>& v) {
    detail::require_rank(u, 1, "cosine_similarity");
    detail::require_same_shape(u, v, "cosine_similarity");
    const auto& K = kernels::backend<S>();
    const std::size_t n = u.size();
    const S nu = std::sqrt(K.dot(u.values(), u.values(), n));
    const S nv = std::sqrt(K.dot(v.values(), v.values(), n));
    if (!(nu > S{1e-12}) || !(nv > S{1e-12})) {
        throw NumericError("cosine_similarity: zero-norm vector");
    }
    TensorT<S> out = detail::make_op<S>({1}, {u, v}, [nu, nv](TensorT<S>& o) {
        auto& pu = o.node->parents[0];
        auto& pv = o.node->parents[1];
        const auto& K = kernels::backend<S>();
        const std::size_t n = pu.size();
        const S c = (*o.data)[0];
        const S g = (*o.grad)[0];
        if (pu.requires_grad) {
            pu.ensure_grad();
            S* gu = pu.grads();
            const S* uv = pu.values();
            const S* vv = pv.values();
            for (std::size_t i = 0; i < n; ++i) {
                gu[i] += g * (vv[i] / (nu * nv) - c * uv[i] / (nu * nu));
            }
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            S* gv = pv.grads();
            const S* uv = pu.values();
            const S* vv = pv.values();
            for (std::size_t i = 0; i < n; ++i) {
                gv[i] += g * (uv[i] / (nu * nv) - c * vv[i] / (nv * nv));
            }
        }
    });
    (*out.data)[0] = K.dot(u.values(), v.values(), n) / (nu * nv);
    return out;
}

// x / t for a positive scalar tensor t; gradient flows to both.
template <class S>
TensorT<S> div_by_scalar(const TensorT<S>& x, const TensorT<S>& t) {
    if (!t.is_scalar()) throw ShapeError("div_by_scalar: divisor must be scalar");
    const S tv = t.item();
    TensorT<S> out = detail::make_op<S>(x.shape, {x, t}, [tv](TensorT<S>& o) {
        auto& px = o.node->parents[0];
        auto& pt = o.node->parents[1];
        const auto& K = kernels::backend<S>();
        if (px.requires_grad) {
            px.ensure_grad();
            K.axpy(S{1} / tv, o.grads(), px.grads(), o.size());
        }
        if (pt.requires_grad) {
            pt.ensure_grad();
            const S gx = K.dot(o.grads(), px.values(), o.size());
            (*pt.grad)[0] += -gx / (tv * tv);
        }
    });
    kernels::backend<S>().scale(S{1} / tv, x.values(), out.values(), out.size());
    return out;
}

}  // namespace aptm::numcore
