// Dense 64-bit tensors with reverse-mode differentiation on a per-thread tape.
//
// Tensors are value types over shared immutable storage: copying shares the
// buffer, and no op ever writes through an existing tensor's data. The only
// mutable state is the grad buffer. Ops record backward closures on the
// thread-local DiffGraph tape; append order is topological order, so backward
// is a single reverse sweep. Interior grad buffers are scratch (zeroed at the
// start of every backward), leaf grads accumulate until zero_grad().
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ssn/common.hpp"

namespace ssn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {
using Buffer = std::vector<double>;
using BufferPtr = std::shared_ptr<Buffer>;
}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)),
          data_(std::make_shared<detail::Buffer>(check_extents(shape_), fill)) {}

    Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
        if (static_cast<std::int64_t>(values.size()) != check_extents(shape_))
            throw ShapeError("Tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape_));
        data_ = std::make_shared<detail::Buffer>(std::move(values));
    }

    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), 1.0); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

    static Tensor uniform(Rng& rng, Shape s, double lo, double hi) {
        Tensor t(std::move(s));
        for (double& v : *t.data_) v = rng.uniform(lo, hi);
        return t;
    }

    /// 2-D convenience for tests and small literals.
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        int r = static_cast<int>(rows.size());
        int c = r ? static_cast<int>(rows.begin()->size()) : 0;
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(r) * static_cast<std::size_t>(c));
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != c)
                throw ShapeError("Tensor::from_rows: ragged rows");
            v.insert(v.end(), row.begin(), row.end());
        }
        return Tensor(Shape{r, c}, std::move(v));
    }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int dim() const { return static_cast<int>(shape_.size()); }
    int extent(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

    const double* data() const { return data_->data(); }
    double* data() { return data_->data(); }
    std::span<const double> values() const { return {data_->data(), data_->size()}; }

    double item() const {
        if (numel() != 1) throw ShapeError("Tensor::item: tensor has shape " + shape_str(shape_));
        return (*data_)[0];
    }

    template <class... Is>
    double operator()(Is... idx) const {
        return (*data_)[flat_index({static_cast<int>(idx)...})];
    }

    bool requires_grad() const { return requires_grad_; }

    /// Mark a leaf tensor as a differentiable parameter (allocates its grad buffer).
    Tensor& set_requires_grad(bool on = true) {
        if (node_ >= 0)
            throw std::logic_error("set_requires_grad: only valid on leaf tensors");
        requires_grad_ = on;
        if (on && !grad_) grad_ = std::make_shared<detail::Buffer>(data_->size(), 0.0);
        if (!on) grad_.reset();
        return *this;
    }

    const double* grad_data() const { return grad_->data(); }
    double* grad_data() { return grad_->data(); }
    bool has_grad() const { return grad_ != nullptr; }

    /// Copy of the gradient as a plain tensor.
    Tensor grad() const {
        if (!grad_) throw std::logic_error("Tensor::grad: no grad buffer");
        return Tensor(shape_, *grad_);
    }

    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
    }

    int node() const { return node_; }
    bool is_leaf() const { return node_ < 0; }

    // -- tape plumbing (used by op implementations) --
    detail::BufferPtr storage() const { return data_; }
    detail::BufferPtr grad_storage() const { return grad_; }
    void prepare_grad() {
        if (!grad_) grad_ = std::make_shared<detail::Buffer>(data_->size(), 0.0);
        requires_grad_ = true;
    }
    void set_node(int id) { node_ = id; }

    std::int64_t flat_index(std::initializer_list<int> idx) const {
        if (static_cast<int>(idx.size()) != dim())
            throw ShapeError("Tensor: indexing with " + std::to_string(idx.size()) +
                             " indices into shape " + shape_str(shape_));
        std::int64_t flat = 0;
        int i = 0;
        for (int v : idx) flat = flat * shape_[static_cast<std::size_t>(i++)] + v;
        return flat;
    }

private:
    static std::int64_t check_extents(const Shape& s) {
        if (s.empty()) throw ShapeError("Tensor: empty shape");
        for (int e : s)
            if (e <= 0) throw ShapeError("Tensor: nonpositive extent in " + shape_str(s));
        return shape_numel(s);
    }

    Shape shape_;
    detail::BufferPtr data_;
    detail::BufferPtr grad_;
    bool requires_grad_ = false;
    int node_ = -1;
};

// ---------------------------------------------------------------------------
// Differentiation tape
// ---------------------------------------------------------------------------

inline bool& grad_mode_flag() {
    static thread_local bool enabled = true;
    return enabled;
}
inline bool grad_enabled() { return grad_mode_flag(); }

/// RAII guard disabling tape recording (inference / finite differences).
class NoGradGuard {
public:
    NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Append-only tape; append order == topological order, so the backward pass
/// is one reverse sweep that touches each node exactly once.
class DiffGraph {
public:
    struct Node {
        const char* op;
        std::vector<int> inputs;  // producing-node ids; -1 marks a leaf input
        detail::BufferPtr out_grad;
        std::function<void()> backward;
    };

    static DiffGraph& active() {
        static thread_local DiffGraph graph;
        return graph;
    }

    int append(const char* op, std::vector<int> inputs, detail::BufferPtr out_grad,
               std::function<void()> backward) {
        nodes_.push_back(Node{op, std::move(inputs), std::move(out_grad), std::move(backward)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    /// Reverse-mode sweep from `loss` (must be scalar). Leaf grads accumulate;
    /// interior grads are zeroed first so repeated calls double leaf grads.
    void backward(const Tensor& loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                        shape_str(loss.shape()));
        if (loss.node() < 0) {
            if (loss.requires_grad()) {
                (*loss.grad_storage())[0] += 1.0;
                return;
            }
            throw std::invalid_argument("backward: loss is not connected to the graph");
        }
        // interior grad buffers are zero on allocation; re-zero only when a
        // previous sweep already wrote into them
        if (swept_)
            for (auto& n : nodes_) std::fill(n.out_grad->begin(), n.out_grad->end(), 0.0);
        swept_ = true;
        (*nodes_[static_cast<std::size_t>(loss.node())].out_grad)[0] = 1.0;
        for (int i = loss.node(); i >= 0; --i) nodes_[static_cast<std::size_t>(i)].backward();
    }

    /// Drop all recorded nodes. Interior tensors' histories become stale; leaf
    /// tensors (parameters) are unaffected.
    void clear() {
        nodes_.clear();
        swept_ = false;
    }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

private:
    std::vector<Node> nodes_;
    bool swept_ = false;
};

inline void backward(const Tensor& loss) { DiffGraph::active().backward(loss); }

namespace detail {

inline bool tracked(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

/// Collects input nodes for an op and, when any input is tracked, prepares the
/// output grad buffer so record() can append the backward closure to the tape.
struct OpRecorder {
    Tensor& out;
    const char* op;
    std::vector<int> input_nodes;
    bool any_tracked = false;

    OpRecorder(Tensor& out_, const char* op_, std::initializer_list<const Tensor*> ins)
        : out(out_), op(op_) {
        for (const Tensor* t : ins) {
            input_nodes.push_back(t->node());
            any_tracked = any_tracked || tracked(*t);
        }
        any_tracked = any_tracked && grad_enabled();
        if (any_tracked) out.prepare_grad();
    }

    template <class Fn>
    void record(Fn&& fn) {
        if (!any_tracked) return;
        int id = DiffGraph::active().append(op, std::move(input_nodes), out.grad_storage(),
                                            std::forward<Fn>(fn));
        out.set_node(id);
    }
};

inline void accumulate(const BufferPtr& g, const double* src, std::int64_t n) {
    if (!g) return;
    double* dst = g->data();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

// C[m x n] (+)= A[m x k] . B[k x n]; per-element accumulation runs in k order.
inline void mm(const double* A, const double* B, double* C, int m, int k, int n,
               bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* crow = C + static_cast<std::int64_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        const double* arow = A + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double a = arow[p];
            const double* brow = B + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[m x n] (+)= A[m x k] . B[n x k]^T (rows dotted with rows).
inline void mm_abT(const double* A, const double* B, double* C, int m, int k, int n,
                   bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = A + static_cast<std::int64_t>(i) * k;
        double* crow = C + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = B + static_cast<std::int64_t>(j) * k;
            double acc = accumulate ? crow[j] : 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

// C[k x n] (+)= A[m x k]^T . B[m x n].
inline void mm_aTb(const double* A, const double* B, double* C, int m, int k, int n,
                   bool accumulate) {
    if (!accumulate) std::fill(C, C + static_cast<std::int64_t>(k) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = A + static_cast<std::int64_t>(i) * k;
        const double* brow = B + static_cast<std::int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double a = arow[p];
            double* crow = C + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    const std::int64_t n = a.numel();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    detail::OpRecorder rec(out, "add", {&a, &b});
    rec.record([ga = a.grad_storage(), gb = b.grad_storage(), go = out.grad_storage(), n] {
        detail::accumulate(ga, go->data(), n);
        detail::accumulate(gb, go->data(), n);
    });
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const std::int64_t n = a.numel();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    detail::OpRecorder rec(out, "sub", {&a, &b});
    rec.record([ga = a.grad_storage(), gb = b.grad_storage(), go = out.grad_storage(), n] {
        detail::accumulate(ga, go->data(), n);
        if (gb) {
            double* dst = gb->data();
            const double* g = go->data();
            for (std::int64_t i = 0; i < n; ++i) dst[i] -= g[i];
        }
    });
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const std::int64_t n = a.numel();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    detail::OpRecorder rec(out, "mul", {&a, &b});
    rec.record([sa = a.storage(), sb = b.storage(), ga = a.grad_storage(), gb = b.grad_storage(),
                go = out.grad_storage(), n] {
        const double* g = go->data();
        if (ga) {
            double* dst = ga->data();
            const double* pb2 = sb->data();
            for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i] * pb2[i];
        }
        if (gb) {
            double* dst = gb->data();
            const double* pa2 = sa->data();
            for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i] * pa2[i];
        }
    });
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape());
    const std::int64_t n = a.numel();
    const double* pa = a.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
    detail::OpRecorder rec(out, "scale", {&a});
    rec.record([ga = a.grad_storage(), go = out.grad_storage(), c, n] {
        if (!ga) return;
        double* dst = ga->data();
        const double* g = go->data();
        for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i] * c;
    });
    return out;
}

inline Tensor sum(const Tensor& a) {
    double acc = 0.0;
    const double* pa = a.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) acc += pa[i];
    Tensor out = Tensor::scalar(acc);
    detail::OpRecorder rec(out, "sum", {&a});
    rec.record([ga = a.grad_storage(), go = out.grad_storage(), n] {
        if (!ga) return;
        const double g = (*go)[0];
        double* dst = ga->data();
        for (std::int64_t i = 0; i < n; ++i) dst[i] += g;
    });
    return out;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

/// Exact GELU: x * Phi(x) with the Gaussian CDF.
inline Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    Tensor out(x.shape());
    const std::int64_t n = x.numel();
    const double* px = x.data();
    double* po = out.data();
    const bool tracked = detail::tracked(x);
    std::vector<double> cdf_cache;  // Phi(x), reused by the derivative
    if (tracked) cdf_cache.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(px[i] * inv_sqrt2));
        po[i] = px[i] * cdf;
        if (tracked) cdf_cache[static_cast<std::size_t>(i)] = cdf;
    }
    detail::OpRecorder rec(out, "gelu", {&x});
    rec.record([sx = x.storage(), cdf = std::move(cdf_cache), gx = x.grad_storage(),
                go = out.grad_storage(), n] {
        if (!gx) return;
        constexpr double inv_sqrt_2pi = 0.39894228040143267794;
        const double* px2 = sx->data();
        const double* g = go->data();
        double* dst = gx->data();
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = px2[i];
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dst[i] += g[i] * (cdf[static_cast<std::size_t>(i)] + v * pdf);
        }
    });
    return out;
}

/// Numerically stable softmax along `axis` (max-subtraction per slice).
inline Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0) axis += x.dim();
    if (axis < 0 || axis >= x.dim())
        throw ShapeError("softmax: axis out of range for shape " + shape_str(x.shape()));
    const int extent = x.extent(axis);
    std::int64_t inner = 1, outer = 1;
    for (int i = axis + 1; i < x.dim(); ++i) inner *= x.extent(i);
    for (int i = 0; i < axis; ++i) outer *= x.extent(i);

    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * extent * inner + in;
            double mx = px[base];
            for (int k = 1; k < extent; ++k) mx = std::max(mx, px[base + k * inner]);
            double denom = 0.0;
            for (int k = 0; k < extent; ++k) {
                const double e = std::exp(px[base + k * inner] - mx);
                po[base + k * inner] = e;
                denom += e;
            }
            const double inv = 1.0 / denom;
            for (int k = 0; k < extent; ++k) po[base + k * inner] *= inv;
        }
    }
    detail::OpRecorder rec(out, "softmax", {&x});
    rec.record([sy = out.storage(), gx = x.grad_storage(), go = out.grad_storage(), outer, inner,
                extent] {
        if (!gx) return;
        const double* y = sy->data();
        const double* g = go->data();
        double* dst = gx->data();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * extent * inner + in;
                double dot = 0.0;
                for (int k = 0; k < extent; ++k) dot += g[base + k * inner] * y[base + k * inner];
                for (int k = 0; k < extent; ++k) {
                    const std::int64_t idx = base + k * inner;
                    dst[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
    return out;
}

/// Elementwise wrap to (-pi, pi]; derivative is 1 away from the seam.
inline Tensor wrap_angle(const Tensor& x) {
    Tensor out(x.shape());
    const std::int64_t n = x.numel();
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = ssn::wrap_angle(px[i]);
    detail::OpRecorder rec(out, "wrap_angle", {&x});
    rec.record([gx = x.grad_storage(), go = out.grad_storage(), n] {
        detail::accumulate(gx, go->data(), n);
    });
    return out;
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    Tensor out(std::move(shape), std::vector<double>(x.data(), x.data() + x.numel()));
    detail::OpRecorder rec(out, "reshape", {&x});
    rec.record([gx = x.grad_storage(), go = out.grad_storage(), n = x.numel()] {
        detail::accumulate(gx, go->data(), n);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline void check_matrix(const Tensor& t, const char* op) {
    if (t.dim() != 2)
        throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                         shape_str(t.shape()));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    check_matrix(a, "matmul");
    check_matrix(b, "matmul");
    if (a.extent(1) != b.extent(0))
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out(Shape{m, n});
    detail::mm(a.data(), b.data(), out.data(), m, k, n, false);
    detail::OpRecorder rec(out, "matmul", {&a, &b});
    rec.record([sa = a.storage(), sb = b.storage(), ga = a.grad_storage(), gb = b.grad_storage(),
                go = out.grad_storage(), m, k, n] {
        // dA = dC . B^T, dB = A^T . dC
        if (ga) detail::mm_abT(go->data(), sb->data(), ga->data(), m, n, k, true);
        if (gb) detail::mm_aTb(sa->data(), go->data(), gb->data(), m, k, n, true);
    });
    return out;
}

inline Tensor transpose(const Tensor& a) {
    check_matrix(a, "transpose");
    const int m = a.extent(0), n = a.extent(1);
    Tensor out(Shape{n, m});
    const double* pa = a.data();
    double* po = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) po[static_cast<std::int64_t>(j) * m + i] = pa[static_cast<std::int64_t>(i) * n + j];
    detail::OpRecorder rec(out, "transpose", {&a});
    rec.record([ga = a.grad_storage(), go = out.grad_storage(), m, n] {
        if (!ga) return;
        const double* g = go->data();
        double* dst = ga->data();
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i)
                dst[static_cast<std::int64_t>(i) * n + j] += g[static_cast<std::int64_t>(j) * m + i];
    });
    return out;
}

/// Columns [c0, c1) of a 2-D tensor.
inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    check_matrix(a, "slice_cols");
    const int m = a.extent(0), n = a.extent(1);
    if (c0 < 0 || c1 > n || c0 >= c1)
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for " + shape_str(a.shape()));
    const int w = c1 - c0;
    Tensor out(Shape{m, w});
    const double* pa = a.data();
    double* po = out.data();
    for (int i = 0; i < m; ++i)
        std::copy(pa + static_cast<std::int64_t>(i) * n + c0, pa + static_cast<std::int64_t>(i) * n + c1,
                  po + static_cast<std::int64_t>(i) * w);
    detail::OpRecorder rec(out, "slice_cols", {&a});
    rec.record([ga = a.grad_storage(), go = out.grad_storage(), m, n, c0, w] {
        if (!ga) return;
        const double* g = go->data();
        double* dst = ga->data();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                dst[static_cast<std::int64_t>(i) * n + c0 + j] += g[static_cast<std::int64_t>(i) * w + j];
    });
    return out;
}

/// Horizontal concatenation of equally tall 2-D tensors.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no tensors");
    const int m = parts[0].extent(0);
    int n = 0;
    for (const Tensor& t : parts) {
        check_matrix(t, "concat_cols");
        if (t.extent(0) != m)
            throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(t.shape()));
        n += t.extent(1);
    }
    Tensor out(Shape{m, n});
    double* po = out.data();
    int col = 0;
    for (const Tensor& t : parts) {
        const int w = t.extent(1);
        const double* pt = t.data();
        for (int i = 0; i < m; ++i)
            std::copy(pt + static_cast<std::int64_t>(i) * w, pt + static_cast<std::int64_t>(i) * w + w,
                      po + static_cast<std::int64_t>(i) * n + col);
        col += w;
    }
    bool any = false;
    std::vector<int> input_nodes;
    for (const Tensor& t : parts) {
        input_nodes.push_back(t.node());
        any = any || detail::tracked(t);
    }
    if (any) {
        out.prepare_grad();
        std::vector<detail::BufferPtr> grads;
        std::vector<int> widths;
        for (const Tensor& t : parts) {
            grads.push_back(t.grad_storage());
            widths.push_back(t.extent(1));
        }
        int id = DiffGraph::active().append(
            "concat_cols", std::move(input_nodes), out.grad_storage(),
            [grads, widths, go = out.grad_storage(), m, n] {
                const double* g = go->data();
                int col2 = 0;
                for (std::size_t p = 0; p < grads.size(); ++p) {
                    const int w = widths[p];
                    if (grads[p]) {
                        double* dst = grads[p]->data();
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < w; ++j)
                                dst[static_cast<std::int64_t>(i) * w + j] +=
                                    g[static_cast<std::int64_t>(i) * n + col2 + j];
                    }
                    col2 += w;
                }
            });
        out.set_node(id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Image ops (channel-first C x H x W)
// ---------------------------------------------------------------------------

inline void check_chw(const Tensor& t, const char* op) {
    if (t.dim() != 3)
        throw ShapeError(std::string(op) + ": expected C x H x W, got " + shape_str(t.shape()));
}

namespace detail {

// col is (C_in*k*k) x (H_out*W_out), rows ordered (ci, ky, kx).
inline void im2col(const double* x, int cin, int h, int w, int k, int stride, int pad,
                   int h_out, int w_out, double* col) {
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t patches = static_cast<std::int64_t>(h_out) * w_out;
    std::int64_t row = 0;
    for (int ci = 0; ci < cin; ++ci) {
        const double* xc = x + ci * plane;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                double* dst = col + row * patches;
                std::int64_t p = 0;
                for (int oy = 0; oy < h_out; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < w_out; ++ox) dst[p++] = 0.0;
                        continue;
                    }
                    const double* xrow = xc + static_cast<std::int64_t>(iy) * w;
                    for (int ox = 0; ox < w_out; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[p++] = (ix < 0 || ix >= w) ? 0.0 : xrow[ix];
                    }
                }
            }
        }
    }
}

inline void col2im_acc(const double* col, int cin, int h, int w, int k, int stride, int pad,
                       int h_out, int w_out, double* dx) {
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t patches = static_cast<std::int64_t>(h_out) * w_out;
    std::int64_t row = 0;
    for (int ci = 0; ci < cin; ++ci) {
        double* xc = dx + ci * plane;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const double* src = col + row * patches;
                std::int64_t p = 0;
                for (int oy = 0; oy < h_out; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        p += w_out;
                        continue;
                    }
                    double* xrow = xc + static_cast<std::int64_t>(iy) * w;
                    for (int ox = 0; ox < w_out; ++ox, ++p) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) xrow[ix] += src[p];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// 2-D cross-correlation over C x H x W with square kernels.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check_chw(x, "conv2d");
    if (w.dim() != 4)
        throw ShapeError("conv2d: weights must be C_out x C_in x k x k, got " +
                         shape_str(w.shape()));
    if (w.extent(2) != w.extent(3))
        throw ShapeError("conv2d: kernel must be square, got " + shape_str(w.shape()));
    const int cin = x.extent(0), h = x.extent(1), width = x.extent(2);
    const int cout = w.extent(0), k = w.extent(2);
    if (w.extent(1) != cin)
        throw ShapeError("conv2d: input channels " + shape_str(x.shape()) +
                         " do not match weights " + shape_str(w.shape()));
    if (b.dim() != 1 || b.extent(0) != cout)
        throw ShapeError("conv2d: bias must be [" + std::to_string(cout) + "], got " +
                         shape_str(b.shape()));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
    if (k > h + 2 * pad || k > width + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                         shape_str(x.shape()) + " with pad " + std::to_string(pad));

    const int h_out = (h + 2 * pad - k) / stride + 1;
    const int w_out = (width + 2 * pad - k) / stride + 1;
    const int rows = cin * k * k;
    const std::int64_t patches = static_cast<std::int64_t>(h_out) * w_out;

    std::vector<double> col(static_cast<std::size_t>(rows) * patches);
    detail::im2col(x.data(), cin, h, width, k, stride, pad, h_out, w_out, col.data());

    Tensor out(Shape{cout, h_out, w_out});
    double* po = out.data();
    const double* pb = b.data();
    for (int co = 0; co < cout; ++co)
        std::fill(po + co * patches, po + (co + 1) * patches, pb[co]);
    detail::mm(w.data(), col.data(), po, cout, rows, static_cast<int>(patches), true);

    detail::OpRecorder rec(out, "conv2d", {&x, &w, &b});
    if (rec.any_tracked) {
        // the forward im2col moves into the closure; backward reuses it for dW
        rec.record([col = std::move(col), sw = w.storage(), gx = x.grad_storage(),
                    gw = w.grad_storage(), gb = b.grad_storage(), go = out.grad_storage(), cin, h,
                    width, cout, k, stride, pad, h_out, w_out, rows, patches] {
            const double* g = go->data();
            if (gb) {
                double* dst = gb->data();
                for (int co = 0; co < cout; ++co) {
                    double acc = 0.0;
                    const double* grow = g + co * patches;
                    for (std::int64_t p = 0; p < patches; ++p) acc += grow[p];
                    dst[co] += acc;
                }
            }
            // dW[co, r] += sum_p g[co, p] * col[r, p]
            if (gw)
                detail::mm_abT(g, col.data(), gw->data(), cout, static_cast<int>(patches), rows,
                               true);
            if (gx) {
                std::vector<double> dcol(static_cast<std::size_t>(rows) * patches);
                // dcol[r, p] = sum_co W[co, r] * g[co, p]
                detail::mm_aTb(sw->data(), g, dcol.data(), cout, rows, static_cast<int>(patches),
                               false);
                detail::col2im_acc(dcol.data(), cin, h, width, k, stride, pad, h_out, w_out,
                                   gx->data());
            }
        });
    }
    return out;
}

/// Rowwise affine map: y = x . W^T + b.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_matrix(x, "linear");
    check_matrix(w, "linear");
    const int n = x.extent(0), in = x.extent(1), out_dim = w.extent(0);
    if (w.extent(1) != in)
        throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weights " +
                         shape_str(w.shape()));
    if (b.dim() != 1 || b.extent(0) != out_dim)
        throw ShapeError("linear: bias must be [" + std::to_string(out_dim) + "], got " +
                         shape_str(b.shape()));
    Tensor out(Shape{n, out_dim});
    double* po = out.data();
    const double* pb = b.data();
    for (int i = 0; i < n; ++i)
        std::copy(pb, pb + out_dim, po + static_cast<std::int64_t>(i) * out_dim);
    detail::mm_abT(x.data(), w.data(), po, n, in, out_dim, true);
    detail::OpRecorder rec(out, "linear", {&x, &w, &b});
    rec.record([sx = x.storage(), sw = w.storage(), gx = x.grad_storage(), gw = w.grad_storage(),
                gb = b.grad_storage(), go = out.grad_storage(), n, in, out_dim] {
        const double* g = go->data();
        if (gx) detail::mm(g, sw->data(), gx->data(), n, out_dim, in, true);
        if (gw) detail::mm_aTb(g, sx->data(), gw->data(), n, out_dim, in, true);
        if (gb) {
            double* dst = gb->data();
            for (int i = 0; i < n; ++i) {
                const double* grow = g + static_cast<std::int64_t>(i) * out_dim;
                for (int o = 0; o < out_dim; ++o) dst[o] += grow[o];
            }
        }
    });
    return out;
}

/// Per-channel mean over the spatial plane: C x H x W -> C.
inline Tensor avg_pool_global(const Tensor& x) {
    check_chw(x, "avg_pool_global");
    const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor out(Shape{c});
    const double* px = x.data();
    double* po = out.data();
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        const double* base = px + ci * plane;
        for (std::int64_t p = 0; p < plane; ++p) acc += base[p];
        po[ci] = acc / static_cast<double>(plane);
    }
    detail::OpRecorder rec(out, "avg_pool_global", {&x});
    rec.record([gx = x.grad_storage(), go = out.grad_storage(), c, plane] {
        if (!gx) return;
        const double* g = go->data();
        double* dst = gx->data();
        const double inv = 1.0 / static_cast<double>(plane);
        for (int ci = 0; ci < c; ++ci) {
            const double gv = g[ci] * inv;
            double* base = dst + ci * plane;
            for (std::int64_t p = 0; p < plane; ++p) base[p] += gv;
        }
    });
    return out;
}

/// 2x2 average pooling with stride 2 (the 0.5 sampling ratio).
inline Tensor downsample_half(const Tensor& x) {
    check_chw(x, "downsample_half");
    const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("downsample_half: extents must be even, got " + shape_str(x.shape()));
    const int h2 = h / 2, w2 = w / 2;
    Tensor out(Shape{c, h2, w2});
    const double* px = x.data();
    double* po = out.data();
    for (int ci = 0; ci < c; ++ci) {
        const double* xc = px + static_cast<std::int64_t>(ci) * h * w;
        double* oc = po + static_cast<std::int64_t>(ci) * h2 * w2;
        for (int oy = 0; oy < h2; ++oy) {
            for (int ox = 0; ox < w2; ++ox) {
                const double* row0 = xc + static_cast<std::int64_t>(2 * oy) * w + 2 * ox;
                const double* row1 = row0 + w;
                oc[static_cast<std::int64_t>(oy) * w2 + ox] =
                    0.25 * (row0[0] + row0[1] + row1[0] + row1[1]);
            }
        }
    }
    detail::OpRecorder rec(out, "downsample_half", {&x});
    rec.record([gx = x.grad_storage(), go = out.grad_storage(), c, h, w, h2, w2] {
        if (!gx) return;
        const double* g = go->data();
        double* dst = gx->data();
        for (int ci = 0; ci < c; ++ci) {
            const double* gc = g + static_cast<std::int64_t>(ci) * h2 * w2;
            double* xc = dst + static_cast<std::int64_t>(ci) * h * w;
            for (int oy = 0; oy < h2; ++oy) {
                for (int ox = 0; ox < w2; ++ox) {
                    const double gv = 0.25 * gc[static_cast<std::int64_t>(oy) * w2 + ox];
                    double* row0 = xc + static_cast<std::int64_t>(2 * oy) * w + 2 * ox;
                    double* row1 = row0 + w;
                    row0[0] += gv;
                    row0[1] += gv;
                    row1[0] += gv;
                    row1[1] += gv;
                }
            }
        }
    });
    return out;
}

/// C x H x W -> (H*W) x C token matrix (row-major over the spatial grid).
inline Tensor tokens_from_chw(const Tensor& x) {
    check_chw(x, "tokens_from_chw");
    const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor out(Shape{static_cast<int>(plane), c});
    const double* px = x.data();
    double* po = out.data();
    for (int ci = 0; ci < c; ++ci)
        for (std::int64_t p = 0; p < plane; ++p) po[p * c + ci] = px[ci * plane + p];
    detail::OpRecorder rec(out, "tokens_from_chw", {&x});
    rec.record([gx = x.grad_storage(), go = out.grad_storage(), c, plane] {
        if (!gx) return;
        const double* g = go->data();
        double* dst = gx->data();
        for (int ci = 0; ci < c; ++ci)
            for (std::int64_t p = 0; p < plane; ++p) dst[ci * plane + p] += g[p * c + ci];
    });
    return out;
}

/// (H*W) x C token matrix back to C x H x W.
inline Tensor chw_from_tokens(const Tensor& tokens, int h, int w) {
    check_matrix(tokens, "chw_from_tokens");
    const int c = tokens.extent(1);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    if (tokens.extent(0) != plane)
        throw ShapeError("chw_from_tokens: " + shape_str(tokens.shape()) + " does not cover " +
                         std::to_string(h) + "x" + std::to_string(w));
    Tensor out(Shape{c, h, w});
    const double* pt = tokens.data();
    double* po = out.data();
    for (int ci = 0; ci < c; ++ci)
        for (std::int64_t p = 0; p < plane; ++p) po[ci * plane + p] = pt[p * c + ci];
    detail::OpRecorder rec(out, "chw_from_tokens", {&tokens});
    rec.record([gt = tokens.grad_storage(), go = out.grad_storage(), c, plane] {
        if (!gt) return;
        const double* g = go->data();
        double* dst = gt->data();
        for (int ci = 0; ci < c; ++ci)
            for (std::int64_t p = 0; p < plane; ++p) dst[p * c + ci] += g[ci * plane + p];
    });
    return out;
}

/// Per-row standardization then affine: rows of x are tokens of width d.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    check_matrix(x, "layer_norm");
    const int n = x.extent(0), d = x.extent(1);
    if (gain.dim() != 1 || gain.extent(0) != d || bias.dim() != 1 || bias.extent(0) != d)
        throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
    Tensor out(Shape{n, d});
    std::vector<double> xhat(static_cast<std::size_t>(n) * d);
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    const double* px = x.data();
    const double* pg = gain.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (int i = 0; i < n; ++i) {
        const double* row = px + static_cast<std::int64_t>(i) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += row[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = inv;
        double* hrow = xhat.data() + static_cast<std::int64_t>(i) * d;
        double* orow = po + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            hrow[j] = (row[j] - mu) * inv;
            orow[j] = hrow[j] * pg[j] + pb[j];
        }
    }
    detail::OpRecorder rec(out, "layer_norm", {&x, &gain, &bias});
    rec.record([xhat = std::move(xhat), inv_std = std::move(inv_std), sg = gain.storage(),
                gx = x.grad_storage(), gg = gain.grad_storage(), gb = bias.grad_storage(),
                go = out.grad_storage(), n, d] {
        const double* g = go->data();
        const double* pg2 = sg->data();
        for (int i = 0; i < n; ++i) {
            const double* grow = g + static_cast<std::int64_t>(i) * d;
            const double* hrow = xhat.data() + static_cast<std::int64_t>(i) * d;
            if (gg) {
                double* dst = gg->data();
                for (int j = 0; j < d; ++j) dst[j] += grow[j] * hrow[j];
            }
            if (gb) {
                double* dst = gb->data();
                for (int j = 0; j < d; ++j) dst[j] += grow[j];
            }
            if (gx) {
                double sum_gy = 0.0, sum_gyh = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double gy = grow[j] * pg2[j];
                    sum_gy += gy;
                    sum_gyh += gy * hrow[j];
                }
                double* dst = gx->data() + static_cast<std::int64_t>(i) * d;
                const double inv = inv_std[static_cast<std::size_t>(i)];
                for (int j = 0; j < d; ++j) {
                    const double gy = grow[j] * pg2[j];
                    dst[j] += inv * (gy - (sum_gy + hrow[j] * sum_gyh) / d);
                }
            }
        }
    });
    return out;
}

}  // namespace ssn
