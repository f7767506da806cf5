#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "morphtag/error.hpp"
#include "morphtag/rng.hpp"

// Define-by-run reverse-mode differentiation over dense row-major arrays.
// Every op returns a fresh Tensor; when any input requires a gradient the
// result records its inputs and a closure that pushes the result's gradient
// back into them. Gradients accumulate, so a tensor consumed several times
// receives the sum of its consumers' contributions.
namespace morphtag::ag {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<T>& grad_buffer() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad;
    }
};

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (ag::numel(shape) != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + to_string(shape));
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        auto n = ag::numel(shape);
        return from(std::move(shape), std::vector<T>(n, v), requires_grad);
    }
    static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), T(0), requires_grad); }
    static Tensor ones(Shape shape, bool requires_grad = false) { return full(std::move(shape), T(1), requires_grad); }
    static Tensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    // Size of `axis`; negative axes count from the end.
    std::size_t dim(int axis) const { return shape()[normalize_axis(axis)]; }

    std::size_t normalize_axis(int axis) const {
        const int n = static_cast<int>(ndim());
        const int a = axis < 0 ? axis + n : axis;
        if (a < 0 || a >= n) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
        return static_cast<std::size_t>(a);
    }

    std::span<const T> data() const { return node_->value; }
    std::span<T> mutable_data() { return node_->value; }
    const std::vector<T>& values() const { return node_->value; }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    T item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
        return node_->value[0];
    }

    Tensor detach() const { return from(shape(), node_->value, false); }

    Node<T>& node() const { return *node_; }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    // Seeds d(this)/d(this) = 1 and propagates to every reachable input.
    void backward() const {
        if (numel() != 1 || ndim() > 1) throw ShapeError("backward() requires a scalar, got " + to_string(shape()));
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, i] = stack.back();
            if (i < n->inputs.size()) {
                Node<T>* child = n->inputs[i++].get();
                if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->grad_buffer()[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
        }
    }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (auto& t : inputs) n->inputs.push_back(t.node_ptr());
        n->backward = std::move(backward);
    }
    return Tensor<T>(std::move(n));
}

// Gradient buffer of input `i` if it participates in differentiation.
template <typename T>
std::vector<T>* grad_of(Node<T>& self, std::size_t i) {
    auto& in = *self.inputs[i];
    return in.requires_grad ? &in.grad_buffer() : nullptr;
}

template <typename T>
const std::vector<T>& value_of(Node<T>& self, std::size_t i) {
    return self.inputs[i]->value;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

// c[m×n] (+)= a[m×k]·b[k×n] with optional transposes, small-matrix friendly.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool ta, bool tb,
          bool accumulate) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MapM<T> C(c, M, N);
    if (m * n * k < 4096) {
        if (!accumulate) C.setZero();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const T av = ta ? a[p * m + i] : a[i * k + p];
                T* crow = c + i * n;
                if (tb)
                    for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
                else {
                    const T* brow = b + p * n;
                    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
            }
        return;
    }
    auto run = [&](const auto& A, const auto& B) {
        if (accumulate)
            C.noalias() += A * B;
        else
            C.noalias() = A * B;
    };
    if (!ta && !tb) run(MapC<T>(a, M, K), MapC<T>(b, K, N));
    else if (ta && !tb) run(MapC<T>(a, K, M).transpose(), MapC<T>(b, K, N));
    else if (!ta && tb) run(MapC<T>(a, M, K), MapC<T>(b, N, K).transpose());
    else run(MapC<T>(a, K, M).transpose(), MapC<T>(b, N, K).transpose());
}

} // namespace detail

// a[..., m, k] · b[k, n]  or  a[..., m, k] · b[..., k, n] with equal leading axes.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw ShapeError("matmul: operands need >= 2 axes, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
    const std::size_t m = a.dim(-2), k = a.dim(-1);
    if (b.dim(-2) != k)
        throw ShapeError("matmul: inner dimensions differ in " + to_string(a.shape()) + " and " + to_string(b.shape()));
    const std::size_t n = b.dim(-1);
    Shape out = a.shape();
    out.back() = n;
    const std::size_t batch = numel(a.shape()) / (m * k);

    if (b.ndim() == 2) {
        std::vector<T> v(batch * m * n);
        detail::gemm(a.data().data(), b.data().data(), v.data(), batch * m, k, n, false, false, false);
        return detail::make_result<T>(std::move(out), std::move(v), {a, b}, [=](Node<T>& self) {
            const T* g = self.grad.data();
            if (auto* ga = detail::grad_of(self, 0))
                detail::gemm(g, detail::value_of(self, 1).data(), ga->data(), batch * m, n, k, false, true, true);
            if (auto* gb = detail::grad_of(self, 1))
                detail::gemm(detail::value_of(self, 0).data(), g, gb->data(), k, batch * m, n, true, false, true);
        });
    }

    Shape lead_a(a.shape().begin(), a.shape().end() - 2), lead_b(b.shape().begin(), b.shape().end() - 2);
    if (lead_a != lead_b)
        throw ShapeError("matmul: batch axes differ in " + to_string(a.shape()) + " and " + to_string(b.shape()));
    std::vector<T> v(batch * m * n);
    for (std::size_t i = 0; i < batch; ++i)
        detail::gemm(a.data().data() + i * m * k, b.data().data() + i * k * n, v.data() + i * m * n, m, k, n, false,
                     false, false);
    return detail::make_result<T>(std::move(out), std::move(v), {a, b}, [=](Node<T>& self) {
        const T* g = self.grad.data();
        const T* av = detail::value_of(self, 0).data();
        const T* bv = detail::value_of(self, 1).data();
        auto* ga = detail::grad_of(self, 0);
        auto* gb = detail::grad_of(self, 1);
        for (std::size_t i = 0; i < batch; ++i) {
            if (ga) detail::gemm(g + i * m * n, bv + i * k * n, ga->data() + i * m * k, m, n, k, false, true, true);
            if (gb) detail::gemm(av + i * m * k, g + i * m * n, gb->data() + i * k * n, k, m, n, true, false, true);
        }
    });
}

namespace detail {

template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> broadcast_binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, DA da, DB db) {
    const bool a_big = a.ndim() >= b.ndim();
    const Tensor<T>& big = a_big ? a : b;
    const Tensor<T>& small = a_big ? b : a;
    if (!is_suffix(small.shape(), big.shape()))
        throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " + to_string(b.shape()));
    const std::size_t n = big.numel(), r = small.numel();
    std::vector<T> v(n);
    const T* av = a.data().data();
    const T* bv = b.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = a_big ? i : i % r, ib = a_big ? i % r : i;
        v[i] = fwd(av[ia], bv[ib]);
    }
    return make_result<T>(big.shape(), std::move(v), {a, b}, [=](Node<T>& self) {
        const auto& x = value_of(self, 0);
        const auto& y = value_of(self, 1);
        auto* gx = grad_of(self, 0);
        auto* gy = grad_of(self, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = a_big ? i : i % r, ib = a_big ? i % r : i;
            const T g = self.grad[i];
            if (gx) (*gx)[ia] += da(g, x[ia], y[ib]);
            if (gy) (*gy)[ib] += db(g, x[ia], y[ib]);
        }
    });
}

} // namespace detail

// Elementwise add; the operand with fewer axes is broadcast over the
// leading axes of the other (its shape must be a suffix).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::broadcast_binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::broadcast_binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
        [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    std::vector<T> v(x.data().begin(), x.data().end());
    for (auto& e : v) e *= s;
    return detail::make_result<T>(x.shape(), std::move(v), {x}, [s](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += s * self.grad[i];
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> v(x.data().begin(), x.data().end());
    for (auto& e : v) e = e > T(0) ? e : T(0);
    return detail::make_result<T>(x.shape(), std::move(v), {x}, [](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        const auto& xv = detail::value_of(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xv[i] > T(0)) (*gx)[i] += self.grad[i];
    });
}

namespace detail {

struct AxisView {
    std::size_t outer, len, inner;
};

template <typename T>
AxisView axis_view(const Tensor<T>& x, int axis) {
    const std::size_t a = x.normalize_axis(axis);
    AxisView v{1, x.shape()[a], 1};
    for (std::size_t i = 0; i < a; ++i) v.outer *= x.shape()[i];
    for (std::size_t i = a + 1; i < x.ndim(); ++i) v.inner *= x.shape()[i];
    return v;
}

} // namespace detail

// Numerically stable softmax (max-subtracted) along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
    const auto av = detail::axis_view(x, axis);
    std::vector<T> v(x.numel());
    const T* xv = x.data().data();
    for (std::size_t o = 0; o < av.outer; ++o)
        for (std::size_t in = 0; in < av.inner; ++in) {
            const std::size_t base = o * av.len * av.inner + in;
            T mx = xv[base];
            for (std::size_t j = 1; j < av.len; ++j) mx = std::max(mx, xv[base + j * av.inner]);
            T sum = 0;
            for (std::size_t j = 0; j < av.len; ++j) {
                const T e = std::exp(xv[base + j * av.inner] - mx);
                v[base + j * av.inner] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < av.len; ++j) v[base + j * av.inner] /= sum;
        }
    auto out = detail::make_result<T>(x.shape(), std::move(v), {x}, nullptr);
    if (out.requires_grad()) {
        // The closure reads the output through the node itself.
        out.node().backward = [av](Node<T>& self) {
            auto* gx = detail::grad_of(self, 0);
            const auto& y = self.value;
            for (std::size_t o = 0; o < av.outer; ++o)
                for (std::size_t in = 0; in < av.inner; ++in) {
                    const std::size_t base = o * av.len * av.inner + in;
                    T dot = 0;
                    for (std::size_t j = 0; j < av.len; ++j) dot += self.grad[base + j * av.inner] * y[base + j * av.inner];
                    for (std::size_t j = 0; j < av.len; ++j) {
                        const std::size_t k = base + j * av.inner;
                        (*gx)[k] += y[k] * (self.grad[k] - dot);
                    }
                }
        };
    }
    return out;
}

// Normalizes over the last axis, then applies gain and bias of that width.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
    const std::size_t d = x.dim(-1);
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
        throw ShapeError("layer_norm: gain/bias " + to_string(gain.shape()) + "/" + to_string(bias.shape()) +
                         " do not match input " + to_string(x.shape()));
    const std::size_t rows = x.numel() / d;
    std::vector<T> v(x.numel()), xhat(x.numel()), rstd(rows);
    const T* xv = x.data().data();
    const T* g = gain.data().data();
    const T* b = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= T(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(d);
        rstd[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (row[j] - mu) * rstd[r];
            xhat[r * d + j] = h;
            v[r * d + j] = h * g[j] + b[j];
        }
    }
    return detail::make_result<T>(
        x.shape(), std::move(v), {x, gain, bias},
        [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
            auto* gx = detail::grad_of(self, 0);
            auto* gg = detail::grad_of(self, 1);
            auto* gb = detail::grad_of(self, 2);
            const auto& g = detail::value_of(self, 1);
            std::vector<T> dh(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* dy = self.grad.data() + r * d;
                const T* h = xhat.data() + r * d;
                T mean_dh = 0, mean_dh_h = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    if (gg) (*gg)[j] += dy[j] * h[j];
                    if (gb) (*gb)[j] += dy[j];
                    dh[j] = dy[j] * g[j];
                    mean_dh += dh[j];
                    mean_dh_h += dh[j] * h[j];
                }
                if (!gx) continue;
                mean_dh /= T(d);
                mean_dh_h /= T(d);
                for (std::size_t j = 0; j < d; ++j)
                    (*gx)[r * d + j] += rstd[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
            }
        });
}

// Rows of `table` gathered by `ids`; result shape is lead + [table width].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids, Shape lead) {
    if (table.ndim() != 2) throw ShapeError("embedding_lookup: table must be 2-D, got " + to_string(table.shape()));
    if (numel(lead) != ids.size())
        throw ShapeError("embedding_lookup: " + std::to_string(ids.size()) + " ids for shape " + to_string(lead));
    const std::size_t vocab = table.dim(0), d = table.dim(1);
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    std::vector<T> v(idv.size() * d);
    for (std::size_t i = 0; i < idv.size(); ++i) {
        if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab)
            throw ShapeError("embedding_lookup: id " + std::to_string(idv[i]) + " outside table of " + std::to_string(vocab));
        std::copy_n(table.data().data() + static_cast<std::size_t>(idv[i]) * d, d, v.data() + i * d);
    }
    lead.push_back(d);
    return detail::make_result<T>(std::move(lead), std::move(v), {table}, [d, idv = std::move(idv)](Node<T>& self) {
        auto* gt = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < idv.size(); ++i) {
            T* row = gt->data() + static_cast<std::size_t>(idv[i]) * d;
            const T* g = self.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
        }
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const std::size_t a = parts[0].normalize_axis(axis);
    Shape ref = parts[0].shape();
    ref[a] = 0;
    Shape out = ref;
    std::vector<std::size_t> lens;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch " + to_string(s) + " vs " + to_string(parts[0].shape()));
        lens.push_back(s[a]);
        s[a] = 0;
        if (s != ref) throw ShapeError("concat: shape mismatch " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
        out[a] += lens.back();
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < a; ++i) outer *= out[i];
    for (std::size_t i = a + 1; i < out.size(); ++i) inner *= out[i];
    const std::size_t total = out[a];
    std::vector<T> v(numel(out));
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const T* src = parts[p].data().data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(src + o * lens[p] * inner, lens[p] * inner, v.data() + (o * total + off) * inner);
        off += lens[p];
    }
    return detail::make_result<T>(std::move(out), std::move(v), parts, [=](Node<T>& self) {
        std::size_t off2 = 0;
        for (std::size_t p = 0; p < lens.size(); ++p) {
            if (auto* gp = detail::grad_of(self, p))
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t j = 0; j < lens[p] * inner; ++j)
                        (*gp)[o * lens[p] * inner + j] += self.grad[(o * total + off2) * inner + j];
            off2 += lens[p];
        }
    });
}

// Contiguous sub-range [start, start+len) of `axis`.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int axis, std::size_t start, std::size_t len) {
    const std::size_t a = x.normalize_axis(axis);
    if (start + len > x.shape()[a])
        throw ShapeError("narrow: range [" + std::to_string(start) + "," + std::to_string(start + len) + ") outside " +
                         to_string(x.shape()));
    const auto av = detail::axis_view(x, axis);
    Shape out = x.shape();
    out[a] = len;
    std::vector<T> v(numel(out));
    for (std::size_t o = 0; o < av.outer; ++o)
        std::copy_n(x.data().data() + (o * av.len + start) * av.inner, len * av.inner, v.data() + o * len * av.inner);
    return detail::make_result<T>(std::move(out), std::move(v), {x}, [=](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        for (std::size_t o = 0; o < av.outer; ++o)
            for (std::size_t j = 0; j < len * av.inner; ++j)
                (*gx)[(o * av.len + start) * av.inner + j] += self.grad[o * len * av.inner + j];
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    std::vector<T> v(x.data().begin(), x.data().end());
    return detail::make_result<T>(std::move(shape), std::move(v), {x}, [](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    });
}

// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.ndim() < 2) throw ShapeError("transpose: need >= 2 axes, got " + to_string(x.shape()));
    const std::size_t r = x.dim(-2), c = x.dim(-1), batch = x.numel() / (r * c);
    Shape out = x.shape();
    std::swap(out[out.size() - 1], out[out.size() - 2]);
    std::vector<T> v(x.numel());
    const T* xv = x.data().data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) v[b * r * c + j * r + i] = xv[b * r * c + i * c + j];
    return detail::make_result<T>(std::move(out), std::move(v), {x}, [=](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*gx)[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
    });
}

// Replaces x[i] by `value` wherever mask[i] is set; mask is broadcast over
// leading axes when shorter than x.
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, std::span<const std::uint8_t> mask, T value) {
    if (mask.empty() || x.numel() % mask.size() != 0)
        throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " entries for " + to_string(x.shape()));
    const std::size_t r = mask.size();
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    std::vector<T> v(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (m[i % r]) v[i] = value;
    return detail::make_result<T>(x.shape(), std::move(v), {x}, [r, m = std::move(m)](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (!m[i % r]) (*gx)[i] += self.grad[i];
    });
}

// Sums out `axis`.
template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis) {
    const std::size_t a = x.normalize_axis(axis);
    const auto av = detail::axis_view(x, axis);
    Shape out = x.shape();
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(a));
    std::vector<T> v(av.outer * av.inner, T(0));
    const T* xv = x.data().data();
    for (std::size_t o = 0; o < av.outer; ++o)
        for (std::size_t j = 0; j < av.len; ++j)
            for (std::size_t in = 0; in < av.inner; ++in) v[o * av.inner + in] += xv[(o * av.len + j) * av.inner + in];
    return detail::make_result<T>(std::move(out), std::move(v), {x}, [av](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        for (std::size_t o = 0; o < av.outer; ++o)
            for (std::size_t j = 0; j < av.len; ++j)
                for (std::size_t in = 0; in < av.inner; ++in)
                    (*gx)[(o * av.len + j) * av.inner + in] += self.grad[o * av.inner + in];
    });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    return sum(reshape(x, {x.numel()}), 0);
}

inline constexpr std::int32_t kIgnoreIndex = -1;

// Mean negative log-likelihood of `targets` under softmax(logits) for
// logits [N, C]; rows whose target is kIgnoreIndex are skipped.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
    if (logits.ndim() != 2) throw ShapeError("cross_entropy: logits must be [N, C], got " + to_string(logits.shape()));
    const std::size_t rows = logits.dim(0), classes = logits.dim(1);
    if (targets.size() != rows)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + to_string(logits.shape()));
    std::vector<std::int32_t> tg(targets.begin(), targets.end());
    std::size_t count = 0;
    for (auto t : tg) {
        if (t == kIgnoreIndex) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= classes)
            throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside " + std::to_string(classes) + " classes");
        ++count;
    }
    if (count == 0) throw Error("cross_entropy: every target is ignored");
    const T* lv = logits.data().data();
    std::vector<T> probs(logits.numel());
    T loss = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (tg[r] == kIgnoreIndex) continue;
        const T* row = lv + r * classes;
        const T mx = *std::max_element(row, row + classes);
        T s = 0;
        for (std::size_t c = 0; c < classes; ++c) s += std::exp(row[c] - mx);
        const T lse = mx + std::log(s);
        for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(row[c] - lse);
        loss += lse - row[tg[r]];
    }
    const T inv = T(1) / T(count);
    return detail::make_result<T>(
        {}, {loss * inv}, {logits}, [=, probs = std::move(probs), tg = std::move(tg)](Node<T>& self) {
            auto* gl = detail::grad_of(self, 0);
            const T g = self.grad[0] * inv;
            for (std::size_t r = 0; r < rows; ++r) {
                if (tg[r] == kIgnoreIndex) continue;
                for (std::size_t c = 0; c < classes; ++c) (*gl)[r * classes + c] += g * probs[r * classes + c];
                (*gl)[r * classes + static_cast<std::size_t>(tg[r])] -= g;
            }
        });
}

// Inverted dropout; identity when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, SplitMix64& rng) {
    if (p <= 0.0) return x;
    std::vector<T> keep(x.numel());
    const T s = T(1.0 / (1.0 - p));
    for (auto& k : keep) k = rng.uniform() < p ? T(0) : s;
    return mul(x, Tensor<T>::from(x.shape(), std::move(keep)));
}

// Normal(0, std) samples from a seeded SplitMix64 stream.
template <typename T>
Tensor<T> rng_normal(Shape shape, std::uint64_t seed, double std, bool requires_grad = false) {
    if (!(std > 0.0)) throw Error("rng_normal: std must be positive");
    SplitMix64 rng(seed);
    std::vector<T> v(numel(shape));
    for (auto& e : v) e = static_cast<T>(rng.normal() * std);
    return Tensor<T>::from(std::move(shape), std::move(v), requires_grad);
}

} // namespace morphtag::ag
