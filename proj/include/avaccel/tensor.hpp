#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avaccel/error.hpp"

namespace avaccel {

#ifdef AVACCEL_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

inline std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

/**
 * Dense n-dimensional array, row-major, with value semantics.
 *
 * A default-constructed tensor is empty (rank 0, no elements) and acts as a
 * "not set" placeholder. Every other tensor has strictly positive extents.
 */
template <typename Scalar>
class BasicTensor {
public:
    using value_type = Scalar;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
        : shape_(std::move(shape)) {
        check_extents();
        data_.assign(shape_product(shape_), fill);
    }

    BasicTensor(Shape shape, std::vector<Scalar> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        check_extents();
        if (shape_product(shape_) != data_.size()) {
            throw ShapeError("tensor: " + std::to_string(data_.size()) +
                             " values do not fill shape " + shape_string(shape_));
        }
    }

    /// Rank-1 tensor from a literal list.
    static BasicTensor vector(std::initializer_list<Scalar> values) {
        return BasicTensor({values.size()}, std::vector<Scalar>(values));
    }

    /// Rank-2 tensor from nested literal rows.
    static BasicTensor matrix(std::initializer_list<std::initializer_list<Scalar>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<Scalar> values;
        values.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw ShapeError("tensor: ragged matrix literal");
            }
            values.insert(values.end(), row.begin(), row.end());
        }
        return BasicTensor({r, c}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t extent(std::size_t axis) const {
        if (axis >= shape_.size()) {
            throw ShapeError("tensor: axis " + std::to_string(axis) +
                             " out of range for shape " + shape_string(shape_));
        }
        return shape_[axis];
    }

    Scalar* data() noexcept { return data_.data(); }
    const Scalar* data() const noexcept { return data_.data(); }
    std::span<Scalar> values() noexcept { return data_; }
    std::span<const Scalar> values() const noexcept { return data_; }

    Scalar& operator[](std::size_t i) { return data_[i]; }
    const Scalar& operator[](std::size_t i) const { return data_[i]; }

    Scalar& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
    const Scalar& at(std::initializer_list<std::size_t> index) const {
        return data_[offset(index)];
    }

    /// Same elements viewed under a new shape of equal element count.
    BasicTensor reshaped(Shape shape) const& {
        BasicTensor out;
        out.shape_ = std::move(shape);
        out.check_extents();
        if (shape_product(out.shape_) != data_.size()) {
            throw ShapeError("reshape: " + shape_string(shape_) + " -> " +
                             shape_string(out.shape_));
        }
        out.data_ = data_;
        return out;
    }

    BasicTensor reshaped(Shape shape) && {
        if (shape_product(shape) != data_.size()) {
            throw ShapeError("reshape: " + shape_string(shape_) + " -> " +
                             shape_string(shape));
        }
        shape_ = std::move(shape);
        check_extents();
        return std::move(*this);
    }

    void fill(Scalar value) { std::fill(data_.begin(), data_.end(), value); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](Scalar v) { return std::isfinite(v); });
    }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_extents() const {
        for (std::size_t e : shape_) {
            if (e == 0) {
                throw ShapeError("tensor: zero extent in shape " + shape_string(shape_));
            }
        }
    }

    std::size_t offset(std::initializer_list<std::size_t> index) const {
        if (index.size() != shape_.size()) {
            throw ShapeError("tensor: index rank mismatch");
        }
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : index) {
            if (i >= shape_[axis]) {
                throw ShapeError("tensor: index out of bounds");
            }
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    std::vector<Scalar> data_;
};

using Tensor = BasicTensor<Real>;

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename Scalar>
void ensure_finite(const BasicTensor<Scalar>& t, const char* where) {
    if (!t.all_finite()) {
        throw NumericError(std::string(where) + ": non-finite value in result");
    }
}

// ---------------------------------------------------------------------------
// Matrix products. Every output element accumulates over the inner index in
// ascending order starting from zero, whatever the outer extents.

/// a[m,k] * b[k,n]
template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    BasicTensor<Scalar> c({m, n});
    const Scalar* pa = a.data();
    const Scalar* pb = b.data();
    Scalar* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        Scalar* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Scalar aip = pa[i * k + p];
            const Scalar* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    ensure_finite(c, "matmul");
    return c;
}

/// a[k,m]^T * b[k,n]
template <typename Scalar>
BasicTensor<Scalar> matmul_at_b(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0)) {
        throw ShapeError("matmul_at_b: " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
    }
    const std::size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
    BasicTensor<Scalar> c({m, n});
    const Scalar* pa = a.data();
    const Scalar* pb = b.data();
    Scalar* pc = c.data();
    for (std::size_t p = 0; p < k; ++p) {
        const Scalar* brow = pb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const Scalar api = pa[p * m + i];
            Scalar* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += api * brow[j];
            }
        }
    }
    ensure_finite(c, "matmul_at_b");
    return c;
}

template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& a);

/// a[m,k] * b[n,k]^T, accumulated exactly like matmul(a, transpose(b)).
template <typename Scalar>
BasicTensor<Scalar> matmul_a_bt(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1)) {
        throw ShapeError("matmul_a_bt: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
    }
    return matmul(a, transpose(b));
}

template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& a) {
    if (a.rank() != 2) {
        throw ShapeError("transpose: rank-2 tensor required, got " + shape_string(a.shape()));
    }
    const std::size_t m = a.extent(0), n = a.extent(1);
    BasicTensor<Scalar> t({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            t[j * m + i] = a[i * n + j];
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic.

enum class ElementwiseOp { add, sub, mul, scale, abs, sign };

namespace detail {
template <typename Scalar>
Scalar sign_of(Scalar v) {
    return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0));
}

template <typename Scalar>
Scalar apply_op(ElementwiseOp op, Scalar x, Scalar y) {
    switch (op) {
        case ElementwiseOp::add: return x + y;
        case ElementwiseOp::sub: return x - y;
        case ElementwiseOp::mul:
        case ElementwiseOp::scale: return x * y;
        case ElementwiseOp::abs: return std::abs(x);
        case ElementwiseOp::sign: return sign_of(x);
    }
    return x;
}
}  // namespace detail

/// Tensor-tensor form. Unary kinds (abs, sign) ignore `b` except for the
/// shape check.
template <typename Scalar>
BasicTensor<Scalar> elementwise(ElementwiseOp op, const BasicTensor<Scalar>& a,
                                const BasicTensor<Scalar>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("elementwise: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    BasicTensor<Scalar> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = detail::apply_op(op, a[i], b[i]);
    }
    ensure_finite(out, "elementwise");
    return out;
}

/// Tensor-scalar form.
template <typename Scalar>
BasicTensor<Scalar> elementwise(ElementwiseOp op, const BasicTensor<Scalar>& a, Scalar b) {
    BasicTensor<Scalar> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = detail::apply_op(op, a[i], b);
    }
    ensure_finite(out, "elementwise");
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    return elementwise(ElementwiseOp::add, a, b);
}
template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    return elementwise(ElementwiseOp::sub, a, b);
}
template <typename Scalar>
BasicTensor<Scalar> mul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    return elementwise(ElementwiseOp::mul, a, b);
}
template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar s) {
    return elementwise(ElementwiseOp::scale, a, s);
}
template <typename Scalar>
BasicTensor<Scalar> abs(const BasicTensor<Scalar>& a) {
    return elementwise(ElementwiseOp::abs, a, Scalar(0));
}
template <typename Scalar>
BasicTensor<Scalar> sign(const BasicTensor<Scalar>& a) {
    return elementwise(ElementwiseOp::sign, a, Scalar(0));
}

/// In-place a += b, used for gradient accumulation.
template <typename Scalar>
void accumulate(BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("accumulate: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
}

// ---------------------------------------------------------------------------
// Structural operations.

namespace detail {
// Splits a shape around `axis` into (outer, extent, inner) element counts.
inline void split_axis(const Shape& shape, std::size_t axis, std::size_t& outer,
                       std::size_t& inner) {
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}
}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> concat(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
                           std::size_t axis) {
    if (a.rank() != b.rank() || axis >= a.rank()) {
        throw ShapeError("concat: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " along axis " + std::to_string(axis));
    }
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (i != axis && a.extent(i) != b.extent(i)) {
            throw ShapeError("concat: " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()) + " differ off axis " +
                             std::to_string(axis));
        }
    }
    Shape shape = a.shape();
    shape[axis] += b.extent(axis);
    BasicTensor<Scalar> out(shape);
    std::size_t outer, inner;
    detail::split_axis(a.shape(), axis, outer, inner);
    const std::size_t chunk_a = a.extent(axis) * inner;
    const std::size_t chunk_b = b.extent(axis) * inner;
    Scalar* dst = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        dst = std::copy_n(a.data() + o * chunk_a, chunk_a, dst);
        dst = std::copy_n(b.data() + o * chunk_b, chunk_b, dst);
    }
    return out;
}

/// Elements [begin, end) along `axis`.
template <typename Scalar>
BasicTensor<Scalar> slice(const BasicTensor<Scalar>& a, std::size_t axis, std::size_t begin,
                          std::size_t end) {
    if (axis >= a.rank() || begin >= end || end > a.extent(axis)) {
        throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") along axis " + std::to_string(axis) + " of " +
                         shape_string(a.shape()));
    }
    Shape shape = a.shape();
    shape[axis] = end - begin;
    BasicTensor<Scalar> out(shape);
    std::size_t outer, inner;
    detail::split_axis(a.shape(), axis, outer, inner);
    const std::size_t src_chunk = a.extent(axis) * inner;
    const std::size_t dst_chunk = (end - begin) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(a.data() + o * src_chunk + begin * inner, dst_chunk,
                    out.data() + o * dst_chunk);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions, left to right.

enum class ReduceOp { sum, mean, max };

/// Reduces along `axis`, or over every element when `axis` is empty (the
/// result then has shape [1]).
template <typename Scalar>
BasicTensor<Scalar> reduce(ReduceOp op, const BasicTensor<Scalar>& a,
                           std::optional<std::size_t> axis = std::nullopt) {
    if (a.empty()) {
        throw ShapeError("reduce: empty tensor");
    }
    Shape view = a.shape();
    std::size_t red_axis = 0;
    if (!axis) {
        view = {a.size()};
    } else {
        if (*axis >= a.rank()) {
            throw ShapeError("reduce: axis " + std::to_string(*axis) + " out of range for " +
                             shape_string(a.shape()));
        }
        red_axis = *axis;
    }
    std::size_t outer, inner;
    detail::split_axis(view, red_axis, outer, inner);
    const std::size_t n = view[red_axis];
    Shape out_shape;
    for (std::size_t i = 0; i < view.size(); ++i) {
        if (i != red_axis) out_shape.push_back(view[i]);
    }
    if (out_shape.empty()) out_shape = {1};
    BasicTensor<Scalar> out(out_shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const Scalar* p = a.data() + o * n * inner + in;
            Scalar acc = p[0];
            for (std::size_t r = 1; r < n; ++r) {
                const Scalar v = p[r * inner];
                acc = (op == ReduceOp::max) ? std::max(acc, v) : acc + v;
            }
            if (op == ReduceOp::mean) acc /= static_cast<Scalar>(n);
            out[o * inner + in] = acc;
        }
    }
    ensure_finite(out, "reduce");
    return out;
}

}  // namespace avaccel
