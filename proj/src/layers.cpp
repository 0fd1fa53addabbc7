#include "avaccel/layers.hpp"

#include <cmath>

namespace avaccel {

namespace {

Tensor glorot_uniform(Rng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out) {
    const Real limit = std::sqrt(Real(6) / static_cast<Real>(fan_in + fan_out));
    return rand_uniform(rng, shape, -limit, limit);
}

void add_row_bias(Tensor& y, const Tensor& bias) {
    const std::size_t n = bias.size();
    if (y.size() % n != 0) {
        throw ShapeError("bias: width " + std::to_string(n) + " does not divide " +
                         shape_string(y.shape()));
    }
    Real* py = y.data();
    for (std::size_t r = 0, rows = y.size() / n; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) py[r * n + j] += bias[j];
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* where) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(where) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
    }
}

}  // namespace

Tensor column_sums(const Tensor& g) {
    require_rank(g, 2, "column_sums");
    const std::size_t rows = g.extent(0), cols = g.extent(1);
    Tensor out({cols});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) out[j] += g[r * cols + j];
    }
    return out;
}

// ---------------------------------------------------------------- dense

DenseParams init_dense(Rng& rng, std::size_t in, std::size_t out) {
    return {glorot_uniform(rng, {in, out}, in, out), Tensor({out})};
}

Forward<DenseCache> dense_forward(const Tensor& x, const DenseParams& p) {
    require_rank(x, 2, "dense_forward");
    if (x.extent(1) != p.in() || p.bias.shape() != Shape{p.out()}) {
        throw ShapeError("dense_forward: input " + shape_string(x.shape()) + " vs weights " +
                         shape_string(p.weights.shape()));
    }
    Tensor y = matmul(x, p.weights);
    add_row_bias(y, p.bias);
    return {std::move(y), {x}};
}

DenseGrads dense_backward(const Tensor& grad_out, const DenseCache& cache, const DenseParams& p,
                          bool need_input_grad) {
    if (grad_out.rank() != 2 || grad_out.extent(0) != cache.input.extent(0) ||
        grad_out.extent(1) != p.out()) {
        throw ShapeError("dense_backward: grad " + shape_string(grad_out.shape()) +
                         " does not match cache/params");
    }
    DenseGrads g;
    g.params.weights = matmul_at_b(cache.input, grad_out);
    g.params.bias = column_sums(grad_out);
    if (need_input_grad) g.input = matmul_a_bt(grad_out, p.weights);
    return g;
}

// ---------------------------------------------------------------- activations

Real sigmoid(Real x) {
    if (x >= 0) {
        return Real(1) / (Real(1) + std::exp(-x));
    }
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

Forward<ActivationCache> activation_forward(Activation kind, const Tensor& x) {
    Tensor y = x;
    for (Real& v : y.values()) {
        switch (kind) {
            case Activation::relu: v = v > 0 ? v : Real(0); break;
            case Activation::tanh: v = std::tanh(v); break;
            case Activation::sigmoid: v = sigmoid(v); break;
        }
    }
    ActivationCache cache{kind, kind == Activation::relu ? x : Tensor(), y};
    return {std::move(y), std::move(cache)};
}

Tensor activation_backward(const Tensor& grad_out, const ActivationCache& cache) {
    if (grad_out.shape() != cache.output.shape()) {
        throw ShapeError("activation_backward: grad " + shape_string(grad_out.shape()) +
                         " vs cached " + shape_string(cache.output.shape()));
    }
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Real y = cache.output[i];
        switch (cache.kind) {
            case Activation::relu:
                if (!(cache.input[i] > 0)) g[i] = 0;
                break;
            case Activation::tanh: g[i] *= Real(1) - y * y; break;
            case Activation::sigmoid: g[i] *= y * (Real(1) - y); break;
        }
    }
    return g;
}

// ---------------------------------------------------------------- conv2d

std::size_t conv_output_extent(std::size_t n, std::size_t k, std::size_t stride, Padding padding) {
    if (stride == 0 || k == 0) {
        throw ShapeError("conv: kernel and stride must be positive");
    }
    if (padding == Padding::same) {
        return (n + stride - 1) / stride;
    }
    if (k > n) {
        throw ShapeError("conv: kernel " + std::to_string(k) + " larger than input " +
                         std::to_string(n));
    }
    return (n - k) / stride + 1;
}

namespace {

struct ConvGeometry {
    std::size_t batch, h, w, c, kh, kw, f, stride, out_h, out_w, pad_top, pad_left;
    std::size_t rows() const { return batch * out_h * out_w; }
    std::size_t cols() const { return kh * kw * c; }
};

std::size_t same_padding_before(std::size_t n, std::size_t out, std::size_t k, std::size_t s) {
    const std::size_t needed = (out - 1) * s + k;
    return needed > n ? (needed - n) / 2 : 0;
}

ConvGeometry conv_geometry(const Tensor& x, const Conv2dParams& p) {
    require_rank(x, 4, "conv2d");
    if (p.kernels.rank() != 4 || x.extent(3) != p.in_channels() ||
        p.bias.shape() != Shape{p.filters()}) {
        throw ShapeError("conv2d: input " + shape_string(x.shape()) + " vs kernels " +
                         shape_string(p.kernels.shape()));
    }
    ConvGeometry g{};
    g.batch = x.extent(0);
    g.h = x.extent(1);
    g.w = x.extent(2);
    g.c = x.extent(3);
    g.kh = p.kernel_h();
    g.kw = p.kernel_w();
    g.f = p.filters();
    g.stride = p.stride;
    g.out_h = conv_output_extent(g.h, g.kh, p.stride, p.padding);
    g.out_w = conv_output_extent(g.w, g.kw, p.stride, p.padding);
    if (p.padding == Padding::same) {
        g.pad_top = same_padding_before(g.h, g.out_h, g.kh, p.stride);
        g.pad_left = same_padding_before(g.w, g.out_w, g.kw, p.stride);
    }
    return g;
}

// Column matrix [rows, kh*kw*c]; row order (n, oy, ox), column order (u, v, c)
// which matches the row-major flattening of the kernel tensor.
Tensor im2col(const Tensor& x, const ConvGeometry& g) {
    Tensor cols({g.rows(), g.cols()});
    Real* dst = cols.data();
    const Real* src = x.data();
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                for (std::size_t u = 0; u < g.kh; ++u) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + u) -
                                              static_cast<std::ptrdiff_t>(g.pad_top);
                    for (std::size_t v = 0; v < g.kw; ++v) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + v) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
                        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                            ix >= static_cast<std::ptrdiff_t>(g.w)) {
                            dst += g.c;  // zero padding; cols is zero-initialised
                            continue;
                        }
                        const Real* px =
                            src + ((n * g.h + static_cast<std::size_t>(iy)) * g.w +
                                   static_cast<std::size_t>(ix)) * g.c;
                        dst = std::copy_n(px, g.c, dst);
                    }
                }
            }
        }
    }
    return cols;
}

Tensor col2im(const Tensor& cols, const ConvGeometry& g) {
    Tensor x({g.batch, g.h, g.w, g.c});
    const Real* src = cols.data();
    Real* dst = x.data();
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                for (std::size_t u = 0; u < g.kh; ++u) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + u) -
                                              static_cast<std::ptrdiff_t>(g.pad_top);
                    for (std::size_t v = 0; v < g.kw; ++v) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + v) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
                        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                            ix >= static_cast<std::ptrdiff_t>(g.w)) {
                            src += g.c;
                            continue;
                        }
                        Real* px = dst + ((n * g.h + static_cast<std::size_t>(iy)) * g.w +
                                          static_cast<std::size_t>(ix)) * g.c;
                        for (std::size_t ch = 0; ch < g.c; ++ch) px[ch] += src[ch];
                        src += g.c;
                    }
                }
            }
        }
    }
    return x;
}

}  // namespace

Conv2dParams init_conv2d(Rng& rng, std::size_t kh, std::size_t kw, std::size_t in_channels,
                         std::size_t filters, std::size_t stride, Padding padding) {
    if (stride == 0) throw ConfigError("conv2d: stride must be positive");
    Conv2dParams p;
    p.kernels = glorot_uniform(rng, {kh, kw, in_channels, filters}, kh * kw * in_channels,
                               kh * kw * filters);
    p.bias = Tensor({filters});
    p.stride = stride;
    p.padding = padding;
    return p;
}

Forward<Conv2dCache> conv2d_forward(const Tensor& x, const Conv2dParams& p) {
    const ConvGeometry g = conv_geometry(x, p);
    const Tensor kernel = p.kernels.reshaped({g.cols(), g.f});
    Tensor y = matmul(im2col(x, g), kernel);
    add_row_bias(y, p.bias);
    Conv2dCache cache{x, g.out_h, g.out_w, g.pad_top, g.pad_left};
    return {std::move(y).reshaped({g.batch, g.out_h, g.out_w, g.f}), std::move(cache)};
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Conv2dCache& cache,
                            const Conv2dParams& p, bool need_input_grad) {
    const ConvGeometry g = conv_geometry(cache.input, p);
    if (grad_out.shape() != Shape{g.batch, g.out_h, g.out_w, g.f}) {
        throw ShapeError("conv2d_backward: grad " + shape_string(grad_out.shape()) +
                         " does not match cache");
    }
    const Tensor g2 = grad_out.reshaped({g.rows(), g.f});
    const Tensor cols = im2col(cache.input, g);
    Conv2dGrads out;
    out.params.kernels = matmul_at_b(cols, g2).reshaped(p.kernels.shape());
    out.params.bias = column_sums(g2);
    out.params.stride = p.stride;
    out.params.padding = p.padding;
    if (need_input_grad) {
        const Tensor kernel = p.kernels.reshaped({g.cols(), g.f});
        out.input = col2im(matmul_a_bt(g2, kernel), g);
    }
    return out;
}

// ---------------------------------------------------------------- max pooling

Forward<MaxPoolCache> maxpool2d_forward(const Tensor& x) {
    require_rank(x, 4, "maxpool2d");
    const std::size_t b = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2d: odd spatial extents in " + shape_string(x.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor y({b, oh, ow, c});
    MaxPoolCache cache{x.shape(), std::vector<std::size_t>(y.size())};
    std::size_t o = 0;
    for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                for (std::size_t ch = 0; ch < c; ++ch, ++o) {
                    // Scan (dy, dx) in row-major order: strict '>' keeps the
                    // lowest linear index on ties.
                    std::size_t best = ((n * h + 2 * oy) * w + 2 * ox) * c + ch;
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx =
                                ((n * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                            if (x[idx] > x[best]) best = idx;
                        }
                    }
                    y[o] = x[best];
                    cache.argmax[o] = best;
                }
            }
        }
    }
    return {std::move(y), std::move(cache)};
}

Tensor maxpool2d_backward(const Tensor& grad_out, const MaxPoolCache& cache) {
    if (grad_out.size() != cache.argmax.size()) {
        throw ShapeError("maxpool2d_backward: grad " + shape_string(grad_out.shape()) +
                         " does not match cache");
    }
    Tensor g(cache.input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) g[cache.argmax[o]] += grad_out[o];
    return g;
}

// ---------------------------------------------------------------- batch norm

BatchNormParams init_batchnorm(std::size_t channels) {
    BatchNormParams p;
    p.gamma = Tensor({channels}, Real(1));
    p.beta = Tensor({channels});
    p.running_mean = Tensor({channels});
    p.running_var = Tensor({channels}, Real(1));
    return p;
}

Forward<BatchNormCache> batchnorm_forward(const Tensor& x, BatchNormParams& p, Mode mode) {
    if (x.rank() < 2 || x.extent(x.rank() - 1) != p.channels()) {
        throw ShapeError("batchnorm: input " + shape_string(x.shape()) + " vs " +
                         std::to_string(p.channels()) + " channels");
    }
    const std::size_t c = p.channels();
    const std::size_t n = x.size() / c;
    BatchNormCache cache;
    cache.mode = mode;
    cache.inv_std = Tensor({c});
    Tensor mean({c}), var({c});
    if (mode == Mode::train) {
        if (x.extent(0) < 2) {
            throw ShapeError("batchnorm: train mode needs a batch of at least 2");
        }
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[r * c + ch];
        for (std::size_t ch = 0; ch < c; ++ch) mean[ch] /= static_cast<Real>(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const Real d = x[r * c + ch] - mean[ch];
                var[ch] += d * d;
            }
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            var[ch] /= static_cast<Real>(n);
            p.running_mean[ch] = p.momentum * p.running_mean[ch] + (1 - p.momentum) * mean[ch];
            p.running_var[ch] = p.momentum * p.running_var[ch] + (1 - p.momentum) * var[ch];
        }
    } else {
        mean = p.running_mean;
        var = p.running_var;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
        cache.inv_std[ch] = Real(1) / std::sqrt(var[ch] + p.epsilon);
    }
    cache.normalized = Tensor(x.shape());
    Tensor y(x.shape());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = r * c + ch;
            const Real xhat = (x[i] - mean[ch]) * cache.inv_std[ch];
            cache.normalized[i] = xhat;
            y[i] = p.gamma[ch] * xhat + p.beta[ch];
        }
    }
    return {std::move(y), std::move(cache)};
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                  const BatchNormParams& p) {
    if (grad_out.shape() != cache.normalized.shape()) {
        throw ShapeError("batchnorm_backward: grad " + shape_string(grad_out.shape()) +
                         " does not match cache");
    }
    const std::size_t c = p.channels();
    const std::size_t n = grad_out.size() / c;
    BatchNormGrads g;
    g.params.gamma = Tensor({c});
    g.params.beta = Tensor({c});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = r * c + ch;
            g.params.beta[ch] += grad_out[i];
            g.params.gamma[ch] += grad_out[i] * cache.normalized[i];
        }
    }
    g.input = Tensor(grad_out.shape());
    if (cache.mode == Mode::eval) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t ch = 0; ch < c; ++ch)
                g.input[r * c + ch] = grad_out[r * c + ch] * p.gamma[ch] * cache.inv_std[ch];
        return g;
    }
    const Real count = static_cast<Real>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = r * c + ch;
            g.input[i] = p.gamma[ch] * cache.inv_std[ch] / count *
                         (count * grad_out[i] - g.params.beta[ch] -
                          cache.normalized[i] * g.params.gamma[ch]);
        }
    }
    return g;
}

// ---------------------------------------------------------------- LSTM

LstmParams init_lstm(Rng& rng, std::size_t in, std::size_t hidden) {
    LstmParams p;
    for (std::size_t k = 0; k < 4; ++k) {
        p.input_weights[k] = glorot_uniform(rng, {in, hidden}, in, hidden);
        p.recurrent_weights[k] = glorot_uniform(rng, {hidden, hidden}, hidden, hidden);
        p.bias[k] = Tensor({hidden}, k == gate_forget ? Real(1) : Real(0));
    }
    return p;
}

LstmStep lstm_cell_forward(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                           const LstmParams& p) {
    require_rank(x, 2, "lstm_cell");
    const std::size_t b = x.extent(0), hid = p.hidden_size();
    if (x.extent(1) != p.input_size() || h_prev.shape() != Shape{b, hid} ||
        c_prev.shape() != Shape{b, hid}) {
        throw ShapeError("lstm_cell: x " + shape_string(x.shape()) + ", h " +
                         shape_string(h_prev.shape()) + ", c " + shape_string(c_prev.shape()) +
                         " vs params in=" + std::to_string(p.input_size()) +
                         " hidden=" + std::to_string(hid));
    }
    LstmStep step;
    LstmCellCache& cache = step.cache;
    cache.x = x;
    cache.h_prev = h_prev;
    cache.c_prev = c_prev;
    for (std::size_t k = 0; k < 4; ++k) {
        Tensor z = matmul(x, p.input_weights[k]);
        accumulate(z, matmul(h_prev, p.recurrent_weights[k]));
        add_row_bias(z, p.bias[k]);
        for (Real& v : z.values()) v = (k == gate_cell) ? std::tanh(v) : sigmoid(v);
        cache.gates[k] = std::move(z);
    }
    const Tensor& i = cache.gates[gate_input];
    const Tensor& f = cache.gates[gate_forget];
    const Tensor& o = cache.gates[gate_output];
    const Tensor& g = cache.gates[gate_cell];
    cache.c = Tensor({b, hid});
    cache.tanh_c = Tensor({b, hid});
    step.h = Tensor({b, hid});
    for (std::size_t e = 0; e < b * hid; ++e) {
        cache.c[e] = f[e] * c_prev[e] + i[e] * g[e];
        cache.tanh_c[e] = std::tanh(cache.c[e]);
        step.h[e] = o[e] * cache.tanh_c[e];
    }
    step.c = cache.c;
    return step;
}

LstmCellGrads lstm_cell_backward(const Tensor& grad_h, const Tensor& grad_c,
                                 const LstmCellCache& cache, const LstmParams& p) {
    if (grad_h.shape() != cache.c.shape() || grad_c.shape() != cache.c.shape()) {
        throw ShapeError("lstm_cell_backward: grads do not match cached state " +
                         shape_string(cache.c.shape()));
    }
    const std::size_t n = cache.c.size();
    const Tensor& i = cache.gates[gate_input];
    const Tensor& f = cache.gates[gate_forget];
    const Tensor& o = cache.gates[gate_output];
    const Tensor& g = cache.gates[gate_cell];

    std::array<Tensor, 4> dz;
    for (auto& t : dz) t = Tensor(cache.c.shape());
    LstmCellGrads out;
    out.c_prev = Tensor(cache.c.shape());
    for (std::size_t e = 0; e < n; ++e) {
        const Real dh = grad_h[e];
        const Real dout = dh * cache.tanh_c[e];
        const Real dc = grad_c[e] + dh * o[e] * (Real(1) - cache.tanh_c[e] * cache.tanh_c[e]);
        dz[gate_input][e] = dc * g[e] * i[e] * (Real(1) - i[e]);
        dz[gate_forget][e] = dc * cache.c_prev[e] * f[e] * (Real(1) - f[e]);
        dz[gate_output][e] = dout * o[e] * (Real(1) - o[e]);
        dz[gate_cell][e] = dc * i[e] * (Real(1) - g[e] * g[e]);
        out.c_prev[e] = dc * f[e];
    }
    for (std::size_t k = 0; k < 4; ++k) {
        out.params.input_weights[k] = matmul_at_b(cache.x, dz[k]);
        out.params.recurrent_weights[k] = matmul_at_b(cache.h_prev, dz[k]);
        out.params.bias[k] = column_sums(dz[k]);
        Tensor dx = matmul_a_bt(dz[k], p.input_weights[k]);
        Tensor dh = matmul_a_bt(dz[k], p.recurrent_weights[k]);
        if (k == 0) {
            out.x = std::move(dx);
            out.h_prev = std::move(dh);
        } else {
            accumulate(out.x, dx);
            accumulate(out.h_prev, dh);
        }
    }
    return out;
}

Forward<LstmSequenceCache> lstm_sequence_forward(const Tensor& seq, const LstmParams& p) {
    require_rank(seq, 3, "lstm_sequence");
    const std::size_t b = seq.extent(0), t = seq.extent(1), hid = p.hidden_size();
    Tensor out({b, t, hid});
    Tensor h({b, hid}), c({b, hid});
    LstmSequenceCache cache;
    cache.steps.reserve(t);
    // [b, t, d] -> step slices [b, d]
    for (std::size_t s = 0; s < t; ++s) {
        Tensor x = slice(seq, 1, s, s + 1).reshaped({b, seq.extent(2)});
        LstmStep step = lstm_cell_forward(x, h, c, p);
        for (std::size_t n = 0; n < b; ++n) {
            std::copy_n(step.h.data() + n * hid, hid, out.data() + (n * t + s) * hid);
        }
        h = std::move(step.h);
        c = std::move(step.c);
        cache.steps.push_back(std::move(step.cache));
    }
    return {std::move(out), std::move(cache)};
}

LstmSequenceGrads lstm_sequence_backward(const Tensor& grad_out, const LstmSequenceCache& cache,
                                         const LstmParams& p, bool need_input_grad) {
    const std::size_t t = cache.steps.size();
    if (t == 0 || grad_out.rank() != 3 || grad_out.extent(1) != t) {
        throw ShapeError("lstm_sequence_backward: grad " + shape_string(grad_out.shape()) +
                         " does not match " + std::to_string(t) + " cached steps");
    }
    const std::size_t b = grad_out.extent(0), hid = p.hidden_size(), in = p.input_size();
    LstmSequenceGrads out;
    if (need_input_grad) out.input = Tensor({b, t, in});
    Tensor dh_next({b, hid}), dc_next({b, hid});
    for (std::size_t s = t; s-- > 0;) {
        Tensor dh = slice(grad_out, 1, s, s + 1).reshaped({b, hid});
        accumulate(dh, dh_next);
        LstmCellGrads step = lstm_cell_backward(dh, dc_next, cache.steps[s], p);
        if (s == t - 1) {
            out.params = std::move(step.params);
        } else {
            for (std::size_t k = 0; k < 4; ++k) {
                accumulate(out.params.input_weights[k], step.params.input_weights[k]);
                accumulate(out.params.recurrent_weights[k], step.params.recurrent_weights[k]);
                accumulate(out.params.bias[k], step.params.bias[k]);
            }
        }
        if (need_input_grad) {
            for (std::size_t n = 0; n < b; ++n) {
                std::copy_n(step.x.data() + n * in, in, out.input.data() + (n * t + s) * in);
            }
        }
        dh_next = std::move(step.h_prev);
        dc_next = std::move(step.c_prev);
    }
    return out;
}

// ---------------------------------------------------------------- time-distributed dense

Forward<TimeDistributedCache> time_distributed_dense_forward(const Tensor& seq,
                                                             const DenseParams& p) {
    require_rank(seq, 3, "time_distributed_dense");
    const std::size_t b = seq.extent(0), t = seq.extent(1);
    // Row r of the flattened [b*t, d] view is exactly step (r / t, r % t), and
    // every output row is computed independently, so this equals a per-step loop.
    auto fwd = dense_forward(seq.reshaped({b * t, seq.extent(2)}), p);
    TimeDistributedCache cache{seq.shape(), std::move(fwd.cache)};
    return {std::move(fwd.output).reshaped({b, t, p.out()}), std::move(cache)};
}

DenseGrads time_distributed_dense_backward(const Tensor& grad_out,
                                           const TimeDistributedCache& cache,
                                           const DenseParams& p, bool need_input_grad) {
    if (grad_out.rank() != 3 || grad_out.extent(0) != cache.input_shape[0] ||
        grad_out.extent(1) != cache.input_shape[1]) {
        throw ShapeError("time_distributed_dense_backward: grad " +
                         shape_string(grad_out.shape()) + " does not match cache");
    }
    const std::size_t rows = grad_out.extent(0) * grad_out.extent(1);
    DenseGrads g = dense_backward(grad_out.reshaped({rows, p.out()}), cache.dense, p,
                                  need_input_grad);
    if (need_input_grad) g.input = std::move(g.input).reshaped(cache.input_shape);
    return g;
}

}  // namespace avaccel
