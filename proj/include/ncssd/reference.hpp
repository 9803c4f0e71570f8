#pragma once

#include <cmath>
#include <vector>

#include "ncssd/ssd.hpp"
#include "ncssd/tensor.hpp"

// Serial reference implementations.  Plain nested loops straight off the
// defining formulas, no OpenMP, no shortcuts shared with the production
// kernels.  Used as oracles by the test and selftest suites and as the
// baseline for the parallel-vs-serial benchmark.

namespace ncssd::ref {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const int64_t m = a.extent(0), kk = a.extent(1), p = b.extent(1);
    Tensor<T> c({m, p});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < p; ++j) {
            T acc = 0;
            for (int64_t k = 0; k < kk; ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    return c;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int64_t stride, int64_t padding) {
    const int64_t cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int64_t cout = weight.extent(0), kh = weight.extent(2), kw = weight.extent(3);
    const int64_t ho = (h + 2 * padding - kh) / stride + 1;
    const int64_t wo = (w + 2 * padding - kw) / stride + 1;
    Tensor<T> out({cout, ho, wo});
    for (int64_t co = 0; co < cout; ++co)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                T acc = bias(co);
                for (int64_t ci = 0; ci < cin; ++ci)
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t iy = oy * stride + ky - padding;
                            const int64_t ix = ox * stride + kx - padding;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += input(ci, iy, ix) * weight(co, ci, ky, kx);
                        }
                out(co, oy, ox) = acc;
            }
    return out;
}

// Y_i = sum_j (1/A_j) (C_i . B_j) x_j, the O(L^2 N D) direct evaluation of the
// shared-state kernel; with diag_bias the j = i term is counted twice.
template <typename T>
Tensor<T> ncssd_double_loop(const ScanInputs<T>& s, bool include_diag_bias) {
    const int64_t l = s.length(), d = s.feature_dim(), n = s.state_dim();
    Tensor<T> y({l, d});
    for (int64_t i = 0; i < l; ++i) {
        const T* ci = s.C.data() + i * n;
        for (int64_t j = 0; j < l; ++j) {
            const T m = T(1) / s.A.data()[j];
            const T* bj = s.B.data() + j * n;
            T dot = 0;
            for (int64_t k = 0; k < n; ++k) dot += ci[k] * bj[k];
            T coeff = m * dot;
            if (include_diag_bias && i == j) coeff += coeff;  // bias repeats the own term
            const T* xj = s.X.data() + j * d;
            for (int64_t k = 0; k < d; ++k) y(i, k) += coeff * xj[k];
        }
    }
    return y;
}

// All-pairs correlation volume, quadruple loop: C[i,j,k,l] = sum_h L[h,i,j] R[h,k,l].
template <typename T>
Tensor<T> flow_volume(const Tensor<T>& left, const Tensor<T>& right) {
    const int64_t d = left.extent(0), h = left.extent(1), w = left.extent(2);
    Tensor<T> vol({h, w, h, w});
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
            for (int64_t k = 0; k < h; ++k)
                for (int64_t l = 0; l < w; ++l) {
                    T acc = 0;
                    for (int64_t c = 0; c < d; ++c) acc += left(c, i, j) * right(c, k, l);
                    vol(i, j, k, l) = acc;
                }
    return vol;
}

// Same-row correlation volume, triple loop: C[i,j,k] = sum_h f[h,i,j] g[h,i,k].
template <typename T>
Tensor<T> disparity_volume(const Tensor<T>& f, const Tensor<T>& g) {
    const int64_t d = f.extent(0), h = f.extent(1), w = f.extent(2);
    Tensor<T> vol({h, w, w});
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
            for (int64_t k = 0; k < w; ++k) {
                T acc = 0;
                for (int64_t c = 0; c < d; ++c) acc += f(c, i, j) * g(c, i, k);
                vol(i, j, k) = acc;
            }
    return vol;
}

// Scalar bilinear probe of a [H,W] grid with border clamping.
template <typename T>
T bilinear_at(const T* grid, int64_t h, int64_t w, T y, T x) {
    x = std::clamp(x, T(0), T(w - 1));
    y = std::clamp(y, T(0), T(h - 1));
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t y0 = static_cast<int64_t>(std::floor(y));
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const T fx = x - T(x0), fy = y - T(y0);
    return (T(1) - fy) * ((T(1) - fx) * grid[y0 * w + x0] + fx * grid[y0 * w + x1]) +
           fy * ((T(1) - fx) * grid[y1 * w + x0] + fx * grid[y1 * w + x1]);
}

template <typename T>
T linear_at(const T* row, int64_t w, T x) {
    x = std::clamp(x, T(0), T(w - 1));
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const T fx = x - T(x0);
    return (T(1) - fx) * row[x0] + fx * row[x1];
}

// Per-gate ConvGRU reference: z = sig(conv_z[h,x]), r = sig(conv_r[h,x]),
// htilde = tanh(conv_h[r*h, x]), h' = (1-z) h + z htilde.  Convs 3x3 same-pad.
template <typename T>
Tensor<T> conv_gru_cell(const Tensor<T>& hidden, const Tensor<T>& x, const Tensor<T>& wz,
                        const Tensor<T>& bz, const Tensor<T>& wr, const Tensor<T>& br,
                        const Tensor<T>& wh, const Tensor<T>& bh) {
    const int64_t dh = hidden.extent(0), hh = hidden.extent(1), ww = hidden.extent(2);
    const int64_t dx = x.extent(0);
    auto gate_conv = [&](const Tensor<T>& w_, const Tensor<T>& b_, const Tensor<T>& a,
                         const Tensor<T>& b2) {
        // conv over channel-concat [a; b2]
        const int64_t kh = w_.extent(2), kw = w_.extent(3);
        const int64_t py = kh / 2, px = kw / 2;
        Tensor<T> out({dh, hh, ww});
        for (int64_t co = 0; co < dh; ++co)
            for (int64_t y = 0; y < hh; ++y)
                for (int64_t xx = 0; xx < ww; ++xx) {
                    T acc = b_(co);
                    for (int64_t ci = 0; ci < dh + dx; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = y + ky - py, ix = xx + kx - px;
                                if (iy < 0 || iy >= hh || ix < 0 || ix >= ww) continue;
                                const T v = ci < dh ? a(ci, iy, ix) : b2(ci - dh, iy, ix);
                                acc += v * w_(co, ci, ky, kx);
                            }
                    out(co, y, xx) = acc;
                }
        return out;
    };
    Tensor<T> z = gate_conv(wz, bz, hidden, x);
    Tensor<T> r = gate_conv(wr, br, hidden, x);
    for (int64_t i = 0; i < z.size(); ++i) {
        z.at_flat(i) = sigmoid_scalar(z.at_flat(i));
        r.at_flat(i) = sigmoid_scalar(r.at_flat(i));
    }
    Tensor<T> rh({dh, hh, ww});
    for (int64_t i = 0; i < rh.size(); ++i) rh.at_flat(i) = r.at_flat(i) * hidden.at_flat(i);
    Tensor<T> ht = gate_conv(wh, bh, rh, x);
    Tensor<T> out({dh, hh, ww});
    for (int64_t i = 0; i < out.size(); ++i) {
        const T zt = z.at_flat(i);
        out.at_flat(i) = (T(1) - zt) * hidden.at_flat(i) + zt * std::tanh(ht.at_flat(i));
    }
    return out;
}

// Per-subpixel convex upsampling reference.
template <typename T>
Tensor<T> convex_upsample(const Tensor<T>& field, const Tensor<T>& mask_logits, int64_t s,
                          bool scale_values) {
    const int64_t c = field.extent(0), h = field.extent(1), w = field.extent(2);
    Tensor<T> out({c, s * h, s * w});
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
            for (int64_t dy = 0; dy < s; ++dy)
                for (int64_t dx = 0; dx < s; ++dx) {
                    const int64_t group = dy * s + dx;
                    T logits[9];
                    T mx = -std::numeric_limits<T>::infinity();
                    for (int64_t t = 0; t < 9; ++t) {
                        logits[t] = mask_logits(group * 9 + t, i, j);
                        mx = std::max(mx, logits[t]);
                    }
                    T sum = 0;
                    for (int64_t t = 0; t < 9; ++t) {
                        logits[t] = std::exp(logits[t] - mx);
                        sum += logits[t];
                    }
                    for (int64_t ch = 0; ch < c; ++ch) {
                        T acc = 0;
                        for (int64_t t = 0; t < 9; ++t) {
                            const int64_t ny = std::clamp<int64_t>(i + t / 3 - 1, 0, h - 1);
                            const int64_t nx = std::clamp<int64_t>(j + t % 3 - 1, 0, w - 1);
                            acc += logits[t] / sum * field(ch, ny, nx);
                        }
                        if (scale_values) acc *= T(s);
                        out(ch, i * s + dy, j * s + dx) = acc;
                    }
                }
    return out;
}

}  // namespace ncssd::ref
