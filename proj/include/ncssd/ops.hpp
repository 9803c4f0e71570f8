#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ncssd/tensor.hpp"

// Dense numeric primitives. Every op is a pure function of its arguments and
// parallelizes only over independent output elements (static schedule), so
// results are bitwise reproducible for any fixed thread count.

namespace ncssd {

// Parallel regions are skipped entirely when only one thread is available,
// so single-thread timing measures the bare algorithm.
inline bool omp_enabled() {
#ifdef _OPENMP
    return omp_get_max_threads() > 1;
#else
    return false;
#endif
}

template <typename T>
inline T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
inline T silu_scalar(T x) {
    return x * sigmoid_scalar(x);
}

template <typename T>
inline T softplus_scalar(T x) {
    if (x > T(30)) return x;
    return std::log1p(std::exp(x));
}

// c[i,j] = sum_k a[i,k] b[k,j]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    if (a.extent(1) != b.extent(0))
        throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const int64_t m = a.extent(0), kk = a.extent(1), p = b.extent(1);
    Tensor<T> c({m, p});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    // row blocks keep the accumulators and the streamed b-rows cache resident;
    // per element the k-ascending accumulation order is unchanged
    constexpr int64_t kRowBlock = 64;
    const int64_t nblocks = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t blk = 0; blk < nblocks; ++blk) {
        const int64_t ib = blk * kRowBlock;
        const int64_t ie = std::min(ib + kRowBlock, m);
        for (int64_t k = 0; k < kk; ++k) {
            const T* brow = pb + k * p;
            for (int64_t i = ib; i < ie; ++i) {
                const T av = pa[i * kk + k];
                if (av == T(0)) continue;  // triangular/masked operands are common
                T* crow = pc + i * p;
                for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

// Cross-correlation with zero padding and per-channel bias.
// input [Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int64_t stride, int64_t padding) {
    if (input.rank() != 3 || weight.rank() != 4)
        throw DimensionError("conv2d expects input [Cin,H,W] and weight [Cout,Cin,kh,kw]");
    const int64_t cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int64_t cout = weight.extent(0), kh = weight.extent(2), kw = weight.extent(3);
    if (weight.extent(1) != cin)
        throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                             " weight " + shape_str(weight.shape()));
    if (bias.rank() != 1 || bias.extent(0) != cout)
        throw DimensionError("conv2d bias must be [Cout]");
    if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("conv2d kernel extents must be odd");
    if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
    const int64_t ho = (h + 2 * padding - kh) / stride + 1;
    const int64_t wo = (w + 2 * padding - kw) / stride + 1;
    if (ho < 1 || wo < 1)
        throw DimensionError("conv2d output extent < 1 for input " + shape_str(input.shape()));

    Tensor<T> out({cout, ho, wo});
    const T* pin = input.data();
    const T* pw = weight.data();
    T* pout = out.data();
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t co = 0; co < cout; ++co) {
        T* plane = pout + co * ho * wo;
        const T bv = bias.data()[co];
        for (int64_t i = 0; i < ho * wo; ++i) plane[i] = bv;
        for (int64_t ci = 0; ci < cin; ++ci) {
            const T* iplane = pin + ci * h * w;
            for (int64_t ky = 0; ky < kh; ++ky) {
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const T wv = pw[((co * cin + ci) * kh + ky) * kw + kx];
                    if (wv == T(0)) continue;
                    for (int64_t oy = 0; oy < ho; ++oy) {
                        const int64_t iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= h) continue;
                        const T* irow = iplane + iy * w;
                        T* orow = plane + oy * wo;
                        for (int64_t ox = 0; ox < wo; ++ox) {
                            const int64_t ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= w) continue;
                            orow[ox] += wv * irow[ix];
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Depthwise 3x3-style conv on [C,H,W]; weight [C,kh,kw], stride 1, same padding.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias) {
    if (input.rank() != 3 || weight.rank() != 3)
        throw DimensionError("depthwise_conv2d expects input [C,H,W], weight [C,kh,kw]");
    const int64_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int64_t kh = weight.extent(1), kw = weight.extent(2);
    if (weight.extent(0) != c) throw DimensionError("depthwise_conv2d channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("depthwise kernel must be odd");
    const int64_t py = kh / 2, px = kw / 2;
    Tensor<T> out({c, h, w});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t ch = 0; ch < c; ++ch) {
        const T* iplane = input.data() + ch * h * w;
        const T* kw_ = weight.data() + ch * kh * kw;
        T* oplane = out.data() + ch * h * w;
        const T bv = bias.data()[ch];
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                T acc = bv;
                for (int64_t ky = 0; ky < kh; ++ky) {
                    const int64_t iy = y + ky - py;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const int64_t ix = x + kx - px;
                        if (ix < 0 || ix >= w) continue;
                        acc += kw_[ky * kw + kx] * iplane[iy * w + ix];
                    }
                }
                oplane[y * w + x] = acc;
            }
        }
    }
    return out;
}

// Normalizes the last axis to zero mean / unit variance, then applies the
// per-channel affine.  x [..., D], gamma/beta [D].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const int64_t d = x.extent(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.extent(0) != d || beta.rank() != 1 || beta.extent(0) != d)
        throw DimensionError("layer_norm affine params must be [D] with D = last extent");
    if (!(eps > T(0))) throw DomainError("layer_norm eps must be > 0");
    const int64_t rows = x.size() / d;
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const T* pg = gamma.data();
    const T* pb = beta.data();
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = px + r * d;
        T* or_ = po + r * d;
        T mean = 0;
        for (int64_t i = 0; i < d; ++i) mean += xr[i];
        mean /= T(d);
        T var = 0;
        for (int64_t i = 0; i < d; ++i) {
            const T dev = xr[i] - mean;
            var += dev * dev;
        }
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int64_t i = 0; i < d; ++i) or_[i] = (xr[i] - mean) * inv * pg[i] + pb[i];
    }
    return out;
}

template <typename T, typename F>
Tensor<T> map_elementwise(const Tensor<T>& x, F f) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const int64_t n = x.size();
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
    return out;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    return map_elementwise(x, [](T v) { return silu_scalar(v); });
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return map_elementwise(x, [](T v) { return sigmoid_scalar(v); });
}
template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return map_elementwise(x, [](T v) { return std::tanh(v); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
    if (axis < 0 || axis >= x.rank())
        throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(x.rank()));
    const int64_t d = x.extent(axis);
    int64_t inner = 1;
    for (int64_t k = axis + 1; k < x.rank(); ++k) inner *= x.extent(k);
    const int64_t outer = x.size() / (d * inner);
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (omp_enabled()) collapse(2)
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const T* base = px + o * d * inner + in;
            T* obase = po + o * d * inner + in;
            T mx = base[0];
            for (int64_t i = 1; i < d; ++i) mx = std::max(mx, base[i * inner]);
            T sum = 0;
            for (int64_t i = 0; i < d; ++i) {
                const T e = std::exp(base[i * inner] - mx);
                obase[i * inner] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (int64_t i = 0; i < d; ++i) obase[i * inner] *= inv;
        }
    }
    return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int64_t axis) {
    if (a.rank() != b.rank()) throw DimensionError("concat rank mismatch");
    if (axis < 0 || axis >= a.rank()) throw DimensionError("concat axis out of range");
    for (int64_t k = 0; k < a.rank(); ++k)
        if (k != axis && a.extent(k) != b.extent(k))
            throw DimensionError("concat extent mismatch at axis " + std::to_string(k) + ": " +
                                 shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<int64_t> shape = a.shape();
    shape[static_cast<size_t>(axis)] += b.extent(axis);
    Tensor<T> out(shape);
    int64_t inner = 1;
    for (int64_t k = axis + 1; k < a.rank(); ++k) inner *= a.extent(k);
    const int64_t ablk = a.extent(axis) * inner, bblk = b.extent(axis) * inner;
    const int64_t outer = a.size() / ablk;
    for (int64_t o = 0; o < outer; ++o) {
        std::copy_n(a.data() + o * ablk, ablk, out.data() + o * (ablk + bblk));
        std::copy_n(b.data() + o * bblk, bblk, out.data() + o * (ablk + bblk) + ablk);
    }
    return out;
}

// Splits into `parts` equal pieces along `axis`.
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int64_t axis, int64_t parts) {
    if (axis < 0 || axis >= x.rank()) throw DimensionError("split axis out of range");
    if (parts < 1 || x.extent(axis) % parts != 0)
        throw DimensionError("split: extent " + std::to_string(x.extent(axis)) +
                             " not divisible into " + std::to_string(parts) + " parts");
    const int64_t piece = x.extent(axis) / parts;
    int64_t inner = 1;
    for (int64_t k = axis + 1; k < x.rank(); ++k) inner *= x.extent(k);
    const int64_t blk = x.extent(axis) * inner;
    const int64_t outer = x.size() / blk;
    std::vector<int64_t> shape = x.shape();
    shape[static_cast<size_t>(axis)] = piece;
    std::vector<Tensor<T>> out;
    out.reserve(static_cast<size_t>(parts));
    for (int64_t p = 0; p < parts; ++p) {
        Tensor<T> t(shape);
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(x.data() + o * blk + p * piece * inner, piece * inner,
                        t.data() + o * piece * inner);
        out.push_back(std::move(t));
    }
    return out;
}

// Average-pools each of the last k axes by a factor of 2 (floor); every
// output cell is the mean of its 2^k block.
template <typename T>
Tensor<T> avg_pool_last(const Tensor<T>& x, int64_t k) {
    if (k < 1 || k > x.rank()) throw DimensionError("avg_pool: invalid pooled axis count");
    std::vector<int64_t> shape = x.shape();
    const size_t r = shape.size();
    for (int64_t i = 0; i < k; ++i) {
        const int64_t e = shape[r - 1 - static_cast<size_t>(i)] / 2;
        if (e < 1)
            throw DimensionError("avg_pool: pooled extent would become 0 for shape " +
                                 shape_str(x.shape()));
        shape[r - 1 - static_cast<size_t>(i)] = e;
    }
    Tensor<T> out(shape);
    const int64_t blocks = int64_t(1) << k;
    const T invn = T(1) / T(blocks);
    const int64_t n = out.size();
    const auto& os = out.shape();
    const auto& ostr = out.strides();
    const auto& istr = x.strides();
    const int64_t rank = x.rank();
    const T* px = x.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t flat = 0; flat < n; ++flat) {
        // decode output index, map to input block origin
        int64_t rem = flat;
        int64_t base = 0;
        for (int64_t ax = 0; ax < rank; ++ax) {
            const int64_t ix = rem / ostr[static_cast<size_t>(ax)];
            rem -= ix * ostr[static_cast<size_t>(ax)];
            const bool pooled = ax >= rank - k;
            base += (pooled ? ix * 2 : ix) * istr[static_cast<size_t>(ax)];
        }
        T acc = 0;
        for (int64_t b = 0; b < blocks; ++b) {
            int64_t off = 0;
            for (int64_t i = 0; i < k; ++i)
                if (b & (int64_t(1) << i)) off += istr[static_cast<size_t>(rank - 1 - i)];
            acc += px[base + off];
        }
        po[flat] = acc * invn;
    }
    (void)os;
    return out;
}

// Samples map [C,H,W] at P (x,y) locations with bilinear interpolation;
// coordinates are clamped to the valid border.  coords [P,2] as (x, y).
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& map, const Tensor<T>& coords) {
    if (map.rank() != 3) throw DimensionError("bilinear_sample expects map [C,H,W]");
    if (coords.rank() != 2 || coords.extent(1) != 2)
        throw DimensionError("bilinear_sample expects coords [P,2]");
    const int64_t c = map.extent(0), h = map.extent(1), w = map.extent(2);
    const int64_t p = coords.extent(0);
    Tensor<T> out({p, c});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t i = 0; i < p; ++i) {
        T x = coords(i, 0), y = coords(i, 1);
        x = std::clamp(x, T(0), T(w - 1));
        y = std::clamp(y, T(0), T(h - 1));
        const int64_t x0 = static_cast<int64_t>(std::floor(x));
        const int64_t y0 = static_cast<int64_t>(std::floor(y));
        const int64_t x1 = std::min(x0 + 1, w - 1);
        const int64_t y1 = std::min(y0 + 1, h - 1);
        const T fx = x - T(x0), fy = y - T(y0);
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* plane = map.data() + ch * h * w;
            const T v00 = plane[y0 * w + x0], v01 = plane[y0 * w + x1];
            const T v10 = plane[y1 * w + x0], v11 = plane[y1 * w + x1];
            out(i, ch) = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) +
                         fy * ((T(1) - fx) * v10 + fx * v11);
        }
    }
    return out;
}

// 1-D linear interpolation along the last axis of a [W]-slice, clamped.
template <typename T>
inline T linear_sample_1d(const T* row, int64_t w, T x) {
    x = std::clamp(x, T(0), T(w - 1));
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const T fx = x - T(x0);
    return (T(1) - fx) * row[x0] + fx * row[x1];
}

// Bilinear 2x upsampling of [C,H,W] -> [C,2H,2W] (half-pixel centers).
template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x) {
    if (x.rank() != 3) throw DimensionError("bilinear_upsample2x expects [C,H,W]");
    const int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor<T> out({c, 2 * h, 2 * w});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t ch = 0; ch < c; ++ch) {
        const T* plane = x.data() + ch * h * w;
        T* oplane = out.data() + ch * 4 * h * w;
        for (int64_t y = 0; y < 2 * h; ++y) {
            T sy = (T(y) + T(0.5)) / T(2) - T(0.5);
            sy = std::clamp(sy, T(0), T(h - 1));
            const int64_t y0 = static_cast<int64_t>(std::floor(sy));
            const int64_t y1 = std::min(y0 + 1, h - 1);
            const T fy = sy - T(y0);
            for (int64_t xo = 0; xo < 2 * w; ++xo) {
                T sx = (T(xo) + T(0.5)) / T(2) - T(0.5);
                sx = std::clamp(sx, T(0), T(w - 1));
                const int64_t x0 = static_cast<int64_t>(std::floor(sx));
                const int64_t x1 = std::min(x0 + 1, w - 1);
                const T fx = sx - T(x0);
                oplane[y * 2 * w + xo] =
                    (T(1) - fy) * ((T(1) - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1]) +
                    fy * ((T(1) - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1]);
            }
        }
    }
    return out;
}

// Average-pool the two trailing spatial axes of [C,H,W] by 2.
template <typename T>
Tensor<T> avg_pool_spatial2(const Tensor<T>& x) {
    return avg_pool_last(x, 2);
}

// y = W x + b applied row-wise: x [L,Din], weight [Dout,Din], bias [Dout] -> [L,Dout]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.rank() != 2 || weight.rank() != 2)
        throw DimensionError("linear expects x [L,Din], weight [Dout,Din]");
    const int64_t l = x.extent(0), din = x.extent(1), dout = weight.extent(0);
    if (weight.extent(1) != din)
        throw DimensionError("linear weight " + shape_str(weight.shape()) +
                             " incompatible with x " + shape_str(x.shape()));
    if (bias.rank() != 1 || bias.extent(0) != dout) throw DimensionError("linear bias must be [Dout]");
    Tensor<T> out({l, dout});
    const T* px = x.data();
    const T* pw = weight.data();
    const T* pb = bias.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t i = 0; i < l; ++i) {
        const T* xr = px + i * din;
        T* orow = po + i * dout;
        for (int64_t o = 0; o < dout; ++o) {
            const T* wr = pw + o * din;
            T acc = pb[o];
            for (int64_t k = 0; k < din; ++k) acc += wr[k] * xr[k];
            orow[o] = acc;
        }
    }
    return out;
}

}  // namespace ncssd
