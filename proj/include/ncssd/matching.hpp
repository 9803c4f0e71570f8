#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "ncssd/ops.hpp"
#include "ncssd/tensor.hpp"

// Correlation-pyramid matching: all-pairs / same-row volumes, pooled pyramid,
// displacement lookup, ConvGRU iterative refinement and convex upsampling.

namespace ncssd {

enum class FieldKind { flow, disparity };

// Flow: values [2,H,W] with channel 0 = horizontal u, 1 = vertical v.
// Disparity: values [1,H,W], correspondence at column j - d.
// resolution_scale is the downsample factor relative to the input image.
template <typename T>
struct FieldEstimate {
    FieldKind kind = FieldKind::flow;
    Tensor<T> values;
    int64_t resolution_scale = 1;
};

template <typename T>
struct CorrelationPyramid {
    FieldKind kind = FieldKind::flow;
    std::vector<Tensor<T>> levels;

    int64_t num_levels() const { return static_cast<int64_t>(levels.size()); }
};

// C[i,j,k,l] = sum_h left[h,i,j] right[h,k,l]  -> [H,W,H,W]
template <typename T>
Tensor<T> build_flow_volume(const Tensor<T>& left, const Tensor<T>& right) {
    if (left.rank() != 3 || !left.same_shape(right))
        throw DimensionError("flow volume expects two [D,H,W] maps of equal shape, got " +
                             shape_str(left.shape()) + " vs " + shape_str(right.shape()));
    const int64_t d = left.extent(0), h = left.extent(1), w = left.extent(2);
    const int64_t p = h * w;
    Tensor<T> vol({h, w, h, w});
    const T* pl = left.data();
    const T* pr = right.data();
    T* pv = vol.data();
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t a = 0; a < p; ++a) {
        T* row = pv + a * p;
        for (int64_t c = 0; c < d; ++c) {
            const T lv = pl[c * p + a];
            const T* rplane = pr + c * p;
            for (int64_t b = 0; b < p; ++b) row[b] += lv * rplane[b];
        }
    }
    return vol;
}

// C[i,j,k] = sum_h f[h,i,j] g[h,i,k]  -> [H,W,W]
template <typename T>
Tensor<T> build_disparity_volume(const Tensor<T>& f, const Tensor<T>& g) {
    if (f.rank() != 3 || !f.same_shape(g))
        throw DimensionError("disparity volume expects two [D,H,W] maps of equal shape, got " +
                             shape_str(f.shape()) + " vs " + shape_str(g.shape()));
    const int64_t d = f.extent(0), h = f.extent(1), w = f.extent(2);
    Tensor<T> vol({h, w, w});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t i = 0; i < h; ++i) {
        T* rows = vol.data() + i * w * w;
        for (int64_t c = 0; c < d; ++c) {
            const T* frow = f.data() + c * h * w + i * w;
            const T* grow = g.data() + c * h * w + i * w;
            for (int64_t j = 0; j < w; ++j) {
                T* out = rows + j * w;
                const T fv = frow[j];
                for (int64_t k = 0; k < w; ++k) out[k] += fv * grow[k];
            }
        }
    }
    return vol;
}

// Level 0 is the raw volume; each next level average-pools the trailing two
// (flow) or one (disparity) axes by 2.
template <typename T>
CorrelationPyramid<T> build_pyramid(Tensor<T> volume, FieldKind kind, int64_t num_levels = 4) {
    if (num_levels < 1) throw DimensionError("pyramid needs at least one level");
    const int64_t trailing = kind == FieldKind::flow ? 2 : 1;
    const int64_t min_extent = int64_t(1) << (num_levels - 1);
    for (int64_t k = 0; k < trailing; ++k) {
        const int64_t e = volume.extent(volume.rank() - 1 - k);
        if (e < min_extent)
            throw DimensionError("pyramid trailing extent " + std::to_string(e) +
                                 " too small for " + std::to_string(num_levels) + " levels");
    }
    CorrelationPyramid<T> pyr;
    pyr.kind = kind;
    pyr.levels.push_back(std::move(volume));
    for (int64_t k = 1; k < num_levels; ++k)
        pyr.levels.push_back(avg_pool_last(pyr.levels.back(), trailing));
    return pyr;
}

// Samples, for every pixel (i,j), a (2r+1)^2 offset grid centered at
// ((j+u)/2^k, (i+v)/2^k) from each pyramid level's trailing 2-D slice.
// Output [H,W, num_levels*(2r+1)^2], levels ascending, offsets row-major.
template <typename T>
Tensor<T> lookup_flow(const CorrelationPyramid<T>& pyr, const FieldEstimate<T>& est, int64_t r) {
    if (est.kind != FieldKind::flow || pyr.kind != FieldKind::flow)
        throw DimensionError("lookup_flow requires flow pyramid and flow estimate");
    const Tensor<T>& base = pyr.levels.front();
    const int64_t h = base.extent(0), w = base.extent(1);
    if (est.values.rank() != 3 || est.values.extent(0) != 2 || est.values.extent(1) != h ||
        est.values.extent(2) != w)
        throw DimensionError("lookup_flow estimate must be [2,H,W] matching the volume");
    const int64_t side = 2 * r + 1;
    const int64_t nl = pyr.num_levels();
    Tensor<T> out({h, w, nl * side * side});
#pragma omp parallel for schedule(static) if (omp_enabled()) collapse(2)
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            const T u = est.values(0, i, j);
            const T v = est.values(1, i, j);
            T* feat = out.data() + (i * w + j) * nl * side * side;
            for (int64_t k = 0; k < nl; ++k) {
                const Tensor<T>& lvl = pyr.levels[static_cast<size_t>(k)];
                const int64_t lh = lvl.extent(2), lw = lvl.extent(3);
                const T* slice = lvl.data() + (i * w + j) * lh * lw;
                const T scale = T(1) / T(int64_t(1) << k);
                const T cy = (T(i) + v) * scale;
                const T cx = (T(j) + u) * scale;
                for (int64_t dy = -r; dy <= r; ++dy)
                    for (int64_t dx = -r; dx <= r; ++dx) {
                        const T y = cy + T(dy);
                        const T x = cx + T(dx);
                        const T yc = std::clamp(y, T(0), T(lh - 1));
                        const T xc = std::clamp(x, T(0), T(lw - 1));
                        const int64_t y0 = static_cast<int64_t>(std::floor(yc));
                        const int64_t x0 = static_cast<int64_t>(std::floor(xc));
                        const int64_t y1 = std::min(y0 + 1, lh - 1);
                        const int64_t x1 = std::min(x0 + 1, lw - 1);
                        const T fy = yc - T(y0), fx = xc - T(x0);
                        *feat++ = (T(1) - fy) * ((T(1) - fx) * slice[y0 * lw + x0] +
                                                 fx * slice[y0 * lw + x1]) +
                                  fy * ((T(1) - fx) * slice[y1 * lw + x0] +
                                        fx * slice[y1 * lw + x1]);
                    }
            }
        }
    }
    return out;
}

// 1-D analogue along the trailing axis: 2r+1 offsets around (j-d)/2^k.
// Output [H,W, num_levels*(2r+1)].
template <typename T>
Tensor<T> lookup_disparity(const CorrelationPyramid<T>& pyr, const FieldEstimate<T>& est,
                           int64_t r) {
    if (est.kind != FieldKind::disparity || pyr.kind != FieldKind::disparity)
        throw DimensionError("lookup_disparity requires disparity pyramid and estimate");
    const Tensor<T>& base = pyr.levels.front();
    const int64_t h = base.extent(0), w = base.extent(1);
    if (est.values.rank() != 3 || est.values.extent(0) != 1 || est.values.extent(1) != h ||
        est.values.extent(2) != w)
        throw DimensionError("lookup_disparity estimate must be [1,H,W] matching the volume");
    const int64_t side = 2 * r + 1;
    const int64_t nl = pyr.num_levels();
    Tensor<T> out({h, w, nl * side});
#pragma omp parallel for schedule(static) if (omp_enabled()) collapse(2)
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            const T d = est.values(0, i, j);
            T* feat = out.data() + (i * w + j) * nl * side;
            for (int64_t k = 0; k < nl; ++k) {
                const Tensor<T>& lvl = pyr.levels[static_cast<size_t>(k)];
                const int64_t lw = lvl.extent(2);
                const T* row = lvl.data() + (i * w + j) * lw;
                const T cx = (T(j) - d) / T(int64_t(1) << k);
                for (int64_t dx = -r; dx <= r; ++dx)
                    *feat++ = linear_sample_1d(row, lw, cx + T(dx));
            }
        }
    }
    return out;
}

// [H,W,C] -> [C,H,W]
template <typename T>
Tensor<T> hwc_to_chw(const Tensor<T>& x) {
    const int64_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
    Tensor<T> out({c, h, w});
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
            for (int64_t ch = 0; ch < c; ++ch) out(ch, i, j) = x(i, j, ch);
    return out;
}

template <typename T>
struct ConvGruWeights {
    Tensor<T> wz, bz;  // [Dh, Dh+Dx, k, k]
    Tensor<T> wr, br;
    Tensor<T> wh, bh;
};

// Weights of the recurrent update operator.  The coarse-scale GRUs and fuse
// convs are present only for the multi-resolution disparity configuration.
template <typename T>
struct UpdateWeights {
    Tensor<T> init_w, init_b;      // context -> initial hidden (tanh)
    Tensor<T> motion1_w, motion1_b;  // 1x1 over [lookup, est]
    Tensor<T> motion2_w, motion2_b;  // 3x3
    ConvGruWeights<T> gru;           // base scale
    Tensor<T> delta1_w, delta1_b, delta2_w, delta2_b;
    Tensor<T> mask1_w, mask1_b, mask2_w, mask2_b;
    bool multires = false;
    ConvGruWeights<T> gru16, gru32;
    Tensor<T> fuse16_w, fuse16_b;  // up(h32) -> x channels
    Tensor<T> fuse8_w, fuse8_b;    // up(h16) -> x channels
};

template <typename T>
struct GruState {
    std::vector<Tensor<T>> hidden;  // [Dh,h,w] per active resolution, finest first
};

// z = sig(Wz[h,x]), r = sig(Wr[h,x]), htilde = tanh(Wh[r*h, x]),
// h' = (1-z) h + z htilde.
template <typename T>
Tensor<T> conv_gru_cell(const Tensor<T>& hidden, const Tensor<T>& x, const ConvGruWeights<T>& w) {
    if (hidden.extent(1) != x.extent(1) || hidden.extent(2) != x.extent(2))
        throw DimensionError("conv_gru_cell: hidden and input misaligned: " +
                             shape_str(hidden.shape()) + " vs " + shape_str(x.shape()));
    const int64_t pad = w.wz.extent(2) / 2;
    Tensor<T> hx = concat(hidden, x, 0);
    Tensor<T> z = sigmoid(conv2d(hx, w.wz, w.bz, 1, pad));
    Tensor<T> r = sigmoid(conv2d(hx, w.wr, w.br, 1, pad));
    Tensor<T> rh = mul(r, hidden);
    Tensor<T> ht = tanh(conv2d(concat(rh, x, 0), w.wh, w.bh, 1, pad));
    Tensor<T> out(hidden.shape());
    const int64_t n = out.size();
    for (int64_t i = 0; i < n; ++i) {
        const T zt = z.at_flat(i);
        out.at_flat(i) = (T(1) - zt) * hidden.at_flat(i) + zt * ht.at_flat(i);
    }
    return out;
}

// Two conv+SiLU layers over [lookup, est], then concat with context.
template <typename T>
Tensor<T> compose_motion_input(const Tensor<T>& lookup_hwc, const Tensor<T>& est_values,
                               const Tensor<T>& context, const UpdateWeights<T>& w) {
    Tensor<T> lk = hwc_to_chw(lookup_hwc);
    Tensor<T> m = silu(conv2d(concat(lk, est_values, 0), w.motion1_w, w.motion1_b, 1, 0));
    m = silu(conv2d(m, w.motion2_w, w.motion2_b, 1, w.motion2_w.extent(2) / 2));
    return concat(m, context, 0);
}

template <typename T>
struct UpdateResult {
    Tensor<T> delta;        // [c,h,w]
    Tensor<T> mask_logits;  // [9*s^2,h,w]
};

template <typename T>
UpdateResult<T> apply_update_heads(const Tensor<T>& hidden, const UpdateWeights<T>& w) {
    Tensor<T> d = silu(conv2d(hidden, w.delta1_w, w.delta1_b, 1, w.delta1_w.extent(2) / 2));
    Tensor<T> delta = conv2d(d, w.delta2_w, w.delta2_b, 1, w.delta2_w.extent(2) / 2);
    Tensor<T> m = silu(conv2d(hidden, w.mask1_w, w.mask1_b, 1, w.mask1_w.extent(2) / 2));
    Tensor<T> mask = conv2d(m, w.mask2_w, w.mask2_b, 1, 0);
    return {std::move(delta), std::move(mask)};
}

// One recurrent refinement step at the finest resolution.  `coupling`, when
// present, is added to the composed GRU input (coarse-to-fine path).
template <typename T>
UpdateResult<T> gru_update(GruState<T>& state, const Tensor<T>& lookup_hwc,
                           const Tensor<T>& context, const FieldEstimate<T>& est,
                           const UpdateWeights<T>& w, const Tensor<T>* coupling = nullptr) {
    Tensor<T> x = compose_motion_input(lookup_hwc, est.values, context, w);
    if (coupling) x = add(x, *coupling);
    state.hidden[0] = conv_gru_cell(state.hidden[0], x, w.gru);
    return apply_update_heads(state.hidden[0], w);
}

// Per fine subpixel, softmax over 9 logits weighs the 3x3 coarse
// neighborhood (border-clamped).  scale_values multiplies by s so pixel
// units survive the resolution change.
template <typename T>
Tensor<T> convex_upsample(const Tensor<T>& field, const Tensor<T>& mask_logits, int64_t s,
                          bool scale_values) {
    if (field.rank() != 3 || mask_logits.rank() != 3)
        throw DimensionError("convex_upsample expects [c,h,w] field and [9s^2,h,w] logits");
    const int64_t c = field.extent(0), h = field.extent(1), w = field.extent(2);
    if (mask_logits.extent(0) != 9 * s * s || mask_logits.extent(1) != h ||
        mask_logits.extent(2) != w)
        throw DimensionError("convex_upsample mask channels must be 9*s^2, got " +
                             shape_str(mask_logits.shape()) + " for s = " + std::to_string(s));
    Tensor<T> out({c, s * h, s * w});
    const int64_t hw = h * w;
#pragma omp parallel for schedule(static) if (omp_enabled()) collapse(2)
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            for (int64_t dy = 0; dy < s; ++dy)
                for (int64_t dx = 0; dx < s; ++dx) {
                    const int64_t group = dy * s + dx;
                    T wts[9];
                    T mx = mask_logits.data()[(group * 9) * hw + i * w + j];
                    for (int64_t t = 1; t < 9; ++t)
                        mx = std::max(mx, mask_logits.data()[(group * 9 + t) * hw + i * w + j]);
                    T sum = 0;
                    for (int64_t t = 0; t < 9; ++t) {
                        wts[t] = std::exp(mask_logits.data()[(group * 9 + t) * hw + i * w + j] - mx);
                        sum += wts[t];
                    }
                    for (int64_t t = 0; t < 9; ++t) wts[t] /= sum;
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const T* plane = field.data() + ch * hw;
                        T acc = 0;
                        for (int64_t t = 0; t < 9; ++t) {
                            const int64_t ny = std::clamp<int64_t>(i + t / 3 - 1, 0, h - 1);
                            const int64_t nx = std::clamp<int64_t>(j + t % 3 - 1, 0, w - 1);
                            acc += wts[t] * plane[ny * w + nx];
                        }
                        if (scale_values) acc *= T(s);
                        out(ch, i * s + dy, j * s + dx) = acc;
                    }
                }
        }
    }
    return out;
}

template <typename T>
Tensor<T> init_hidden(const Tensor<T>& context, const UpdateWeights<T>& w) {
    return tanh(conv2d(context, w.init_w, w.init_b, 1, w.init_w.extent(2) / 2));
}

// Iterative flow refinement from a zero initial estimate; every iterate is
// convex-upsampled by `s` to full resolution for output.
template <typename T>
std::vector<FieldEstimate<T>> iterate_flow(const CorrelationPyramid<T>& pyr,
                                           const Tensor<T>& context, int64_t iters, int64_t r,
                                           const UpdateWeights<T>& w, int64_t s) {
    if (iters < 1) throw DimensionError("iterate_flow requires iters >= 1");
    const int64_t h = pyr.levels.front().extent(0), wd = pyr.levels.front().extent(1);
    GruState<T> state;
    state.hidden.push_back(init_hidden(context, w));
    FieldEstimate<T> est{FieldKind::flow, Tensor<T>({2, h, wd}), s};
    std::vector<FieldEstimate<T>> outputs;
    outputs.reserve(static_cast<size_t>(iters));
    for (int64_t t = 0; t < iters; ++t) {
        Tensor<T> lk = lookup_flow(pyr, est, r);
        UpdateResult<T> up = gru_update(state, lk, context, est, w);
        est.values = add(est.values, up.delta);
        outputs.push_back(
            {FieldKind::flow, convex_upsample(est.values, up.mask_logits, s, true), 1});
    }
    return outputs;
}

template <typename T>
Tensor<T> clamp_nonneg(const Tensor<T>& x) {
    return map_elementwise(x, [](T v) { return std::max(v, T(0)); });
}

// Multi-resolution disparity refinement.  Hidden states live at the base
// scale and its /2 and /4 poolings; each iteration updates coarse to fine,
// feeding the upsampled coarse hidden through a fuse conv into the next
// finer GRU input.  Deltas, lookups and heads stay at the base scale.  Only
// the final output is clamped to be non-negative.
template <typename T>
std::vector<FieldEstimate<T>> iterate_disparity_multires(const CorrelationPyramid<T>& pyr,
                                                         const Tensor<T>& context, int64_t iters,
                                                         int64_t r, const UpdateWeights<T>& w,
                                                         int64_t s) {
    if (iters < 1) throw DimensionError("iterate_disparity_multires requires iters >= 1");
    const int64_t h = pyr.levels.front().extent(0), wd = pyr.levels.front().extent(1);
    if (w.multires && (h % 4 != 0 || wd % 4 != 0))
        throw DimensionError("multi-resolution updates need base extents divisible by 4, got " +
                             std::to_string(h) + "x" + std::to_string(wd));
    GruState<T> state;
    state.hidden.push_back(init_hidden(context, w));
    if (w.multires) {
        state.hidden.push_back(avg_pool_last(state.hidden[0], 2));
        state.hidden.push_back(avg_pool_last(state.hidden[1], 2));
    }
    FieldEstimate<T> est{FieldKind::disparity, Tensor<T>({1, h, wd}), s};
    std::vector<FieldEstimate<T>> outputs;
    outputs.reserve(static_cast<size_t>(iters));
    for (int64_t t = 0; t < iters; ++t) {
        Tensor<T> lk = lookup_disparity(pyr, est, r);
        UpdateResult<T> up;
        if (w.multires) {
            Tensor<T> x8 = compose_motion_input(lk, est.values, context, w);
            Tensor<T> x16 = avg_pool_last(x8, 2);
            Tensor<T> x32 = avg_pool_last(x16, 2);
            state.hidden[2] = conv_gru_cell(state.hidden[2], x32, w.gru32);
            Tensor<T> c16 = conv2d(bilinear_upsample2x(state.hidden[2]), w.fuse16_w, w.fuse16_b,
                                   1, w.fuse16_w.extent(2) / 2);
            state.hidden[1] = conv_gru_cell(state.hidden[1], add(x16, c16), w.gru16);
            Tensor<T> c8 = conv2d(bilinear_upsample2x(state.hidden[1]), w.fuse8_w, w.fuse8_b, 1,
                                  w.fuse8_w.extent(2) / 2);
            up = gru_update(state, lk, context, est, w, &c8);
        } else {
            up = gru_update(state, lk, context, est, w);
        }
        est.values = add(est.values, up.delta);
        outputs.push_back(
            {FieldKind::disparity, convex_upsample(est.values, up.mask_logits, s, true), 1});
    }
    outputs.back().values = clamp_nonneg(outputs.back().values);
    return outputs;
}

}  // namespace ncssd
