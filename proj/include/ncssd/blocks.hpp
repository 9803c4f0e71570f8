#pragma once

#include <cmath>
#include <vector>

#include "ncssd/ops.hpp"
#include "ncssd/ssd.hpp"
#include "ncssd/tensor.hpp"

// Pairwise fusion block and context encoder: turns an image pair into
// matched feature maps plus context features for the matching stage.

namespace ncssd {

struct BlockConfig {
    int64_t patch_size = 4;   // spatial downsample of the patch embedding (4 or 8)
    int64_t embed_dim = 128;  // D
    int64_t state_dim = 16;   // N
    int64_t num_heads = 4;
    int64_t num_blocks = 4;
    int64_t conv_kernel = 3;  // depthwise conv size

    void validate() const {
        if (patch_size != 4 && patch_size != 8)
            throw ConfigError("patch_size must be 4 or 8, got " + std::to_string(patch_size));
        if (embed_dim < 1 || state_dim < 1 || num_heads < 1 || num_blocks < 1 || conv_kernel < 1)
            throw ConfigError("block config extents must be >= 1");
        if (embed_dim % num_heads != 0)
            throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                              " not divisible by num_heads " + std::to_string(num_heads));
        if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
    }
};

template <typename T>
struct ImagePair {
    Tensor<T> left;   // [3,H,W], values in [-1,1]
    Tensor<T> right;  // same shape (stereo pair, or frames t / t+1)
};

template <typename T>
struct PairFeatures {
    Tensor<T> f_left;   // [D, H/p, W/p]
    Tensor<T> f_right;  // [D, H/p, W/p]
    Tensor<T> context;  // [Dc, H/p, W/p]
};

inline constexpr double kAMin = 1e-4;
inline constexpr double kAMax = 1e4;

// A = clamp(softplus(raw), 1e-4, 1e4); keeps 1/A and its gradient bounded.
template <typename T>
Tensor<T> a_from_raw(const Tensor<T>& raw) {
    return map_elementwise(raw, [](T v) {
        return std::clamp(softplus_scalar(v), T(kAMin), T(kAMax));
    });
}

// [L,D] tokens (row-major grid order) -> [D,gh,gw]
template <typename T>
Tensor<T> tokens_to_grid(const Tensor<T>& tokens, int64_t gh, int64_t gw) {
    const int64_t l = tokens.extent(0), d = tokens.extent(1);
    if (l != gh * gw)
        throw DimensionError("token count " + std::to_string(l) + " does not match grid " +
                             std::to_string(gh) + "x" + std::to_string(gw));
    Tensor<T> out({d, gh, gw});
    for (int64_t t = 0; t < l; ++t)
        for (int64_t c = 0; c < d; ++c) out.data()[c * l + t] = tokens(t, c);
    return out;
}

template <typename T>
Tensor<T> grid_to_tokens(const Tensor<T>& grid) {
    const int64_t d = grid.extent(0), l = grid.extent(1) * grid.extent(2);
    Tensor<T> out({l, d});
    for (int64_t t = 0; t < l; ++t)
        for (int64_t c = 0; c < d; ++c) out(t, c) = grid.data()[c * l + t];
    return out;
}

// Normalizes across channels at every spatial position of [C,H,W].
template <typename T>
Tensor<T> channel_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const int64_t c = x.extent(0), hw = x.extent(1) * x.extent(2);
    if (gamma.extent(0) != c || beta.extent(0) != c)
        throw DimensionError("channel_norm affine params must match channel count");
    Tensor<T> out(x.shape());
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t p = 0; p < hw; ++p) {
        T mean = 0;
        for (int64_t ch = 0; ch < c; ++ch) mean += x.data()[ch * hw + p];
        mean /= T(c);
        T var = 0;
        for (int64_t ch = 0; ch < c; ++ch) {
            const T dev = x.data()[ch * hw + p] - mean;
            var += dev * dev;
        }
        var /= T(c);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int64_t ch = 0; ch < c; ++ch)
            out.data()[ch * hw + p] =
                (x.data()[ch * hw + p] - mean) * inv * gamma.data()[ch] + beta.data()[ch];
    }
    return out;
}

// Non-overlapping p x p patches, linearly projected to D, row-major order.
// weight [D, 3*p*p] over (channel, dy, dx)-flattened patches, bias [D].
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& img, int64_t p, const Tensor<T>& weight,
                      const Tensor<T>& bias) {
    if (img.rank() != 3) throw DimensionError("patch_embed expects [C,H,W]");
    const int64_t c = img.extent(0), h = img.extent(1), w = img.extent(2);
    if (h % p != 0 || w % p != 0)
        throw DimensionError("image extents " + std::to_string(h) + "x" + std::to_string(w) +
                             " not divisible by patch size " + std::to_string(p));
    const int64_t gh = h / p, gw = w / p, l = gh * gw;
    const int64_t pvec = c * p * p;
    if (weight.extent(1) != pvec)
        throw DimensionError("patch_embed weight expects " + std::to_string(pvec) + " inputs");
    Tensor<T> patches({l, pvec});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t t = 0; t < l; ++t) {
        const int64_t gy = t / gw, gx = t % gw;
        T* row = patches.data() + t * pvec;
        int64_t k = 0;
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t dy = 0; dy < p; ++dy)
                for (int64_t dx = 0; dx < p; ++dx)
                    row[k++] = img(ch, gy * p + dy, gx * p + dx);
    }
    return linear(patches, weight, bias);
}

template <typename T>
struct BlockWeights {
    Tensor<T> norm_in_g, norm_in_b;
    Tensor<T> proj_feat_w, proj_feat_b;  // [D,D]
    Tensor<T> proj_a_w, proj_a_b;        // [Hd,D]
    Tensor<T> proj_gate_w, proj_gate_b;  // [D,D]
    Tensor<T> dwconv_w, dwconv_b;        // [D,k,k]
    Tensor<T> proj_b_w, proj_b_b;        // [Hd*N,D]
    Tensor<T> proj_c_w, proj_c_b;        // [Hd*N,D]
    Tensor<T> norm_y_g, norm_y_b;
    Tensor<T> proj_out_w, proj_out_b;    // [D,D]
};

namespace detail {

template <typename T>
std::vector<HeadParams<T>> pack_heads(const Tensor<T>& a_raw, const Tensor<T>& b,
                                      const Tensor<T>& c, int64_t heads) {
    const int64_t l = a_raw.extent(0);
    const int64_t n = b.extent(1) / heads;
    Tensor<T> a = a_from_raw(a_raw);
    std::vector<HeadParams<T>> out;
    out.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
        HeadParams<T> hp{Tensor<T>({l}), Tensor<T>({l, n}), Tensor<T>({l, n})};
        for (int64_t t = 0; t < l; ++t) {
            hp.A.data()[t] = a(t, h);
            std::copy_n(b.data() + t * heads * n + h * n, n, hp.B.data() + t * n);
            std::copy_n(c.data() + t * heads * n + h * n, n, hp.C.data() + t * n);
        }
        out.push_back(std::move(hp));
    }
    return out;
}

// depthwise conv + SiLU on the token grid
template <typename T>
Tensor<T> conv_activate(const Tensor<T>& tokens, int64_t gh, int64_t gw,
                        const BlockWeights<T>& w) {
    Tensor<T> grid = tokens_to_grid(tokens, gh, gw);
    return grid_to_tokens(silu(depthwise_conv2d(grid, w.dwconv_w, w.dwconv_b)));
}

}  // namespace detail

// One fusion block.  tokens_pair [2,L,D] (left stream then right stream),
// token grid gh x gw.  Pipeline: layer norm; linears for per-image A / patch
// features and for the gating projections; depthwise conv + SiLU; per-image
// multi-head NC-SSD + layer norm; swapped multiplicative gating across the
// pair; a second NC-SSD pass on the fused features through the same linears;
// output linear; residual.
template <typename T>
Tensor<T> densepercept_block(const Tensor<T>& tokens_pair, int64_t gh, int64_t gw,
                             const BlockConfig& cfg, const BlockWeights<T>& w) {
    if (tokens_pair.rank() != 3 || tokens_pair.extent(0) != 2)
        throw DimensionError("densepercept_block expects [2,L,D]");
    const int64_t l = tokens_pair.extent(1), d = tokens_pair.extent(2);
    const int64_t heads = cfg.num_heads;
    const T eps = T(1e-6);

    Tensor<T> flat = tokens_pair.reshaped({2 * l, d});
    Tensor<T> t = layer_norm(flat, w.norm_in_g, w.norm_in_b, eps);
    Tensor<T> feat = linear(t, w.proj_feat_w, w.proj_feat_b);
    Tensor<T> a_raw = linear(t, w.proj_a_w, w.proj_a_b);
    Tensor<T> zgate = linear(t, w.proj_gate_w, w.proj_gate_b);

    auto slice_rows = [&](const Tensor<T>& src, int64_t img, int64_t cols) {
        Tensor<T> out({l, cols});
        std::copy_n(src.data() + img * l * cols, l * cols, out.data());
        return out;
    };

    std::vector<Tensor<T>> y_imgs;
    std::vector<Tensor<T>> x_imgs;
    for (int64_t img = 0; img < 2; ++img) {
        Tensor<T> u = detail::conv_activate(slice_rows(feat, img, d), gh, gw, w);
        Tensor<T> b = linear(u, w.proj_b_w, w.proj_b_b);
        Tensor<T> c = linear(u, w.proj_c_w, w.proj_c_b);
        auto headp = detail::pack_heads(slice_rows(a_raw, img, heads), b, c, heads);
        Tensor<T> y = multihead_ncssd(u, headp, false);
        y_imgs.push_back(layer_norm(y, w.norm_y_g, w.norm_y_b, eps));
        x_imgs.push_back(std::move(u));
    }

    // swapped multiplicative gating across the pair
    Tensor<T> g_left = mul(y_imgs[0], silu(slice_rows(zgate, 1, d)));
    Tensor<T> g_right = mul(y_imgs[1], silu(slice_rows(zgate, 0, d)));

    Tensor<T> out({2, l, d});
    for (int64_t img = 0; img < 2; ++img) {
        const Tensor<T>& g = img == 0 ? g_left : g_right;
        Tensor<T> a2 = linear(g, w.proj_a_w, w.proj_a_b);
        Tensor<T> b2 = linear(g, w.proj_b_w, w.proj_b_b);
        Tensor<T> c2 = linear(g, w.proj_c_w, w.proj_c_b);
        Tensor<T> y2 = multihead_ncssd(g, detail::pack_heads(a2, b2, c2, heads), false);
        Tensor<T> o = linear(y2, w.proj_out_w, w.proj_out_b);
        for (int64_t i = 0; i < l; ++i)
            for (int64_t c2i = 0; c2i < d; ++c2i)
                out(img, i, c2i) = tokens_pair(img, i, c2i) + o(i, c2i);
    }
    return out;
}

template <typename T>
struct ResBlockWeights {
    Tensor<T> conv1_w, conv1_b;
    Tensor<T> norm1_g, norm1_b;
    Tensor<T> conv2_w, conv2_b;
    Tensor<T> norm2_g, norm2_b;
    Tensor<T> skip_w, skip_b;  // 1x1 projection; empty when the skip is identity
    int64_t stride = 1;

    bool has_skip() const { return !skip_w.empty(); }
};

template <typename T>
struct ContextWeights {
    Tensor<T> stem_w, stem_b;
    Tensor<T> stem_norm_g, stem_norm_b;
    std::vector<ResBlockWeights<T>> res;
    Tensor<T> head_w, head_b;
};

// conv-norm-SiLU twice plus skip; stride lives on the first conv.
template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResBlockWeights<T>& w) {
    const T eps = T(1e-6);
    Tensor<T> p = silu(channel_norm(conv2d(x, w.conv1_w, w.conv1_b, w.stride, 1),
                                    w.norm1_g, w.norm1_b, eps));
    p = silu(channel_norm(conv2d(p, w.conv2_w, w.conv2_b, 1, 1), w.norm2_g, w.norm2_b, eps));
    Tensor<T> s = w.has_skip() ? conv2d(x, w.skip_w, w.skip_b, w.stride, 0) : x;
    return add(p, s);
}

// Six residual blocks behind a stride-2 stem; stride-2 stages bring the map
// to 1/p resolution with the configured feature width.
template <typename T>
Tensor<T> context_encode(const Tensor<T>& img, const ContextWeights<T>& w) {
    const T eps = T(1e-6);
    Tensor<T> x = silu(channel_norm(conv2d(img, w.stem_w, w.stem_b, 2, 1), w.stem_norm_g,
                                    w.stem_norm_b, eps));
    for (const auto& rb : w.res) x = residual_block(x, rb);
    return conv2d(x, w.head_w, w.head_b, 1, 0);
}

}  // namespace ncssd
