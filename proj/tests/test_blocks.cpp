#include "doctest.h"

#include <cmath>

#include "ncssd/blocks.hpp"
#include "ncssd/pipeline.hpp"
#include "ncssd/testkit.hpp"

using namespace ncssd;
using testkit::max_abs;
using testkit::max_abs_diff;
using testkit::uniform_tensor;

namespace {

BlockConfig tiny_cfg() {
    BlockConfig cfg;
    cfg.patch_size = 4;
    cfg.embed_dim = 4;
    cfg.state_dim = 2;
    cfg.num_heads = 2;
    cfg.num_blocks = 1;
    cfg.conv_kernel = 3;
    return cfg;
}

BlockWeights<double> tiny_block_weights(uint64_t seed) {
    Xoshiro256pp rng(seed);
    const int64_t d = 4, hd = 2, n = 2, k = 3;
    BlockWeights<double> w;
    w.norm_in_g = Tensor<double>::full({d}, 1.0);
    w.norm_in_b = uniform_tensor<double>(rng, {d}, -0.1, 0.1);
    w.proj_feat_w = uniform_tensor<double>(rng, {d, d}, -0.5, 0.5);
    w.proj_feat_b = uniform_tensor<double>(rng, {d}, -0.1, 0.1);
    w.proj_a_w = uniform_tensor<double>(rng, {hd, d}, -0.5, 0.5);
    w.proj_a_b = Tensor<double>::full({hd}, kABiasInit);
    w.proj_gate_w = uniform_tensor<double>(rng, {d, d}, -0.5, 0.5);
    w.proj_gate_b = uniform_tensor<double>(rng, {d}, -0.1, 0.1);
    w.dwconv_w = uniform_tensor<double>(rng, {d, k, k}, -0.5, 0.5);
    w.dwconv_b = uniform_tensor<double>(rng, {d}, -0.1, 0.1);
    w.proj_b_w = uniform_tensor<double>(rng, {hd * n, d}, -0.5, 0.5);
    w.proj_b_b = uniform_tensor<double>(rng, {hd * n}, -0.1, 0.1);
    w.proj_c_w = uniform_tensor<double>(rng, {hd * n, d}, -0.5, 0.5);
    w.proj_c_b = uniform_tensor<double>(rng, {hd * n}, -0.1, 0.1);
    w.norm_y_g = Tensor<double>::full({d}, 1.0);
    w.norm_y_b = uniform_tensor<double>(rng, {d}, -0.1, 0.1);
    w.proj_out_w = uniform_tensor<double>(rng, {d, d}, -0.5, 0.5);
    w.proj_out_b = uniform_tensor<double>(rng, {d}, -0.1, 0.1);
    return w;
}

}  // namespace

TEST_CASE("patch_embed p=1 is a per-pixel projection") {
    Xoshiro256pp rng(50);
    Tensor<double> img = uniform_tensor<double>(rng, {3, 2, 3});
    Tensor<double> w = uniform_tensor<double>(rng, {5, 3});
    Tensor<double> b = uniform_tensor<double>(rng, {5});
    Tensor<double> tokens = patch_embed(img, 1, w, b);
    CHECK(tokens.shape() == std::vector<int64_t>{6, 5});
    for (int64_t y = 0; y < 2; ++y)
        for (int64_t x = 0; x < 3; ++x)
            for (int64_t o = 0; o < 5; ++o) {
                double want = b(o);
                for (int64_t c = 0; c < 3; ++c) want += w(o, c) * img(c, y, x);
                CHECK(tokens(y * 3 + x, o) == doctest::Approx(want).epsilon(1e-14));
            }
}

TEST_CASE("patch_embed zero projection leaves only the bias") {
    Tensor<double> img = Tensor<double>::full({3, 4, 4}, 0.37);
    Tensor<double> w({2, 48});
    Tensor<double> b({2}, {1.5, -2.0});
    Tensor<double> tokens = patch_embed(img, 4, w, b);
    CHECK(tokens.shape() == std::vector<int64_t>{1, 2});
    CHECK(tokens(0, 0) == 1.5);
    CHECK(tokens(0, 1) == -2.0);
}

TEST_CASE("patch_embed token order is row-major over the grid") {
    // 8x8 image, p=4: four tokens in order (0,0),(0,1),(1,0),(1,1)
    Tensor<double> img({1, 8, 8});
    for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 8; ++x) img(0, y, x) = double((y / 4) * 2 + (x / 4));
    Tensor<double> w({1, 16});
    for (int64_t i = 0; i < 16; ++i) w(0, i) = 1.0 / 16.0;  // patch mean
    Tensor<double> b({1});
    Tensor<double> tokens = patch_embed(img, 4, w, b);
    CHECK(tokens.shape() == std::vector<int64_t>{4, 1});
    for (int64_t t = 0; t < 4; ++t) CHECK(tokens(t, 0) == doctest::Approx(double(t)));
}

TEST_CASE("patch_embed rejects indivisible extents") {
    Tensor<double> img({3, 6, 8});
    Tensor<double> w({4, 48});
    Tensor<double> b({4});
    CHECK_THROWS_AS(patch_embed(img, 4, w, b), DimensionError);
}

TEST_CASE("densepercept_block: identical streams stay identical") {
    Xoshiro256pp rng(51);
    BlockConfig cfg = tiny_cfg();
    BlockWeights<double> w = tiny_block_weights(7);
    const int64_t l = 6, d = 4;
    Tensor<double> one = uniform_tensor<double>(rng, {l, d});
    Tensor<double> pair({2, l, d});
    std::copy_n(one.data(), l * d, pair.data());
    std::copy_n(one.data(), l * d, pair.data() + l * d);
    Tensor<double> out = densepercept_block(pair, 2, 3, cfg, w);
    for (int64_t i = 0; i < l; ++i)
        for (int64_t c = 0; c < d; ++c) CHECK(out(0, i, c) == out(1, i, c));
}

TEST_CASE("densepercept_block: zero gate annihilates everything but the output bias") {
    Xoshiro256pp rng(52);
    BlockConfig cfg = tiny_cfg();
    BlockWeights<double> w = tiny_block_weights(8);
    w.proj_gate_w = Tensor<double>({4, 4});
    w.proj_gate_b = Tensor<double>({4});
    const int64_t l = 6, d = 4;
    Tensor<double> pair = uniform_tensor<double>(rng, {2, l, d});
    Tensor<double> out = densepercept_block(pair, 2, 3, cfg, w);
    for (int64_t img = 0; img < 2; ++img)
        for (int64_t i = 0; i < l; ++i)
            for (int64_t c = 0; c < d; ++c)
                CHECK(out(img, i, c) ==
                      doctest::Approx(pair(img, i, c) + w.proj_out_b(c)).epsilon(1e-12));
}

TEST_CASE("densepercept_block: L=1 hand-composed chain") {
    Xoshiro256pp rng(53);
    BlockConfig cfg = tiny_cfg();
    BlockWeights<double> w = tiny_block_weights(9);
    const int64_t d = 4, hd = 2, n = 2, dh = 2;
    Tensor<double> pair = uniform_tensor<double>(rng, {2, 1, d});
    Tensor<double> got = densepercept_block(pair, 1, 1, cfg, w);

    const double eps = 1e-6;
    auto ln = [&](const std::vector<double>& x, const Tensor<double>& g,
                  const Tensor<double>& b) {
        double mean = 0, var = 0;
        for (double v : x) mean += v;
        mean /= double(x.size());
        for (double v : x) var += (v - mean) * (v - mean);
        var /= double(x.size());
        std::vector<double> out(x.size());
        for (size_t i = 0; i < x.size(); ++i)
            out[i] = (x[i] - mean) / std::sqrt(var + eps) * g(int64_t(i)) + b(int64_t(i));
        return out;
    };
    auto matvec = [&](const Tensor<double>& wm, const Tensor<double>& bv,
                      const std::vector<double>& x) {
        std::vector<double> out(static_cast<size_t>(wm.extent(0)));
        for (int64_t o = 0; o < wm.extent(0); ++o) {
            double acc = bv(o);
            for (int64_t i = 0; i < wm.extent(1); ++i) acc += wm(o, i) * x[size_t(i)];
            out[size_t(o)] = acc;
        }
        return out;
    };
    auto silu_v = [](std::vector<double> x) {
        for (double& v : x) v = v / (1.0 + std::exp(-v));
        return x;
    };
    auto ncssd_l1 = [&](const std::vector<double>& x, const std::vector<double>& a_raw,
                        const std::vector<double>& b, const std::vector<double>& c) {
        // single token, bias off: per head y = (1/A) (C . B) x
        std::vector<double> y(static_cast<size_t>(d));
        for (int64_t h = 0; h < hd; ++h) {
            const double a =
                std::clamp(std::log1p(std::exp(a_raw[size_t(h)])), kAMin, kAMax);
            double cb = 0;
            for (int64_t k = 0; k < n; ++k) cb += c[size_t(h * n + k)] * b[size_t(h * n + k)];
            for (int64_t k = 0; k < dh; ++k)
                y[size_t(h * dh + k)] = (1.0 / a) * cb * x[size_t(h * dh + k)];
        }
        return y;
    };

    // step 1-4 per image
    std::vector<std::vector<double>> y_img(2), z_img(2);
    for (int64_t img = 0; img < 2; ++img) {
        std::vector<double> in(static_cast<size_t>(d));
        for (int64_t c = 0; c < d; ++c) in[size_t(c)] = pair(img, 0, c);
        auto t = ln(in, w.norm_in_g, w.norm_in_b);
        auto feat = matvec(w.proj_feat_w, w.proj_feat_b, t);
        auto a_raw = matvec(w.proj_a_w, w.proj_a_b, t);
        z_img[size_t(img)] = matvec(w.proj_gate_w, w.proj_gate_b, t);
        // depthwise conv on a 1x1 grid: center tap plus bias
        std::vector<double> u(static_cast<size_t>(d));
        for (int64_t c = 0; c < d; ++c) u[size_t(c)] = w.dwconv_w(c, 1, 1) * feat[size_t(c)] +
                                                       w.dwconv_b(c);
        u = silu_v(u);
        auto b = matvec(w.proj_b_w, w.proj_b_b, u);
        auto c = matvec(w.proj_c_w, w.proj_c_b, u);
        auto y = ncssd_l1(u, a_raw, b, c);
        y_img[size_t(img)] = ln(y, w.norm_y_g, w.norm_y_b);
    }
    // step 5-8
    for (int64_t img = 0; img < 2; ++img) {
        auto zo = silu_v(z_img[size_t(1 - img)]);
        std::vector<double> g(static_cast<size_t>(d));
        for (int64_t c = 0; c < d; ++c) g[size_t(c)] = y_img[size_t(img)][size_t(c)] * zo[size_t(c)];
        auto a2 = matvec(w.proj_a_w, w.proj_a_b, g);
        auto b2 = matvec(w.proj_b_w, w.proj_b_b, g);
        auto c2 = matvec(w.proj_c_w, w.proj_c_b, g);
        auto y2 = ncssd_l1(g, a2, b2, c2);
        auto o = matvec(w.proj_out_w, w.proj_out_b, y2);
        for (int64_t c = 0; c < d; ++c)
            CHECK(got(img, 0, c) ==
                  doctest::Approx(pair(img, 0, c) + o[size_t(c)]).epsilon(1e-12));
    }
}

TEST_CASE("densepercept_block commutes with joint spatial flip on interior tokens") {
    Xoshiro256pp rng(54);
    BlockConfig cfg = tiny_cfg();
    BlockWeights<double> w = tiny_block_weights(10);
    // point-symmetric depthwise kernel, so the conv itself commutes with the flip
    for (int64_t c = 0; c < 4; ++c)
        for (int64_t i = 0; i < 9; ++i) {
            const int64_t y = i / 3, x = i % 3;
            const double sym = 0.5 * (w.dwconv_w(c, y, x) + w.dwconv_w(c, 2 - y, 2 - x));
            w.dwconv_w(c, y, x) = sym;
            w.dwconv_w(c, 2 - y, 2 - x) = sym;
        }
    const int64_t gh = 5, gw = 6, l = gh * gw, d = 4;
    Tensor<double> pair = uniform_tensor<double>(rng, {2, l, d});
    Tensor<double> flipped({2, l, d});
    for (int64_t img = 0; img < 2; ++img)
        for (int64_t t = 0; t < l; ++t) {
            const int64_t y = t / gw, x = t % gw;
            const int64_t tf = (gh - 1 - y) * gw + (gw - 1 - x);
            for (int64_t c = 0; c < d; ++c) flipped(img, tf, c) = pair(img, t, c);
        }
    Tensor<double> out = densepercept_block(pair, gh, gw, cfg, w);
    Tensor<double> out_flipped = densepercept_block(flipped, gh, gw, cfg, w);
    for (int64_t img = 0; img < 2; ++img)
        for (int64_t y = 1; y < gh - 1; ++y)
            for (int64_t x = 1; x < gw - 1; ++x) {
                const int64_t t = y * gw + x;
                const int64_t tf = (gh - 1 - y) * gw + (gw - 1 - x);
                for (int64_t c = 0; c < d; ++c)
                    CHECK(out(img, t, c) ==
                          doctest::Approx(out_flipped(img, tf, c)).epsilon(1e-6));
            }
}

TEST_CASE("densepercept_block produces no NaN or Inf over random trials") {
    BlockConfig cfg = tiny_cfg();
    for (int trial = 0; trial < 100; ++trial) {
        Xoshiro256pp rng(100 + uint64_t(trial));
        BlockWeights<double> w = tiny_block_weights(200 + uint64_t(trial));
        // weights at init scale
        for (Tensor<double>* t : {&w.proj_feat_w, &w.proj_a_w, &w.proj_gate_w, &w.dwconv_w,
                                  &w.proj_b_w, &w.proj_c_w, &w.proj_out_w})
            for (int64_t i = 0; i < t->size(); ++i) t->at_flat(i) = rng.normal(0.02);
        Tensor<double> pair = uniform_tensor<double>(rng, {2, 12, 4});
        Tensor<double> out = densepercept_block(pair, 3, 4, cfg, w);
        bool finite = true;
        for (int64_t i = 0; i < out.size(); ++i) finite &= std::isfinite(out.at_flat(i));
        CHECK(finite);
    }
}

TEST_CASE("a_from_raw clamps into the stable band") {
    Tensor<double> raw({4}, {-1e6, 0.0, kABiasInit, 1e6});
    Tensor<double> a = a_from_raw(raw);
    CHECK(a(0) == kAMin);
    CHECK(a(1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(a(2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a(3) == kAMax);
    for (int64_t i = 0; i < 4; ++i) {
        CHECK(a(i) >= kAMin);
        CHECK(a(i) <= kAMax);
    }
}

TEST_CASE("residual_block with zero convs passes the input through") {
    Xoshiro256pp rng(55);
    ResBlockWeights<double> rb;
    rb.conv1_w = Tensor<double>({3, 3, 3, 3});
    rb.conv1_b = Tensor<double>({3});
    rb.norm1_g = Tensor<double>::full({3}, 1.0);
    rb.norm1_b = Tensor<double>({3});
    rb.conv2_w = Tensor<double>({3, 3, 3, 3});
    rb.conv2_b = Tensor<double>({3});
    rb.norm2_g = Tensor<double>::full({3}, 1.0);
    rb.norm2_b = Tensor<double>({3});
    rb.stride = 1;
    Tensor<double> x = uniform_tensor<double>(rng, {3, 6, 6});
    CHECK(max_abs_diff(residual_block(x, rb), x) == 0.0);
}

TEST_CASE("context encoder: zero image with zero biases gives zero context") {
    ModelConfig cfg = ModelConfig::defaults("flow");
    cfg.block.embed_dim = 16;
    cfg.block.state_dim = 4;
    cfg.block.num_heads = 2;
    cfg.block.num_blocks = 1;
    cfg.context_dim = 16;
    cfg.hidden_dim = 8;
    cfg.motion_dim = 8;
    auto weights = init_weights<double>(cfg, 3);
    auto model = Model<double>::assemble(weights);
    Tensor<double> img({3, 32, 32});
    Tensor<double> ctx = context_encode(img, model.ctx);
    CHECK(max_abs(ctx) == 0.0);
    CHECK(ctx.shape() == std::vector<int64_t>{16, 8, 8});
}

TEST_CASE("context encoder shape contract for both patch sizes") {
    for (int64_t p : {int64_t(4), int64_t(8)}) {
        ModelConfig cfg = ModelConfig::defaults(p == 4 ? "flow" : "disparity");
        cfg.block.embed_dim = 16;
        cfg.block.state_dim = 4;
        cfg.block.num_heads = 2;
        cfg.block.num_blocks = 1;
        cfg.block.patch_size = p;
        cfg.context_dim = 16;
        cfg.hidden_dim = 8;
        cfg.motion_dim = 8;
        auto weights = init_weights<double>(cfg, 4);
        auto model = Model<double>::assemble(weights);
        Xoshiro256pp rng(56);
        Tensor<double> img = uniform_tensor<double>(rng, {3, 64, 64});
        Tensor<double> ctx = context_encode(img, model.ctx);
        CHECK(ctx.shape() == std::vector<int64_t>{16, 64 / p, 64 / p});
    }
}
