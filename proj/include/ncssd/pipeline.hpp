#pragma once

#include <string>
#include <vector>

#include "ncssd/blocks.hpp"
#include "ncssd/matching.hpp"
#include "ncssd/weights.hpp"

// Model assembly and the end-to-end estimate entry points.

namespace ncssd {

template <typename T>
struct TaskRequest {
    FieldKind task = FieldKind::flow;
    ImagePair<T> images;    // stereo pair, or frames t / t+1 for flow
    int64_t iterations = 0;  // <= 0 selects the config default
    int64_t radius = 0;      // <= 0 selects the config default
};

template <typename T>
struct EstimateResult {
    FieldEstimate<T> final;                       // full resolution
    std::vector<FieldEstimate<T>> per_iteration;  // full resolution, one per step
};

namespace detail {

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const DimensionError& e) {
        throw DimensionError(std::string(stage) + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(std::string(stage) + ": " + e.what());
    } catch (const LoadError& e) {
        throw LoadError(std::string(stage) + ": " + e.what());
    }
}

}  // namespace detail

// Typed view of the weight store; assembly validates the full inventory
// (names and exact shapes) before any tensor is touched.
template <typename T>
struct Model {
    ModelConfig cfg;
    Tensor<T> embed_w, embed_b;
    std::vector<BlockWeights<T>> blocks;
    Tensor<T> head_w, head_b;
    ContextWeights<T> ctx;
    UpdateWeights<T> update;

    static Model assemble(const ModelWeights<T>& w) {
        w.config.validate();
        for (const WeightSpec& spec : weight_inventory(w.config)) {
            if (!w.has(spec.name))
                throw LoadError("model assembly: missing tensor '" + spec.name + "'");
            w.get(spec.name, spec.shape);  // throws on shape mismatch
        }
        const ModelConfig& cfg = w.config;
        const BlockConfig& bc = cfg.block;
        Model m;
        m.cfg = cfg;
        m.embed_w = w.get("embed.weight");
        m.embed_b = w.get("embed.bias");
        for (int64_t i = 0; i < bc.num_blocks; ++i) {
            const std::string p = "block" + std::to_string(i) + ".";
            BlockWeights<T> b;
            b.norm_in_g = w.get(p + "norm_in.gamma");
            b.norm_in_b = w.get(p + "norm_in.beta");
            b.proj_feat_w = w.get(p + "proj_feat.weight");
            b.proj_feat_b = w.get(p + "proj_feat.bias");
            b.proj_a_w = w.get(p + "proj_a.weight");
            b.proj_a_b = w.get(p + "proj_a.bias");
            b.proj_gate_w = w.get(p + "proj_gate.weight");
            b.proj_gate_b = w.get(p + "proj_gate.bias");
            b.dwconv_w = w.get(p + "dwconv.weight");
            b.dwconv_b = w.get(p + "dwconv.bias");
            b.proj_b_w = w.get(p + "proj_b.weight");
            b.proj_b_b = w.get(p + "proj_b.bias");
            b.proj_c_w = w.get(p + "proj_c.weight");
            b.proj_c_b = w.get(p + "proj_c.bias");
            b.norm_y_g = w.get(p + "norm_y.gamma");
            b.norm_y_b = w.get(p + "norm_y.beta");
            b.proj_out_w = w.get(p + "proj_out.weight");
            b.proj_out_b = w.get(p + "proj_out.bias");
            m.blocks.push_back(std::move(b));
        }
        m.head_w = w.get("head.weight");
        m.head_b = w.get("head.bias");

        m.ctx.stem_w = w.get("ctx.stem.weight");
        m.ctx.stem_b = w.get("ctx.stem.bias");
        m.ctx.stem_norm_g = w.get("ctx.stem_norm.gamma");
        m.ctx.stem_norm_b = w.get("ctx.stem_norm.beta");
        for (int64_t i = 0; i < 6; ++i) {
            const std::string p = "ctx.res" + std::to_string(i) + ".";
            ResBlockWeights<T> rb;
            rb.conv1_w = w.get(p + "conv1.weight");
            rb.conv1_b = w.get(p + "conv1.bias");
            rb.norm1_g = w.get(p + "norm1.gamma");
            rb.norm1_b = w.get(p + "norm1.beta");
            rb.conv2_w = w.get(p + "conv2.weight");
            rb.conv2_b = w.get(p + "conv2.bias");
            rb.norm2_g = w.get(p + "norm2.gamma");
            rb.norm2_b = w.get(p + "norm2.beta");
            rb.stride = context_stride(cfg, i);
            if (w.has(p + "skip.weight")) {
                rb.skip_w = w.get(p + "skip.weight");
                rb.skip_b = w.get(p + "skip.bias");
            }
            m.ctx.res.push_back(std::move(rb));
        }
        m.ctx.head_w = w.get("ctx.head.weight");
        m.ctx.head_b = w.get("ctx.head.bias");

        auto gru = [&](const std::string& stem) {
            ConvGruWeights<T> g;
            g.wz = w.get("update." + stem + "_z.weight");
            g.bz = w.get("update." + stem + "_z.bias");
            g.wr = w.get("update." + stem + "_r.weight");
            g.br = w.get("update." + stem + "_r.bias");
            g.wh = w.get("update." + stem + "_h.weight");
            g.bh = w.get("update." + stem + "_h.bias");
            return g;
        };
        m.update.init_w = w.get("update.init.weight");
        m.update.init_b = w.get("update.init.bias");
        m.update.motion1_w = w.get("update.motion1.weight");
        m.update.motion1_b = w.get("update.motion1.bias");
        m.update.motion2_w = w.get("update.motion2.weight");
        m.update.motion2_b = w.get("update.motion2.bias");
        m.update.gru = gru("gru");
        m.update.delta1_w = w.get("update.delta1.weight");
        m.update.delta1_b = w.get("update.delta1.bias");
        m.update.delta2_w = w.get("update.delta2.weight");
        m.update.delta2_b = w.get("update.delta2.bias");
        m.update.mask1_w = w.get("update.mask1.weight");
        m.update.mask1_b = w.get("update.mask1.bias");
        m.update.mask2_w = w.get("update.mask2.weight");
        m.update.mask2_b = w.get("update.mask2.bias");
        m.update.multires = cfg.multires;
        if (cfg.multires) {
            m.update.gru16 = gru("gru16");
            m.update.gru32 = gru("gru32");
            m.update.fuse16_w = w.get("update.fuse16.weight");
            m.update.fuse16_b = w.get("update.fuse16.bias");
            m.update.fuse8_w = w.get("update.fuse8.weight");
            m.update.fuse8_b = w.get("update.fuse8.bias");
        }
        return m;
    }

    // stride of context residual block i (stage plan for 1/4 or 1/8 output)
    static int64_t context_stride(const ModelConfig& cfg, int64_t i) {
        if (i == 2) return 2;
        if (i == 4 && cfg.block.patch_size == 8) return 2;
        return 1;
    }
};

template <typename T>
PairFeatures<T> extract_pair_features(const ImagePair<T>& pair, const Model<T>& m) {
    const BlockConfig& bc = m.cfg.block;
    if (!pair.left.same_shape(pair.right))
        throw DimensionError("image pair shapes differ: " + shape_str(pair.left.shape()) +
                             " vs " + shape_str(pair.right.shape()));
    const int64_t h = pair.left.extent(1), w = pair.left.extent(2);
    const int64_t p = bc.patch_size;
    const int64_t gh = h / p, gw = w / p, l = gh * gw, d = bc.embed_dim;

    Tensor<T> tl = patch_embed(pair.left, p, m.embed_w, m.embed_b);
    Tensor<T> tr = patch_embed(pair.right, p, m.embed_w, m.embed_b);
    Tensor<T> tokens({2, l, d});
    std::copy_n(tl.data(), l * d, tokens.data());
    std::copy_n(tr.data(), l * d, tokens.data() + l * d);
    for (const BlockWeights<T>& b : m.blocks)
        tokens = densepercept_block(tokens, gh, gw, bc, b);

    Tensor<T> flat = tokens.reshaped({2 * l, d});
    Tensor<T> projected = linear(flat, m.head_w, m.head_b);
    PairFeatures<T> out;
    Tensor<T> pl({l, d}), pr({l, d});
    std::copy_n(projected.data(), l * d, pl.data());
    std::copy_n(projected.data() + l * d, l * d, pr.data());
    out.f_left = tokens_to_grid(pl, gh, gw);
    out.f_right = tokens_to_grid(pr, gh, gw);
    out.context = context_encode(pair.left, m.ctx);
    return out;
}

template <typename T>
EstimateResult<T> estimate(const TaskRequest<T>& req, const Model<T>& m) {
    const ModelConfig& cfg = m.cfg;
    if (req.task != cfg.kind())
        throw ConfigError("request task does not match the loaded model's task '" + cfg.task +
                          "'");
    const int64_t iters = req.iterations > 0 ? req.iterations : cfg.iterations;
    const int64_t radius = req.radius > 0 ? req.radius : cfg.radius;

    PairFeatures<T> feats = detail::run_stage("feature-extraction", [&] {
        return extract_pair_features(req.images, m);
    });
    const int64_t s = cfg.block.patch_size;
    std::vector<FieldEstimate<T>> iterates;
    if (req.task == FieldKind::flow) {
        Tensor<T> vol = detail::run_stage("correlation-volume", [&] {
            return build_flow_volume(feats.f_left, feats.f_right);
        });
        CorrelationPyramid<T> pyr = detail::run_stage("pyramid", [&] {
            return build_pyramid(std::move(vol), FieldKind::flow, cfg.num_levels);
        });
        iterates = detail::run_stage("refinement", [&] {
            return iterate_flow(pyr, feats.context, iters, radius, m.update, s);
        });
    } else {
        Tensor<T> vol = detail::run_stage("correlation-volume", [&] {
            return build_disparity_volume(feats.f_left, feats.f_right);
        });
        CorrelationPyramid<T> pyr = detail::run_stage("pyramid", [&] {
            return build_pyramid(std::move(vol), FieldKind::disparity, cfg.num_levels);
        });
        iterates = detail::run_stage("refinement", [&] {
            return iterate_disparity_multires(pyr, feats.context, iters, radius, m.update, s);
        });
    }
    EstimateResult<T> out;
    out.final = iterates.back();
    out.per_iteration = std::move(iterates);
    return out;
}

template <typename T>
EstimateResult<T> estimate(const TaskRequest<T>& req, const ModelWeights<T>& w) {
    return estimate(req, Model<T>::assemble(w));
}

}  // namespace ncssd
