#include "ncssd/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace ncssd {

using nlohmann::json;

std::string ModelConfig::to_json() const {
    json j;
    j["task"] = task;
    j["patch_size"] = block.patch_size;
    j["embed_dim"] = block.embed_dim;
    j["state_dim"] = block.state_dim;
    j["num_heads"] = block.num_heads;
    j["num_blocks"] = block.num_blocks;
    j["conv_kernel"] = block.conv_kernel;
    j["context_dim"] = context_dim;
    j["hidden_dim"] = hidden_dim;
    j["motion_dim"] = motion_dim;
    j["radius"] = radius;
    j["iterations"] = iterations;
    j["num_levels"] = num_levels;
    j["multires"] = multires;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config JSON parse failed: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.task = j.value("task", cfg.task);
        cfg.block.patch_size = j.value("patch_size", cfg.block.patch_size);
        cfg.block.embed_dim = j.value("embed_dim", cfg.block.embed_dim);
        cfg.block.state_dim = j.value("state_dim", cfg.block.state_dim);
        cfg.block.num_heads = j.value("num_heads", cfg.block.num_heads);
        cfg.block.num_blocks = j.value("num_blocks", cfg.block.num_blocks);
        cfg.block.conv_kernel = j.value("conv_kernel", cfg.block.conv_kernel);
        cfg.context_dim = j.value("context_dim", cfg.context_dim);
        cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
        cfg.motion_dim = j.value("motion_dim", cfg.motion_dim);
        cfg.radius = j.value("radius", cfg.radius);
        cfg.iterations = j.value("iterations", cfg.iterations);
        cfg.num_levels = j.value("num_levels", cfg.num_levels);
        cfg.multires = j.value("multires", cfg.multires);
        // task-sensitive defaults when the config gives only the task
        if (j.contains("task") && !j.contains("patch_size") && cfg.task == "disparity")
            cfg.block.patch_size = 8;
        if (j.contains("task") && !j.contains("iterations") && cfg.task == "disparity")
            cfg.iterations = 8;
        if (j.contains("task") && !j.contains("multires") && cfg.task == "disparity")
            cfg.multires = true;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<WeightSpec> weight_inventory(const ModelConfig& cfg) {
    cfg.validate();
    const BlockConfig& bc = cfg.block;
    const int64_t d = bc.embed_dim, hd = bc.num_heads, n = bc.state_dim, k = bc.conv_kernel;
    const int64_t p = bc.patch_size, dc = cfg.context_dim, dh = cfg.hidden_dim;
    const int64_t dm = cfg.motion_dim;
    const int64_t dx = dm + dc;
    const int64_t cf = cfg.field_channels();
    const int64_t clk = cfg.lookup_channels();

    std::vector<WeightSpec> inv;
    auto add = [&](std::string name, std::vector<int64_t> shape, InitKind init) {
        inv.push_back({std::move(name), std::move(shape), init});
    };

    add("embed.weight", {d, 3 * p * p}, InitKind::normal);
    add("embed.bias", {d}, InitKind::zeros);
    for (int64_t i = 0; i < bc.num_blocks; ++i) {
        const std::string pre = "block" + std::to_string(i) + ".";
        add(pre + "norm_in.gamma", {d}, InitKind::ones);
        add(pre + "norm_in.beta", {d}, InitKind::zeros);
        add(pre + "proj_feat.weight", {d, d}, InitKind::normal);
        add(pre + "proj_feat.bias", {d}, InitKind::zeros);
        add(pre + "proj_a.weight", {hd, d}, InitKind::normal);
        add(pre + "proj_a.bias", {hd}, InitKind::a_bias);
        add(pre + "proj_gate.weight", {d, d}, InitKind::normal);
        add(pre + "proj_gate.bias", {d}, InitKind::zeros);
        add(pre + "dwconv.weight", {d, k, k}, InitKind::normal);
        add(pre + "dwconv.bias", {d}, InitKind::zeros);
        add(pre + "proj_b.weight", {hd * n, d}, InitKind::normal);
        add(pre + "proj_b.bias", {hd * n}, InitKind::zeros);
        add(pre + "proj_c.weight", {hd * n, d}, InitKind::normal);
        add(pre + "proj_c.bias", {hd * n}, InitKind::zeros);
        add(pre + "norm_y.gamma", {d}, InitKind::ones);
        add(pre + "norm_y.beta", {d}, InitKind::zeros);
        add(pre + "proj_out.weight", {d, d}, InitKind::normal);
        add(pre + "proj_out.bias", {d}, InitKind::zeros);
    }
    add("head.weight", {d, d}, InitKind::normal);
    add("head.bias", {d}, InitKind::zeros);

    // context encoder: stride-2 stem, six residual blocks, 1x1 head
    const int64_t c0 = dc / 2;
    add("ctx.stem.weight", {c0, 3, 3, 3}, InitKind::normal);
    add("ctx.stem.bias", {c0}, InitKind::zeros);
    add("ctx.stem_norm.gamma", {c0}, InitKind::ones);
    add("ctx.stem_norm.beta", {c0}, InitKind::zeros);
    int64_t cin = c0;
    for (int64_t i = 0; i < 6; ++i) {
        const std::string pre = "ctx.res" + std::to_string(i) + ".";
        const int64_t stride = (i == 2 || (i == 4 && p == 8)) ? 2 : 1;
        const int64_t cout = i >= 2 ? dc : c0;
        add(pre + "conv1.weight", {cout, cin, 3, 3}, InitKind::normal);
        add(pre + "conv1.bias", {cout}, InitKind::zeros);
        add(pre + "norm1.gamma", {cout}, InitKind::ones);
        add(pre + "norm1.beta", {cout}, InitKind::zeros);
        add(pre + "conv2.weight", {cout, cout, 3, 3}, InitKind::normal);
        add(pre + "conv2.bias", {cout}, InitKind::zeros);
        add(pre + "norm2.gamma", {cout}, InitKind::ones);
        add(pre + "norm2.beta", {cout}, InitKind::zeros);
        if (stride != 1 || cin != cout) {
            add(pre + "skip.weight", {cout, cin, 1, 1}, InitKind::normal);
            add(pre + "skip.bias", {cout}, InitKind::zeros);
        }
        cin = cout;
    }
    add("ctx.head.weight", {dc, dc, 1, 1}, InitKind::normal);
    add("ctx.head.bias", {dc}, InitKind::zeros);

    // recurrent update operator
    add("update.init.weight", {dh, dc, 3, 3}, InitKind::normal);
    add("update.init.bias", {dh}, InitKind::zeros);
    add("update.motion1.weight", {dm, clk + cf, 1, 1}, InitKind::normal);
    add("update.motion1.bias", {dm}, InitKind::zeros);
    add("update.motion2.weight", {dm, dm, 3, 3}, InitKind::normal);
    add("update.motion2.bias", {dm}, InitKind::zeros);
    auto add_gru = [&](const std::string& stem) {
        for (const char* gate : {"z", "r", "h"}) {
            add("update." + stem + "_" + gate + ".weight", {dh, dh + dx, 3, 3}, InitKind::normal);
            add("update." + stem + "_" + gate + ".bias", {dh}, InitKind::zeros);
        }
    };
    add_gru("gru");
    add("update.delta1.weight", {dh / 2, dh, 3, 3}, InitKind::normal);
    add("update.delta1.bias", {dh / 2}, InitKind::zeros);
    add("update.delta2.weight", {cf, dh / 2, 3, 3}, InitKind::normal);
    add("update.delta2.bias", {cf}, InitKind::zeros);
    add("update.mask1.weight", {dh, dh, 3, 3}, InitKind::normal);
    add("update.mask1.bias", {dh}, InitKind::zeros);
    add("update.mask2.weight", {9 * p * p, dh, 1, 1}, InitKind::normal);
    add("update.mask2.bias", {9 * p * p}, InitKind::zeros);
    if (cfg.multires) {
        add_gru("gru16");
        add_gru("gru32");
        add("update.fuse16.weight", {dx, dh, 3, 3}, InitKind::normal);
        add("update.fuse16.bias", {dx}, InitKind::zeros);
        add("update.fuse8.weight", {dx, dh, 3, 3}, InitKind::normal);
        add("update.fuse8.bias", {dx}, InitKind::zeros);
    }
    return inv;
}

namespace {

constexpr char kMagic[4] = {'N', 'C', 'S', 'D'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw LoadError("cannot open '" + path + "' for writing");
    }
    void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) {
        uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
        bytes(b, 8);
    }
    bool good() const { return bool(out_); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw LoadError("cannot open '" + path + "' for reading");
    }
    void set_context(std::string name) { context_ = std::move(name); }
    void bytes(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n)
            throw LoadError("truncated file '" + path_ + "' at byte " + std::to_string(offset_) +
                            (context_.empty() ? "" : " while reading tensor '" + context_ + "'"));
        offset_ += n;
    }
    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint8_t b[4];
        bytes(b, 4);
        return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
    }
    uint64_t u64() {
        uint8_t b[8];
        bytes(b, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
        return v;
    }
    size_t offset() const { return offset_; }

private:
    std::ifstream in_;
    std::string path_;
    std::string context_;
    size_t offset_ = 0;
};

// Little-endian hosts write buffers directly; this is asserted rather than
// byte-swapped since every supported target is LE.
static_assert(std::endian::native == std::endian::little, "little-endian host required");

}  // namespace

template <typename T>
void save_weights(const ModelWeights<T>& w, const std::string& path) {
    Writer out(path);
    out.bytes(kMagic, 4);
    out.u32(kVersion);
    const std::string cfg = w.config.to_json();
    out.u32(static_cast<uint32_t>(cfg.size()));
    out.bytes(cfg.data(), cfg.size());
    out.u32(static_cast<uint32_t>(w.size()));
    for (const auto& [name, t] : w.items()) {
        out.u32(static_cast<uint32_t>(name.size()));
        out.bytes(name.data(), name.size());
        out.u8(static_cast<uint8_t>(dtype_of<T>()));
        out.u32(static_cast<uint32_t>(t.rank()));
        for (int64_t e : t.shape()) out.u64(static_cast<uint64_t>(e));
        out.bytes(t.data(), static_cast<size_t>(t.size()) * sizeof(T));
    }
    if (!out.good()) throw LoadError("write failed for '" + path + "'");
}

template <typename T>
ModelWeights<T> load_weights(const std::string& path) {
    Reader in(path);
    char magic[4];
    in.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw LoadError("bad magic in '" + path + "' (expected NCSD)");
    const uint32_t version = in.u32();
    if (version != kVersion)
        throw LoadError("unsupported weight file version " + std::to_string(version));
    const uint32_t cfg_len = in.u32();
    std::string cfg_text(cfg_len, '\0');
    in.bytes(cfg_text.data(), cfg_len);

    ModelWeights<T> w;
    w.config = ModelConfig::from_json(cfg_text);

    // expected shapes for manifest validation of entries that are present
    std::unordered_map<std::string, std::vector<int64_t>> expected;
    for (const WeightSpec& spec : weight_inventory(w.config)) expected[spec.name] = spec.shape;

    const uint32_t count = in.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = in.u32();
        std::string name(name_len, '\0');
        in.bytes(name.data(), name_len);
        in.set_context(name);
        const uint8_t dtype = in.u8();
        if (dtype != 0 && dtype != 1)
            throw LoadError("tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
        if (dtype != static_cast<uint8_t>(dtype_of<T>()))
            throw LoadError("tensor '" + name + "' stored as " +
                            dtype_name(static_cast<Dtype>(dtype)) + ", expected " +
                            dtype_name(dtype_of<T>()));
        const uint32_t rank = in.u32();
        if (rank == 0 || rank > 8)
            throw LoadError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
        std::vector<int64_t> shape(rank);
        int64_t volume = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            const uint64_t e = in.u64();
            if (e == 0 || e > (uint64_t(1) << 32))
                throw LoadError("tensor '" + name + "' has invalid extent " + std::to_string(e));
            shape[r] = static_cast<int64_t>(e);
            volume *= shape[r];
        }
        auto it = expected.find(name);
        if (it != expected.end() && it->second != shape)
            throw LoadError("tensor '" + name + "' has shape " + shape_str(shape) +
                            ", expected " + shape_str(it->second));
        Tensor<T> t(shape);
        in.bytes(t.data(), static_cast<size_t>(volume) * sizeof(T));
        w.put(std::move(name), std::move(t));
        in.set_context("");
    }
    return w;
}

template void save_weights<float>(const ModelWeights<float>&, const std::string&);
template void save_weights<double>(const ModelWeights<double>&, const std::string&);
template ModelWeights<float> load_weights<float>(const std::string&);
template ModelWeights<double> load_weights<double>(const std::string&);

}  // namespace ncssd
