#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ncssd/blocks.hpp"
#include "ncssd/matching.hpp"
#include "ncssd/tensor.hpp"

namespace ncssd {

// Full model configuration; stored as the JSON manifest in the weight file
// header and echoed back on load.
struct ModelConfig {
    std::string task = "flow";  // "flow" | "disparity"
    BlockConfig block;
    int64_t context_dim = 128;  // Dc
    int64_t hidden_dim = 64;    // Dh (GRU)
    int64_t motion_dim = 64;    // Dm (motion encoder)
    int64_t radius = 4;         // lookup radius per level
    int64_t iterations = 12;    // refinement iterations (12 flow / 8 disparity)
    int64_t num_levels = 4;     // pyramid depth
    bool multires = false;      // multi-resolution disparity updates

    FieldKind kind() const { return task == "flow" ? FieldKind::flow : FieldKind::disparity; }
    int64_t field_channels() const { return task == "flow" ? 2 : 1; }
    int64_t lookup_channels() const {
        const int64_t side = 2 * radius + 1;
        return task == "flow" ? num_levels * side * side : num_levels * side;
    }

    void validate() const {
        if (task != "flow" && task != "disparity")
            throw ConfigError("task must be 'flow' or 'disparity', got '" + task + "'");
        block.validate();
        if (context_dim < 2 || context_dim % 2 != 0)
            throw ConfigError("context_dim must be even and >= 2");
        if (hidden_dim < 2 || hidden_dim % 2 != 0)
            throw ConfigError("hidden_dim must be even and >= 2");
        if (motion_dim < 1 || radius < 1 || iterations < 1 || num_levels < 1)
            throw ConfigError("motion_dim, radius, iterations and num_levels must be >= 1");
        if (multires && task != "disparity")
            throw ConfigError("multires updates apply to the disparity task only");
    }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    static ModelConfig defaults(const std::string& task_name) {
        ModelConfig cfg;
        cfg.task = task_name;
        if (task_name == "disparity") {
            cfg.block.patch_size = 8;
            cfg.iterations = 8;
            cfg.multires = true;
        }
        return cfg;
    }
};

// Named tensor store with stable (insertion) order.
template <typename T>
class ModelWeights {
public:
    ModelConfig config;

    void put(std::string name, Tensor<T> t) {
        auto it = index_.find(name);
        if (it != index_.end()) {
            items_[it->second].second = std::move(t);
            return;
        }
        index_.emplace(name, items_.size());
        items_.emplace_back(std::move(name), std::move(t));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw LoadError("missing tensor '" + name + "'");
        return items_[it->second].second;
    }

    const Tensor<T>& get(const std::string& name, const std::vector<int64_t>& shape) const {
        const Tensor<T>& t = get(name);
        if (t.shape() != shape)
            throw LoadError("tensor '" + name + "' has shape " + shape_str(t.shape()) +
                            ", expected " + shape_str(shape));
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
    std::unordered_map<std::string, size_t> index_;
};

enum class InitKind { normal, zeros, ones, a_bias };

struct WeightSpec {
    std::string name;
    std::vector<int64_t> shape;
    InitKind init;
};

// Canonical weight inventory for a configuration; drives initialization,
// load-time shape validation and model assembly (in this order).
std::vector<WeightSpec> weight_inventory(const ModelConfig& cfg);

// splitmix64 seeding + xoshiro256++ stream; Box-Muller normals.  All draws
// run in double and narrow to T, so a given seed yields the same weights for
// both dtypes up to rounding and the same file bytes for a fixed dtype.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) {
            x += 0x9E3779B97f4A7C15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            si = z ^ (z >> 31);
        }
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in (0,1]
    double uniform() { return (double(next() >> 11) + 1.0) * 0x1.0p-53; }

    double normal(double sigma) {
        if (have_spare_) {
            have_spare_ = false;
            return spare_ * sigma;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * 3.141592653589793238462643 * u2;
        spare_ = mag * std::sin(ang);
        have_spare_ = true;
        return mag * std::cos(ang) * sigma;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
    double spare_ = 0;
    bool have_spare_ = false;
};

inline constexpr double kInitSigma = 0.02;
// softplus(x) = 1  =>  x = ln(e - 1)
inline constexpr double kABiasInit = 0.5413248546129181;

template <typename T>
ModelWeights<T> init_weights(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelWeights<T> w;
    w.config = cfg;
    Xoshiro256pp rng(seed);
    for (const WeightSpec& spec : weight_inventory(cfg)) {
        Tensor<T> t(spec.shape);
        switch (spec.init) {
            case InitKind::normal:
                for (int64_t i = 0; i < t.size(); ++i)
                    t.at_flat(i) = static_cast<T>(rng.normal(kInitSigma));
                break;
            case InitKind::zeros:
                break;
            case InitKind::ones:
                std::fill(t.data(), t.data() + t.size(), T(1));
                break;
            case InitKind::a_bias:
                std::fill(t.data(), t.data() + t.size(), static_cast<T>(kABiasInit));
                break;
        }
        w.put(spec.name, std::move(t));
    }
    return w;
}

// Binary container:
//   magic "NCSD" | u32 version (=1) | u32 config length | config JSON |
//   u32 tensor count | per tensor: u32 name length, name bytes, u8 dtype
//   (0 = float32, 1 = float64), u32 rank, u64 extents..., raw LE data.
template <typename T>
void save_weights(const ModelWeights<T>& w, const std::string& path);

template <typename T>
ModelWeights<T> load_weights(const std::string& path);

extern template void save_weights<float>(const ModelWeights<float>&, const std::string&);
extern template void save_weights<double>(const ModelWeights<double>&, const std::string&);
extern template ModelWeights<float> load_weights<float>(const std::string&);
extern template ModelWeights<double> load_weights<double>(const std::string&);

}  // namespace ncssd
