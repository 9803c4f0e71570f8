#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace ncssd {

// Error taxonomy. Callers that need exit-code mapping (the CLI) catch these
// by type; everything derives from std::runtime_error so tests can also
// match on the message text.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr Dtype dtype_of() {
    if constexpr (std::is_same_v<T, float>) return Dtype::f32;
    else return Dtype::f64;
}

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "float32" : "float64"; }

// Dense row-major tensor. Always contiguous, always owning; there are no
// views or strided aliases, so element (i0,...,ik) lives at
// sum(i_k * stride_k) with strides derived from the shape alone.
template <typename T>
class Tensor {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "Tensor supports float32 and float64 only");

public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(count_), T(0));
    }

    Tensor(std::vector<int64_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<int64_t>(data_.size()) != count_)
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape volume " + std::to_string(count_));
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t size() const { return count_; }
    const std::vector<int64_t>& shape() const { return shape_; }
    const std::vector<int64_t>& strides() const { return strides_; }
    Dtype dtype() const { return dtype_of<T>(); }
    bool empty() const { return shape_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    template <typename... Ix>
    T& operator()(Ix... ix) {
        return data_[offset(ix...)];
    }
    template <typename... Ix>
    const T& operator()(Ix... ix) const {
        return data_[offset(ix...)];
    }

    T& at_flat(int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& at_flat(int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Same data, new shape; volumes must match.
    Tensor reshaped(std::vector<int64_t> shape) const {
        Tensor out(std::move(shape), data_);
        return out;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    template <typename... Ix>
    size_t offset(Ix... ix) const {
        const int64_t idx[] = {static_cast<int64_t>(ix)...};
        const size_t n = sizeof...(Ix);
        int64_t off = 0;
        for (size_t k = 0; k < n; ++k) off += idx[k] * strides_[k];
        return static_cast<size_t>(off);
    }

    void validate_shape() {
        if (shape_.empty()) throw DimensionError("tensor rank must be >= 1");
        count_ = 1;
        for (int64_t e : shape_) {
            if (e < 1) throw DimensionError("tensor extent must be >= 1, got " + std::to_string(e));
            count_ *= e;
        }
        strides_.assign(shape_.size(), 1);
        for (size_t k = shape_.size(); k-- > 1;)
            strides_[k - 1] = strides_[k] * shape_[k];
    }

    std::vector<int64_t> shape_;
    std::vector<int64_t> strides_;
    std::vector<T> data_;
    int64_t count_ = 0;
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace ncssd
