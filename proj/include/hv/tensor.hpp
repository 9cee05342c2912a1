#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hv {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& dims);
std::string to_string(const Shape& dims);

/// Dense row-major array. Ops never alias: every result owns its storage.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape dims, T fill = T(0));
    BasicTensor(Shape dims, std::vector<T> values);

    const Shape& dims() const { return dims_; }
    int64_t dim(int axis) const;
    int rank() const { return static_cast<int>(dims_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool on) { requires_grad_ = on; }

    BasicTensor reshaped(Shape dims) const;
    bool all_finite() const;
    void fill(T value);

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(dims_, std::move(out));
    }

private:
    Shape dims_;
    std::vector<T> data_;
    bool requires_grad_ = false;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

/// Throws ShapeError unless `a` and `b` have identical dims.
void require_same_dims(const Shape& a, const Shape& b, const char* what);

bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

uint64_t fnv1a64(std::span<const std::byte> bytes, uint64_t seed = 0xcbf29ce484222325ULL);
/// Hash of dims and payload bytes; stable across runs and platforms.
uint64_t content_hash(const Tensor& t);
std::string hex64(uint64_t v);

// "HVT1" | u32 rank | rank x u32 dims | f32 payload, all little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

} // namespace hv
