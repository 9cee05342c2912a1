#include "hv/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "hv/errors.hpp"

namespace hv {

int64_t numel(const Shape& dims) {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
}

std::string to_string(const Shape& dims) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << ']';
    return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, T fill) : dims_(std::move(dims)) {
    for (int64_t d : dims_)
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + to_string(dims_));
    data_.assign(static_cast<size_t>(numel(dims_)), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, std::vector<T> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
    for (int64_t d : dims_)
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + to_string(dims_));
    if (numel(dims_) != static_cast<int64_t>(data_.size()))
        throw ShapeError("dims " + to_string(dims_) + " do not match " +
                         std::to_string(data_.size()) + " values");
}

template <typename T>
int64_t BasicTensor<T>::dim(int axis) const {
    int r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(dims_));
    return dims_[static_cast<size_t>(axis)];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape dims) const {
    if (numel(dims) != size())
        throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
    return BasicTensor(std::move(dims), data_);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void BasicTensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

void require_same_dims(const Shape& a, const Shape& b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": dims " + to_string(a) + " vs " + to_string(b));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.dims() == b.dims() &&
           std::memcmp(a.data(), b.data(), static_cast<size_t>(a.size()) * sizeof(float)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_dims(a.dims(), b.dims(), "max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

uint64_t fnv1a64(std::span<const std::byte> bytes, uint64_t seed) {
    uint64_t h = seed;
    for (std::byte b : bytes) {
        h ^= static_cast<uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    os.write(b, 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw InputError("truncated tensor header");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

} // namespace

uint64_t content_hash(const Tensor& t) {
    std::ostringstream os;
    write_tensor(os, t);
    const std::string s = os.str();
    return fnv1a64(std::as_bytes(std::span(s.data(), s.size())));
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<size_t>(i)] = digits[v & 0xf];
    return s;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write("HVT1", 4);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.dims()) put_u32(os, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < t.size(); ++i) put_u32(os, std::bit_cast<uint32_t>(t[i]));
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "HVT1", 4) != 0)
        throw InputError("bad tensor magic (expected HVT1)");
    const uint32_t rank = get_u32(is);
    if (rank == 0 || rank > 8) throw InputError("unsupported tensor rank " + std::to_string(rank));
    Shape dims(rank);
    for (auto& d : dims) {
        d = get_u32(is);
        if (d == 0) throw InputError("zero tensor dim");
    }
    const int64_t n = numel(dims);
    if (n > (int64_t(1) << 31)) throw InputError("tensor too large");
    std::vector<float> values(static_cast<size_t>(n));
    for (auto& v : values) v = std::bit_cast<float>(get_u32(is));
    return Tensor(std::move(dims), std::move(values));
}

} // namespace hv
