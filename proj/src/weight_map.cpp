#include "hv/weight_map.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "hv/errors.hpp"

namespace hv {

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::base: return "base";
        case Provenance::inp: return "inp";
        case Provenance::ds: return "ds";
        case Provenance::merged: return "merged";
        default: return "unknown";
    }
}

template <typename T>
void BasicWeightMap<T>::insert(std::string name, TensorT value) {
    if (index_.count(name)) throw InputError("duplicate weight name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

template <typename T>
void BasicWeightMap<T>::set(const std::string& name, TensorT value) {
    if (auto it = index_.find(name); it != index_.end()) {
        entries_[it->second].second = std::move(value);
        return;
    }
    insert(name, std::move(value));
}

template <typename T>
const BasicTensor<T>& BasicWeightMap<T>::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw InputError("missing weight: " + std::string(name));
    return entries_[it->second].second;
}

template <typename T>
BasicTensor<T>& BasicWeightMap<T>::at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw InputError("missing weight: " + std::string(name));
    return entries_[it->second].second;
}

template <typename T>
int64_t BasicWeightMap<T>::parameter_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
}

template class BasicWeightMap<float>;
template class BasicWeightMap<double>;

bool bitwise_equal(const WeightMap& a, const WeightMap& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.entries()[i].first != b.entries()[i].first) return false;
        if (!bitwise_equal(a.entries()[i].second, b.entries()[i].second)) return false;
    }
    return true;
}

void write_weights(std::ostream& os, const WeightMap& w) {
    os.write("HVW1", 4);
    const uint32_t n = static_cast<uint32_t>(w.size());
    const char cnt[4] = {char(n & 0xff), char((n >> 8) & 0xff), char((n >> 16) & 0xff), char((n >> 24) & 0xff)};
    os.write(cnt, 4);
    for (const auto& [name, t] : w.entries()) {
        if (name.size() > 0xffff) throw InputError("weight name too long: " + name.substr(0, 64));
        const uint16_t len = static_cast<uint16_t>(name.size());
        const char lb[2] = {char(len & 0xff), char((len >> 8) & 0xff)};
        os.write(lb, 2);
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, t);
    }
}

WeightMap read_weights(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "HVW1", 4) != 0)
        throw InputError("bad weight-file magic (expected HVW1)");
    unsigned char cb[4];
    if (!is.read(reinterpret_cast<char*>(cb), 4)) throw InputError("truncated weight-file header");
    const uint32_t n = uint32_t(cb[0]) | (uint32_t(cb[1]) << 8) | (uint32_t(cb[2]) << 16) | (uint32_t(cb[3]) << 24);
    WeightMap w;
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = "#" + std::to_string(i);
        try {
            unsigned char lb[2];
            if (!is.read(reinterpret_cast<char*>(lb), 2)) throw InputError("truncated name length");
            const uint16_t len = static_cast<uint16_t>(lb[0] | (lb[1] << 8));
            std::string s(len, '\0');
            if (!is.read(s.data(), len)) throw InputError("truncated name");
            name = std::move(s);
            w.insert(name, read_tensor(is));
        } catch (const Error& e) {
            throw InputError("malformed weight entry " + std::to_string(i) + " (" + name + "): " + e.what());
        }
    }
    return w;
}

void save_weights(const std::filesystem::path& path, const WeightMap& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write " + path.string());
    write_weights(os, w);
    if (!os) throw InputError("write failed: " + path.string());
}

WeightMap load_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open weight file " + path.string());
    try {
        return read_weights(is);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

} // namespace hv
