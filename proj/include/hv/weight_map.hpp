#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hv/autograd.hpp"
#include "hv/tensor.hpp"

namespace hv {

enum class Provenance { unknown, base, inp, ds, merged };

const char* to_string(Provenance p);

/// Ordered name -> tensor store. Iteration order is insertion order, which is
/// also the serialization order.
template <typename T>
class BasicWeightMap {
public:
    using TensorT = BasicTensor<T>;
    using Entry = std::pair<std::string, TensorT>;

    BasicWeightMap() = default;
    explicit BasicWeightMap(Provenance p) : provenance_(p) {}

    /// Throws InputError on a duplicate name.
    void insert(std::string name, TensorT value);
    /// Inserts or replaces, keeping the original position on replace.
    void set(const std::string& name, TensorT value);

    bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
    const TensorT& at(std::string_view name) const;
    TensorT& at(std::string_view name);

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    size_t size() const { return entries_.size(); }
    int64_t parameter_count() const;

    Provenance provenance() const { return provenance_; }
    void set_provenance(Provenance p) { provenance_ = p; }

    template <typename U>
    BasicWeightMap<U> cast() const {
        BasicWeightMap<U> out(provenance_);
        for (const auto& [name, t] : entries_) out.insert(name, t.template cast<U>());
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
    Provenance provenance_ = Provenance::unknown;
};

using WeightMap = BasicWeightMap<float>;

extern template class BasicWeightMap<float>;
extern template class BasicWeightMap<double>;

bool bitwise_equal(const WeightMap& a, const WeightMap& b);

// "HVW1" | u32 count | per entry: u16 name length, name bytes, HVT1 tensor.
void write_weights(std::ostream& os, const WeightMap& w);
WeightMap read_weights(std::istream& is);
void save_weights(const std::filesystem::path& path, const WeightMap& w);
/// Errors name the file and, for a malformed entry, the entry index/name.
WeightMap load_weights(const std::filesystem::path& path);

/// Binds weight-map entries to tape parameters under a name prefix.
template <typename T>
class ParamScope {
public:
    ParamScope(ag::Tape<T>& tape, const BasicWeightMap<T>& weights, std::string prefix = {})
        : tape_(&tape), weights_(&weights), prefix_(std::move(prefix)) {}

    ag::Var<T> operator()(std::string_view name) const {
        const std::string full = prefix_ + std::string(name);
        return tape_->parameter(full, weights_->at(full));
    }
    ParamScope sub(std::string_view name) const {
        return ParamScope(*tape_, *weights_, prefix_ + std::string(name) + ".");
    }
    bool has(std::string_view name) const { return weights_->contains(prefix_ + std::string(name)); }
    const std::string& prefix() const { return prefix_; }
    ag::Tape<T>& tape() const { return *tape_; }
    const BasicWeightMap<T>& weights() const { return *weights_; }

private:
    ag::Tape<T>* tape_;
    const BasicWeightMap<T>* weights_;
    std::string prefix_;
};

} // namespace hv
