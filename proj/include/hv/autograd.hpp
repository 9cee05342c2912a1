#pragma once

#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hv/tensor.hpp"

namespace hv::ag {

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const BasicTensor<T>& value() const;
    const Shape& dims() const { return value().dims(); }
    int64_t dim(int axis) const { return value().dim(axis); }
};

/// Records an op graph in creation order. Creation order is a topological
/// order, so backward() walks node ids downward and visits each node once.
template <typename T>
class Tape {
public:
    using TensorT = BasicTensor<T>;
    /// Called with the node's incoming gradient and its own forward value.
    using BackwardFn = std::function<void(Tape&, const TensorT& grad_out, const TensorT& out)>;

    /// A non-recording tape keeps values only (inference).
    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }

    Var<T> constant(TensorT value);
    /// Leaf that receives a gradient when the tape records.
    Var<T> variable(TensorT value);
    /// Leaf honouring value.requires_grad().
    Var<T> input(TensorT value);
    /// Named trainable leaf, created once per name per tape.
    Var<T> parameter(const std::string& name, const TensorT& value);
    bool has_parameter(const std::string& name) const { return params_.count(name) != 0; }
    const std::vector<std::string>& parameter_names() const { return param_order_; }
    Var<T> parameter_var(const std::string& name) const;

    /// Adds a computed node. Throws NumericError naming `op` if the value is
    /// not finite. The backward function is dropped when no parent needs grad.
    Var<T> record(std::string_view op, TensorT value, std::initializer_list<Var<T>> parents,
                  BackwardFn backward);
    Var<T> record(std::string_view op, TensorT value, const std::vector<Var<T>>& parents,
                  BackwardFn backward);

    const TensorT& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
    bool needs_grad(Var<T> v) const { return needs_grad(v.id); }

    /// Adds g into the gradient of node id (no-op if it needs none).
    void accumulate(int id, const TensorT& g);
    void accumulate(int id, TensorT&& g);

    /// Seeds d(loss)/d(loss) = 1 for a single-element loss and propagates.
    void backward(Var<T> loss);

    /// Gradient of a node, or nullptr when none reached it.
    const TensorT* grad(Var<T> v) const;
    TensorT grad_or_zeros(Var<T> v) const;
    const TensorT* parameter_grad(const std::string& name) const;

    size_t size() const { return nodes_.size(); }
    int backward_visits() const { return backward_visits_; }

private:
    struct Node {
        TensorT value;
        TensorT grad;
        bool has_grad = false;
        bool needs_grad = false;
        BackwardFn backward;
    };

    Var<T> push(std::string_view op, TensorT value, bool needs_grad, BackwardFn backward);

    std::deque<Node> nodes_;
    bool recording_;
    std::unordered_map<std::string, int> params_;
    std::vector<std::string> param_order_;
    int backward_visits_ = 0;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
    return tape->value(id);
}

extern template class Tape<float>;
extern template class Tape<double>;

using Varf = Var<float>;
using Tapef = Tape<float>;

// ---------------------------------------------------------------------------
// Differentiable ops. All results are fresh tensors; shapes are checked and
// violations raise ShapeError carrying both dim lists.

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, double s);
/// x + y where y's dims equal the trailing dims of x (bias, positional table).
template <typename T> Var<T> add_broadcast(Var<T> x, Var<T> y);
/// x[b,c,...] + bias[c] per channel; bias may also be [b,c] (per-sample).
template <typename T> Var<T> add_channel(Var<T> x, Var<T> bias);

/// Batched product: a[(b,)m,k] x b[(b,)k,n]; a rank-2 operand broadcasts
/// over the other's batch.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> transpose_last2(Var<T> x);
template <typename T> Var<T> permute(Var<T> x, const std::vector<int>& perm);
template <typename T> Var<T> reshape(Var<T> x, Shape dims);
template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, int axis);
template <typename T> Var<T> slice(Var<T> x, int axis, int64_t start, int64_t length);
/// rows of table[v,c] selected by ids -> [ids.size(), c]
template <typename T> Var<T> gather_rows(Var<T> table, const std::vector<int64_t>& ids);

template <typename T> Var<T> softmax(Var<T> x, int axis);
template <typename T> Var<T> silu(Var<T> x);

/// x[b,cin,h,w] * kernel[cout,cin,kh,kw]; output spatial floor((d+2p-k)/s)+1.
template <typename T> Var<T> conv2d(Var<T> x, Var<T> kernel, int stride, int padding);
template <typename T> Var<T> upsample_nearest2x(Var<T> x);
/// x[n,c,...] normalised over (c/groups, ...) then scaled by gamma[c], shifted by beta[c].
template <typename T> Var<T> group_norm(Var<T> x, int groups, Var<T> gamma, Var<T> beta, double eps);
/// Normalises x[...,c] over the last axis.
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps);

template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);
template <typename T> Var<T> mse(Var<T> a, Var<T> b);
/// Softmax cross-entropy of a logits vector against one class index.
template <typename T> Var<T> softmax_cross_entropy(Var<T> logits, int64_t target);

} // namespace hv::ag
