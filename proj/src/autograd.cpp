#include "hv/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hv/errors.hpp"
#include "hv/kernels.hpp"

namespace hv::ag {

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::push(std::string_view op, TensorT value, bool needs_grad, BackwardFn backward) {
    if (!value.all_finite())
        throw NumericError(std::string(op) + " produced a non-finite value (dims " +
                           to_string(value.dims()) + ")");
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    if (needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::constant(TensorT value) {
    return push("constant", std::move(value), false, nullptr);
}

template <typename T>
Var<T> Tape<T>::variable(TensorT value) {
    return push("variable", std::move(value), recording_, nullptr);
}

template <typename T>
Var<T> Tape<T>::input(TensorT value) {
    const bool rg = value.requires_grad();
    return push("input", std::move(value), recording_ && rg, nullptr);
}

template <typename T>
Var<T> Tape<T>::parameter(const std::string& name, const TensorT& value) {
    if (auto it = params_.find(name); it != params_.end()) return Var<T>{this, it->second};
    Var<T> v = push(name, value, recording_, nullptr);
    params_.emplace(name, v.id);
    param_order_.push_back(name);
    return v;
}

template <typename T>
Var<T> Tape<T>::parameter_var(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InputError("parameter not on tape: " + name);
    return Var<T>{const_cast<Tape*>(this), it->second};
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, TensorT value, std::initializer_list<Var<T>> parents,
                       BackwardFn backward) {
    bool needs = false;
    for (const Var<T>& p : parents) needs = needs || needs_grad(p.id);
    return push(op, std::move(value), recording_ && needs, std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, TensorT value, const std::vector<Var<T>>& parents,
                       BackwardFn backward) {
    bool needs = false;
    for (const Var<T>& p : parents) needs = needs || needs_grad(p.id);
    return push(op, std::move(value), recording_ && needs, std::move(backward));
}

template <typename T>
void Tape<T>::accumulate(int id, const TensorT& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return;
    require_same_dims(n.value.dims(), g.dims(), "gradient accumulation");
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        kernels::add(n.grad.data(), g.data(), n.grad.data(), static_cast<size_t>(g.size()));
    }
}

template <typename T>
void Tape<T>::accumulate(int id, TensorT&& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return;
    require_same_dims(n.value.dims(), g.dims(), "gradient accumulation");
    if (!n.has_grad) {
        n.grad = std::move(g);
        n.has_grad = true;
    } else {
        kernels::add(n.grad.data(), g.data(), n.grad.data(), static_cast<size_t>(g.size()));
    }
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (loss.tape != this) throw InputError("backward: variable belongs to another tape");
    if (value(loss.id).size() != 1)
        throw ShapeError("backward needs a single-element loss, got dims " + to_string(value(loss.id).dims()));
    accumulate(loss.id, TensorT(value(loss.id).dims(), T(1)));
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.has_grad || !n.backward) continue;
        ++backward_visits_;
        n.backward(*this, n.grad, n.value);
    }
}

template <typename T>
const BasicTensor<T>* Tape<T>::grad(Var<T> v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    return n.has_grad ? &n.grad : nullptr;
}

template <typename T>
BasicTensor<T> Tape<T>::grad_or_zeros(Var<T> v) const {
    if (const TensorT* g = grad(v)) return *g;
    return TensorT(value(v.id).dims());
}

template <typename T>
const BasicTensor<T>* Tape<T>::parameter_grad(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) return nullptr;
    return grad(Var<T>{const_cast<Tape*>(this), it->second});
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------------------
// helpers

namespace {

template <typename T>
using TT = BasicTensor<T>;

int norm_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw ShapeError(std::string(op) + ": axis out of range for rank " + std::to_string(rank));
    return axis;
}

int64_t prod(const Shape& d, size_t from, size_t to) {
    int64_t p = 1;
    for (size_t i = from; i < to; ++i) p *= d[i];
    return p;
}

template <typename T>
void transpose2d(const T* src, int64_t rows, int64_t cols, T* dst) {
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <typename T>
TT<T> binary(const TT<T>& a, const TT<T>& b, void (*fn)(const T*, const T*, T*, size_t)) {
    TT<T> out(a.dims());
    fn(a.data(), b.data(), out.data(), static_cast<size_t>(a.size()));
    return out;
}

template <typename T>
TT<T> scaled(const TT<T>& a, double s) {
    TT<T> out(a.dims());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(a[i] * static_cast<T>(s));
    return out;
}

template <typename T>
TT<T> negated(const TT<T>& a) {
    TT<T> out(a.dims());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = -a[i];
    return out;
}

template <typename T>
void add_fn(const T* a, const T* b, T* o, size_t n) { kernels::add(a, b, o, n); }
template <typename T>
void mul_fn(const T* a, const T* b, T* o, size_t n) { kernels::mul(a, b, o, n); }
template <typename T>
void sub_fn(const T* a, const T* b, T* o, size_t n) {
    for (size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

} // namespace

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_dims(a.dims(), b.dims(), "add");
    const int ia = a.id, ib = b.id;
    return a.tape->record("add", binary(a.value(), b.value(), &add_fn<T>), {a, b},
                          [ia, ib](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                              t.accumulate(ia, g);
                              t.accumulate(ib, g);
                          });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    require_same_dims(a.dims(), b.dims(), "sub");
    const int ia = a.id, ib = b.id;
    return a.tape->record("sub", binary(a.value(), b.value(), &sub_fn<T>), {a, b},
                          [ia, ib](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                              t.accumulate(ia, g);
                              if (t.needs_grad(ib)) t.accumulate(ib, negated(g));
                          });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_dims(a.dims(), b.dims(), "mul");
    const int ia = a.id, ib = b.id;
    return a.tape->record("mul", binary(a.value(), b.value(), &mul_fn<T>), {a, b},
                          [ia, ib](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                              if (t.needs_grad(ia)) t.accumulate(ia, binary(g, t.value(ib), &mul_fn<T>));
                              if (t.needs_grad(ib)) t.accumulate(ib, binary(g, t.value(ia), &mul_fn<T>));
                          });
}

template <typename T>
Var<T> scale(Var<T> a, double s) {
    const int ia = a.id;
    return a.tape->record("scale", scaled(a.value(), s), {a},
                          [ia, s](Tape<T>& t, const TT<T>& g, const TT<T>&) { t.accumulate(ia, scaled(g, s)); });
}

template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y) {
    const Shape& xd = x.dims();
    const Shape& yd = y.dims();
    if (yd.size() > xd.size() || !std::equal(yd.rbegin(), yd.rend(), xd.rbegin()))
        throw ShapeError("add_broadcast: dims " + to_string(xd) + " vs " + to_string(yd));
    const int64_t inner = numel(yd);
    const int64_t outer = numel(xd) / inner;
    TT<T> out = x.value();
    const TT<T>& yv = y.value();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) out[o * inner + i] += yv[i];
    const int ix = x.id, iy = y.id;
    return x.tape->record("add_broadcast", std::move(out), {x, y},
                          [ix, iy, inner, outer](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                              t.accumulate(ix, g);
                              if (!t.needs_grad(iy)) return;
                              TT<T> gy(t.value(iy).dims());
                              for (int64_t o = 0; o < outer; ++o)
                                  for (int64_t i = 0; i < inner; ++i) gy[i] += g[o * inner + i];
                              t.accumulate(iy, std::move(gy));
                          });
}

template <typename T>
Var<T> add_channel(Var<T> x, Var<T> bias) {
    const Shape& xd = x.dims();
    const Shape& bd = bias.dims();
    if (xd.size() < 2) throw ShapeError("add_channel: rank < 2 " + to_string(xd));
    const int64_t B = xd[0], C = xd[1], S = prod(xd, 2, xd.size());
    const bool per_sample = bd.size() == 2;
    if (!((bd.size() == 1 && bd[0] == C) || (per_sample && bd[0] == B && bd[1] == C)))
        throw ShapeError("add_channel: dims " + to_string(xd) + " vs " + to_string(bd));
    TT<T> out = x.value();
    const TT<T>& bv = bias.value();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T v = bv[per_sample ? b * C + c : c];
            T* p = out.data() + (b * C + c) * S;
            for (int64_t s = 0; s < S; ++s) p[s] += v;
        }
    const int ix = x.id, ib = bias.id;
    return x.tape->record("add_channel", std::move(out), {x, bias},
                          [ix, ib, B, C, S, per_sample](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                              t.accumulate(ix, g);
                              if (!t.needs_grad(ib)) return;
                              TT<T> gb(t.value(ib).dims());
                              for (int64_t b = 0; b < B; ++b)
                                  for (int64_t c = 0; c < C; ++c) {
                                      const T* p = g.data() + (b * C + c) * S;
                                      T s = 0;
                                      for (int64_t k = 0; k < S; ++k) s += p[k];
                                      gb[per_sample ? b * C + c : c] += s;
                                  }
                              t.accumulate(ib, std::move(gb));
                          });
}

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    const Shape ad = a.dims(), bd = b.dims();
    auto fail = [&] { return ShapeError("matmul: dims " + to_string(ad) + " x " + to_string(bd)); };
    if (ad.size() < 2 || ad.size() > 3 || bd.size() < 2 || bd.size() > 3) throw fail();
    const int64_t ba = ad.size() == 3 ? ad[0] : 1;
    const int64_t bb = bd.size() == 3 ? bd[0] : 1;
    const int64_t m = ad[ad.size() - 2], k = ad[ad.size() - 1];
    const int64_t k2 = bd[bd.size() - 2], n = bd[bd.size() - 1];
    if (k != k2) throw fail();
    if (ba != bb && ba != 1 && bb != 1) throw fail();
    const int64_t batch = std::max(ba, bb);
    const bool out3 = ad.size() == 3 || bd.size() == 3;
    Shape od = out3 ? Shape{batch, m, n} : Shape{m, n};

    TT<T> out(od);
    const TT<T>& av = a.value();
    const TT<T>& bv = b.value();
    if (bb == 1 && ba == batch) {
        // shared right operand: one tall product
        kernels::gemm(av.data(), bv.data(), out.data(), batch * m, k, n, false);
    } else {
        for (int64_t i = 0; i < batch; ++i)
            kernels::gemm(av.data() + (ba == 1 ? 0 : i) * m * k, bv.data() + (bb == 1 ? 0 : i) * k * n,
                          out.data() + i * m * n, m, k, n, false);
    }
    const int ia = a.id, ib = b.id;
    return a.tape->record(
        "matmul", std::move(out), {a, b},
        [ia, ib, ba, bb, batch, m, k, n](Tape<T>& t, const TT<T>& g, const TT<T>&) {
            const TT<T>& av = t.value(ia);
            const TT<T>& bv = t.value(ib);
            if (t.needs_grad(ia)) {
                // ga = g * b^T
                TT<T> ga(av.dims());
                std::vector<T> bt(static_cast<size_t>(k * n));
                for (int64_t i = 0; i < batch; ++i) {
                    const int64_t bi = bb == 1 ? 0 : i;
                    if (i == 0 || bb != 1) transpose2d(bv.data() + bi * k * n, k, n, bt.data());
                    kernels::gemm(g.data() + i * m * n, bt.data(), ga.data() + (ba == 1 ? 0 : i) * m * k, m, n,
                                  k, ba == 1 && i > 0);
                }
                t.accumulate(ia, std::move(ga));
            }
            if (t.needs_grad(ib)) {
                // gb = a^T * g
                TT<T> gb(bv.dims());
                if (bb == 1 && ba == batch) {
                    std::vector<T> at(static_cast<size_t>(batch * m * k));
                    transpose2d(av.data(), batch * m, k, at.data());
                    kernels::gemm(at.data(), g.data(), gb.data(), k, batch * m, n, false);
                } else {
                    std::vector<T> at(static_cast<size_t>(m * k));
                    for (int64_t i = 0; i < batch; ++i) {
                        const int64_t ai = ba == 1 ? 0 : i;
                        if (i == 0 || ba != 1) transpose2d(av.data() + ai * m * k, m, k, at.data());
                        kernels::gemm(at.data(), g.data() + i * m * n, gb.data() + (bb == 1 ? 0 : i) * k * n, k,
                                      m, n, bb == 1 && i > 0);
                    }
                }
                t.accumulate(ib, std::move(gb));
            }
        });
}

// ---------------------------------------------------------------------------
// layout

namespace {

template <typename T>
TT<T> permute_values(const TT<T>& x, const std::vector<int>& perm) {
    const Shape& xd = x.dims();
    const size_t r = xd.size();
    Shape od(r);
    for (size_t i = 0; i < r; ++i) od[i] = xd[static_cast<size_t>(perm[i])];
    std::vector<int64_t> xstride(r, 1);
    for (size_t i = r - 1; i > 0; --i) xstride[i - 1] = xstride[i] * xd[i];
    // stride in x for each output axis
    std::vector<int64_t> step(r);
    for (size_t i = 0; i < r; ++i) step[i] = xstride[static_cast<size_t>(perm[i])];
    TT<T> out(od);
    std::vector<int64_t> idx(r, 0);
    int64_t src = 0;
    for (int64_t o = 0; o < out.size(); ++o) {
        out[o] = x[src];
        for (size_t ax = r; ax-- > 0;) {
            ++idx[ax];
            src += step[ax];
            if (idx[ax] < od[ax]) break;
            src -= step[ax] * od[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

} // namespace

template <typename T>
Var<T> permute(Var<T> x, const std::vector<int>& perm) {
    const size_t r = x.dims().size();
    std::vector<int> check = perm;
    std::sort(check.begin(), check.end());
    for (size_t i = 0; i < check.size(); ++i)
        if (check.size() != r || check[i] != static_cast<int>(i))
            throw ShapeError("permute: invalid permutation for dims " + to_string(x.dims()));
    std::vector<int> inverse(r);
    for (size_t i = 0; i < r; ++i) inverse[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    const int ix = x.id;
    return x.tape->record("permute", permute_values(x.value(), perm), {x},
                          [ix, inverse](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                              t.accumulate(ix, permute_values(g, inverse));
                          });
}

template <typename T>
Var<T> transpose_last2(Var<T> x) {
    const int r = static_cast<int>(x.dims().size());
    if (r < 2) throw ShapeError("transpose_last2: rank < 2 " + to_string(x.dims()));
    std::vector<int> perm(static_cast<size_t>(r));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[static_cast<size_t>(r - 1)], perm[static_cast<size_t>(r - 2)]);
    return permute(x, perm);
}

template <typename T>
Var<T> reshape(Var<T> x, Shape dims) {
    const Shape orig = x.dims();
    const int ix = x.id;
    return x.tape->record("reshape", x.value().reshaped(std::move(dims)), {x},
                          [ix, orig](Tape<T>& t, const TT<T>& g, const TT<T>&) { t.accumulate(ix, g.reshaped(orig)); });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const Shape d0 = xs[0].dims();
    axis = norm_axis(axis, static_cast<int>(d0.size()), "concat");
    const size_t ax = static_cast<size_t>(axis);
    std::vector<int64_t> lens;
    int64_t total = 0;
    for (const auto& x : xs) {
        const Shape& d = x.dims();
        bool ok = d.size() == d0.size();
        for (size_t i = 0; ok && i < d.size(); ++i) ok = i == ax || d[i] == d0[i];
        if (!ok) throw ShapeError("concat: dims " + to_string(d0) + " vs " + to_string(d));
        lens.push_back(d[ax]);
        total += d[ax];
    }
    Shape od = d0;
    od[ax] = total;
    const int64_t outer = prod(d0, 0, ax), inner = prod(d0, ax + 1, d0.size());
    TT<T> out(od);
    int64_t offset = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const TT<T>& v = xs[k].value();
        const int64_t chunk = lens[k] * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(v.data() + o * chunk, chunk, out.data() + o * total * inner + offset * inner);
        offset += lens[k];
    }
    std::vector<int> ids;
    for (const auto& x : xs) ids.push_back(x.id);
    return xs[0].tape->record("concat", std::move(out), xs,
                              [ids, lens, outer, inner, total](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                                  int64_t offset = 0;
                                  for (size_t k = 0; k < ids.size(); ++k) {
                                      if (t.needs_grad(ids[k])) {
                                          TT<T> gk(t.value(ids[k]).dims());
                                          const int64_t chunk = lens[k] * inner;
                                          for (int64_t o = 0; o < outer; ++o)
                                              std::copy_n(g.data() + o * total * inner + offset * inner, chunk,
                                                          gk.data() + o * chunk);
                                          t.accumulate(ids[k], std::move(gk));
                                      }
                                      offset += lens[k];
                                  }
                              });
}

template <typename T>
Var<T> slice(Var<T> x, int axis, int64_t start, int64_t length) {
    const Shape xd = x.dims();
    axis = norm_axis(axis, static_cast<int>(xd.size()), "slice");
    const size_t ax = static_cast<size_t>(axis);
    if (start < 0 || length <= 0 || start + length > xd[ax])
        throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range on axis " + std::to_string(axis) + " of " + to_string(xd));
    Shape od = xd;
    od[ax] = length;
    const int64_t outer = prod(xd, 0, ax), inner = prod(xd, ax + 1, xd.size()), full = xd[ax];
    TT<T> out(od);
    const TT<T>& v = x.value();
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(v.data() + (o * full + start) * inner, length * inner, out.data() + o * length * inner);
    const int ix = x.id;
    return x.tape->record("slice", std::move(out), {x},
                          [ix, outer, inner, full, start, length](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                              TT<T> gx(t.value(ix).dims());
                              for (int64_t o = 0; o < outer; ++o)
                                  std::copy_n(g.data() + o * length * inner, length * inner,
                                              gx.data() + (o * full + start) * inner);
                              t.accumulate(ix, std::move(gx));
                          });
}

template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<int64_t>& ids) {
    const Shape td = table.dims();
    if (td.size() != 2) throw ShapeError("gather_rows: table must be rank 2, got " + to_string(td));
    if (ids.empty()) throw ShapeError("gather_rows: no ids");
    const int64_t c = td[1];
    for (int64_t id : ids)
        if (id < 0 || id >= td[0])
            throw ShapeError("gather_rows: row " + std::to_string(id) + " outside table " + to_string(td));
    TT<T> out({static_cast<int64_t>(ids.size()), c});
    for (size_t r = 0; r < ids.size(); ++r)
        std::copy_n(table.value().data() + ids[r] * c, c, out.data() + static_cast<int64_t>(r) * c);
    const int it = table.id;
    return table.tape->record("gather_rows", std::move(out), {table}, [it, ids, c](Tape<T>& t, const TT<T>& g, const TT<T>&) {
        TT<T> gt(t.value(it).dims());
        for (size_t r = 0; r < ids.size(); ++r)
            for (int64_t j = 0; j < c; ++j) gt[ids[r] * c + j] += g[static_cast<int64_t>(r) * c + j];
        t.accumulate(it, std::move(gt));
    });
}

// ---------------------------------------------------------------------------
// nonlinearities

template <typename T>
Var<T> softmax(Var<T> x, int axis) {
    const Shape xd = x.dims();
    axis = norm_axis(axis, static_cast<int>(xd.size()), "softmax");
    const size_t ax = static_cast<size_t>(axis);
    const int64_t outer = prod(xd, 0, ax), len = xd[ax], inner = prod(xd, ax + 1, xd.size());
    const TT<T>& v = x.value();
    TT<T> out(xd);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * len * inner + i;
            T mx = v[base];
            for (int64_t j = 1; j < len; ++j) mx = std::max(mx, v[base + j * inner]);
            double s = 0.0;
            for (int64_t j = 0; j < len; ++j) {
                const double e = std::exp(static_cast<double>(v[base + j * inner] - mx));
                out[base + j * inner] = static_cast<T>(e);
                s += e;
            }
            for (int64_t j = 0; j < len; ++j)
                out[base + j * inner] = static_cast<T>(static_cast<double>(out[base + j * inner]) / s);
        }
    const int ix = x.id;
    return x.tape->record("softmax", std::move(out), {x},
                          [ix, outer, len, inner](Tape<T>& t, const TT<T>& g, const TT<T>& yv) {
                              TT<T> gx(yv.dims());
                              for (int64_t o = 0; o < outer; ++o)
                                  for (int64_t i = 0; i < inner; ++i) {
                                      const int64_t base = o * len * inner + i;
                                      double dotp = 0.0;
                                      for (int64_t j = 0; j < len; ++j)
                                          dotp += static_cast<double>(g[base + j * inner]) * yv[base + j * inner];
                                      for (int64_t j = 0; j < len; ++j) {
                                          const int64_t q = base + j * inner;
                                          gx[q] = static_cast<T>(yv[q] * (static_cast<double>(g[q]) - dotp));
                                      }
                                  }
                              t.accumulate(ix, std::move(gx));
                          });
}

template <typename T>
Var<T> silu(Var<T> x) {
    const TT<T>& v = x.value();
    TT<T> out(v.dims());
    for (int64_t i = 0; i < v.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v[i])));
        out[i] = static_cast<T>(v[i] * s);
    }
    const int ix = x.id;
    return x.tape->record("silu", std::move(out), {x}, [ix](Tape<T>& t, const TT<T>& g, const TT<T>&) {
        const TT<T>& v = t.value(ix);
        TT<T> gx(v.dims());
        for (int64_t i = 0; i < v.size(); ++i) {
            const double xv = v[i];
            const double s = 1.0 / (1.0 + std::exp(-xv));
            gx[i] = static_cast<T>(g[i] * (s * (1.0 + xv * (1.0 - s))));
        }
        t.accumulate(ix, std::move(gx));
    });
}

// ---------------------------------------------------------------------------
// convolution

namespace {

struct ConvGeom {
    int64_t B, Cin, H, W, Cout, KH, KW, OH, OW;
    int stride, pad;
    int64_t K() const { return Cin * KH * KW; }
    int64_t P() const { return OH * OW; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
    for (int64_t c = 0; c < g.Cin; ++c)
        for (int64_t ky = 0; ky < g.KH; ++ky)
            for (int64_t kx = 0; kx < g.KW; ++kx) {
                T* row = col + ((c * g.KH + ky) * g.KW + kx) * g.P();
                for (int64_t oy = 0; oy < g.OH; ++oy) {
                    const int64_t iy = oy * g.stride - g.pad + ky;
                    for (int64_t ox = 0; ox < g.OW; ++ox) {
                        const int64_t ix = ox * g.stride - g.pad + kx;
                        row[oy * g.OW + ox] =
                            (iy >= 0 && iy < g.H && ix >= 0 && ix < g.W) ? x[(c * g.H + iy) * g.W + ix] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* x) {
    for (int64_t c = 0; c < g.Cin; ++c)
        for (int64_t ky = 0; ky < g.KH; ++ky)
            for (int64_t kx = 0; kx < g.KW; ++kx) {
                const T* row = col + ((c * g.KH + ky) * g.KW + kx) * g.P();
                for (int64_t oy = 0; oy < g.OH; ++oy) {
                    const int64_t iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.H) continue;
                    for (int64_t ox = 0; ox < g.OW; ++ox) {
                        const int64_t ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.W) x[(c * g.H + iy) * g.W + ix] += row[oy * g.OW + ox];
                    }
                }
            }
}

} // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, int stride, int padding) {
    const Shape xd = x.dims(), kd = kernel.dims();
    auto fail = [&](const std::string& why) {
        return ShapeError("conv2d: " + why + " (input " + to_string(xd) + ", kernel " + to_string(kd) + ")");
    };
    if (xd.size() != 4 || kd.size() != 4) throw fail("rank must be 4");
    if (xd[1] != kd[1]) throw fail("channel mismatch");
    if (stride < 1 || padding < 0) throw fail("bad stride/padding");
    ConvGeom g{xd[0], xd[1], xd[2], xd[3], kd[0], kd[2], kd[3], 0, 0, stride, padding};
    const int64_t nh = xd[2] + 2 * padding - kd[2], nw = xd[3] + 2 * padding - kd[3];
    if (nh < 0 || nw < 0) throw fail("zero-size output");
    g.OH = nh / stride + 1;
    g.OW = nw / stride + 1;

    TT<T> out({g.B, g.Cout, g.OH, g.OW});
    std::vector<T> col(static_cast<size_t>(g.K() * g.P()));
    const TT<T>& xv = x.value();
    const TT<T>& kv = kernel.value();
    for (int64_t b = 0; b < g.B; ++b) {
        im2col(xv.data() + b * g.Cin * g.H * g.W, g, col.data());
        kernels::gemm(kv.data(), col.data(), out.data() + b * g.Cout * g.P(), g.Cout, g.K(), g.P(), false);
    }
    const int ix = x.id, ik = kernel.id;
    return x.tape->record("conv2d", std::move(out), {x, kernel}, [ix, ik, g](Tape<T>& t, const TT<T>& gout, const TT<T>&) {
        const TT<T>& xv = t.value(ix);
        const TT<T>& kv = t.value(ik);
        const bool need_x = t.needs_grad(ix), need_k = t.needs_grad(ik);
        std::vector<T> col(static_cast<size_t>(g.K() * g.P()));
        std::vector<T> colt(static_cast<size_t>(g.K() * g.P()));
        std::vector<T> kt;
        TT<T> gx, gk;
        if (need_x) {
            gx = TT<T>(xv.dims());
            kt.resize(static_cast<size_t>(g.K() * g.Cout));
            transpose2d(kv.data(), g.Cout, g.K(), kt.data());
        }
        if (need_k) gk = TT<T>(kv.dims());
        for (int64_t b = 0; b < g.B; ++b) {
            const T* gb = gout.data() + b * g.Cout * g.P();
            if (need_k) {
                im2col(xv.data() + b * g.Cin * g.H * g.W, g, col.data());
                transpose2d(col.data(), g.K(), g.P(), colt.data());
                kernels::gemm(gb, colt.data(), gk.data(), g.Cout, g.P(), g.K(), b > 0);
            }
            if (need_x) {
                kernels::gemm(kt.data(), gb, col.data(), g.K(), g.Cout, g.P(), false);
                col2im_add(col.data(), g, gx.data() + b * g.Cin * g.H * g.W);
            }
        }
        if (need_x) t.accumulate(ix, std::move(gx));
        if (need_k) t.accumulate(ik, std::move(gk));
    });
}

template <typename T>
Var<T> upsample_nearest2x(Var<T> x) {
    const Shape xd = x.dims();
    if (xd.size() != 4) throw ShapeError("upsample_nearest2x: rank must be 4, got " + to_string(xd));
    const int64_t BC = xd[0] * xd[1], H = xd[2], W = xd[3];
    TT<T> out({xd[0], xd[1], 2 * H, 2 * W});
    const TT<T>& v = x.value();
    for (int64_t p = 0; p < BC; ++p)
        for (int64_t y = 0; y < 2 * H; ++y)
            for (int64_t xx = 0; xx < 2 * W; ++xx)
                out[(p * 2 * H + y) * 2 * W + xx] = v[(p * H + y / 2) * W + xx / 2];
    const int ix = x.id;
    return x.tape->record("upsample_nearest2x", std::move(out), {x}, [ix, BC, H, W](Tape<T>& t, const TT<T>& g, const TT<T>&) {
        TT<T> gx(t.value(ix).dims());
        for (int64_t p = 0; p < BC; ++p)
            for (int64_t y = 0; y < 2 * H; ++y)
                for (int64_t xx = 0; xx < 2 * W; ++xx)
                    gx[(p * H + y / 2) * W + xx / 2] += g[(p * 2 * H + y) * 2 * W + xx];
        t.accumulate(ix, std::move(gx));
    });
}

// ---------------------------------------------------------------------------
// normalisation

template <typename T>
Var<T> group_norm(Var<T> x, int groups, Var<T> gamma, Var<T> beta, double eps) {
    const Shape xd = x.dims();
    if (xd.size() < 2) throw ShapeError("group_norm: rank < 2 " + to_string(xd));
    const int64_t N = xd[0], C = xd[1], S = prod(xd, 2, xd.size());
    if (groups < 1 || C % groups != 0)
        throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible by " +
                         std::to_string(groups) + " groups");
    if (gamma.dims() != Shape{C} || beta.dims() != Shape{C})
        throw ShapeError("group_norm: affine dims " + to_string(gamma.dims()) + "/" + to_string(beta.dims()) +
                         " vs channels " + std::to_string(C));
    const int64_t cg = C / groups, M = cg * S;
    const TT<T>& xv = x.value();
    const TT<T>& gv = gamma.value();
    const TT<T>& bv = beta.value();
    TT<T> out(xd);
    std::vector<double> mean(static_cast<size_t>(N * groups)), inv_std(static_cast<size_t>(N * groups));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t gi = 0; gi < groups; ++gi) {
            const T* p = xv.data() + (n * C + gi * cg) * S;
            const double mu = kernels::sum(p, static_cast<size_t>(M)) / static_cast<double>(M);
            const double var = kernels::sum_sq_dev(p, static_cast<size_t>(M), mu) / static_cast<double>(M);
            const double is = 1.0 / std::sqrt(var + eps);
            mean[static_cast<size_t>(n * groups + gi)] = mu;
            inv_std[static_cast<size_t>(n * groups + gi)] = is;
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = gi * cg + c;
                for (int64_t s = 0; s < S; ++s) {
                    const int64_t q = (n * C + ch) * S + s;
                    out[q] = static_cast<T>((static_cast<double>(xv[q]) - mu) * is * gv[ch] + bv[ch]);
                }
            }
        }
    const int ix = x.id, ig = gamma.id, ib = beta.id;
    return x.tape->record(
        "group_norm", std::move(out), {x, gamma, beta},
        [ix, ig, ib, N, C, S, groups, cg, M, mean, inv_std](Tape<T>& t, const TT<T>& g, const TT<T>&) {
            const TT<T>& xv = t.value(ix);
            const TT<T>& gv = t.value(ig);
            TT<T> gx(xv.dims()), gg(gv.dims()), gb(gv.dims());
            std::vector<double> ggd(static_cast<size_t>(C), 0.0), gbd(static_cast<size_t>(C), 0.0);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t gi = 0; gi < groups; ++gi) {
                    const double mu = mean[static_cast<size_t>(n * groups + gi)];
                    const double is = inv_std[static_cast<size_t>(n * groups + gi)];
                    double sum_gh = 0.0, sum_gh_xh = 0.0;
                    for (int64_t c = 0; c < cg; ++c) {
                        const int64_t ch = gi * cg + c;
                        for (int64_t s = 0; s < S; ++s) {
                            const int64_t q = (n * C + ch) * S + s;
                            const double xh = (xv[q] - mu) * is;
                            const double gh = static_cast<double>(g[q]) * gv[ch];
                            sum_gh += gh;
                            sum_gh_xh += gh * xh;
                            ggd[static_cast<size_t>(ch)] += static_cast<double>(g[q]) * xh;
                            gbd[static_cast<size_t>(ch)] += g[q];
                        }
                    }
                    const double m1 = sum_gh / M, m2 = sum_gh_xh / M;
                    for (int64_t c = 0; c < cg; ++c) {
                        const int64_t ch = gi * cg + c;
                        for (int64_t s = 0; s < S; ++s) {
                            const int64_t q = (n * C + ch) * S + s;
                            const double xh = (xv[q] - mu) * is;
                            const double gh = static_cast<double>(g[q]) * gv[ch];
                            gx[q] = static_cast<T>(is * (gh - m1 - xh * m2));
                        }
                    }
                }
            for (int64_t c = 0; c < C; ++c) {
                gg[c] = static_cast<T>(ggd[static_cast<size_t>(c)]);
                gb[c] = static_cast<T>(gbd[static_cast<size_t>(c)]);
            }
            t.accumulate(ix, std::move(gx));
            t.accumulate(ig, std::move(gg));
            t.accumulate(ib, std::move(gb));
        });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps) {
    const Shape xd = x.dims();
    const int64_t c = xd.back();
    Var<T> flat = reshape(x, Shape{numel(xd) / c, c});
    return reshape(group_norm(flat, 1, gamma, beta, eps), xd);
}

// ---------------------------------------------------------------------------
// reductions and losses

template <typename T>
Var<T> sum(Var<T> x) {
    TT<T> out({1}, static_cast<T>(kernels::sum(x.value().data(), static_cast<size_t>(x.value().size()))));
    const int ix = x.id;
    return x.tape->record("sum", std::move(out), {x}, [ix](Tape<T>& t, const TT<T>& g, const TT<T>&) {
        t.accumulate(ix, TT<T>(t.value(ix).dims(), g[0]));
    });
}

template <typename T>
Var<T> mean(Var<T> x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
    require_same_dims(a.dims(), b.dims(), "mse");
    const int64_t n = a.value().size();
    TT<T> diff = binary(a.value(), b.value(), &sub_fn<T>);
    const double sq = kernels::dot(diff.data(), diff.data(), static_cast<size_t>(n));
    TT<T> out({1}, static_cast<T>(sq / static_cast<double>(n)));
    const int ia = a.id, ib = b.id;
    return a.tape->record("mse", std::move(out), {a, b}, [ia, ib, n](Tape<T>& t, const TT<T>& g, const TT<T>&) {
        TT<T> ga = binary(t.value(ia), t.value(ib), &sub_fn<T>);
        const double k = 2.0 * static_cast<double>(g[0]) / static_cast<double>(n);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] = static_cast<T>(ga[i] * k);
        if (t.needs_grad(ib)) t.accumulate(ib, negated(ga));
        t.accumulate(ia, std::move(ga));
    });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, int64_t target) {
    const TT<T>& v = logits.value();
    if (v.rank() != 1) throw ShapeError("softmax_cross_entropy: logits must be rank 1, got " + to_string(v.dims()));
    if (target < 0 || target >= v.size()) throw ShapeError("softmax_cross_entropy: target out of range");
    double mx = v[0];
    for (int64_t i = 1; i < v.size(); ++i) mx = std::max(mx, static_cast<double>(v[i]));
    double s = 0.0;
    for (int64_t i = 0; i < v.size(); ++i) s += std::exp(v[i] - mx);
    const double lse = mx + std::log(s);
    TT<T> out({1}, static_cast<T>(lse - v[target]));
    const int il = logits.id;
    return logits.tape->record("softmax_cross_entropy", std::move(out), {logits},
                               [il, target, lse](Tape<T>& t, const TT<T>& g, const TT<T>&) {
                                   const TT<T>& v = t.value(il);
                                   TT<T> gl(v.dims());
                                   for (int64_t i = 0; i < v.size(); ++i)
                                       gl[i] = static_cast<T>(g[0] * (std::exp(v[i] - lse) - (i == target ? 1.0 : 0.0)));
                                   t.accumulate(il, std::move(gl));
                               });
}

#define HV_INSTANTIATE_OPS(T)                                                                    \
    template Var<T> add(Var<T>, Var<T>);                                                         \
    template Var<T> sub(Var<T>, Var<T>);                                                         \
    template Var<T> mul(Var<T>, Var<T>);                                                         \
    template Var<T> scale(Var<T>, double);                                                       \
    template Var<T> add_broadcast(Var<T>, Var<T>);                                               \
    template Var<T> add_channel(Var<T>, Var<T>);                                                 \
    template Var<T> matmul(Var<T>, Var<T>);                                                      \
    template Var<T> transpose_last2(Var<T>);                                                     \
    template Var<T> permute(Var<T>, const std::vector<int>&);                                    \
    template Var<T> reshape(Var<T>, Shape);                                                      \
    template Var<T> concat(const std::vector<Var<T>>&, int);                                     \
    template Var<T> slice(Var<T>, int, int64_t, int64_t);                                        \
    template Var<T> gather_rows(Var<T>, const std::vector<int64_t>&);                            \
    template Var<T> softmax(Var<T>, int);                                                        \
    template Var<T> silu(Var<T>);                                                                \
    template Var<T> conv2d(Var<T>, Var<T>, int, int);                                            \
    template Var<T> upsample_nearest2x(Var<T>);                                                  \
    template Var<T> group_norm(Var<T>, int, Var<T>, Var<T>, double);                             \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, double);                                  \
    template Var<T> sum(Var<T>);                                                                 \
    template Var<T> mean(Var<T>);                                                                \
    template Var<T> mse(Var<T>, Var<T>);                                                         \
    template Var<T> softmax_cross_entropy(Var<T>, int64_t);

HV_INSTANTIATE_OPS(float)
HV_INSTANTIATE_OPS(double)

} // namespace hv::ag
