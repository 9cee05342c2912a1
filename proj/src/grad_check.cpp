#include "hv/grad_check.hpp"

#include <cmath>

#include "hv/errors.hpp"

namespace hv {

namespace {

template <typename T>
double evaluate(const ScalarGraph<T>& f, const std::vector<BasicTensor<T>>& inputs) {
    ag::Tape<T> tape(false);
    std::vector<ag::Var<T>> vars;
    for (const auto& x : inputs) vars.push_back(tape.constant(x));
    ag::Var<T> y = f(tape, vars);
    if (y.value().size() != 1) throw ShapeError("grad_check: graph output is not scalar, dims " + to_string(y.dims()));
    return static_cast<double>(y.value()[0]);
}

} // namespace

template <typename T>
GradCheckReport grad_check(const ScalarGraph<T>& f, const std::vector<BasicTensor<T>>& inputs, double h) {
    if (!(h >= 1e-4 && h <= 1e-2)) throw InputError("grad_check: step must lie in [1e-4, 1e-2]");

    ag::Tape<T> tape;
    std::vector<ag::Var<T>> vars;
    for (const auto& x : inputs) vars.push_back(tape.variable(x));
    ag::Var<T> y = f(tape, vars);
    if (y.value().size() != 1) throw ShapeError("grad_check: graph output is not scalar, dims " + to_string(y.dims()));
    tape.backward(y);

    GradCheckReport report;
    std::vector<BasicTensor<T>> probe = inputs;
    for (size_t k = 0; k < inputs.size(); ++k) {
        const BasicTensor<T> analytic = tape.grad_or_zeros(vars[k]);
        for (int64_t i = 0; i < inputs[k].size(); ++i) {
            const T orig = probe[k][i];
            probe[k][i] = static_cast<T>(orig + h);
            const double fp = evaluate(f, probe);
            probe[k][i] = static_cast<T>(orig - h);
            const double fm = evaluate(f, probe);
            probe[k][i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double a = analytic[i];
            const double err = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-8);
            if (err > report.max_rel_error || report.worst_index < 0) {
                report = {err, k, i, a, fd};
            }
        }
    }
    return report;
}

template <typename T>
GradCheckReport grad_check(const std::function<ag::Var<T>(ag::Tape<T>&, ag::Var<T>)>& f, const BasicTensor<T>& x,
                           double h) {
    ScalarGraph<T> g = [&f](ag::Tape<T>& t, const std::vector<ag::Var<T>>& v) { return f(t, v[0]); };
    return grad_check<T>(g, std::vector<BasicTensor<T>>{x}, h);
}

template GradCheckReport grad_check<float>(const ScalarGraph<float>&, const std::vector<Tensor>&, double);
template GradCheckReport grad_check<double>(const ScalarGraph<double>&, const std::vector<TensorD>&, double);
template GradCheckReport grad_check<float>(const std::function<ag::Var<float>(ag::Tape<float>&, ag::Var<float>)>&,
                                           const Tensor&, double);
template GradCheckReport grad_check<double>(const std::function<ag::Var<double>(ag::Tape<double>&, ag::Var<double>)>&,
                                            const TensorD&, double);

} // namespace hv
