#pragma once

#include <functional>
#include <vector>

#include "hv/autograd.hpp"

namespace hv {

struct GradCheckReport {
    double max_rel_error = 0.0;
    size_t worst_input = 0;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

template <typename T>
using ScalarGraph = std::function<ag::Var<T>(ag::Tape<T>&, const std::vector<ag::Var<T>>&)>;

/// Compares reverse-mode gradients of a scalar graph against central
/// differences at step h, coordinate by coordinate. The error of a coordinate
/// is |analytic - fd| / (|analytic| + |fd| + 1e-8); the report holds the max.
template <typename T>
GradCheckReport grad_check(const ScalarGraph<T>& f, const std::vector<BasicTensor<T>>& inputs, double h = 1e-3);

template <typename T>
GradCheckReport grad_check(const std::function<ag::Var<T>(ag::Tape<T>&, ag::Var<T>)>& f, const BasicTensor<T>& x,
                           double h = 1e-3);

} // namespace hv
