#pragma once

#include <functional>

#include "fedload/param_tree.hpp"

namespace fedload {

// Central-difference gradient of a scalar function of a parameter tree.
// Independent of every analytic backward pass in this library; it is the
// oracle those passes are checked against.
ParamTree finite_difference_gradient(const std::function<double(const ParamTree&)>& f,
                                     const ParamTree& at, double step = 1e-5);

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

// Max elementwise relative error between two trees of the same layout.
double max_relative_error(const ParamTree& a, const ParamTree& b);

}  // namespace fedload
