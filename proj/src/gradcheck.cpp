#include "fedload/gradcheck.hpp"

#include <cmath>

#include "fedload/errors.hpp"

namespace fedload {

ParamTree finite_difference_gradient(const std::function<double(const ParamTree&)>& f,
                                     const ParamTree& at, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite difference step must be positive");
    ParamTree grad = ParamTree::zeros_like(at);
    ParamTree probe = at;
    for (auto& [path, tensor] : probe) {
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const double original = tensor[i];
            tensor[i] = original + step;
            const double plus = f(probe);
            tensor[i] = original - step;
            const double minus = f(probe);
            tensor[i] = original;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                throw NumericError("non-finite function value while probing '" + path +
                                   "' element " + std::to_string(i));
            }
            grad.at(path)[i] = (plus - minus) / (2.0 * step);
        }
    }
    return grad;
}

double relative_error(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / denom;
}

double max_relative_error(const ParamTree& a, const ParamTree& b) {
    a.require_same_layout(b, "max_relative_error");
    double worst = 0.0;
    auto it_b = b.begin();
    for (const auto& [path, tensor] : a) {
        const Tensor& other = it_b->second;
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            worst = std::max(worst, relative_error(tensor[i], other[i]));
        }
        ++it_b;
    }
    return worst;
}

}  // namespace fedload
