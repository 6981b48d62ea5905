#include <cmath>
#include <cstdlib>
#include <vector>

#include <doctest.h>

#include "fedload/adam.hpp"
#include "fedload/errors.hpp"
#include "fedload/param_tree.hpp"
#include "fedload/tensor.hpp"

using namespace fedload;

TEST_CASE("adam leaves params unchanged on zero gradients") {
    ParamTree params;
    params.set("w", Tensor({3}, {1.0, -2.0, 0.5}));
    const ParamTree before = params;
    AdamState state;
    adam_step(params, ParamTree::zeros_like(params), state, AdamConfig{});
    CHECK(params == before);
    CHECK(state.step_count == 1);
    CHECK(state.initialized());
}

TEST_CASE("adam first step moves each param by lr*g/(|g|+eps)") {
    AdamConfig config;
    config.lr = 0.01;
    ParamTree params;
    params.set("w", Tensor({3}, {0.0, 5.0, -1.0}));
    ParamTree grads;
    grads.set("w", Tensor({3}, {2.0, -0.3, 1e-3}));
    AdamState state;
    adam_step(params, grads, state, config);
    // After bias correction the first step is m_hat = g, v_hat = g^2, so the
    // update is exactly lr * g / (|g| + eps).
    const Tensor& g = grads.at("w");
    const std::vector<double> start = {0.0, 5.0, -1.0};
    for (std::size_t i = 0; i < 3; ++i) {
        const double expected =
            start[i] - config.lr * g[i] / (std::fabs(g[i]) + config.epsilon);
        CHECK(params.at("w")[i] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("adam on f(theta)=theta^2 matches a scalar reference for 10 steps") {
    AdamConfig config;
    config.lr = 0.1;
    ParamTree params;
    params.set("theta", Tensor({1}, {1.0}));
    AdamState state;

    double theta = 1.0, m = 0.0, v = 0.0;
    double prev_abs = std::fabs(theta);
    for (int step = 1; step <= 10; ++step) {
        ParamTree grads;
        grads.set("theta", Tensor({1}, {2.0 * params.at("theta")[0]}));
        adam_step(params, grads, state, config);

        const double g = 2.0 * theta;
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g * g;
        const double m_hat = m / (1.0 - std::pow(config.beta1, step));
        const double v_hat = v / (1.0 - std::pow(config.beta2, step));
        theta -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);

        CHECK(params.at("theta")[0] == doctest::Approx(theta).epsilon(1e-12));
        CHECK(std::fabs(params.at("theta")[0]) < prev_abs);
        prev_abs = std::fabs(params.at("theta")[0]);
    }
    CHECK(state.step_count == 10);
}

TEST_CASE("adam rejects gradients with a different layout") {
    ParamTree params;
    params.set("w", Tensor({2}, {1.0, 2.0}));
    ParamTree grads;
    grads.set("other", Tensor({2}, {1.0, 1.0}));
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, grads, state, AdamConfig{}), LayoutError);

    // A state initialized for one layout cannot be reused for another.
    ParamTree good;
    good.set("w", Tensor({2}, {0.1, 0.2}));
    adam_step(params, good, state, AdamConfig{});
    ParamTree bigger = params;
    bigger.set("extra", Tensor({1}, {0.0}));
    ParamTree bigger_grads = ParamTree::zeros_like(bigger);
    CHECK_THROWS_AS(adam_step(bigger, bigger_grads, state, AdamConfig{}), LayoutError);
}

TEST_CASE("adam moments persist across calls") {
    AdamConfig config;
    config.lr = 0.05;
    ParamTree params;
    params.set("w", Tensor({1}, {0.3}));
    ParamTree grads;
    grads.set("w", Tensor({1}, {1.0}));
    AdamState state;
    adam_step(params, grads, state, config);
    const double m1 = state.m.at("w")[0];
    adam_step(params, grads, state, config);
    CHECK(state.step_count == 2);
    // Second-step first moment: 0.9*m1 + 0.1*g with g constant at 1.
    CHECK(state.m.at("w")[0] == doctest::Approx(0.9 * m1 + 0.1).epsilon(1e-14));
}
