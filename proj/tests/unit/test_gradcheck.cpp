#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "fedload/errors.hpp"
#include "fedload/gradcheck.hpp"
#include "fedload/layers.hpp"
#include "fedload/param_tree.hpp"
#include "fedload/rng.hpp"
#include "fedload/tensor.hpp"

using namespace fedload;
using namespace fedload::layers;

namespace {

constexpr double kTol = 1e-4;

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng, double lo = -0.8,
                     double hi = 0.8) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

std::vector<Tensor> random_seq(std::size_t steps, std::size_t dim, Rng& rng) {
    std::vector<Tensor> xs;
    for (std::size_t t = 0; t < steps; ++t) xs.push_back(random_tensor({dim}, rng));
    return xs;
}

double project(const Tensor& out, const Tensor& proj) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * proj[i];
    return acc;
}

ParamTree cell_to_tree(const LstmCellParams& p, const std::string& prefix = "") {
    ParamTree t;
    t.set(prefix + "w_in", p.w_in);
    t.set(prefix + "w_forget", p.w_forget);
    t.set(prefix + "w_out", p.w_out);
    t.set(prefix + "w_cell", p.w_cell);
    t.set(prefix + "b_in", p.b_in);
    t.set(prefix + "b_forget", p.b_forget);
    t.set(prefix + "b_out", p.b_out);
    t.set(prefix + "b_cell", p.b_cell);
    return t;
}

LstmCellParams cell_from_tree(const ParamTree& t, const std::string& prefix = "") {
    return LstmCellParams{t.at(prefix + "w_in"),     t.at(prefix + "w_forget"),
                          t.at(prefix + "w_out"),    t.at(prefix + "w_cell"),
                          t.at(prefix + "b_in"),     t.at(prefix + "b_forget"),
                          t.at(prefix + "b_out"),    t.at(prefix + "b_cell")};
}

LstmCellParams random_cell_params(std::size_t hidden, std::size_t input, Rng& rng) {
    LstmCellParams p = lstm_params_zeros(hidden, input);
    ParamTree t = cell_to_tree(p);
    for (auto& [path, tensor] : t) {
        (void)path;
        for (std::size_t i = 0; i < tensor.size(); ++i) tensor[i] = rng.uniform(-0.6, 0.6);
    }
    return cell_from_tree(t);
}

}  // namespace

TEST_CASE("finite differences recover d(theta^2) = 2 theta") {
    ParamTree at;
    at.set("theta", Tensor({1}, {3.0}));
    const ParamTree grad = finite_difference_gradient(
        [](const ParamTree& t) {
            const double v = t.at("theta")[0];
            return v * v;
        },
        at);
    CHECK(grad.at("theta")[0] == doctest::Approx(6.0).epsilon(1e-8));

    ParamTree vec;
    vec.set("theta", Tensor({3}, {1.0, 2.0, -3.0}));
    const ParamTree g2 = finite_difference_gradient(
        [](const ParamTree& t) {
            const Tensor& v = t.at("theta");
            return v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        },
        vec);
    CHECK(g2.at("theta")[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g2.at("theta")[1] == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(g2.at("theta")[2] == doctest::Approx(-6.0).epsilon(1e-8));
}

TEST_CASE("finite differences of a constant are exactly zero") {
    ParamTree at;
    at.set("w", Tensor({2, 2}, {1, 2, 3, 4}));
    const ParamTree grad =
        finite_difference_gradient([](const ParamTree&) { return 7.5; }, at);
    for (const auto& [path, tensor] : grad) {
        (void)path;
        for (std::size_t i = 0; i < tensor.size(); ++i) CHECK(tensor[i] == 0.0);
    }
}

TEST_CASE("finite differences flag non-finite probes with the offending path") {
    ParamTree at;
    at.set("layer/w", Tensor({1}, {0.0}));
    try {
        finite_difference_gradient(
            [](const ParamTree&) { return std::nan(""); }, at);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("layer/w") != std::string::npos);
    }
    CHECK_THROWS_AS(finite_difference_gradient([](const ParamTree&) { return 0.0; }, at,
                                               -1.0),
                    std::invalid_argument);
}

TEST_CASE("relative error uses the symmetric normalized form") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
    CHECK(relative_error(0.0, 0.0) == 0.0);
    // Tiny absolute differences are measured against the 1e-8 floor.
    CHECK(relative_error(1e-12, 0.0) == doctest::Approx(1e-4));
    CHECK(relative_error(-1.0, 1.0) == doctest::Approx(2.0));
}

TEST_CASE("max_relative_error scans every element and checks layout") {
    ParamTree a, b;
    a.set("w", Tensor({2}, {1.0, 10.0}));
    b.set("w", Tensor({2}, {1.0, 9.0}));
    CHECK(max_relative_error(a, b) == doctest::Approx(0.1));
    ParamTree c;
    c.set("other", Tensor({2}));
    CHECK_THROWS_AS(max_relative_error(a, c), LayoutError);
}

TEST_CASE("conv1d backward matches finite differences") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Rng rng(seed);
        const std::size_t out_ch = 2, in_ch = 2, k = 3, L = 6;
        ParamTree at;
        at.set("kernels", random_tensor({out_ch, in_ch, k}, rng));
        at.set("bias", random_tensor({out_ch}, rng));
        at.set("x", random_tensor({in_ch, L}, rng));
        const Tensor proj = random_tensor({out_ch, L - k + 1}, rng);

        auto loss = [&proj](const ParamTree& t) {
            const Conv1dParams p{t.at("kernels"), t.at("bias")};
            return project(conv1d_forward(t.at("x"), p, Activation::Tanh), proj);
        };

        Conv1dCache cache;
        const Conv1dParams p{at.at("kernels"), at.at("bias")};
        conv1d_forward(at.at("x"), p, Activation::Tanh, &cache);
        const Conv1dGrads grads = conv1d_backward(cache, p, proj);

        ParamTree analytic;
        analytic.set("kernels", grads.params.kernels);
        analytic.set("bias", grads.params.bias);
        analytic.set("x", grads.input);
        CHECK(max_relative_error(analytic, finite_difference_gradient(loss, at)) < kTol);
    }
}

TEST_CASE("lstm cell backward matches finite differences") {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        Rng rng(seed);
        const std::size_t hidden = 3, input = 2;
        ParamTree at = cell_to_tree(random_cell_params(hidden, input, rng));
        at.set("state/cell", random_tensor({hidden}, rng));
        at.set("state/hidden", random_tensor({hidden}, rng));
        at.set("x", random_tensor({input}, rng));
        const Tensor proj_h = random_tensor({hidden}, rng);
        const Tensor proj_c = random_tensor({hidden}, rng);

        auto loss = [&](const ParamTree& t) {
            const LstmCellParams p = cell_from_tree(t);
            const LstmState prev{t.at("state/cell"), t.at("state/hidden")};
            const LstmState next = lstm_cell_forward(prev, t.at("x"), p);
            return project(next.hidden, proj_h) + project(next.cell, proj_c);
        };

        const LstmCellParams p = cell_from_tree(at);
        LstmCellCache cache;
        lstm_cell_forward(LstmState{at.at("state/cell"), at.at("state/hidden")},
                          at.at("x"), p, &cache);
        const LstmCellGrads grads = lstm_cell_backward(cache, p, proj_h, proj_c);

        ParamTree analytic = cell_to_tree(grads.params);
        analytic.set("state/cell", grads.prev_state.cell);
        analytic.set("state/hidden", grads.prev_state.hidden);
        analytic.set("x", grads.input);
        CHECK(max_relative_error(analytic, finite_difference_gradient(loss, at)) < kTol);
    }
}

TEST_CASE("lstm sequence backward matches finite differences over 5 steps") {
    for (std::uint64_t seed : {31u, 32u}) {
        Rng rng(seed);
        const std::size_t hidden = 2, input = 2, steps = 5;
        ParamTree at = cell_to_tree(random_cell_params(hidden, input, rng));
        const auto xs = random_seq(steps, input, rng);
        std::vector<Tensor> proj;
        for (std::size_t t = 0; t < steps; ++t) proj.push_back(random_tensor({hidden}, rng));

        auto loss = [&](const ParamTree& t) {
            const auto outs = lstm_sequence_forward(xs, cell_from_tree(t));
            double acc = 0.0;
            for (std::size_t i = 0; i < steps; ++i) acc += project(outs[i], proj[i]);
            return acc;
        };

        const LstmCellParams p = cell_from_tree(at);
        LstmSequenceCache cache;
        lstm_sequence_forward(xs, p, &cache);
        const LstmSequenceGrads grads = lstm_sequence_backward(cache, p, proj);
        CHECK(max_relative_error(cell_to_tree(grads.params),
                                 finite_difference_gradient(loss, at)) < kTol);
    }
}

TEST_CASE("bilstm backward matches finite differences") {
    for (std::uint64_t seed : {41u, 42u}) {
        Rng rng(seed);
        const std::size_t out = 2, hidden = 2, input = 1, steps = 4;
        Rng init(seed + 100);
        const BiLstmParams base = bilstm_params_init(out, hidden, input, init);
        ParamTree at = cell_to_tree(base.forward_cell, "fwd/");
        ParamTree bwd = cell_to_tree(base.backward_cell, "bwd/");
        for (const auto& [path, tensor] : bwd) at.set(path, tensor);
        at.set("w_out_fwd", base.w_out_fwd);
        at.set("w_out_bwd", base.w_out_bwd);

        const auto xs = random_seq(steps, input, rng);
        std::vector<Tensor> proj;
        for (std::size_t t = 0; t < steps; ++t) proj.push_back(random_tensor({out}, rng));

        auto unpack = [](const ParamTree& t) {
            return BiLstmParams{cell_from_tree(t, "fwd/"), cell_from_tree(t, "bwd/"),
                                t.at("w_out_fwd"), t.at("w_out_bwd")};
        };
        auto loss = [&](const ParamTree& t) {
            const auto outs = bilstm_forward(xs, unpack(t));
            double acc = 0.0;
            for (std::size_t i = 0; i < steps; ++i) acc += project(outs[i], proj[i]);
            return acc;
        };

        const BiLstmParams p = unpack(at);
        BiLstmCache cache;
        bilstm_forward(xs, p, &cache);
        const BiLstmGrads grads = bilstm_backward(cache, p, proj);

        ParamTree analytic = cell_to_tree(grads.params.forward_cell, "fwd/");
        ParamTree abwd = cell_to_tree(grads.params.backward_cell, "bwd/");
        for (const auto& [path, tensor] : abwd) analytic.set(path, tensor);
        analytic.set("w_out_fwd", grads.params.w_out_fwd);
        analytic.set("w_out_bwd", grads.params.w_out_bwd);
        CHECK(max_relative_error(analytic, finite_difference_gradient(loss, at)) < kTol);

        // Input gradients, probed through their own tree.
        ParamTree xin;
        for (std::size_t t = 0; t < steps; ++t) {
            xin.set("x" + std::to_string(t), xs[t]);
        }
        auto loss_x = [&](const ParamTree& t) {
            std::vector<Tensor> probe;
            for (std::size_t i = 0; i < steps; ++i) {
                probe.push_back(t.at("x" + std::to_string(i)));
            }
            const auto outs = bilstm_forward(probe, p);
            double acc = 0.0;
            for (std::size_t i = 0; i < steps; ++i) acc += project(outs[i], proj[i]);
            return acc;
        };
        ParamTree analytic_x;
        for (std::size_t t = 0; t < steps; ++t) {
            analytic_x.set("x" + std::to_string(t), grads.inputs[t]);
        }
        CHECK(max_relative_error(analytic_x, finite_difference_gradient(loss_x, xin)) <
              kTol);
    }
}

TEST_CASE("attention backward matches finite differences") {
    for (std::uint64_t seed : {51u, 52u, 53u}) {
        Rng rng(seed);
        const std::size_t feat = 3, n = 4;
        ParamTree at;
        at.set("w_score", random_tensor({1, feat}, rng));
        at.set("b_score", random_tensor({1}, rng));
        for (std::size_t t = 0; t < n; ++t) {
            at.set("s" + std::to_string(t), random_tensor({feat}, rng));
        }
        const Tensor proj = random_tensor({feat}, rng);

        auto unpack_states = [n](const ParamTree& t) {
            std::vector<Tensor> states;
            for (std::size_t i = 0; i < n; ++i) states.push_back(t.at("s" + std::to_string(i)));
            return states;
        };
        auto loss = [&](const ParamTree& t) {
            const AttentionParams p{t.at("w_score"), t.at("b_score")};
            return project(attention_forward(unpack_states(t), p).context, proj);
        };

        const AttentionParams p{at.at("w_score"), at.at("b_score")};
        AttentionCache cache;
        attention_forward(unpack_states(at), p, &cache);
        const AttentionGrads grads = attention_backward(cache, p, proj);

        ParamTree analytic;
        analytic.set("w_score", grads.params.w_score);
        analytic.set("b_score", grads.params.b_score);
        for (std::size_t t = 0; t < n; ++t) {
            analytic.set("s" + std::to_string(t), grads.states[t]);
        }
        CHECK(max_relative_error(analytic, finite_difference_gradient(loss, at)) < kTol);
    }
}

TEST_CASE("dense backward matches finite differences") {
    for (std::uint64_t seed : {61u, 62u, 63u}) {
        Rng rng(seed);
        const std::size_t out = 3, in = 4;
        ParamTree at;
        at.set("w", random_tensor({out, in}, rng));
        at.set("b", random_tensor({out}, rng));
        at.set("x", random_tensor({in}, rng));
        const Tensor proj = random_tensor({out}, rng);

        auto loss = [&proj](const ParamTree& t) {
            return project(
                dense_forward(t.at("x"), t.at("w"), t.at("b"), Activation::Sigmoid),
                proj);
        };

        DenseCache cache;
        dense_forward(at.at("x"), at.at("w"), at.at("b"), Activation::Sigmoid, &cache);
        const DenseGrads grads = dense_backward(cache, at.at("w"), proj);

        ParamTree analytic;
        analytic.set("w", grads.w);
        analytic.set("b", grads.b);
        analytic.set("x", grads.input);
        CHECK(max_relative_error(analytic, finite_difference_gradient(loss, at)) < kTol);
    }
}
