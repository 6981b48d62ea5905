#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "fedload/errors.hpp"
#include "fedload/rng.hpp"
#include "fedload/tensor.hpp"

using namespace fedload;

TEST_CASE("matmul identity leaves a matrix unchanged") {
    Tensor id({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(11);
    std::vector<double> vals(9);
    for (auto& v : vals) v = rng.uniform(-5.0, 5.0);
    Tensor m({3, 3}, vals);
    const Tensor out = matmul(id, m);
    for (std::size_t i = 0; i < 9; ++i) CHECK(out[i] == m[i]);
}

TEST_CASE("matmul 1x1 worked value") {
    const Tensor out = matmul(Tensor({1, 1}, {2.0}), Tensor({1, 1}, {3.0}));
    CHECK(out[0] == 6.0);
}

TEST_CASE("matmul matches a triple-loop oracle") {
    Rng rng(42);
    std::vector<double> av(5 * 4), bv(4 * 3);
    for (auto& v : av) v = rng.uniform(-2.0, 2.0);
    for (auto& v : bv) v = rng.uniform(-2.0, 2.0);
    Tensor a({5, 4}, av), b({4, 3}, bv);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 4; ++k) acc += av[i * 4 + k] * bv[k * 3 + j];
            CHECK(std::fabs(c.at(i, j) - acc) < 1e-12);
        }
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a({2, 3});
    Tensor b({2, 2});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string what = e.what();
        CHECK(what.find("[2x3]") != std::string::npos);
        CHECK(what.find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("sigmoid worked values and symmetry") {
    CHECK(sigmoid(Tensor({1}, {0.0}))[0] == 0.5);
    const double ln3 = std::log(3.0);
    CHECK(sigmoid(Tensor({1}, {ln3}))[0] == doctest::Approx(0.75).epsilon(1e-12));
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-30.0, 30.0);
        const double s = sigmoid(Tensor({1}, {x}))[0];
        const double sm = sigmoid(Tensor({1}, {-x}))[0];
        CHECK(std::fabs(s + sm - 1.0) < 1e-12);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("sigmoid saturates without producing NaN") {
    const Tensor out = sigmoid(Tensor({4}, {-1000.0, -50.0, 50.0, 1000.0}));
    CHECK(out.all_finite());
    CHECK(out[0] >= 0.0);
    CHECK(out[3] <= 1.0);
    CHECK(out[3] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tanh_act oddness and saturation") {
    CHECK(tanh_act(Tensor({1}, {0.0}))[0] == 0.0);
    Rng rng(13);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-10.0, 10.0);
        CHECK(tanh_act(Tensor({1}, {-x}))[0] == doctest::Approx(-tanh_act(Tensor({1}, {x}))[0]));
    }
    CHECK(std::fabs(tanh_act(Tensor({1}, {25.0}))[0] - 1.0) < 1e-9);
}

TEST_CASE("softmax worked values") {
    const Tensor uniform = softmax(Tensor({4}, {2.0, 2.0, 2.0, 2.0}));
    for (std::size_t i = 0; i < 4; ++i) CHECK(uniform[i] == doctest::Approx(0.25));

    const Tensor forced =
        softmax(Tensor({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
    CHECK(forced[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(forced[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
    CHECK(forced[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("softmax shift invariance and unit sum over extreme inputs") {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> xs(6);
        for (auto& v : xs) v = rng.uniform(-700.0, 700.0);
        const Tensor base = softmax(Tensor({6}, xs));
        double sum = 0.0;
        for (std::size_t i = 0; i < 6; ++i) sum += base[i];
        CHECK(std::fabs(sum - 1.0) < 1e-12);

        std::vector<double> shifted = xs;
        const double c = rng.uniform(-50.0, 50.0);
        for (auto& v : shifted) v += c;
        const Tensor moved = softmax(Tensor({6}, shifted));
        for (std::size_t i = 0; i < 6; ++i) CHECK(std::fabs(moved[i] - base[i]) < 1e-12);
    }
}

TEST_CASE("softmax rejects empty input") {
    CHECK_THROWS_AS(softmax(Tensor({0})), std::invalid_argument);
}

TEST_CASE("elementwise ops preserve shape and reject mismatches") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({2, 3}, {6, 5, 4, 3, 2, 1});
    CHECK(add(a, b).shape() == a.shape());
    CHECK(sub(a, b).shape() == a.shape());
    CHECK(hadamard(a, b).shape() == a.shape());
    CHECK(scale(a, 2.0).shape() == a.shape());
    CHECK(add(a, b)[0] == 7.0);
    CHECK(hadamard(a, b)[2] == 12.0);
    CHECK_THROWS_AS(add(a, Tensor({3, 2})), ShapeError);
}

TEST_CASE("tensor data length always matches shape product") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);
    Tensor t({2, 2});
    CHECK(t.size() == 4);
    CHECK(t.all_finite());
}
