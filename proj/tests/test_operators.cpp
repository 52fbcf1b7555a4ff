#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <gopnet/operators.hpp>

#include "support/oracles.hpp"

using Catch::Approx;
using namespace gopnet;

TEST_CASE("nodal kernels match hand-computed values") {
    CHECK(nodal_forward(NodalOp::Mul, 2.0, 3.0) == 6.0);
    CHECK(nodal_forward(NodalOp::Exp, 1.0, 1.0) == Approx(1.7182818284590452).epsilon(1e-15));
    CHECK(nodal_forward(NodalOp::Harmonic, 2.0, 0.25) == Approx(std::sin(0.5)).epsilon(1e-15));
    CHECK(nodal_forward(NodalOp::Quad, 3.0, 2.0) == 18.0);
    CHECK(nodal_forward(NodalOp::Gauss, 1.0, 2.0) == Approx(2.0 * std::exp(-4.0)).epsilon(1e-15));
    CHECK(nodal_forward(NodalOp::Dog, 1.0, 2.0) == Approx(2.0 * std::exp(-4.0)).epsilon(1e-15));
}

TEST_CASE("exponential kernel clips its argument") {
    // Arguments beyond +/-10 are clipped before exponentiation.
    CHECK(nodal_forward(NodalOp::Exp, 3.0, 4.0) == Approx(std::exp(10.0) - 1.0).epsilon(1e-15));
    CHECK(nodal_forward(NodalOp::Exp, -30.0, 1.0) == Approx(std::exp(-10.0) - 1.0).epsilon(1e-15));
    // Inside the clip the kernel is untouched.
    CHECK(nodal_forward(NodalOp::Exp, 3.0, 3.0) == Approx(std::exp(9.0) - 1.0).epsilon(1e-15));
}

TEST_CASE("nodal partial derivatives match finite differences") {
    const double grid[] = {-1.7, -0.4, 0.3, 1.2};
    for (int n = 0; n < kNodalOpCount; ++n) {
        const NodalOp op = static_cast<NodalOp>(n);
        for (double x : grid)
            for (double w : grid) {
                const NodalPartials p = nodal_partials(op, x, w);
                const double fd_w =
                    oracle::central_diff([&](double v) { return nodal_forward(op, x, v); }, w);
                const double fd_x =
                    oracle::central_diff([&](double v) { return nodal_forward(op, v, w); }, x);
                INFO("op=" << kNodalNames[n] << " x=" << x << " w=" << w);
                CHECK(p.dw == Approx(fd_w).margin(1e-7).epsilon(1e-6));
                CHECK(p.dx == Approx(fd_x).margin(1e-7).epsilon(1e-6));
            }
    }
}

TEST_CASE("nodal partials at a hand-checked point") {
    const NodalPartials q = nodal_partials(NodalOp::Quad, 2.0, 1.0);
    CHECK(q.dw == 4.0);  // x^2
    CHECK(q.dx == 4.0);  // 2 w x
    const NodalPartials m = nodal_partials(NodalOp::Mul, 2.0, 3.0);
    CHECK(m.dw == 2.0);
    CHECK(m.dx == 3.0);
}

TEST_CASE("clipped exponential keeps the clipped-argument slope") {
    // Outside the clip the derivative is that of exp(wx) - 1 evaluated at the
    // clipped argument, not zero.
    const NodalPartials p = nodal_partials(NodalOp::Exp, 3.0, 4.0);
    CHECK(p.dw == Approx(3.0 * std::exp(10.0)).epsilon(1e-12));
    CHECK(p.dx == Approx(4.0 * std::exp(10.0)).epsilon(1e-12));
}

TEST_CASE("combined nodal evaluation agrees with the separate kernels") {
    for (int n = 0; n < kNodalOpCount; ++n) {
        const NodalOp op = static_cast<NodalOp>(n);
        for (double x : {-1.1, 0.2, 0.9})
            for (double w : {-0.8, 0.5, 1.4}) {
                const NodalEval e = nodal_eval(op, x, w);
                const NodalPartials p = nodal_partials(op, x, w);
                CHECK(e.y == nodal_forward(op, x, w));
                CHECK(e.dw == p.dw);
                CHECK(e.dx == p.dx);
            }
    }
}

TEST_CASE("pooling operators match hand-computed values") {
    const std::vector<double> y123 = {1.0, 2.0, 3.0};
    const std::vector<double> y1234 = {1.0, 2.0, 3.0, 4.0};
    CHECK(pool_forward(PoolOp::Sum, y123) == 6.0);
    CHECK(pool_forward(PoolOp::Corr1, y123) == 8.0);    // 1*2 + 2*3
    CHECK(pool_forward(PoolOp::Corr2, y1234) == 30.0);  // 1*2*3 + 2*3*4
    CHECK(pool_forward(PoolOp::Max, std::vector<double>{3.0, -1.0, 2.0}) == 3.0);
}

TEST_CASE("pooling degenerate widths") {
    const std::vector<double> one = {5.0};
    const std::vector<double> two = {5.0, 2.0};
    CHECK(pool_forward(PoolOp::Corr1, one) == 0.0);  // no adjacent pair
    CHECK(pool_forward(PoolOp::Corr2, two) == 0.0);  // no triple
    CHECK(pool_forward(PoolOp::Sum, one) == 5.0);
    CHECK(pool_forward(PoolOp::Max, one) == 5.0);
    CHECK_THROWS_AS(pool_forward(PoolOp::Sum, std::vector<double>{}), DomainError);
}

TEST_CASE("pooling partials match hand computation") {
    std::vector<double> out(3);
    pool_partials(PoolOp::Corr1, std::vector<double>{1.0, 2.0, 3.0}, out);
    CHECK(out == std::vector<double>{2.0, 4.0, 2.0});

    std::vector<double> out4(4);
    pool_partials(PoolOp::Corr2, std::vector<double>{1.0, 2.0, 3.0, 4.0}, out4);
    CHECK(out4 == std::vector<double>{6.0, 15.0, 10.0, 6.0});

    pool_partials(PoolOp::Sum, std::vector<double>{1.0, 2.0, 3.0}, out);
    CHECK(out == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("max pooling sends the gradient to the first maximizer") {
    std::vector<double> out(3);
    pool_partials(PoolOp::Max, std::vector<double>{1.0, 5.0, 5.0}, out);
    CHECK(out == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("pooling partials match finite differences") {
    std::vector<double> y = {0.7, -1.3, 0.4, 2.1, -0.2};
    for (int p = 0; p < kPoolOpCount; ++p) {
        const PoolOp op = static_cast<PoolOp>(p);
        std::vector<double> dy(y.size());
        pool_partials(op, y, dy);
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double fd = oracle::central_diff(
                [&](double v) {
                    std::vector<double> probe = y;
                    probe[k] = v;
                    return pool_forward(op, probe);
                },
                y[k]);
            INFO("op=" << kPoolNames[p] << " k=" << k);
            CHECK(dy[k] == Approx(fd).margin(1e-7).epsilon(1e-6));
        }
    }
}

TEST_CASE("activations match hand-computed values") {
    CHECK(activate(ActOp::Tanh, 0.5) == std::tanh(0.5));
    CHECK(activate(ActOp::Relu, -2.0) == 0.0);
    CHECK(activate(ActOp::Relu, 3.0) == 3.0);
    CHECK(activate(ActOp::Lincut, 0.5) == 0.5);
    CHECK(activate(ActOp::Lincut, 1.7) == 1.0);
    CHECK(activate(ActOp::Lincut, -3.0) == -1.0);
}

TEST_CASE("activation derivative conventions at the kinks") {
    CHECK(activate_partial(ActOp::Relu, 0.0) == 0.0);
    CHECK(activate_partial(ActOp::Relu, 1e-9) == 1.0);
    CHECK(activate_partial(ActOp::Lincut, 1.0) == 0.0);
    CHECK(activate_partial(ActOp::Lincut, -1.0) == 0.0);
    CHECK(activate_partial(ActOp::Lincut, 0.999) == 1.0);
    CHECK(activate_partial(ActOp::Lincut, 1.001) == 0.0);
    CHECK(activate_partial(ActOp::Tanh, 0.5) ==
          Approx(1.0 - std::tanh(0.5) * std::tanh(0.5)).epsilon(1e-15));
}

TEST_CASE("operator names round-trip") {
    for (int n = 0; n < kNodalOpCount; ++n)
        CHECK(nodal_from_name(nodal_name(static_cast<NodalOp>(n))) == static_cast<NodalOp>(n));
    for (int p = 0; p < kPoolOpCount; ++p)
        CHECK(pool_from_name(pool_name(static_cast<PoolOp>(p))) == static_cast<PoolOp>(p));
    for (int a = 0; a < kActOpCount; ++a)
        CHECK(act_from_name(act_name(static_cast<ActOp>(a))) == static_cast<ActOp>(a));
    CHECK_THROWS_AS(nodal_from_name("cubic"), UnknownOperatorError);
    CHECK_THROWS_AS(pool_from_name("median"), UnknownOperatorError);
    CHECK_THROWS_AS(act_from_name("softmax"), UnknownOperatorError);
}

TEST_CASE("operator set enumeration is complete and stable") {
    const auto sets = enumerate_operator_sets();
    REQUIRE(sets.size() == 72);
    CHECK(sets.front().nodal == NodalOp::Mul);
    CHECK(sets.front().pool == PoolOp::Sum);
    CHECK(sets.front().act == ActOp::Tanh);
    CHECK(opset_label(sets.front()) == "mul/sum/tanh");
    // Nodal-major: the nodal kernel changes slowest.
    CHECK(sets[11].nodal == NodalOp::Mul);
    CHECK(sets[12].nodal == NodalOp::Exp);
    for (std::size_t i = 0; i < sets.size(); ++i)
        CHECK(opset_index(sets[i]) == static_cast<int>(i));
    // All distinct.
    for (std::size_t i = 1; i < sets.size(); ++i) CHECK_FALSE(sets[i] == sets[i - 1]);
}
