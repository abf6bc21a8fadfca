#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "opvi/autodiff.hpp"
#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

using namespace opvi;
using ad::Tape;
using ad::Var;

namespace {

using Program = std::function<Var(Var)>;

std::vector<double> central_difference(const Program& f, std::vector<double> x, double h = 1e-5)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = ad::record(f, x).value();
        x[i] = saved - h;
        const double down = ad::record(f, x).value();
        x[i] = saved;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

void check_gradient(const Program& f, const std::vector<double>& x)
{
    auto rec = ad::record(f, x);
    const auto g = rec.gradient();
    const auto fd = central_difference(f, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CAPTURE(i);
        CHECK(std::abs(g[i] - fd[i]) <= 1e-4 * (1 + std::abs(g[i])));
    }
}

} // namespace

TEST_CASE("identity and sigmoid values")
{
    const std::vector<double> x{0.7, -1.5};
    auto rec = ad::record([](Var v) { return ad::sum(v); }, x);
    CHECK(rec.value() == doctest::Approx(-0.8));
    auto id = ad::record([](Var v) { return v; }, std::vector<double>{2.5});
    CHECK(id.value() == 2.5);
    CHECK(id.gradient() == std::vector<double>{1.0});

    auto s = ad::record([](Var v) { return ad::sigmoid(v); }, std::vector<double>{0.0});
    CHECK(s.value() == 0.5);
    CHECK(s.gradient()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("log-sigmoid of a relaxed threshold")
{
    // log sigmoid(32 (0.25 - 0.15)) = log sigmoid(3.2), mpmath: -0.0399533331624...
    auto rec = ad::record([](Var x) { return ad::log_sigmoid(32.0 * (0.25 - x)); }, std::vector<double>{0.15});
    CHECK(rec.value() == doctest::Approx(-0.0399533331624).epsilon(1e-11));
    CHECK(std::exp(rec.value()) == doctest::Approx(0.960834277203236).epsilon(1e-12));
    // derivative: -32 * sigmoid(-3.2)
    CHECK(rec.gradient()[0] == doctest::Approx(-32.0 * (1 - 0.960834277203236)).epsilon(1e-12));
}

TEST_CASE("plain helpers are stable in the tails")
{
    CHECK(ad::sigmoid(-800.0) == 0.0);
    CHECK(ad::sigmoid(800.0) == 1.0);
    CHECK(ad::log_sigmoid(-800.0) == -800.0);
    CHECK(ad::log_sigmoid(800.0) == 0.0);
    CHECK(ad::log_sigmoid(-40.0) == doctest::Approx(-40.0 - std::log1p(std::exp(-40.0))));
    CHECK(ad::sigmoid(-11.52) == doctest::Approx(9.9294057e-6).epsilon(1e-7));
}

TEST_CASE("square has gradient 2x")
{
    auto rec = ad::record([](Var x) { return x * x; }, std::vector<double>{3.0});
    CHECK(rec.value() == 9.0);
    CHECK(rec.gradient()[0] == 6.0);
}

TEST_CASE("every primitive matches finite differences")
{
    const std::vector<double> x{0.3, -0.7, 1.2, 0.45};
    check_gradient([](Var v) { return ad::sum(v * v * v); }, x);
    check_gradient([](Var v) { return ad::sum(ad::exp(v) / (ad::element(v, 2) + 2.0)); }, x);
    check_gradient([](Var v) { return ad::sum(ad::log(v * v + 1.0)); }, x);
    check_gradient([](Var v) { return ad::sum(ad::sigmoid(3.0 * v - 1.0)); }, x);
    check_gradient([](Var v) { return ad::sum(ad::log_sigmoid(-5.0 * v)); }, x);
    check_gradient([](Var v) { return ad::sum(ad::abs(v - 0.1)); }, x);
    check_gradient([](Var v) { return ad::sum(ad::min(v, ad::element(v, 3)) + ad::max(v, ad::element(v, 0))); }, x);
    check_gradient([](Var v) { return ad::dot(v, ad::exp(-v)); }, x);
    check_gradient([](Var v) { return ad::sum(ad::slice(v, 1, 2) * ad::slice(v, 2, 2)); }, x);
    check_gradient([](Var v) {
        const std::vector<std::uint32_t> idx{3, 3, 0, 1};
        return ad::dot(ad::gather(v, idx), v);
    }, x);
    check_gradient([](Var v) {
        return ad::sum(ad::concat({ad::element(v, 1) * 2.0, v, -ad::slice(v, 0, 2)}) * ad::element(v, 2));
    }, x);
    check_gradient([](Var v) { return 1.0 - ad::sum(4.0 - v / 3.0); }, x);
    check_gradient([](Var v) {
        Tape& t = *v.tape();
        static const std::vector<double> weights{1.0, -2.0, 0.5, 3.0};
        return ad::dot(t.constant_ref(weights), ad::log_sigmoid(v)) + ad::sum(t.constant(weights) * v);
    }, x);
}

TEST_CASE("random compositions match finite differences")
{
    Rng rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> x(5);
        for (double& xi : x)
            xi = rng.uniform(-2.0, 2.0);
        const double a = rng.uniform(-3.0, 3.0);
        const double b = rng.uniform(-3.0, 3.0);
        check_gradient([a, b](Var v) {
            const Var z = ad::sigmoid(a * v) * ad::exp(b * ad::sigmoid(v));
            return ad::sum(ad::log_sigmoid(z - 0.5) + z * ad::element(v, 0));
        }, x);
    }
}

TEST_CASE("gradients are linear in the program")
{
    const Program f = [](Var v) { return ad::sum(ad::sigmoid(v) * v); };
    const Program g = [](Var v) { return ad::dot(v, ad::exp(v)); };
    const double a = 1.7, b = -0.4;
    const std::vector<double> x{0.2, -1.1, 0.9};
    auto rf = ad::record(f, x);
    auto rg = ad::record(g, x);
    auto rc = ad::record([&](Var v) { return a * f(v) + b * g(v); }, x);
    const auto gf = rf.gradient(), gg = rg.gradient(), gc = rc.gradient();
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) <= 1e-10);
}

TEST_CASE("ties and kinks")
{
    // abs at zero has subgradient 0
    auto r = ad::record([](Var v) { return ad::abs(v); }, std::vector<double>{0.0});
    CHECK(r.gradient()[0] == 0.0);

    // min/max route ties to the first argument
    Tape t;
    const Var a = t.input(1.0);
    const Var b = t.input(1.0);
    t.backward(ad::min(a, b) + 2.0 * ad::max(b, a));
    CHECK(t.grad(a)[0] == 1.0);
    CHECK(t.grad(b)[0] == 2.0);
}

TEST_CASE("scalars broadcast against vectors")
{
    Tape t;
    const Var v = t.input(std::vector<double>{1.0, 2.0, 3.0});
    const Var s = t.input(0.5);
    const Var c = t.constant(std::vector<double>{1.0, 1.0});
    const Var out = ad::sum(v * s + s);
    CHECK(out.scalar() == doctest::Approx(4.5));
    t.backward(out);
    CHECK(t.grad(s)[0] == doctest::Approx(9.0));
    CHECK(t.grad(v)[1] == 0.5);
    CHECK(t.grad(c).size() == 2);
    CHECK(t.grad(c)[0] == 0.0);
}

TEST_CASE("misuse is reported")
{
    Tape t1, t2;
    const Var a = t1.input(std::vector<double>{1.0, 2.0});
    const Var b = t2.input(1.0);
    CHECK_THROWS_AS(a + b, UnsupportedOperationError);
    CHECK_THROWS_AS(a + t1.input(std::vector<double>{1.0, 2.0, 3.0}), UnsupportedOperationError);
    CHECK_THROWS_AS(t1.backward(a), UnsupportedOperationError);
    CHECK_THROWS_AS(a.scalar(), UnsupportedOperationError);
    CHECK_THROWS_AS(ad::slice(a, 1, 2), UnsupportedOperationError);
    CHECK_THROWS_AS(ad::gather(a, std::vector<std::uint32_t>{2}), UnsupportedOperationError);
    CHECK_THROWS_AS(ad::record([](Var v) { return v; }, std::vector<double>{1.0, 2.0}), UnsupportedOperationError);
    CHECK_THROWS_AS(ad::record([&](Var) { return b; }, std::vector<double>{1.0}), UnsupportedOperationError);
    CHECK_THROWS_AS(ad::exp(Var{}), UnsupportedOperationError);
    t1.clear();
    CHECK_THROWS_AS(ad::exp(a), UnsupportedOperationError);
}

TEST_CASE("poisoned values name the offending node")
{
    Tape t;
    const Var x = t.input(std::vector<double>{1.0, 0.0});
    const Var y = ad::exp(x);         // node 1
    const Var z = ad::log(x);         // node 2: log 0 = -inf
    const Var out = ad::sum(y + z);
    CHECK(t.first_non_finite_value() == 2);
    try {
        t.backward(out);
        FAIL("expected NonFiniteGradientError");
    } catch (const NonFiniteGradientError& e) {
        CHECK(e.node_index() == 2);
    }
}

TEST_CASE("a cleared tape can be reused")
{
    Tape t;
    for (int round = 0; round < 3; ++round) {
        t.clear();
        const Var x = t.input(std::vector<double>{1.0, 2.0});
        const Var out = ad::dot(x, x);
        t.backward(out);
        CHECK(t.grad(x)[0] == 2.0);
        CHECK(t.grad(x)[1] == 4.0);
    }
}
