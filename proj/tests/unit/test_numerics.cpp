#include "support.hpp"

#include "aircast/autodiff.hpp"
#include "aircast/error.hpp"
#include "aircast/io.hpp"
#include "aircast/params.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

using namespace aircast;
using aircast::test::random_tensor;

namespace {

using OpFn = std::function<nn::Var(nn::Graph&, std::vector<nn::Var>&)>;

// Max relative error of backward() against central differences of a random
// linear functional of the op output, over every input element.
double op_gradcheck(const std::vector<Tensor>& inputs, const OpFn& f, std::uint64_t seed = 5)
{
    std::mt19937_64 rng(seed);
    nn::ParamStore store;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        store.create("in" + std::to_string(i), inputs[i]);
    }
    Tensor weights;
    auto eval = [&](bool track) {
        nn::Graph g(track);
        std::vector<nn::Var> vars;
        for (std::size_t i = 0; i < store.size(); ++i) {
            vars.push_back(g.parameter(store[i]));
        }
        const nn::Var out = f(g, vars);
        if (weights.empty()) {
            weights = random_tensor(out.shape(), rng);
        }
        const std::size_t m = out.value().size();
        const nn::Var loss =
            nn::reshape(nn::matmul(nn::reshape(out, {1, m}), g.constant(weights.reshaped({m, 1}))), {});
        if (track) {
            g.backward(loss);
        }
        return loss.value().item();
    };
    store.zero_grad();
    eval(true);
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < store.size(); ++i) {
        nn::Parameter& p = store[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double orig = p.value[j];
            p.value[j] = orig + h;
            const double up = eval(false);
            p.value[j] = orig - h;
            const double down = eval(false);
            p.value[j] = orig;
            const double num = (up - down) / (2 * h);
            const double ana = p.grad[j];
            worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
        }
    }
    return worst;
}

} // namespace

TEST_CASE("softmax rows")
{
    nn::Graph g(false);
    SUBCASE("worked example")
    {
        const Tensor s = nn::softmax_rows(g.constant(Tensor::matrix(1, 3, {1, 2, 3}))).value();
        CHECK(s[0] == doctest::Approx(0.090031).epsilon(1e-5));
        CHECK(s[1] == doctest::Approx(0.244728).epsilon(1e-5));
        CHECK(s[2] == doctest::Approx(0.665241).epsilon(1e-5));
        const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
        CHECK(std::abs(s[2] - std::exp(3.0) / z) < 1e-15);
    }
    SUBCASE("equal logits")
    {
        const Tensor s = nn::softmax_rows(g.constant(Tensor::matrix(1, 4, {0.3, 0.3, 0.3, 0.3}))).value();
        for (double v : s.data()) {
            CHECK(v == doctest::Approx(0.25));
        }
    }
    SUBCASE("large logit")
    {
        const Tensor s = nn::softmax_rows(g.constant(Tensor::matrix(1, 2, {0, 800}))).value();
        CHECK(s[0] < 1e-300);
        CHECK(s[1] == 1.0);
    }
    SUBCASE("shift invariance and row sums")
    {
        std::mt19937_64 rng(11);
        const Tensor x = random_tensor({5, 7}, rng, 3.0);
        Tensor shifted = x;
        for (double& v : shifted.data()) {
            v += 12.5;
        }
        const Tensor a = nn::softmax_rows(g.constant(x)).value();
        const Tensor b = nn::softmax_rows(g.constant(shifted)).value();
        CHECK(max_abs_diff(a, b) < 1e-9);
        for (std::size_t i = 0; i < 5; ++i) {
            double s = 0.0;
            std::size_t arg_a = 0, arg_b = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                s += a.at(i, j);
                arg_a = a.at(i, j) > a.at(i, arg_a) ? j : arg_a;
                arg_b = b.at(i, j) > b.at(i, arg_b) ? j : arg_b;
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
            CHECK(arg_a == arg_b);
        }
    }
}

TEST_CASE("layer norm rows")
{
    nn::Graph g(false);
    const nn::Var gain = g.constant(Tensor({3}, 1.0));
    const nn::Var bias = g.constant(Tensor({3}, 0.0));
    SUBCASE("worked example")
    {
        const Tensor y = nn::layer_norm_rows(g.constant(Tensor::matrix(1, 3, {1, 2, 3})), gain, bias).value();
        const double expect = 1.0 / std::sqrt(2.0 / 3.0 + 1e-5);
        CHECK(std::abs(y[0] + expect) < 1e-12);
        CHECK(std::abs(y[1]) < 1e-12);
        CHECK(std::abs(y[2] - expect) < 1e-12);
        CHECK(y[2] == doctest::Approx(1.224742).epsilon(1e-5));
    }
    SUBCASE("constant row gives zeros")
    {
        const Tensor y = nn::layer_norm_rows(g.constant(Tensor::matrix(1, 3, {4, 4, 4})), gain, bias).value();
        for (double v : y.data()) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("standardised input")
    {
        const Tensor y = nn::layer_norm_rows(g.constant(Tensor::matrix(1, 2, {-1, 1})), g.constant(Tensor({2}, 1.0)),
                                             g.constant(Tensor({2}, 0.0)))
                             .value();
        CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-5));
        CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("zero mean, unit variance")
    {
        std::mt19937_64 rng(3);
        const Tensor y = nn::layer_norm_rows(g.constant(random_tensor({4, 9}, rng, 5.0)), g.constant(Tensor({9}, 1.0)),
                                             g.constant(Tensor({9}, 0.0)))
                             .value();
        for (std::size_t i = 0; i < 4; ++i) {
            double m = 0.0, v = 0.0;
            for (std::size_t j = 0; j < 9; ++j) {
                m += y.at(i, j) / 9.0;
            }
            for (std::size_t j = 0; j < 9; ++j) {
                v += (y.at(i, j) - m) * (y.at(i, j) - m) / 9.0;
            }
            CHECK(std::abs(m) < 1e-6);
            CHECK(std::abs(v - 1.0) < 1e-4);
        }
    }
}

TEST_CASE("conv2d")
{
    nn::Graph g(false);
    SUBCASE("identity 1x1 kernel")
    {
        std::mt19937_64 rng(2);
        const Tensor x = random_tensor({3, 4, 5}, rng);
        Tensor w({3, 3, 1, 1}, 0.0);
        for (std::size_t c = 0; c < 3; ++c) {
            w[c * 3 + c] = 1.0;
        }
        CHECK(nn::conv2d(g.constant(x), g.constant(w), std::nullopt, 1, 0).value() == x);
    }
    SUBCASE("ones kernel on a constant field")
    {
        const Tensor x({1, 5, 5}, 2.5);
        const Tensor w({1, 1, 3, 3}, 1.0);
        const Tensor y = nn::conv2d(g.constant(x), g.constant(w), std::nullopt, 1, 1).value();
        CHECK(y.at(0, 2, 2) == doctest::Approx(9 * 2.5));
        CHECK(y.at(0, 0, 0) == doctest::Approx(4 * 2.5));
    }
    SUBCASE("averaging kernel against a sliding-window oracle")
    {
        const Tensor x = Tensor({1, 2, 2}, {1, 2, 3, 4});
        const Tensor w({1, 1, 3, 3}, 1.0 / 9.0);
        const Tensor y = nn::conv2d(g.constant(x), g.constant(w), std::nullopt, 1, 1).value();
        const auto expect = test::ref::conv2d(x, w, nullptr, 1);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(std::abs(y[i] - expect[i]) < 1e-15);
            CHECK(y[i] == doctest::Approx(10.0 / 9.0));
        }
    }
    SUBCASE("random multi-channel against the oracle")
    {
        std::mt19937_64 rng(4);
        const Tensor x = random_tensor({3, 5, 6}, rng);
        const Tensor w = random_tensor({4, 3, 3, 3}, rng);
        const Tensor b = random_tensor({4}, rng);
        const Tensor y = nn::conv2d(g.constant(x), g.constant(w), g.constant(b), 1, 1).value();
        const auto expect = test::ref::conv2d(x, w, &b, 1);
        REQUIRE(y.size() == expect.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            CHECK(std::abs(y[i] - expect[i]) < 1e-12);
        }
    }
    SUBCASE("channel mismatch and even kernels")
    {
        CHECK_THROWS_AS(nn::conv2d(g.constant(Tensor({2, 4, 4})), g.constant(Tensor({1, 3, 3, 3})), std::nullopt, 1, 1),
                        ShapeError);
        CHECK_THROWS(nn::conv2d(g.constant(Tensor({1, 4, 4})), g.constant(Tensor({1, 1, 2, 2})), std::nullopt, 1, 0));
    }
}

TEST_CASE("backward basics")
{
    nn::ParamStore store;
    nn::Parameter& p = store.create("p", Tensor::from({1.5, -2.0, 0.25}));
    SUBCASE("sum gives ones")
    {
        nn::Graph g;
        g.backward(nn::sum(g.parameter(p)));
        for (double v : p.grad.data()) {
            CHECK(v == 1.0);
        }
    }
    SUBCASE("half squared norm gives p")
    {
        nn::Graph g;
        const nn::Var v = nn::reshape(g.parameter(p), {1, 3});
        g.backward(nn::reshape(nn::scale(nn::matmul(v, nn::transpose(v)), 0.5), {}));
        CHECK(p.grad == p.value);
    }
    SUBCASE("parameter used twice accumulates")
    {
        nn::Graph g;
        const nn::Var v = g.parameter(p);
        g.backward(nn::sum(nn::add(v, v)));
        for (double x : p.grad.data()) {
            CHECK(x == 2.0);
        }
    }
    SUBCASE("non-scalar loss rejected")
    {
        nn::Graph g;
        CHECK_THROWS_AS(g.backward(g.parameter(p)), ShapeError);
    }
    SUBCASE("non-finite values trip an error")
    {
        nn::Graph g;
        CHECK_THROWS_AS(nn::scale(g.parameter(p), std::numeric_limits<double>::infinity()), NumericError);
    }
}

TEST_CASE("every op passes a finite-difference check")
{
    std::mt19937_64 rng(17);
    auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
    CHECK(op_gradcheck({r({3, 4}), r({4, 2})}, [](nn::Graph&, auto& v) { return nn::matmul(v[0], v[1]); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 4})}, [](nn::Graph&, auto& v) { return nn::transpose(v[0]); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 4}), r({3, 4})}, [](nn::Graph&, auto& v) { return nn::add(v[0], v[1]); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 4}), r({4})}, [](nn::Graph&, auto& v) { return nn::add_bias(v[0], v[1]); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 4})}, [](nn::Graph&, auto& v) { return nn::scale(v[0], -1.7); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 4})}, [](nn::Graph&, auto& v) { return nn::relu(v[0]); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 5})}, [](nn::Graph&, auto& v) { return nn::softmax_rows(v[0]); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 5}), r({5}), r({5})},
                       [](nn::Graph&, auto& v) { return nn::layer_norm_rows(v[0], v[1], v[2]); })
          < 1e-5);
    CHECK(op_gradcheck({r({2, 5, 4}), r({3, 2, 3, 3}), r({3})},
                       [](nn::Graph&, auto& v) { return nn::conv2d(v[0], v[1], v[2], 1, 1); })
          < 1e-6);
    CHECK(op_gradcheck({r({2, 5, 5}), r({3, 2, 3, 3})},
                       [](nn::Graph&, auto& v) { return nn::conv2d(v[0], v[1], std::nullopt, 2, 0); })
          < 1e-6);
    CHECK(op_gradcheck({r({2, 6})}, [](nn::Graph&, auto& v) { return nn::reshape(v[0], {3, 4}); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 2}), r({3, 4})},
                       [](nn::Graph&, auto& v) {
                           const nn::Var parts[] = {v[0], v[1]};
                           return nn::concat_cols(parts);
                       })
          < 1e-6);
    CHECK(op_gradcheck({r({1, 4})}, [](nn::Graph&, auto& v) { return nn::broadcast_rows(v[0], 3); }) < 1e-6);
    CHECK(op_gradcheck({r({5, 3})}, [](nn::Graph&, auto& v) { return nn::embedding_row(v[0], 2); }) < 1e-6);
    CHECK(op_gradcheck({r({3, 4})}, [](nn::Graph&, auto& v) { return nn::sum(v[0]); }) < 1e-6);
    const Tensor target = r({4});
    const double taus[] = {0.1, 0.5, 0.9};
    CHECK(op_gradcheck({r({4, 3})},
                       [&](nn::Graph&, auto& v) { return nn::pinball_loss(v[0], target, taus); })
          < 1e-6);
}

TEST_CASE("forward is deterministic")
{
    std::mt19937_64 rng(8);
    const Tensor a = random_tensor({6, 6}, rng), b = random_tensor({6, 6}, rng);
    auto run = [&] {
        nn::Graph g(false);
        return nn::softmax_rows(nn::matmul(g.constant(a), g.constant(b))).value();
    };
    CHECK(run() == run());
}

TEST_CASE("adam")
{
    nn::ParamStore store;
    nn::Parameter& p = store.create("p", Tensor::from({1.0}));
    SUBCASE("single step moves by about lr")
    {
        p.grad[0] = 1.0;
        nn::adam_step(store, {0.1});
        // m_hat = 1, v_hat = 1, step = 0.1 / (1 + 1e-8)
        CHECK(std::abs(p.value[0] - (1.0 - 0.1 / (1.0 + 1e-8))) < 1e-15);
        CHECK(p.value[0] == doctest::Approx(0.9));
        CHECK(store.step == 1);
    }
    SUBCASE("zero gradient leaves parameters")
    {
        nn::adam_step(store, {0.1});
        CHECK(p.value[0] == 1.0);
    }
    SUBCASE("deterministic")
    {
        nn::ParamStore other;
        nn::Parameter& q = other.create("p", Tensor::from({1.0}));
        for (int i = 0; i < 5; ++i) {
            p.grad[0] = q.grad[0] = 0.3 * i - 0.5;
            nn::adam_step(store, {});
            nn::adam_step(other, {});
        }
        CHECK(p.value == q.value);
        CHECK(p.second_moment == q.second_moment);
    }
    SUBCASE("shape mismatch")
    {
        p.grad = Tensor({2}, 0.0);
        CHECK_THROWS_AS(nn::adam_step(store, {}), ShapeError);
    }
}

TEST_CASE("param store and checkpoints")
{
    test::TempDir dir;
    std::mt19937_64 rng(1);
    nn::ParamStore store;
    store.create("a", random_tensor({2, 3}, rng));
    store.create("b", random_tensor({4}, rng));
    CHECK_THROWS_AS(store.create("a", Tensor({1})), ValidationError);
    store[0].grad.fill(0.5);
    nn::adam_step(store, {});
    nn::save_checkpoint(store, dir.path() / "ck");

    nn::ParamStore loaded;
    loaded.create("a", Tensor({2, 3}));
    loaded.create("b", Tensor({4}));
    nn::load_checkpoint(loaded, dir.path() / "ck");
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded[i].value == store[i].value);
        CHECK(loaded[i].first_moment == store[i].first_moment);
        CHECK(loaded[i].second_moment == store[i].second_moment);
    }
    CHECK(loaded.step == 1);

    nn::ParamStore wrong;
    wrong.create("a", Tensor({3, 2}));
    wrong.create("b", Tensor({4}));
    CHECK_THROWS_AS(nn::load_checkpoint(wrong, dir.path() / "ck"), ValidationError);
    CHECK_THROWS_AS(nn::load_checkpoint(loaded, dir.path() / "missing"), MissingArtifactError);
}
