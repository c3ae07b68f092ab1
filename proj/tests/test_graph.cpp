// Finite-difference checks for every tape op, run in double so the expected
// agreement is tight. Each case builds the same scalar twice: once for the
// analytic backward pass, then repeatedly with one input entry nudged by
// +/- eps for the central difference.
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "omni/graph.hpp"

using namespace omni;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

// Sum-of-squares readout turns any node into a scalar with nonzero gradient
// everywhere.
double scalar_loss(Graph<double>& g, Graph<double>::Id y) {
    std::vector<double> target(g.size(y), 0.0);
    std::vector<uint8_t> mask(g.size(y), 1);
    Graph<double>::Id loss = g.mse_masked(y, target, mask);
    g.backward(loss);
    return g.data(loss)[0];
}

// builder(inputs) -> loss value; inputs are the flat parameter buffers the
// graph aliases. Checks every entry of every buffer.
void check_gradients(std::vector<std::vector<double>> inputs,
                     const std::function<double(Graph<double>&, std::vector<std::vector<double>>&,
                                                bool)>& builder,
                     double tol = 1e-7) {
    Graph<double> g;
    builder(g, inputs, true);  // records analytic grads into `analytic`
    // The builder stores param ids in order; fetch grads through the graph.
    const auto& ids = g.params();
    REQUIRE(ids.size() == inputs.size());
    const double eps = 1e-5;
    for (size_t p = 0; p < inputs.size(); ++p) {
        const double* ga = g.grad(ids[p]);
        for (size_t i = 0; i < inputs[p].size(); ++i) {
            double saved = inputs[p][i];
            inputs[p][i] = saved + eps;
            Graph<double> gp;
            double lp = builder(gp, inputs, false);
            inputs[p][i] = saved - eps;
            Graph<double> gm;
            double lm = builder(gm, inputs, false);
            inputs[p][i] = saved;
            double fd = (lp - lm) / (2 * eps);
            double an = ga ? ga[i] : 0.0;
            double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
            CHECK(std::fabs(fd - an) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("linear matches finite differences") {
    auto x = random_vec(3 * 4, 1);
    auto W = random_vec(5 * 4, 2);
    auto b = random_vec(5, 3);
    check_gradients({x, W, b}, [](Graph<double>& g, std::vector<std::vector<double>>& in,
                                  bool full) {
        auto xi = g.param(in[0].data(), 3, 4);
        auto Wi = g.param(in[1].data(), 5, 4);
        auto bi = g.param(in[2].data(), 1, 5);
        auto y = g.linear(xi, Wi, bi);
        if (!full) {
            std::vector<double> t(g.size(y), 0.0);
            std::vector<uint8_t> m(g.size(y), 1);
            return g.data(g.mse_masked(y, t, m))[0];
        }
        return scalar_loss(g, y);
    });
}

TEST_CASE("elementwise and row ops match finite differences") {
    auto a = random_vec(4 * 6, 10);
    auto b = random_vec(4 * 6, 11);
    auto d = random_vec(2 * 6, 12);
    check_gradients({a, b, d}, [](Graph<double>& g, std::vector<std::vector<double>>& in,
                                  bool full) {
        auto ai = g.param(in[0].data(), 4, 6);
        auto bi = g.param(in[1].data(), 4, 6);
        auto di = g.param(in[2].data(), 2, 6);
        auto y = g.add(ai, bi);
        y = g.add_rows(y, di, 1);
        y = g.concat_rows({g.slice_rows(y, 0, 2), g.slice_rows(y, 2, 2)});
        y = g.transpose(g.transpose(y));
        y = g.reshape(y, 6, 4);
        if (!full) {
            std::vector<double> t(g.size(y), 0.0);
            std::vector<uint8_t> m(g.size(y), 1);
            return g.data(g.mse_masked(y, t, m))[0];
        }
        return scalar_loss(g, y);
    });
}

TEST_CASE("normalization, modulation and activations match finite differences") {
    auto x = random_vec(3 * 8, 20);
    auto sh = random_vec(8, 21, 0.3);
    auto sc = random_vec(8, 22, 0.3);
    auto gate = random_vec(8, 23, 0.5);
    check_gradients(
        {x, sh, sc, gate},
        [](Graph<double>& g, std::vector<std::vector<double>>& in, bool full) {
            auto xi = g.param(in[0].data(), 3, 8);
            auto shi = g.param(in[1].data(), 1, 8);
            auto sci = g.param(in[2].data(), 1, 8);
            auto gi = g.param(in[3].data(), 1, 8);
            auto y = g.layernorm(xi);
            y = g.modulate(y, shi, sci);
            y = g.silu(y);
            y = g.gelu(y);
            y = g.rowgate(y, gi);
            if (!full) {
                std::vector<double> t(g.size(y), 0.0);
                std::vector<uint8_t> m(g.size(y), 1);
                return g.data(g.mse_masked(y, t, m))[0];
            }
            return scalar_loss(g, y);
        },
        1e-6);
}

TEST_CASE("embedding and row tiling match finite differences") {
    auto table = random_vec(5 * 4, 30);
    auto row = random_vec(4, 31);
    std::vector<int> ids = {3, 0, 3, 1};  // repeated id exercises accumulation
    check_gradients({table, row}, [&ids](Graph<double>& g,
                                         std::vector<std::vector<double>>& in, bool full) {
        auto ti = g.param(in[0].data(), 5, 4);
        auto ri = g.param(in[1].data(), 1, 4);
        auto y = g.concat_rows({g.embed(ti, ids), g.tile_rows(ri, 3)});
        if (!full) {
            std::vector<double> t(g.size(y), 0.0);
            std::vector<uint8_t> m(g.size(y), 1);
            return g.data(g.mse_masked(y, t, m))[0];
        }
        return scalar_loss(g, y);
    });
}

TEST_CASE("rope rotation matches finite differences and is norm-preserving") {
    const int n = 4, nheads = 2, d = 8;
    auto table = std::make_shared<RopeTable<double>>();
    table->rows = n;
    table->pairs = d / nheads / 2;
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<double> ang(-3.0, 3.0);
    for (int i = 0; i < n * table->pairs; ++i) {
        double a = ang(rng);
        table->cos_ph.push_back(std::cos(a));
        table->sin_ph.push_back(std::sin(a));
    }
    auto x = random_vec(size_t(n) * d, 41);

    // Norm preservation: rotations act pairwise, so row norms are unchanged.
    {
        Graph<double> g;
        auto xi = g.input(x, n, d);
        auto y = g.rope(xi, table, nheads);
        for (int i = 0; i < n; ++i) {
            double nx = 0, ny = 0;
            for (int j = 0; j < d; ++j) {
                nx += g.data(xi)[i * d + j] * g.data(xi)[i * d + j];
                ny += g.data(y)[i * d + j] * g.data(y)[i * d + j];
            }
            CHECK(std::fabs(nx - ny) < 1e-12);
        }
    }

    check_gradients({x}, [&](Graph<double>& g, std::vector<std::vector<double>>& in, bool full) {
        auto xi = g.param(in[0].data(), n, d);
        auto y = g.rope(xi, table, nheads);
        if (!full) {
            std::vector<double> t(g.size(y), 0.0);
            std::vector<uint8_t> m(g.size(y), 1);
            return g.data(g.mse_masked(y, t, m))[0];
        }
        return scalar_loss(g, y);
    });
}

TEST_CASE("attention matches finite differences, full and segmented") {
    const int n = 5, d = 8, nheads = 2;
    auto q = random_vec(size_t(n) * d, 50, 0.7);
    auto k = random_vec(size_t(n) * d, 51, 0.7);
    auto v = random_vec(size_t(n) * d, 52);
    for (bool segmented : {false, true}) {
        CAPTURE(segmented);
        check_gradients(
            {q, k, v},
            [&](Graph<double>& g, std::vector<std::vector<double>>& in, bool full) {
                auto qi = g.param(in[0].data(), n, d);
                auto ki = g.param(in[1].data(), n, d);
                auto vi = g.param(in[2].data(), n, d);
                auto y = segmented ? g.attention_ranges(qi, ki, vi, nheads, {{0, 2}, {2, 5}},
                                                        {{0, 3}, {1, 5}})
                                   : g.attention(qi, ki, vi, nheads);
                if (!full) {
                    std::vector<double> t(g.size(y), 0.0);
                    std::vector<uint8_t> m(g.size(y), 1);
                    return g.data(g.mse_masked(y, t, m))[0];
                }
                return scalar_loss(g, y);
            },
            1e-6);
    }
}

TEST_CASE("conv3x3 matches finite differences for strides 1 and 2") {
    const int cin = 2, cout = 3, H = 5, W = 4;
    auto x = random_vec(size_t(cin) * H * W, 60);
    auto Wk = random_vec(size_t(cout) * cin * 9, 61);
    auto b = random_vec(cout, 62);
    for (int stride : {1, 2}) {
        CAPTURE(stride);
        check_gradients({x, Wk, b}, [&](Graph<double>& g,
                                        std::vector<std::vector<double>>& in, bool full) {
            auto xi = g.param(in[0].data(), cin, H * W);
            auto Wi = g.param(in[1].data(), cout, cin * 9);
            auto bi = g.param(in[2].data(), 1, cout);
            auto y = g.conv3x3(xi, Wi, bi, H, W, stride);
            if (!full) {
                std::vector<double> t(g.size(y), 0.0);
                std::vector<uint8_t> m(g.size(y), 1);
                return g.data(g.mse_masked(y, t, m))[0];
            }
            return scalar_loss(g, y);
        });
    }
}

TEST_CASE("mse_masked measures only selected entries and rejects empty masks") {
    Graph<double> g;
    auto p = g.input({1.0, 2.0, 3.0, 4.0}, 2, 2);
    std::vector<double> target = {0.0, 2.0, 0.0, 1.0};
    std::vector<uint8_t> mask = {1, 0, 0, 1};
    auto loss = g.mse_masked(p, target, mask);
    CHECK(g.data(loss)[0] == doctest::Approx((1.0 + 9.0) / 2).epsilon(1e-15));

    // pred == target -> 0; pred = target + c -> c^2.
    Graph<double> g2;
    auto q = g2.input({1.5, 2.5}, 1, 2);
    CHECK(g2.data(g2.mse_masked(q, {1.5, 2.5}, {1, 1}))[0] == 0.0);
    Graph<double> g3;
    auto r = g3.input({1.5 + 0.25, 2.5 + 0.25}, 1, 2);
    CHECK(g3.data(g3.mse_masked(r, {1.5, 2.5}, {1, 1}))[0] ==
          doctest::Approx(0.0625).epsilon(1e-15));

    Graph<double> g4;
    auto s = g4.input({1.0}, 1, 1);
    CHECK_THROWS_AS(g4.mse_masked(s, {0.0}, {0}), OmniError);
}

TEST_CASE("mse_masked agrees with a naive scalar loop") {
    std::mt19937_64 rng(70);
    std::normal_distribution<double> dist;
    const size_t n = 64;
    std::vector<double> pred(n), target(n);
    std::vector<uint8_t> mask(n);
    for (size_t i = 0; i < n; ++i) {
        pred[i] = dist(rng);
        target[i] = dist(rng);
        mask[i] = rng() % 3 != 0;
    }
    double acc = 0.0;
    long count = 0;
    for (size_t i = 0; i < n; ++i)
        if (mask[i]) {
            acc += (pred[i] - target[i]) * (pred[i] - target[i]);
            ++count;
        }
    Graph<double> g;
    auto p = g.input(pred, 8, 8);
    CHECK(g.data(g.mse_masked(p, target, mask))[0] ==
          doctest::Approx(acc / double(count)).epsilon(1e-12));
}

TEST_CASE("repeated evaluation of one graph expression is bit-identical") {
    auto run = [] {
        auto x = random_vec(6 * 6, 80);
        auto W = random_vec(6 * 6, 81);
        auto b = random_vec(6, 82);
        Graph<double> g;
        auto xi = g.param(x.data(), 6, 6);
        auto Wi = g.param(W.data(), 6, 6);
        auto bi = g.param(b.data(), 1, 6);
        auto y = g.attention(g.linear(xi, Wi, bi), xi, xi, 2);
        std::vector<double> t(g.size(y), 0.5);
        std::vector<uint8_t> m(g.size(y), 1);
        auto loss = g.mse_masked(y, t, m);
        g.backward(loss);
        std::vector<double> out{g.data(loss)[0]};
        const double* gx = g.grad(g.params()[0]);
        out.insert(out.end(), gx, gx + 36);
        return out;
    };
    CHECK(run() == run());
}
