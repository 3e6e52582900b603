#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sws/errors.hpp"
#include "sws/nnkit/adam.hpp"
#include "sws/nnkit/gradcheck.hpp"
#include "sws/nnkit/graph.hpp"
#include "sws/rng.hpp"

using namespace sws;
using namespace sws::nn;

namespace {

Tensor<double> random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
    Tensor<double> t(r, c);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Random values kept away from zero (relu kink safety for finite differences).
Tensor<double> random_tensor_nonzero(std::size_t r, std::size_t c, Rng& rng) {
    Tensor<double> t = random_tensor(r, c, rng);
    for (auto& v : t.data)
        if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
    return t;
}

}  // namespace

TEST_CASE("softmax rows sum to one and respect the key mask") {
    Rng rng(1);
    Graph<double> g;
    const Var x = g.input(random_tensor(5, 8, rng, -3.0, 3.0), false);
    const Var s = g.softmax_rows(x);
    for (std::size_t i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 8; ++j) sum += g.value(s).at(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }

    std::vector<std::uint8_t> mask = {1, 1, 0, 1, 0, 1, 1, 1};
    const Var sm = g.softmax_rows(x, mask);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(g.value(sm).at(i, 2) == 0.0);
        CHECK(g.value(sm).at(i, 4) == 0.0);
        double sum = 0.0;
        for (std::size_t j = 0; j < 8; ++j) sum += g.value(sm).at(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("mse and cross_entropy closed forms") {
    Rng rng(2);
    Graph<double> g;
    const Tensor<double> x = random_tensor(4, 3, rng);
    const Var xv = g.input(x, true);
    const Var zero_loss = g.mse(xv, x);
    CHECK(g.value(zero_loss).data[0] == 0.0);
    g.backward(zero_loss);
    for (double v : g.grad(xv).data) CHECK(v == 0.0);

    // uniform logits over C classes -> ln C
    for (std::size_t c : {3u, 15u, 30u}) {
        Graph<double> g2;
        const Var logits = g2.input(Tensor<double>(6, c), false);
        const Var ce = g2.cross_entropy(logits, std::vector<int>(6, 1));
        CHECK(g2.value(ce).data[0] ==
              doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-9));
    }

    // masked rows do not contribute
    Graph<double> g3;
    Tensor<double> logits(2, 4);
    logits.at(0, 0) = 5.0;
    const Var lv = g3.input(logits, false);
    const Var ce_all = g3.cross_entropy(lv, {0, 0});
    const Var ce_first = g3.cross_entropy(lv, {0, 3}, {1, 0});
    CHECK(g3.value(ce_first).data[0] < g3.value(ce_all).data[0]);
    CHECK_THROWS_AS(g3.cross_entropy(lv, {0, 0}, {0, 0}), EmptyLoss);
    CHECK_THROWS_AS(g3.mse(lv, logits, {0, 0, 0, 0, 0, 0, 0, 0}), EmptyLoss);
}

TEST_CASE("layer_norm normalizes each row before the affine part") {
    Rng rng(3);
    Graph<double> g;
    const std::size_t n = 16;
    const Var x = g.input(random_tensor(7, n, rng, -2.0, 5.0), false);
    Tensor<double> ones(1, n);
    for (auto& v : ones.data) v = 1.0;
    const Var y = g.layer_norm(x, g.constant(ones), g.constant(Tensor<double>(1, n)));
    for (std::size_t i = 0; i < 7; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += g.value(y).at(i, j);
        mean /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double d = g.value(y).at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        CHECK(std::abs(mean) < 1e-5);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("shape errors carry both shapes") {
    Graph<double> g;
    const Var a = g.input(Tensor<double>(2, 3), false);
    const Var b = g.input(Tensor<double>(4, 5), false);
    try {
        g.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2, 3)") != std::string::npos);
        CHECK(msg.find("(4, 5)") != std::string::npos);
    }
    CHECK_THROWS_AS(g.add(a, b), ShapeError);
}

namespace {

AttnVars make_attn_vars(Graph<double>& g, std::map<std::string, Var>& vars) {
    (void)g;
    return AttnVars{vars.at("wq"), vars.at("bq"), vars.at("wk"),
                    vars.at("wv"), vars.at("bv"), vars.at("wo"), vars.at("bo")};
}

ParamSet<double> attn_params(std::size_t h, Rng& rng) {
    ParamSet<double> p;
    p["wq"] = random_tensor(h, h, rng, -0.5, 0.5);
    p["wk"] = random_tensor(h, h, rng, -0.5, 0.5);
    p["wv"] = random_tensor(h, h, rng, -0.5, 0.5);
    p["wo"] = random_tensor(h, h, rng, -0.5, 0.5);
    p["bq"] = random_tensor(1, h, rng, -0.1, 0.1);
    p["bv"] = random_tensor(1, h, rng, -0.1, 0.1);
    p["bo"] = random_tensor(1, h, rng, -0.1, 0.1);
    return p;
}

}  // namespace

TEST_CASE("multi_head_self_attention contracts") {
    Rng rng(4);
    const std::size_t h = 8;
    ParamSet<double> params = attn_params(h, rng);

    SUBCASE("single token reduces to an affine map") {
        Graph<double> g;
        std::map<std::string, Var> vars;
        for (auto& [k, t] : params) vars[k] = g.input(t, false);
        const Tensor<double> x = random_tensor(1, h, rng);
        const Var xv = g.input(x, false);
        const Var out = multi_head_self_attention(g, xv, 2, make_attn_vars(g, vars));
        REQUIRE(g.value(out).rows == 1);
        REQUIRE(g.value(out).cols == h);
        // attention weight over one token is 1, so out = (x Wv + bv) Wo + bo
        Graph<double> g2;
        std::map<std::string, Var> v2;
        for (auto& [k, t] : params) v2[k] = g2.input(t, false);
        const Var direct = g2.add_rowwise(
            g2.matmul(g2.add_rowwise(g2.matmul(g2.input(x, false), v2.at("wv")), v2.at("bv")),
                      v2.at("wo")),
            v2.at("bo"));
        for (std::size_t j = 0; j < h; ++j)
            CHECK(g.value(out).at(0, j) == doctest::Approx(g2.value(direct).at(0, j)).epsilon(1e-10));
    }

    SUBCASE("shape and permutation equivariance") {
        const Tensor<double> x = random_tensor(5, h, rng);
        Graph<double> g;
        std::map<std::string, Var> vars;
        for (auto& [k, t] : params) vars[k] = g.input(t, false);
        const Var out = multi_head_self_attention(g, g.input(x, false), 4, make_attn_vars(g, vars));
        REQUIRE(g.value(out).rows == 5);
        REQUIRE(g.value(out).cols == h);

        // swap rows 1 and 3 of the input: outputs swap identically
        Tensor<double> xp = x;
        for (std::size_t j = 0; j < h; ++j) std::swap(xp.at(1, j), xp.at(3, j));
        Graph<double> gp;
        std::map<std::string, Var> vp;
        for (auto& [k, t] : params) vp[k] = gp.input(t, false);
        const Var outp = multi_head_self_attention(gp, gp.input(xp, false), 4, make_attn_vars(gp, vp));
        for (std::size_t j = 0; j < h; ++j) {
            CHECK(gp.value(outp).at(1, j) == doctest::Approx(g.value(out).at(3, j)).epsilon(1e-10));
            CHECK(gp.value(outp).at(3, j) == doctest::Approx(g.value(out).at(1, j)).epsilon(1e-10));
            CHECK(gp.value(outp).at(0, j) == doctest::Approx(g.value(out).at(0, j)).epsilon(1e-10));
        }
    }

    SUBCASE("head divisibility") {
        Graph<double> g;
        std::map<std::string, Var> vars;
        for (auto& [k, t] : params) vars[k] = g.input(t, false);
        const Var xv = g.input(random_tensor(3, h, rng), false);
        CHECK_THROWS_AS(multi_head_self_attention(g, xv, 3, make_attn_vars(g, vars)), ConfigError);
    }
}

TEST_CASE("gradient checks: every differentiable op") {
    Rng rng(5);

    SUBCASE("sum of squares is near machine precision") {
        ParamSet<double> p;
        p["w"] = random_tensor(4, 4, rng);
        const double err = grad_check(
            [](Graph<double>& g, const std::map<std::string, Var>& v) {
                const Var w = v.at("w");
                return g.mean_all(g.mul(w, w));
            },
            p, 1e-4, 17, 1.0);
        CHECK(err < 1e-7);
    }

    SUBCASE("matmul chain with bias, relu, sigmoid") {
        ParamSet<double> p;
        p["a"] = random_tensor_nonzero(3, 4, rng);
        p["b"] = random_tensor_nonzero(4, 5, rng);
        p["bias"] = random_tensor(1, 5, rng);
        const Tensor<double> target = random_tensor(3, 5, rng);
        const double err = grad_check(
            [target](Graph<double>& g, const std::map<std::string, Var>& v) {
                Var y = g.add_rowwise(g.matmul(v.at("a"), v.at("b")), v.at("bias"));
                y = g.sigmoid(g.relu(y));
                return g.mse(y, target);
            },
            p, 1e-4, 18, 1.0);
        CHECK(err < 1e-4);
    }

    SUBCASE("structural ops") {
        ParamSet<double> p;
        p["a"] = random_tensor(4, 6, rng);
        p["b"] = random_tensor(4, 6, rng);
        const Tensor<double> target = random_tensor(16, 6, rng);
        const double err = grad_check(
            [target](Graph<double>& g, const std::map<std::string, Var>& v) {
                const Var a = v.at("a");
                const Var b = v.at("b");
                const Var top = g.concat_rows({g.slice_rows(a, 0, 2), g.slice_rows(b, 2, 4)});
                const Var wide = g.concat_cols({g.slice_cols(a, 0, 3), g.slice_cols(b, 3, 6)});
                const Var mixed = g.sub(g.transpose(g.transpose(top)), g.scale(wide, 0.5));
                const Var big = g.concat_rows({g.repeat_each_row(mixed, 2), g.tile_rows(mixed, 2)});
                return g.mse(big, target);
            },
            p, 1e-4, 19, 1.0);
        CHECK(err < 1e-4);
    }

    SUBCASE("gather_rows") {
        ParamSet<double> p;
        p["table"] = random_tensor(7, 5, rng);
        const Tensor<double> target = random_tensor(4, 5, rng);
        const double err = grad_check(
            [target](Graph<double>& g, const std::map<std::string, Var>& v) {
                return g.mse(g.gather_rows(v.at("table"), {2, 2, 0, 6}), target);
            },
            p, 1e-4, 20, 1.0);
        CHECK(err < 1e-4);
    }

    SUBCASE("softmax, masked softmax, layer_norm") {
        ParamSet<double> p;
        p["x"] = random_tensor(5, 6, rng);
        p["gamma"] = random_tensor(1, 6, rng, 0.5, 1.5);
        p["beta"] = random_tensor(1, 6, rng);
        const Tensor<double> target = random_tensor(5, 6, rng);
        const double err = grad_check(
            [target](Graph<double>& g, const std::map<std::string, Var>& v) {
                const Var s = g.softmax_rows(v.at("x"));
                const Var sm = g.softmax_rows(v.at("x"), {1, 1, 0, 1, 1, 1});
                const Var ln = g.layer_norm(g.add(s, sm), v.at("gamma"), v.at("beta"));
                return g.mse(ln, target);
            },
            p, 1e-4, 21, 1.0);
        CHECK(err < 1e-4);
    }

    SUBCASE("cross entropy with mask") {
        ParamSet<double> p;
        p["logits"] = random_tensor(6, 5, rng, -2.0, 2.0);
        const double err = grad_check(
            [](Graph<double>& g, const std::map<std::string, Var>& v) {
                return g.cross_entropy(v.at("logits"), {0, 3, 2, 4, 1, 0}, {1, 1, 0, 1, 1, 1});
            },
            p, 1e-4, 22, 1.0);
        CHECK(err < 1e-4);
    }

    SUBCASE("frozen dropout") {
        ParamSet<double> p;
        p["x"] = random_tensor(6, 6, rng);
        const Tensor<double> target = random_tensor(6, 6, rng);
        const double err = grad_check(
            [target](Graph<double>& g, const std::map<std::string, Var>& v) {
                return g.mse(g.dropout(v.at("x"), 0.3, 99, /*frozen=*/true), target);
            },
            p, 1e-4, 23, 1.0);
        CHECK(err < 1e-4);
    }

    SUBCASE("multi-head attention end to end") {
        ParamSet<double> p = attn_params(8, rng);
        p["x"] = random_tensor(4, 8, rng);
        const Tensor<double> target = random_tensor(4, 8, rng);
        const double err = grad_check(
            [target](Graph<double>& g, const std::map<std::string, Var>& v) {
                AttnVars a{v.at("wq"), v.at("bq"), v.at("wk"),
                           v.at("wv"), v.at("bv"), v.at("wo"), v.at("bo")};
                const Var out =
                    multi_head_self_attention(g, v.at("x"), 2, a, {1, 1, 1, 0});
                return g.mse(out, target);
            },
            p, 1e-4, 24, 0.5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("grad_check contract errors") {
    Rng rng(6);
    ParamSet<double> p;
    p["x"] = random_tensor(3, 3, rng);

    // non-scalar output
    CHECK_THROWS_AS(grad_check(
                        [](Graph<double>& g, const std::map<std::string, Var>& v) {
                            return g.relu(v.at("x"));
                        },
                        p),
                    ContractError);

    // dropout without a frozen seed
    CHECK_THROWS_AS(grad_check(
                        [](Graph<double>& g, const std::map<std::string, Var>& v) {
                            return g.mean_all(g.dropout(v.at("x"), 0.5, 1, false));
                        },
                        p),
                    ContractError);
}

TEST_CASE("adam: scalar quadratic reaches the optimum") {
    ParamSet<float> params;
    params["w"] = Tensor<float>::scalar(0.0f);
    AdamState<float> state;
    state.lr = 0.01;
    double best = 1e9;
    int hit_step = -1;
    for (int step = 0; step < 5000; ++step) {
        const float w = params["w"].data[0];
        ParamSet<float> grads;
        grads["w"] = Tensor<float>::scalar(2.0f * (w - 3.0f));
        adam_step(params, grads, state);
        const double err = std::abs(static_cast<double>(params["w"].data[0]) - 3.0);
        if (err < best) best = err;
        if (err < 0.01 && hit_step < 0) hit_step = step;
    }
    CHECK(best < 0.01);
    CHECK(hit_step > 0);
    CHECK(hit_step < 5000);
}

TEST_CASE("adam: zero gradient leaves parameters fixed, moments decay") {
    ParamSet<float> params;
    params["w"] = Tensor<float>::scalar(1.5f);
    AdamState<float> state;
    state.lr = 0.1;

    ParamSet<float> zero;
    zero["w"] = Tensor<float>::scalar(0.0f);
    adam_step(params, zero, state);
    CHECK(params["w"].data[0] == 1.5f);  // fresh moments stay zero

    ParamSet<float> grads;
    grads["w"] = Tensor<float>::scalar(1.0f);
    adam_step(params, grads, state);
    const float m_after = state.m["w"].data[0];
    adam_step(params, zero, state);
    CHECK(state.m["w"].data[0] == doctest::Approx(m_after * 0.9f));

    ParamSet<float> bad;
    bad["w"] = Tensor<float>::scalar(std::numeric_limits<float>::quiet_NaN());
    CHECK_THROWS_AS(adam_step(params, bad, state), NumericalError);
}

TEST_CASE("adam: identical seeds give identical trajectories") {
    const auto run = [] {
        Rng rng(77);
        ParamSet<float> params;
        Tensor<float> w(3, 3);
        for (auto& v : w.data) v = static_cast<float>(rng.uniform(-1, 1));
        params["w"] = w;
        AdamState<float> state;
        state.lr = 0.05;
        for (int step = 0; step < 50; ++step) {
            ParamSet<float> grads;
            Tensor<float> gw(3, 3);
            for (std::size_t i = 0; i < gw.size(); ++i)
                gw.data[i] = params["w"].data[i] * 0.3f + static_cast<float>(rng.uniform(-0.1, 0.1));
            grads["w"] = gw;
            adam_step(params, grads, state);
        }
        return params["w"].data;
    };
    CHECK(run() == run());
}

TEST_CASE("forward determinism: identical graphs produce identical bits") {
    const auto run = [] {
        Rng rng(123);
        Graph<float> g;
        const Var x = g.input(random_tensor(6, 8, rng).cast<float>(), false);
        const Var w = g.input(random_tensor(8, 8, rng).cast<float>(), false);
        const Var y = g.softmax_rows(g.matmul(g.relu(x), w));
        return g.value(y).data;
    };
    CHECK(run() == run());
}
