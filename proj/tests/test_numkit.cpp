#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace ub;
using num::Graph;
using num::NodeRef;
using num::ParamGroup;

namespace {

Tensor make(std::vector<std::size_t> shape, std::vector<double> vals) {
    Tensor t(shape);
    REQUIRE(t.size() == vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) t.data()[i] = vals[i];
    return t;
}

}  // namespace

TEST_CASE("tensor shape and size agree") {
    Tensor t({3, 4});
    CHECK(t.size() == 12);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 4);
    Tensor v({5});
    CHECK(v.rows() == 5);
    CHECK(v.cols() == 1);
}

TEST_CASE("tensor rejects non-finite values") {
    Tensor t({2});
    t.data()[0] = std::nan("");
    CHECK_THROWS_AS(t.check_finite("probe"), NumericError);
}

TEST_CASE("rng determinism and bounds") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(7);
    for (int i = 0; i < 1000; ++i) CHECK(r.uniform_below(13) < 13);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("rng sample without replacement is distinct and exact") {
    Rng r(3);
    auto s = r.sample_without_replacement(50, 20);
    CHECK(s.size() == 20);
    std::set<std::size_t> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 20);
    for (std::size_t v : s) CHECK(v < 50);
    auto all = r.sample_without_replacement(5, 5);
    std::set<std::size_t> u2(all.begin(), all.end());
    CHECK(u2.size() == 5);
    CHECK_THROWS_AS(r.sample_without_replacement(3, 4), ContractViolation);
}

TEST_CASE("rng derived streams differ by key") {
    Rng a = Rng::derive(1, "data");
    Rng b = Rng::derive(1, "behavior-pool");
    CHECK(a.next_u64() != b.next_u64());
    Rng c = Rng::derive(1, "data");
    Rng d = Rng::derive(1, "data");
    CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("cross entropy over five equal logits is ln 5 with softmax grads") {
    ParamGroup logits("logits", Tensor({1, 5}));
    Graph g;
    NodeRef loss = g.cross_entropy_logits(g.pick_row(g.param(logits), 0), 0);
    CHECK(g.scalar_value(loss) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    g.backward(loss);
    for (std::size_t i = 0; i < 5; ++i) {
        const double expect = 0.2 - (i == 0 ? 1.0 : 0.0);
        CHECK(logits.grad.data()[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("dot product value and grads") {
    ParamGroup x("x", make({2}, {1, 2}));
    ParamGroup y("y", make({2}, {3, 4}));
    Graph g;
    NodeRef loss = g.dot(g.param(x), g.param(y));
    CHECK(g.scalar_value(loss) == 11.0);
    g.backward(loss);
    CHECK(x.grad.data()[0] == 3.0);
    CHECK(x.grad.data()[1] == 4.0);
    CHECK(y.grad.data()[0] == 1.0);
    CHECK(y.grad.data()[1] == 2.0);
}

TEST_CASE("softmax rows sum to one and cross entropy is non-negative") {
    Rng r(9);
    Tensor t({4, 7});
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = r.uniform(-5.0, 5.0);
    Graph g;
    NodeRef sm = g.softmax_rows(g.constant(t));
    const Tensor& p = g.value(sm);
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) {
            CHECK(p.at(i, j) >= 0.0);
            s += p.at(i, j);
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    NodeRef ce = g.cross_entropy_logits(g.pick_row(g.constant(t), 2), 3);
    CHECK(g.scalar_value(ce) >= 0.0);
}

TEST_CASE("cosine identities") {
    Rng r(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x({6}), y({6});
        for (std::size_t i = 0; i < 6; ++i) {
            x.data()[i] = r.uniform(-2.0, 2.0);
            y.data()[i] = r.uniform(-2.0, 2.0);
        }
        Tensor nx({6});
        for (std::size_t i = 0; i < 6; ++i) nx.data()[i] = -x.data()[i];
        Graph g;
        CHECK(g.scalar_value(g.cosine(g.constant(x), g.constant(x))) ==
              doctest::Approx(1.0).epsilon(1e-9));
        CHECK(g.scalar_value(g.cosine(g.constant(x), g.constant(nx))) ==
              doctest::Approx(-1.0).epsilon(1e-9));
        CHECK(std::abs(g.scalar_value(g.cosine(g.constant(x), g.constant(y)))) <=
              1.0 + 1e-12);
    }
}

TEST_CASE("shape mismatch names both operands") {
    Graph g;
    NodeRef a = g.constant(Tensor({2, 3}));
    NodeRef b = g.constant(Tensor({4, 5}));
    CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
}

TEST_CASE("adam: zero grad leaves everything unchanged") {
    ParamGroup p("p", make({3}, {1, 2, 3}));
    num::adam_step({&p}, 0.1, 0.9, 0.999, 1e-8);
    CHECK(p.value.data()[0] == 1.0);
    CHECK(p.value.data()[1] == 2.0);
    CHECK(p.adam_m.data()[0] == 0.0);
    CHECK(p.adam_v.data()[0] == 0.0);
    CHECK(p.step_count == 1);
}

TEST_CASE("adam: hand-evaluated first step") {
    ParamGroup p("p", make({1}, {0.0}));
    p.grad.data()[0] = 1.0;
    num::adam_step({&p}, 0.1, 0.9, 0.999, 1e-8);
    // mhat = vhat = 1 on the first unit-grad step, so v' = -lr / (1 + eps)
    CHECK(p.value.data()[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.grad.data()[0] == 0.0);  // zeroed after the update
    CHECK(p.step_count == 1);
}

TEST_CASE("adam: identical groups stay identical and lr is validated") {
    ParamGroup a("a", make({2}, {0.5, -0.5})), b("b", make({2}, {0.5, -0.5}));
    a.grad.data()[0] = b.grad.data()[0] = 0.3;
    a.grad.data()[1] = b.grad.data()[1] = -1.7;
    num::adam_step({&a, &b}, 0.01, 0.9, 0.999, 1e-8);
    CHECK(a.value.data()[0] == b.value.data()[0]);
    CHECK(a.value.data()[1] == b.value.data()[1]);
    CHECK_THROWS_AS(num::adam_step({&a}, 0.0, 0.9, 0.999, 1e-8), ConfigError);
}

TEST_CASE("finite differences: linear layer dim 4") {
    Rng r(5);
    ParamGroup w("w", Tensor({4, 4}));
    for (std::size_t i = 0; i < w.value.size(); ++i) w.value.data()[i] = r.uniform(-1.0, 1.0);
    Tensor x({1, 4}), c({4});
    for (std::size_t i = 0; i < 4; ++i) {
        x.data()[i] = r.uniform(-1.0, 1.0);
        c.data()[i] = r.uniform(-1.0, 1.0);
    }
    auto loss = [&](bool do_backward) {
        Graph g;
        NodeRef y = g.matmul(g.constant(x), g.param(w));
        NodeRef l = g.dot(y, g.constant(c));
        if (do_backward) g.backward(l);
        return g.scalar_value(l);
    };
    CHECK(num::finite_diff_check(loss, {&w}, 1e-5) < 1e-6);
}

TEST_CASE("finite differences: random 3-layer composition at dim 8") {
    Rng r(17);
    ParamGroup w1("w1", Tensor({8, 8})), w2("w2", Tensor({8, 8})), w3("w3", Tensor({8, 8}));
    for (ParamGroup* w : {&w1, &w2, &w3})
        for (std::size_t i = 0; i < w->value.size(); ++i)
            w->value.data()[i] = r.uniform(-0.5, 0.5);
    Tensor x({1, 8});
    for (std::size_t i = 0; i < 8; ++i) x.data()[i] = r.uniform(-1.0, 1.0);
    auto loss = [&](bool do_backward) {
        Graph g;
        NodeRef h1 = g.tanh_activate(g.matmul(g.constant(x), g.param(w1)));
        NodeRef h2 = g.softmax_rows(g.matmul(h1, g.param(w2)));
        NodeRef logits = g.pick_row(g.matmul(h2, g.param(w3)), 0);
        NodeRef l = g.cross_entropy_logits(logits, 3);
        if (do_backward) g.backward(l);
        return g.scalar_value(l);
    };
    CHECK(num::finite_diff_check(loss, {&w1, &w2, &w3}, 1e-5) < 1e-6);
}

TEST_CASE("dead parameter gets exactly zero analytic gradient") {
    ParamGroup used("used", make({2}, {1.0, 2.0}));
    ParamGroup dead("dead", make({2}, {3.0, 4.0}));
    auto loss = [&](bool do_backward) {
        Graph g;
        NodeRef l = g.dot(g.param(used), g.param(used));
        (void)dead;
        if (do_backward) g.backward(l);
        return g.scalar_value(l);
    };
    const double err = num::finite_diff_check(loss, {&used, &dead}, 1e-5);
    CHECK(err < 1e-6);
    used.zero_grad();
    dead.zero_grad();
    loss(true);
    CHECK(dead.grad.data()[0] == 0.0);
    CHECK(dead.grad.data()[1] == 0.0);
}

TEST_CASE("gradients accumulate across backward calls") {
    ParamGroup x("x", make({2}, {1.0, 2.0}));
    Tensor c = make({2}, {3.0, 4.0});
    for (int pass = 0; pass < 2; ++pass) {
        Graph g;
        g.backward(g.dot(g.param(x), g.constant(c)));
    }
    CHECK(x.grad.data()[0] == 6.0);
    CHECK(x.grad.data()[1] == 8.0);
}
