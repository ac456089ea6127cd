#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "shopgraph/tensorcore.hpp"

using namespace shopgraph;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

// Weighted sum so every output entry carries a distinct gradient.
Var probe(Tape& t, Var out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(out, t.constant(random_matrix(rng, out.rows(), out.cols()))));
}

struct Fixture {
    std::mt19937_64 rng{123};
    ParamSet ps;
    Tensor& a;
    Tensor& b;
    Tensor& row;
    Tensor& w;
    Fixture()
        : a(ps.add("a", 6, 6)), b(ps.add("b", 6, 6)), row(ps.add("row", 1, 6)), w(ps.add("w", 6, 3)) {
        for (auto& t : ps.tensors()) t.value = random_matrix(rng, t.value.rows(), t.value.cols());
        a.value = random_matrix(rng, 6, 6, -2.0, 2.0);
    }
    double check(const std::function<Var(Tape&)>& f) {
        return finite_difference_check(f, {&a, &b, &row, &w}, 1e-5, 0).max_relative_error;
    }
};

const Index kSeg{0, 2, 1, 0, 2, 2};

}  // namespace

TEST_CASE("every primitive matches central differences") {
    Fixture fx;
    auto A = [&](Tape& t) { return t.param(fx.a); };
    auto B = [&](Tape& t) { return t.param(fx.b); };
    const std::vector<std::pair<const char*, std::function<Var(Tape&)>>> cases = {
        {"matmul", [&](Tape& t) { return probe(t, matmul(A(t), B(t)), 1); }},
        {"add", [&](Tape& t) { return probe(t, add(A(t), B(t)), 2); }},
        {"sub", [&](Tape& t) { return probe(t, sub(A(t), B(t)), 3); }},
        {"mul", [&](Tape& t) { return probe(t, mul(A(t), B(t)), 4); }},
        {"scale", [&](Tape& t) { return probe(t, scale(A(t), -1.7), 5); }},
        {"add_scalar", [&](Tape& t) { return probe(t, add_scalar(A(t), 0.3), 6); }},
        {"add_row", [&](Tape& t) { return probe(t, add_row(A(t), t.param(fx.row)), 7); }},
        {"concat_cols", [&](Tape& t) { return probe(t, concat_cols({A(t), t.param(fx.w), B(t)}), 8); }},
        {"leaky_relu", [&](Tape& t) { return probe(t, leaky_relu(A(t), 0.2), 9); }},
        {"exp", [&](Tape& t) { return probe(t, exp(A(t)), 10); }},
        {"log", [&](Tape& t) { return probe(t, log(add_scalar(exp(A(t)), 0.5)), 11); }},
        {"clamp_min", [&](Tape& t) { return probe(t, clamp_min(A(t), 0.1), 12); }},
        {"minimum", [&](Tape& t) { return probe(t, minimum(A(t), B(t)), 13); }},
        {"sum", [&](Tape& t) { return scale(sum(mul(A(t), B(t))), 0.7); }},
        {"mean", [&](Tape& t) { return mean(mul(A(t), A(t))); }},
        {"gather_rows", [&](Tape& t) { return probe(t, gather_rows(A(t), {5, 0, 0, 3}), 14); }},
        {"scatter_sum", [&](Tape& t) { return probe(t, scatter_sum(A(t), kSeg, 4), 15); }},
        {"segment_mean", [&](Tape& t) { return probe(t, segment_mean(A(t), kSeg, 4), 16); }},
        {"segment_softmax", [&](Tape& t) { return probe(t, segment_softmax(A(t), kSeg, 3), 17); }},
        {"segment_log_softmax", [&](Tape& t) { return probe(t, segment_log_softmax(A(t), kSeg, 3), 18); }},
        {"softmax", [&](Tape& t) { return probe(t, softmax(A(t)), 19); }},
        {"log_softmax", [&](Tape& t) { return probe(t, log_softmax(A(t)), 20); }},
        {"block_dot", [&](Tape& t) { return probe(t, block_dot(A(t), B(t), 3), 21); }},
        {"block_scale", [&](Tape& t) { return probe(t, block_scale(A(t), t.param(fx.w), 3), 22); }},
        {"masked_fill", [&](Tape& t) {
             Matrix mask = Matrix::Zero(6, 6);
             mask(1, 2) = 1.0;
             return probe(t, softmax(masked_fill(A(t), mask, -1e9)), 23);
         }},
    };
    for (const auto& [name, f] : cases) {
        INFO(std::string(name));
        CHECK(fx.check(f) < 1e-6);
    }
}

TEST_CASE("softmax properties") {
    Tape t(false);
    const Var s = softmax(t.constant(Matrix::Constant(4, 1, 2.5)));
    for (int i = 0; i < 4; ++i) CHECK(s.value()(i, 0) == doctest::Approx(0.25).epsilon(1e-15));

    std::mt19937_64 rng(5);
    const Matrix logits = random_matrix(rng, 50, 3, -1e4, 1e4);
    const Var ls = log_softmax(t.constant(logits));
    CHECK(ls.value().allFinite());
    CHECK((ls.value().array() <= 0.0).all());
    for (int c = 0; c < 3; ++c) CHECK(ls.value().col(c).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Var sm = segment_softmax(t.constant(logits), Index(50, 0), 1);
    CHECK(sm.value().allFinite());

    const Var empty_seg = segment_softmax(t.constant(Matrix::Ones(2, 1)), {0, 0}, 3);
    CHECK(empty_seg.value()(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("shape errors name both shapes") {
    Tape t;
    const Var a = t.constant(Matrix::Zero(2, 3));
    const Var b = t.constant(Matrix::Zero(2, 2));
    try {
        matmul(a, b);
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string what = e.what();
        CHECK(what.find("[2x3]") != std::string::npos);
        CHECK(what.find("[2x2]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(scatter_sum(a, {0}, 1), ShapeError);
    CHECK_THROWS_AS(block_dot(a, a, 2), ShapeError);
    CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("gradients accumulate across uses and respect constants") {
    ParamSet ps;
    Tensor& x = ps.add("x", 1, 1);
    x.value(0, 0) = 3.0;
    Tape t;
    const Var v = t.param(x);
    const Var c = t.constant(Matrix::Constant(1, 1, 2.0));
    t.backward(add(mul(v, v), mul(v, c)));
    CHECK(x.grad(0, 0) == doctest::Approx(8.0));
    CHECK(t.grad(c.id).size() == 0);
    CHECK_THROWS(t.backward(v));
}

TEST_CASE("finite difference checker") {
    std::mt19937_64 rng(9);
    ParamSet ps;
    Tensor& x = ps.add("x", 5, 1);
    x.value = random_matrix(rng, 5, 1);
    const Matrix q = [&] {
        Matrix m = random_matrix(rng, 5, 5);
        return Matrix(m * m.transpose());
    }();
    auto quad = [&](Tape& t) {
        const Var v = t.param(x);
        return sum(mul(v, matmul(t.constant(q), v)));
    };
    CHECK(finite_difference_check(quad, {&x}).max_relative_error < 1e-9);

    auto constant = [&](Tape& t) {
        t.param(x);
        return t.constant(Matrix::Constant(1, 1, 4.0));
    };
    const auto report = finite_difference_check(constant, {&x});
    CHECK(report.max_relative_error == 0.0);
    for (int i = 0; i < 5; ++i) CHECK(x.grad(i, 0) == 0.0);

    Tensor& big = ps.add("big", 40, 40);
    big.value = random_matrix(rng, 40, 40);
    auto wide = [&](Tape& t) { return mean(mul(t.param(big), t.param(big))); };
    CHECK(finite_difference_check(wide, {&big}, 1e-5, 200, 1).coordinates == 200);

    auto bad = [&](Tape& t) { return log(scale(sum(t.param(x)), 0.0)); };
    CHECK_THROWS(finite_difference_check(bad, {&x}));
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParamSet ps;
        ps.add("p", 2, 2).value.setConstant(0.5);
        Adam opt(ps);
        ps.zero_grad();
        opt.step(ps);
        CHECK((ps.at("p").value.array() == 0.5).all());
    }
    SUBCASE("first step moves by the learning rate") {
        ParamSet ps;
        Tensor& p = ps.add("p", 1, 1);
        p.value(0, 0) = 1.0;
        p.grad(0, 0) = 1.0;
        Adam opt(ps);
        opt.step(ps);
        CHECK(p.value(0, 0) == doctest::Approx(1.0 - 2e-4).epsilon(1e-10));
    }
    SUBCASE("deterministic") {
        auto run = [] {
            ParamSet ps;
            Tensor& p = ps.add("p", 3, 1);
            p.value << 1.0, -2.0, 0.5;
            Adam opt(ps);
            for (int k = 0; k < 10; ++k) {
                p.grad = p.value * 2.0;
                opt.step(ps);
            }
            return ps;
        };
        CHECK(run().same_values(run()));
    }
    SUBCASE("non-finite gradient names the parameter") {
        ParamSet ps;
        ps.add("good", 1, 1);
        Tensor& bad = ps.add("bad", 1, 1);
        bad.grad(0, 0) = std::nan("");
        Adam opt(ps);
        try {
            opt.step(ps);
            FAIL("expected an error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("bad") != std::string::npos);
        }
        CHECK(bad.value(0, 0) == 0.0);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    std::mt19937_64 rng(77);
    ParamSet ps;
    ps.add("enc.w", 3, 4).value = random_matrix(rng, 3, 4);
    ps.add("head.b", 1, 7).value = random_matrix(rng, 1, 7, -1e300, 1e300);
    Checkpoint ckpt;
    ckpt.manifest = "{\"layers\":5}";
    add_to_checkpoint(ckpt, "actor/", ps);

    const auto path = std::filesystem::temp_directory_path() / "shopgraph_ckpt_test.bin";
    save_checkpoint(ckpt, path);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    CHECK(back == ckpt);
    CHECK(checkpoint_to_bytes(back) == checkpoint_to_bytes(ckpt));

    ParamSet restored;
    restored.add("enc.w", 3, 4);
    restored.add("head.b", 1, 7);
    load_from_checkpoint(back, "actor/", restored);
    CHECK(restored.same_values(ps));

    ParamSet wrong;
    wrong.add("enc.w", 4, 3);
    CHECK_THROWS_AS(load_from_checkpoint(back, "actor/", wrong), ShapeError);
    std::string bytes = checkpoint_to_bytes(ckpt);
    CHECK_THROWS(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 3)));
    bytes[8] = 9;
    CHECK_THROWS(checkpoint_from_bytes(bytes));
}
