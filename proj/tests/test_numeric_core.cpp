#include <gtest/gtest.h>

#include "mstn/graph.hpp"
#include "mstn/param_store.hpp"
#include "mstn/tensor.hpp"

using namespace mstn;

namespace {

TEST(SoftmaxRows, SingleElement) {
    RealArray m(1, 1);
    m(0, 0) = 3.7;
    const RealArray p = softmax_rows(m, causal_mask(1));
    EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
}

TEST(SoftmaxRows, UniformScoresGiveUniformRows) {
    const int L = 5;
    RealArray m = RealArray::Constant(L, L, 0.42);
    const RealArray p = softmax_rows(m, causal_mask(L));
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j <= i; ++j) EXPECT_NEAR(p(i, j), 1.0 / (i + 1), 1e-15);
        for (int j = i + 1; j < L; ++j) EXPECT_EQ(p(i, j), 0.0);
    }
}

TEST(SoftmaxRows, MaskedLargeScoreDoesNotOverflow) {
    RealArray m(1, 2);
    m(0, 0) = 0.0;
    m(0, 1) = 1000.0;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(1, 2);
    mask(0, 0) = true;
    mask(0, 1) = false;
    const RealArray p = softmax_rows(m, mask);
    EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
    EXPECT_EQ(p(0, 1), 0.0);
}

TEST(SoftmaxRows, RowsSumToOne) {
    Rng rng(5);
    const int L = 9;
    RealArray m(L, L);
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j < L; ++j) m(i, j) = 3.0 * rng.next_normal();
    }
    const RealArray p = softmax_rows(m, causal_mask(L));
    for (int i = 0; i < L; ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(Grad, QuadraticLoss) {
    ParamStore store;
    Param& w = store.create("w", 1, 2);
    w.value << 1.0, 2.0;
    Tape t;
    Var wv = t.param(w);
    Var loss = t.sum_all(t.mul(wv, wv));
    EXPECT_DOUBLE_EQ(t.value(loss)(0, 0), 5.0);
    t.backward(loss);
    EXPECT_DOUBLE_EQ(w.grad(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(w.grad(0, 1), 4.0);
}

TEST(Grad, UntouchedParameterGetsZero) {
    ParamStore store;
    Param& w = store.create("w", 1, 2);
    Param& unused = store.create("unused", 2, 2);
    w.value << 1.0, -1.0;
    unused.value.setConstant(3.0);
    Tape t;
    Var loss = t.sum_all(t.mul(t.param(w), t.param(w)));
    t.backward(loss);
    EXPECT_TRUE((unused.grad.array() == 0.0).all());
}

TEST(Grad, NonScalarLossRejected) {
    ParamStore store;
    Param& w = store.create("w", 2, 2);
    Tape t;
    Var wv = t.param(w);
    EXPECT_THROW(t.backward(wv), NonScalarLoss);
}

double op_soup_loss(ParamStore& store, bool with_grad) {
    Tape t;
    Var a = t.param(store.at("a"));     // 4 x 6
    Var b = t.param(store.at("b"));     // 6 x 4
    Var g = t.param(store.at("g"));     // 1 x 4
    Var bias = t.param(store.at("c"));  // 1 x 4
    Var h = t.matmul(a, b);
    h = t.layer_norm(h, g, bias);
    h = t.gelu(h);
    Var probs = t.attn_probs(h, t.add_scaled(h, h, 0.3), 2);
    h = t.attn_apply(probs, t.mul(h, h), 2);
    h = t.add_rowvec(h, bias);
    h = t.mul_rowvec(h, g);
    Var pooled = t.mean_rows(t.vstack(h, t.slice_rows(h, 1, 2)));
    Var loss = t.sum_all(t.mul(pooled, pooled));
    if (with_grad) {
        store.zero_grad();
        t.backward(loss);
    }
    return t.value(loss)(0, 0);
}

TEST(GradientCheck, PrimitiveSoup) {
    ParamStore store;
    Rng rng(11);
    store.create_normal("a", 4, 6, 0.5, rng);
    store.create_normal("b", 6, 4, 0.5, rng);
    store.create_normal("g", 1, 4, 0.3, rng);
    store.create_normal("c", 1, 4, 0.3, rng);
    store.at("g").value.array() += 1.0;
    const double err = gradient_check(
        [&](bool wg) { return op_soup_loss(store, wg); }, store, 1e-5, 16, 3);
    EXPECT_LT(err, 1e-6);
}

double gather_ce_loss(ParamStore& store, bool with_grad) {
    Tape t;
    Var emb = t.param(store.at("emb"));
    Var rows = t.gather_rows(emb, {0, 2, 1, 2});
    Var w = t.param(store.at("w"));
    Var logits = t.matmul(rows, w);
    Var loss = t.cross_entropy_next(logits, {0, 2, 1, 2});
    if (with_grad) {
        store.zero_grad();
        t.backward(loss);
    }
    return t.value(loss)(0, 0);
}

TEST(GradientCheck, GatherAndCrossEntropy) {
    ParamStore store;
    Rng rng(13);
    store.create_normal("emb", 3, 5, 0.4, rng);
    store.create_normal("w", 5, 3, 0.4, rng);
    const double err = gradient_check(
        [&](bool wg) { return gather_ce_loss(store, wg); }, store, 1e-5, 15, 7);
    EXPECT_LT(err, 1e-6);
}

TEST(GradientCheck, QuadraticIsNearExact) {
    ParamStore store;
    Rng rng(17);
    store.create_normal("w", 3, 3, 1.0, rng);
    const auto loss = [&](bool wg) {
        Tape t;
        Var w = t.param(store.at("w"));
        Var l = t.sum_all(t.mul(w, w));
        if (wg) {
            store.zero_grad();
            t.backward(l);
        }
        return t.value(l)(0, 0);
    };
    EXPECT_LT(gradient_check(loss, store, 1e-5, 9, 1), 1e-8);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    ParamStore store;
    Rng rng(19);
    store.create_normal("w", 2, 3, 1.0, rng);
    const RealArray before = store.at("w").value;
    store.adam_step(1e-2);
    EXPECT_TRUE((store.at("w").value.array() == before.array()).all());
}

TEST(Adam, FirstStepIsSignedLearningRate) {
    ParamStore store;
    store.create("w", 1, 2);
    store.at("w").grad << 3.0, -0.25;
    store.adam_step(1e-2);
    EXPECT_NEAR(store.at("w").value(0, 0), -1e-2, 1e-6);
    EXPECT_NEAR(store.at("w").value(0, 1), 1e-2, 1e-6);
    // gradients cleared by the step
    EXPECT_TRUE((store.at("w").grad.array() == 0.0).all());
}

TEST(Adam, DeterministicSteps) {
    const auto run = [] {
        ParamStore store;
        Rng rng(23);
        store.create_normal("w", 4, 4, 1.0, rng);
        for (int i = 0; i < 5; ++i) {
            store.at("w").grad = store.at("w").value * 0.1;
            store.adam_step(3e-3);
        }
        return store.at("w").value;
    };
    const RealArray a = run();
    const RealArray b = run();
    EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(ClipGradNorm, ScalesDownOnly) {
    ParamStore store;
    store.create("w", 1, 2);
    store.at("w").grad << 3.0, 4.0;  // norm 5
    store.clip_grad_norm(1.0);
    EXPECT_NEAR(store.grad_norm(), 1.0, 1e-12);
    store.at("w").grad << 0.3, 0.4;
    store.clip_grad_norm(1.0);
    EXPECT_NEAR(store.grad_norm(), 0.5, 1e-12);
}

TEST(CheckFinite, RejectsNaN) {
    RealArray m = RealArray::Zero(2, 2);
    EXPECT_NO_THROW(check_finite(m, "ok"));
    m(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(check_finite(m, "bad"), DivergedLoss);
}

}  // namespace
