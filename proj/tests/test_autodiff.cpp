#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "handdi/autodiff.hpp"
#include "handdi/errors.hpp"
#include "handdi/random.hpp"

using namespace handdi;

namespace {

using Builder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Reference gradient by central differences on a freshly built tape.
std::vector<Tensor<double>> numeric_gradients(const Builder& build, std::vector<Tensor<double>> inputs) {
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(tape.parameter(x));
    return build(tape, vars).value()[0];
  };
  std::vector<Tensor<double>> out;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double> g(inputs[k].shape(), std::vector<double>(inputs[k].size(), 0.0));
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = eval(inputs);
      inputs[k][i] = orig - h;
      const double down = eval(inputs);
      inputs[k][i] = orig;
      g[i] = (up - down) / (2 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

void expect_gradients_match(const Builder& build, const std::vector<Tensor<double>>& inputs, double tol = 1e-6) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(tape.parameter(x));
  auto loss = build(tape, vars);
  tape.backward(loss);
  auto ref = numeric_gradients(build, inputs);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& g = tape.grad(vars[k]);
    ASSERT_EQ(g.shape(), inputs[k].shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(g[i], ref[k][i], tol * std::max(1.0, std::abs(ref[k][i]))) << "input " << k << " coord " << i;
    }
  }
}

Tensor<double> random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::Synthetic);
  Tensor<double> t(r, c);
  for (auto& v : t.data()) v = uniform01(rng) * 2 - 1;
  return t;
}

// Weighted sum so every output element carries a distinct adjoint.
Var<double> weighted(Var<double> x, std::uint64_t seed) {
  auto w = x.tape().constant(random_tensor(x.rows(), x.cols(), seed + 100));
  return sum_all(row_dot(x, w));
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto x = tape.parameter(random_tensor(3, 4, 1));
  tape.backward(sum_all(x));
  for (double g : tape.grad(x).data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SigmoidAtZeroWeight) {
  Tape<double> tape;
  auto w = tape.parameter({{0, 0, 0}});
  auto x = tape.constant({{1, -2, 3}});
  auto loss = apply_unary(Unary::sigmoid(), matmul(w, transpose(x)));
  tape.backward(loss);
  const auto& g = tape.grad(w);
  EXPECT_DOUBLE_EQ(g[0], 0.25);
  EXPECT_DOUBLE_EQ(g[1], -0.5);
  EXPECT_DOUBLE_EQ(g[2], 0.75);
}

TEST(Backward, UnreachedLeafGetsZero) {
  Tape<double> tape;
  auto x = tape.parameter({{1, 2}});
  auto y = tape.parameter({{3, 4}});
  tape.backward(sum_all(x));
  for (double g : tape.grad(y).data()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tape<double> tape;
  auto x = tape.parameter({{1, 2}});
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, GradBeforeBackwardRejected) {
  Tape<double> tape;
  auto x = tape.parameter({{1}});
  EXPECT_THROW(tape.grad(x), ContractError);
  auto c = tape.constant({{1}});
  tape.backward(sum_all(x));
  EXPECT_THROW(tape.grad(c), ContractError);
}

TEST(Backward, VisitsInStrictReverseOrder) {
  Tape<double> tape;
  auto x = tape.parameter(random_tensor(2, 2, 3));
  auto y = apply_unary(Unary::tanh(), matmul(x, x));
  auto loss = sum_all(add(y, x));
  tape.backward(loss);
  const auto& order = tape.last_visit_order();
  ASSERT_FALSE(order.empty());
  EXPECT_EQ(order.front(), loss.id());
  for (std::size_t k = 1; k < order.size(); ++k) EXPECT_LT(order[k], order[k - 1]);
}

TEST(Backward, RepeatedBackwardResetsGradients) {
  Tape<double> tape;
  auto x = tape.parameter({{2}});
  auto loss = sum_all(matmul(x, x));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 4.0);
}

TEST(Backward, NonFiniteForwardIsAnError) {
  Tape<double> tape;
  auto x = tape.parameter({{1000}});
  EXPECT_THROW(apply_unary(Unary::exp(), x), NumericError);
}

TEST(Gradients, Matmul) {
  expect_gradients_match([](auto&, auto& v) { return weighted(matmul(v[0], v[1]), 1); },
                         {random_tensor(3, 4, 1), random_tensor(4, 2, 2)});
}

TEST(Gradients, TransposeAndAdd) {
  expect_gradients_match([](auto&, auto& v) { return weighted(add(transpose(v[0]), v[1]), 2); },
                         {random_tensor(3, 2, 3), random_tensor(2, 3, 4)});
}

TEST(Gradients, RowBroadcastAndScale) {
  expect_gradients_match(
      [](auto&, auto& v) { return weighted(scale(add_row_broadcast(v[0], v[1]), v[2]), 3); },
      {random_tensor(4, 3, 5), random_tensor(3, 1, 6), Tensor<double>::scalar(0.7)});
}

TEST(Gradients, PickMeanConcatGather) {
  expect_gradients_match(
      [](auto&, auto& v) {
        auto c = concat_cols(std::vector<Var<double>>{v[0], v[1]});
        auto g = gather_rows(c, {2, 0, 2, 1});
        return add(mean_all(g), pick(v[0], 1, 0));
      },
      {random_tensor(3, 2, 7), random_tensor(3, 3, 8)});
}

TEST(Gradients, SmoothUnaries) {
  for (auto fn : {Unary::tanh(), Unary::sigmoid(), Unary::exp()}) {
    expect_gradients_match([fn](auto&, auto& v) { return weighted(apply_unary(fn, v[0]), 4); },
                           {random_tensor(3, 3, 9)});
  }
}

TEST(Gradients, PiecewiseLinearUnariesAwayFromKink) {
  Tensor<double> x{{-0.8, 0.3}, {0.9, -0.4}};
  for (auto fn : {Unary::relu(), Unary::leaky_relu(0.2)}) {
    expect_gradients_match([fn](auto&, auto& v) { return weighted(apply_unary(fn, v[0]), 5); }, {x});
  }
}

TEST(Gradients, MaskedSoftmax) {
  Mask m(3, 3, true);
  m.set(0, 2, false);
  m.set(2, 0, false);
  expect_gradients_match([m](auto&, auto& v) { return weighted(masked_row_softmax(v[0], m), 6); },
                         {random_tensor(3, 3, 10)});
}

TEST(Gradients, PairScores) {
  expect_gradients_match([](auto&, auto& v) { return weighted(pair_scores(v[0], v[1]), 7); },
                         {random_tensor(4, 3, 11), random_tensor(6, 1, 12)});
}

TEST(Gradients, DropoutWithFixedMask) {
  expect_gradients_match(
      [](auto&, auto& v) {
        Rng rng(99);
        return weighted(dropout(v[0], 0.5, rng, true), 8);
      },
      {random_tensor(4, 4, 13)});
}

TEST(Gradients, BceOnProbabilities) {
  const std::vector<double> labels{1, 0, 1};
  expect_gradients_match(
      [&](auto&, auto& v) { return bce_sum(apply_unary(Unary::sigmoid(), v[0]), std::span<const double>(labels)); },
      {Tensor<double>{{0.3}, {-1.2}, {2.0}}});
}

TEST(Gradients, BceOnLogitsMatchesComposedForm) {
  const std::vector<double> labels{1, 0, 1, 0};
  Tensor<double> x{{0.3}, {-1.2}, {2.0}, {4.5}};
  expect_gradients_match([&](auto&, auto& v) { return bce_logits_sum(v[0], std::span<const double>(labels)); }, {x});
  Tape<double> tape;
  auto xv = tape.constant(x);
  const double fused = bce_logits_sum(xv, std::span<const double>(labels)).value()[0];
  const double composed = bce_sum(apply_unary(Unary::sigmoid(), xv), std::span<const double>(labels)).value()[0];
  EXPECT_NEAR(fused, composed, 1e-12);
}

TEST(Bce, HalfProbabilityCostsLogTwo) {
  Tape<double> tape;
  auto p = tape.constant({{0.5}});
  const std::vector<double> one{1};
  EXPECT_NEAR(bce_sum(p, std::span<const double>(one)).value()[0], std::log(2.0), 1e-15);
  auto q = tape.constant({{0.5}, {0.5}});
  const std::vector<double> two{1, 0};
  EXPECT_NEAR(bce_sum(q, std::span<const double>(two)).value()[0], 2 * std::log(2.0), 1e-15);
}

TEST(Bce, ClampKeepsLossFinite) {
  Tape<double> tape;
  auto p = tape.parameter({{0.0}, {1.0}});
  const std::vector<double> labels{1, 0};
  auto loss = bce_sum(p, std::span<const double>(labels));
  EXPECT_NEAR(loss.value()[0], -2 * std::log(1e-7), 1e-6);
  tape.backward(loss);
  EXPECT_TRUE(tape.grad(p).all_finite());
}

TEST(Bce, RejectsNonBinaryLabels) {
  Tape<double> tape;
  auto p = tape.constant({{0.5}});
  const std::vector<double> bad{0.5};
  EXPECT_THROW(bce_sum(p, std::span<const double>(bad)), ContractError);
}

TEST(Tape, PerturbedAdjointChangesGradient) {
  Tape<double> tape;
  auto x = tape.parameter({{1, 2}});
  auto loss = sum_all(apply_unary(Unary::tanh(), x));
  tape.perturb_adjoint("tanh", 2.0);
  tape.backward(loss);
  EXPECT_NEAR(tape.grad(x)[0], 2 * (1 - std::tanh(1.0) * std::tanh(1.0)), 1e-12);
}

TEST(Tape, KinkPatternTracksReluInputs) {
  Tape<double> tape;
  apply_unary(Unary::relu(), tape.constant({{-1, 2, 0}}));
  EXPECT_EQ(tape.kink_pattern(), (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(Tape, FloatPrecisionForward) {
  Tape<float> tape;
  auto c = matmul(tape.constant({{1, 2}, {3, 4}}), tape.constant({{5, 6}, {7, 8}}));
  EXPECT_EQ(c.value()(1, 1), 50.0f);
}
