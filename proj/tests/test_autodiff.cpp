#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dstt/autodiff.hpp"
#include "dstt/errors.hpp"
#include "dstt/optim.hpp"
#include "support/gradcheck.hpp"

using namespace dstt;
using namespace dstt::ad;
using dstt::testing::gradient_check;
using dstt::testing::random_tensor;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(matmul(eye, m).value(), Tensor::matrix(2, 2, {1, 2, 3, 4}));
}

TEST(Matmul, HandComputedProduct) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor::matrix(2, 1, {5, 6}));
  EXPECT_EQ(matmul(a, b).value(), Tensor::matrix(2, 1, {17, 39}));
}

TEST(Matmul, InnerDimensionMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor(Shape{2, 3}));
  Var b = tape.constant(Tensor(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("and [2x3]"), std::string::npos) << msg;
  }
}

TEST(Elementwise, BasicValues) {
  Tape tape;
  Var zero = tape.constant(Tensor::scalar(0.0));
  EXPECT_DOUBLE_EQ(elementwise(Elementwise::Sigmoid, {zero}).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(elementwise(Elementwise::Tanh, {zero}).value().item(), 0.0);
  Var a = tape.constant(Tensor::vector({1, 2}));
  Var b = tape.constant(Tensor::vector({3, 4}));
  EXPECT_EQ(elementwise(Elementwise::Add, {a, b}).value(), Tensor::vector({4, 6}));
  EXPECT_EQ(elementwise(Elementwise::Sub, {a, b}).value(), Tensor::vector({-2, -2}));
  EXPECT_EQ(elementwise(Elementwise::Mul, {a, b}).value(), Tensor::vector({3, 8}));
}

TEST(Elementwise, ScalarBroadcastOnlyForSingleElements) {
  Tape tape;
  Var v = tape.constant(Tensor::vector({1, 2, 3}));
  Var s = tape.constant(Tensor::scalar(2.0));
  EXPECT_EQ(mul(v, s).value(), Tensor::vector({2, 4, 6}));
  EXPECT_EQ(sub(s, v).value(), Tensor::vector({1, 0, -1}));
  Var w = tape.constant(Tensor::vector({1, 2}));
  EXPECT_THROW(add(v, w), DimensionError);
}

TEST(Elementwise, DomainViolations) {
  Tape tape;
  EXPECT_THROW(ad::log(tape.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(ad::log(tape.constant(Tensor::vector({-2.0}))), DomainError);
  EXPECT_THROW(ad::exp(tape.constant(Tensor::vector({1000.0}))), DomainError);
}

TEST(Softmax, UniformOnEqualScores) {
  Tape tape;
  const Tensor y = softmax(tape.constant(Tensor::vector({0, 0, 0})), 0).value();
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, StableUnderLargeShift) {
  Tape tape;
  const Tensor y = softmax(tape.constant(Tensor::vector({1000, 1000})), 0).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, ClosedFormTwoScores) {
  Tape tape;
  const Tensor y = softmax(tape.constant(Tensor::vector({0.0, std::log(3.0)})), 0).value();
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Softmax, RowsAndColumnsSumToOne) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Var x = tape.constant(random_tensor({4, 6}, rng, 50.0));
    for (std::size_t axis : {0u, 1u}) {
      const Tensor y = softmax(x, axis).value();
      const std::size_t outer = axis == 1 ? 4 : 6;
      const std::size_t len = axis == 1 ? 6 : 4;
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
          const double v = axis == 1 ? y.at(o, k) : y.at(k, o);
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Softmax, InvalidAxis) {
  Tape tape;
  EXPECT_THROW(softmax(tape.constant(Tensor::vector({1, 2})), 1), DimensionError);
}

TEST(Backward, PowerRule) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  tape.backward(square(x));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 6.0);
}

TEST(Backward, SigmoidSlopeAtZero) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(0.0));
  tape.backward(sigmoid(x));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 0.25);
}

TEST(Backward, RejectsNonScalarLossAndSecondCall) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), ContractError);
  Var s = sum(x);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), ContractError);
  tape.reset();
  Var y = tape.variable(Tensor::scalar(2.0));
  EXPECT_NO_THROW(tape.backward(square(y)));
}

TEST(Backward, UnusedParameterHasExactlyZeroGradient) {
  Parameter used("used", Tensor::vector({1.0, 2.0}));
  Parameter unused("unused", Tensor::vector({5.0, 6.0}));
  Tape tape;
  tape.param(unused);
  tape.backward(sum(square(tape.param(used))));
  EXPECT_EQ(tape.grad_of(used), Tensor::vector({2.0, 4.0}));
  EXPECT_EQ(tape.grad_of(unused), Tensor::vector({0.0, 0.0}));
}

TEST(Backward, SharedInputAccumulates) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  tape.backward(mul(x, x));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 6.0);
}

// Random composite graphs built from every differentiable op, checked
// against central differences.
TEST(Backward, RandomCompositeGraphsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Parameter a("a", random_tensor({3, 4}, rng));
    Parameter b("b", random_tensor({4, 2}, rng));
    Parameter c("c", random_tensor({2}, rng));
    Parameter d("d", random_tensor({3, 2}, rng));
    Parameter e("e", random_tensor({1, 4}, rng));
    const int pattern = static_cast<int>(rng.next_u64() % 4);
    auto loss = [&](Tape& tape) {
      Var A = tape.param(a), B = tape.param(b), C = tape.param(c), D = tape.param(d), E = tape.param(e);
      Var h = add_bias(matmul(add(A, tile_rows(E, 3)), B), C);  // [3x2]
      switch (pattern) {
        case 0: h = mul(sigmoid(h), ad::tanh(D)); break;
        case 1: h = add(softmax(h, 0), mul(D, D)); break;
        case 2: h = sub(softplus(h), ad::exp(scale(D, 0.5))); break;
        default: h = concat_cols({softmax(h, 1), ad::log(add_scalar(square(D), 0.5))}); break;
      }
      Var t = matmul(transpose(h), mul(slice_cols(A, 1, 3), D));
      Var stacked = concat_rows({slice_cols(A, 0, 2), D});
      return add(add(mean(square(t)), sum(ad::tanh(reshape(h, Shape{h.value().numel()})))),
                 mean(sigmoid(stacked)));
    };
    const auto r = gradient_check({&a, &b, &c, &d, &e}, loss);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst;
  }
}

TEST(Backward, DetachBlocksGradient) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(2.0));
  tape.backward(mul(x, detach(x)));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 2.0);
}

// Reference recurrence assembled from primitive ops; an independent route to
// the fused lstm_sequence kernel.
namespace {
Var lstm_reference(Tape& tape, Var x, Var wx, Var wh, Var b, std::size_t H) {
  const std::size_t T = x.value().rows();
  Var h = tape.constant(Tensor(Shape{1, H}));
  Var c = tape.constant(Tensor(Shape{1, H}));
  const Var pre = add_bias(matmul(x, wx), b);
  std::vector<Var> outputs;
  for (std::size_t t = 0; t < T; ++t) {
    Var z = add(reshape(transpose(slice_cols(transpose(pre), t, t + 1)), Shape{1, 4 * H}), matmul(h, wh));
    Var i = sigmoid(slice_cols(z, 0, H));
    Var f = sigmoid(slice_cols(z, H, 2 * H));
    Var g = ad::tanh(slice_cols(z, 2 * H, 3 * H));
    Var o = sigmoid(slice_cols(z, 3 * H, 4 * H));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, ad::tanh(c));
    outputs.push_back(h);
  }
  return concat_rows(outputs);
}
}  // namespace

TEST(LstmSequence, FusedKernelMatchesPrimitiveComposition) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    const std::size_t T = 6, C = 3, H = 4;
    Parameter x("x", random_tensor({T, C}, rng));
    Parameter wx("wx", random_tensor({C, 4 * H}, rng));
    Parameter wh("wh", random_tensor({H, 4 * H}, rng));
    Parameter b("b", random_tensor({4 * H}, rng));
    Parameter probe("probe", random_tensor({T, H}, rng));
    std::vector<Tensor> grads[2];
    Tensor values[2];
    for (int route = 0; route < 2; ++route) {
      Tape tape;
      Var out = route == 0 ? lstm_sequence(tape.param(x), tape.param(wx), tape.param(wh), tape.param(b))
                           : lstm_reference(tape, tape.param(x), tape.param(wx), tape.param(wh),
                                            tape.param(b), H);
      values[route] = out.value();
      tape.backward(sum(mul(out, tape.param(probe))));
      for (Parameter* p : {&x, &wx, &wh, &b}) grads[route].push_back(tape.grad_of(*p));
    }
    for (std::size_t i = 0; i < values[0].numel(); ++i) EXPECT_NEAR(values[0][i], values[1][i], 1e-12);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < grads[0][k].numel(); ++i)
        EXPECT_NEAR(grads[0][k][i], grads[1][k][i], 1e-11) << "param " << k << " index " << i;
  }
}

TEST(LstmSequence, EmptySequenceGivesEmptyOutput) {
  Rng rng(1);
  Tape tape;
  Var out = lstm_sequence(tape.constant(Tensor(Shape{0, 3})), tape.constant(random_tensor({3, 8}, rng)),
                          tape.constant(random_tensor({2, 8}, rng)), tape.constant(Tensor(Shape{8})));
  EXPECT_EQ(out.shape(), (Shape{0, 2}));
}

TEST(Adam, ZeroGradientLeavesParameterAndDecaysMoments) {
  Parameter p("w", Tensor::vector({1.5, -2.0}));
  AdamState adam({.learning_rate = 1e-4});
  p.grad = Tensor::vector({1.0, 1.0});
  adam.step(std::vector<Parameter*>{&p});
  const Tensor after_first = p.value;
  const double m1 = adam.moments("w").first[0];
  p.grad = Tensor::vector({0.0, 0.0});
  adam.step(std::vector<Parameter*>{&p});
  EXPECT_LT(std::abs(adam.moments("w").first[0]), std::abs(m1));
  // Nonzero moments still move the parameter; a fresh optimizer does not.
  Parameter q("q", Tensor::vector({1.5, -2.0}));
  AdamState fresh;
  q.grad = Tensor::vector({0.0, 0.0});
  fresh.step(std::vector<Parameter*>{&q});
  EXPECT_EQ(q.value, Tensor::vector({1.5, -2.0}));
  EXPECT_EQ(fresh.moments("q").first, Tensor::vector({0.0, 0.0}));
  EXPECT_EQ(fresh.step_count(), 1u);
  (void)after_first;
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Parameter p("w", Tensor::scalar(0.0));
  AdamState adam({.learning_rate = 1e-4});
  p.grad = Tensor::scalar(1.0);
  adam.step(std::vector<Parameter*>{&p});
  EXPECT_NEAR(p.value.item(), -1e-4 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p.value.item(), -1e-4, 1e-11);
}

TEST(Adam, ConstantGradientStepsDoNotGrow) {
  Parameter p("w", Tensor::scalar(0.0));
  AdamState adam({.learning_rate = 1e-4});
  p.grad = Tensor::scalar(0.7);
  adam.step(std::vector<Parameter*>{&p});
  const double d1 = p.value.item();
  adam.step(std::vector<Parameter*>{&p});
  const double d2 = p.value.item() - d1;
  EXPECT_LE(std::abs(d2), std::abs(d1) * (1.0 + 1e-9));
  EXPECT_EQ(adam.step_count(), 2u);
}

TEST(Adam, ZeroLearningRateIsBitwiseIdentity) {
  Rng rng(3);
  Parameter p("w", random_tensor({5, 5}, rng));
  const Tensor before = p.value;
  AdamState adam({.learning_rate = 0.0});
  for (int i = 0; i < 10; ++i) {
    p.grad = random_tensor({5, 5}, rng, 10.0);
    adam.step(std::vector<Parameter*>{&p});
  }
  EXPECT_EQ(p.value, before);
}

TEST(Adam, NanGradientNamesParameter) {
  Parameter p("lstm/w_input", Tensor::scalar(1.0));
  p.grad = Tensor::scalar(std::nan(""));
  AdamState adam;
  try {
    adam.step(std::vector<Parameter*>{&p});
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("lstm/w_input"), std::string::npos);
  }
  EXPECT_EQ(adam.step_count(), 0u);
}

TEST(GaussianReparam, ZeroNoiseLimitReturnsMean) {
  Rng rng(5);
  Tape tape;
  Var mu = tape.variable(Tensor::vector({1.0, -2.0, 3.5}));
  Var rho = tape.constant(Tensor(Shape{3}, -40.0));
  const Tensor s = gaussian_reparam_sample(mu, rho, rng).value();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s[i], mu.value()[i], 1e-15);
}

TEST(GaussianReparam, UnitGradientWithRespectToMean) {
  Rng rng(6);
  Tape tape;
  Var mu = tape.variable(Tensor::vector({0.3, 0.1}));
  Var rho = tape.variable(Tensor::vector({0.0, 1.0}));
  tape.backward(sum(gaussian_reparam_sample(mu, rho, rng)));
  EXPECT_EQ(tape.grad(mu), Tensor::vector({1.0, 1.0}));
  EXPECT_NE(tape.grad(rho)[0], 0.0);
}

TEST(GaussianReparam, MomentsOfManyDraws) {
  Rng rng(7);
  Tape tape(false);
  const std::size_t n = 100000;
  Var mu = tape.constant(Tensor(Shape{n}, 0.0));
  Var rho = tape.constant(Tensor(Shape{n}, inverse_softplus(2.0)));
  const Tensor s = gaussian_reparam_sample(mu, rho, rng).value();
  double m = 0.0;
  for (double v : s.values()) m += v;
  m /= static_cast<double>(n);
  double var = 0.0;
  for (double v : s.values()) var += (v - m) * (v - m);
  var /= static_cast<double>(n);
  EXPECT_NEAR(m, 0.0, 0.05);
  EXPECT_NEAR(var, 4.0, 0.15);
}

TEST(Softplus, InverseRoundTrip) {
  for (double y : {1e-12, 1e-3, 0.5, 2.0, 40.0}) EXPECT_NEAR(softplus_value(inverse_softplus(y)), y, 1e-12 * std::max(1.0, y));
  EXPECT_GT(softplus_value(-40.0), 0.0);
}
