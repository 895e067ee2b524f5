#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "tcvae/autodiff.hpp"
#include "tcvae/math.hpp"
#include "tcvae/params.hpp"
#include "tcvae/rng.hpp"

using namespace tcvae;

namespace {

Tensor uniform_tensor(RngStream& rng, const Shape& shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

using Builder = std::function<Var(Tape&, ParamStore&)>;

GradientCheckReport check(ParamStore& store, const Builder& build, double tol = 1e-5) {
  store.zero_grad();
  {
    Tape t;
    t.backward(build(t, store));
  }
  GradientCheckOptions opt;
  opt.tolerance = tol;
  return finite_difference_check(
      store,
      [&] {
        Tape t;
        return build(t, store).value().item();
      },
      opt);
}

// sum(op(...) * R) with a fixed random R, so every output entry matters.
Var weighted_sum(Tape& t, Var v, std::uint64_t seed) {
  RngStream r(seed, 99);
  return ad::sum(ad::mul(v, t.constant(uniform_tensor(r, v.shape(), 0.5, 1.5))));
}

}  // namespace

TEST(Autodiff, SumGivesOnes) {
  ParamStore s;
  RngStream r(1);
  s.add("W", uniform_tensor(r, {3, 4}));
  Tape t;
  t.backward(ad::sum(t.parameter(s, "W")));
  for (double g : s.get("W").grad.values()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, HalfSquaredNormGivesW) {
  ParamStore s;
  RngStream r(2);
  s.add("W", uniform_tensor(r, {2, 5}));
  Tape t;
  t.backward(ad::scale(ad::sum(ad::square(t.parameter(s, "W"))), 0.5));
  const auto& p = s.get("W");
  for (std::size_t i = 0; i < p.value.size(); ++i) EXPECT_DOUBLE_EQ(p.grad[i], p.value[i]);
}

TEST(Autodiff, TwoLayerTanhMatchesFiniteDifferences) {
  ParamStore s;
  RngStream r(3);
  s.add("W1", uniform_tensor(r, {5, 7}));
  s.add("b1", uniform_tensor(r, {7}));
  s.add("W2", uniform_tensor(r, {7, 3}));
  const Tensor x = uniform_tensor(r, {4, 5});
  auto rep = check(s, [&](Tape& t, ParamStore& p) {
    Var h = ad::tanh(ad::add_bias(ad::matmul(t.constant(x), t.parameter(p, "W1")), t.parameter(p, "b1")));
    return weighted_sum(t, ad::matmul(h, t.parameter(p, "W2")), 4);
  });
  EXPECT_TRUE(rep.passed) << rep.max_relative_error;
  EXPECT_LE(rep.max_relative_error, 1e-5);
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
  const std::vector<std::pair<const char*, std::function<Var(Var, Var)>>> ops = {
      {"add", [](Var a, Var b) { return ad::add(a, b); }},
      {"sub", [](Var a, Var b) { return ad::sub(a, b); }},
      {"mul", [](Var a, Var b) { return ad::mul(a, b); }},
      {"scale", [](Var a, Var) { return ad::scale(a, -1.7); }},
      {"add_scalar", [](Var a, Var) { return ad::add_scalar(a, 0.3); }},
      {"tanh", [](Var a, Var) { return ad::tanh(a); }},
      {"exp", [](Var a, Var) { return ad::exp(a); }},
      {"square", [](Var a, Var) { return ad::square(a); }},
      {"softplus", [](Var a, Var) { return ad::softplus(a); }},
      {"clamp", [](Var a, Var) { return ad::clamp(a, -5.0, 5.0); }},
      {"sum_last_axis", [](Var a, Var) { return ad::sum_last_axis(a); }},
      {"slice_cols", [](Var a, Var) { return ad::slice_cols(a, 1, 3); }},
      {"mean", [](Var a, Var) { return ad::mean(a); }},
      {"std_normal", [](Var a, Var) { return ad::standard_normal_log_density(a); }},
      {"gauss", [](Var a, Var b) { return ad::gaussian_log_density(a, b, ad::scale(b, 0.5)); }},
  };
  for (const auto& [name, op] : ops) {
    ParamStore s;
    RngStream r(10);
    s.add("a", uniform_tensor(r, {3, 4}));
    s.add("b", uniform_tensor(r, {3, 4}));
    auto rep = check(s, [&](Tape& t, ParamStore& p) {
      return weighted_sum(t, op(t.parameter(p, "a"), t.parameter(p, "b")), 5);
    });
    EXPECT_TRUE(rep.passed) << name << " rel err " << rep.max_relative_error;
  }
}

TEST(Autodiff, MixtureOpsMatchFiniteDifferences) {
  ParamStore s;
  RngStream r(11);
  s.add("z", uniform_tensor(r, {4, 3}));
  s.add("mu", uniform_tensor(r, {4, 3}));
  s.add("lv", uniform_tensor(r, {4, 3}, -1.0, 1.0));
  const Tensor logw = uniform_tensor(r, {4, 4}, -3.0, -1.0);
  auto rep = check(s, [&](Tape& t, ParamStore& p) {
    Var cube = ad::pairwise_gaussian_log_density(t.parameter(p, "z"), t.parameter(p, "mu"),
                                                 t.parameter(p, "lv"));
    Var joint = ad::weighted_logsumexp(ad::sum_last_axis(cube), logw);
    Var marg = ad::weighted_logsumexp(cube, logw);
    return ad::add(weighted_sum(t, joint, 6), weighted_sum(t, marg, 7));
  });
  EXPECT_TRUE(rep.passed) << rep.max_relative_error;
}

TEST(Autodiff, BernoulliMatchesFiniteDifferences) {
  ParamStore s;
  RngStream r(12);
  s.add("l", uniform_tensor(r, {3, 5}));
  const Tensor x = uniform_tensor(r, {3, 5}, 0.0, 1.0);
  auto rep = check(s, [&](Tape& t, ParamStore& p) {
    return weighted_sum(t, ad::bernoulli_log_likelihood(t.parameter(p, "l"), x), 8);
  });
  EXPECT_TRUE(rep.passed) << rep.max_relative_error;
}

TEST(Autodiff, NonScalarLossRejected) {
  ParamStore s;
  s.add("W", Tensor({2, 2}, 1.0));
  Tape t;
  Var w = t.parameter(s, "W");
  EXPECT_THROW(t.backward(w), std::invalid_argument);
}

TEST(Autodiff, NanDuringBackwardNamesNode) {
  ParamStore s;
  s.add("W", Tensor({1}, 800.0));
  Tape t;
  Var loss = ad::sum(ad::exp(ad::exp(t.parameter(s, "W"))));
  try {
    t.backward(loss);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("node"), std::string::npos) << e.what();
  }
}

TEST(GradientCheck, IdentityIsExact) {
  ParamStore s;
  s.add("x", Tensor({1}, 0.7));
  auto rep = check(s, [](Tape& t, ParamStore& p) { return ad::sum(t.parameter(p, "x")); });
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.max_relative_error, 1e-9);
}

TEST(GradientCheck, SoftplusChain) {
  ParamStore s;
  s.add("x", Tensor({3}, std::vector<double>{-1.5, 0.2, 1.9}));
  auto rep = check(s, [](Tape& t, ParamStore& p) {
    return ad::sum(ad::softplus(ad::softplus(ad::scale(t.parameter(p, "x"), 2.0))));
  });
  EXPECT_LE(rep.max_relative_error, 1e-5);
}

TEST(GradientCheck, CorruptedGradientIsFlagged) {
  ParamStore s;
  s.add("x", Tensor({2}, std::vector<double>{0.3, -0.4}));
  s.zero_grad();
  {
    Tape t;
    t.backward(ad::sum(ad::square(t.parameter(s, "x"))));
  }
  s.get("x").grad[0] += 0.1;
  auto rep = finite_difference_check(s, [&] {
    Tape t;
    return ad::sum(ad::square(t.parameter(s, "x"))).value().item();
  });
  EXPECT_FALSE(rep.passed);
}

TEST(GradientCheck, NonDeterministicLossRejected) {
  ParamStore s;
  s.add("x", Tensor({1}, 1.0));
  int calls = 0;
  EXPECT_THROW(finite_difference_check(s, [&] { return double(++calls); }), std::runtime_error);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore s;
  s.add("x", Tensor({3}, std::vector<double>{1, 2, 3}));
  s.zero_grad();
  adam_step(s, {});
  EXPECT_EQ(s.get("x").value.storage(), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(s.step_count(), 1u);
}

TEST(Adam, ConstantGradientDescends) {
  ParamStore s;
  s.add("x", Tensor({2}, 0.0));
  for (int i = 0; i < 50; ++i) {
    s.get("x").grad = Tensor({2}, std::vector<double>{2.0, -0.5});
    adam_step(s, {0.01});
  }
  EXPECT_LT(s.get("x").value[0], 0.0);
  EXPECT_GT(s.get("x").value[1], 0.0);
}

TEST(Adam, FirstStepByHand) {
  ParamStore s;
  s.add("x", Tensor({1}, 1.0));
  const double g = 0.37, lr = 0.05, eps = 1e-8;
  s.get("x").grad = Tensor({1}, g);
  adam_step(s, {lr, 0.9, 0.999, eps});
  // Bias-corrected moments equal g and g^2 after one step.
  EXPECT_NEAR(s.get("x").value[0], 1.0 - lr * g / (std::abs(g) + eps), 1e-15);
}

TEST(Adam, RejectsNonPositiveRate) {
  ParamStore s;
  s.add("x", Tensor({1}, 1.0));
  EXPECT_THROW(adam_step(s, {0.0}), std::invalid_argument);
  EXPECT_THROW(adam_step(s, {-1e-3}), std::invalid_argument);
}

TEST(LogSumExp, Basics) {
  const std::vector<double> a{0.0, 0.0}, b{1000.0, 1000.0};
  EXPECT_DOUBLE_EQ(logsumexp(a), std::log(2.0));
  EXPECT_DOUBLE_EQ(logsumexp(b), 1000.0 + std::log(2.0));
  const std::vector<double> huge{1e300, -1e300};
  EXPECT_DOUBLE_EQ(logsumexp(huge), 1e300);
  EXPECT_THROW(logsumexp(std::vector<double>{}), std::invalid_argument);
}

TEST(LogSumExp, MatchesExtendedPrecision) {
  RngStream r(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(10);
    for (double& x : v) x = -20.0 + 40.0 * r.uniform();
    long double acc = 0.0L;
    for (double x : v) acc += std::exp(static_cast<long double>(x));
    const double expect = static_cast<double>(std::log(acc));
    EXPECT_NEAR(logsumexp(v), expect, 1e-12 * std::abs(expect));
  }
}

TEST(LogSumExp, ShiftInvariance) {
  RngStream r(22);
  std::vector<double> v(7);
  for (double& x : v) x = r.normal() * 5;
  for (double c : {-300.0, -1.5, 0.25, 42.0, 700.0}) {
    std::vector<double> w(v);
    for (double& x : w) x += c;
    EXPECT_NEAR(logsumexp(w), logsumexp(v) + c, 1e-12 * std::max(1.0, std::abs(c)));
  }
}

TEST(Rng, SameSeedSameDraws) {
  RngStream a(5), b(5);
  EXPECT_EQ(gaussian_sample(a, {10, 3}).storage(), gaussian_sample(b, {10, 3}).storage());
  RngStream c(5);
  c.set_counter(0);
  RngStream d(5);
  EXPECT_EQ(c.next_u64(), d.next_u64());
}

TEST(Rng, NormalMoments) {
  RngStream r(6);
  const Tensor t = gaussian_sample(r, {1000000});
  double m = 0, v = 0;
  for (double x : t.values()) m += x;
  m /= double(t.size());
  for (double x : t.values()) v += (x - m) * (x - m);
  v /= double(t.size() - 1);
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(v, 1.0, 0.01);
}

TEST(Rng, SplitStreamsUncorrelated) {
  const RngStream root(7);
  RngStream a = root.split(1), b = root.split(2);
  const std::size_t n = 100000;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.normal(), y = b.normal();
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  EXPECT_LT(std::abs(sab / std::sqrt(saa * sbb)), 0.01);
}

TEST(Rng, UniformInOpenInterval) {
  RngStream r(8);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
