#include "ruda/autodiff.hpp"

#include "support/brute_force.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

using namespace ruda;
using ad::Tape;
using ad::Var;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix random(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return Matrix::NullaryExpr(r, c, [&] { return u(rng); });
}

}  // namespace

TEST_CASE("matmul values and identity") {
  Tape t;
  const Var a = t.leaf(mat({{1, 2}, {3, 4}}));
  const Var b = t.leaf(mat({{1}, {1}}));
  CHECK(ad::matmul(a, b).value() == mat({{3}, {7}}));
  const Matrix b2 = mat({{5, -1}, {2, 0.5}});
  CHECK(ad::matmul(t.leaf(Matrix::Identity(2, 2)), t.leaf(b2)).value() == b2);
  CHECK_THROWS_AS(ad::matmul(a, t.leaf(Matrix::Ones(3, 1))), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(7);
  const Matrix a0 = random(rng, 3, 3), b0 = random(rng, 3, 3);
  Tape t;
  const Var a = t.leaf(a0), b = t.leaf(b0);
  t.backward(ad::sum(ad::matmul(a, b)));
  const Matrix numeric = brute::numeric_gradient([&](const Matrix& x) { return (x * b0).sum(); }, a0);
  CHECK(brute::max_relative_error(a.grad(), numeric) < 1e-5);
  const Matrix numeric_b = brute::numeric_gradient([&](const Matrix& x) { return (a0 * x).sum(); }, b0);
  CHECK(brute::max_relative_error(b.grad(), numeric_b) < 1e-5);
}

TEST_CASE("elementwise values") {
  Tape t;
  CHECK(ad::sigmoid(t.leaf(Matrix::Zero(1, 1))).scalar() == 0.5);
  const Matrix r = ad::relu(t.leaf(mat({{-2, 3}}))).value();
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 3.0);
  CHECK(ad::exp(t.leaf(Matrix::Zero(1, 1))).scalar() == 1.0);
  CHECK(ad::log(t.leaf(Matrix::Constant(1, 1, std::exp(2.0)))).scalar() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ad::neg(t.leaf(mat({{1.5}}))).scalar() == -1.5);
  CHECK(ad::mul(t.leaf(mat({{2, 3}})), t.leaf(mat({{4, 5}}))).value() == mat({{8, 15}}));
}

TEST_CASE("elementwise domain errors") {
  Tape t;
  CHECK_THROWS_AS(ad::log(t.leaf(mat({{1.0, 0.0}}))), DomainError);
  CHECK_THROWS_AS(ad::log(t.leaf(mat({{-1.0}}))), DomainError);
  CHECK_THROWS_AS(ad::exp(t.leaf(mat({{1000.0}}))), DomainError);
  CHECK_THROWS_AS(t.leaf(mat({{NAN}})), DomainError);
}

TEST_CASE("broadcast add of a bias row") {
  Tape t;
  const Var x = t.leaf(mat({{1, 2}, {3, 4}, {5, 6}}));
  const Var b = t.leaf(mat({{10, 20}}));
  const Var y = ad::add(x, b);
  CHECK(y.value() == mat({{11, 22}, {13, 24}, {15, 26}}));
  t.backward(ad::sum(y));
  CHECK(b.grad() == mat({{3, 3}}));
  CHECK_THROWS_AS(ad::add(x, t.leaf(Matrix::Ones(2, 3))), DimensionError);
}

TEST_CASE("derivative of x*x at 3 is 6") {
  Tape t;
  const Var x = t.leaf(mat({{3}}));
  t.backward(x * x);
  CHECK(x.grad()(0, 0) == 6.0);
}

TEST_CASE("softmax rows") {
  Tape t;
  const Matrix a = ad::softmax_rows(t.leaf(mat({{0, 0}}))).value();
  CHECK(a(0, 0) == 0.5);
  CHECK(a(0, 1) == 0.5);
  const Matrix b = ad::softmax_rows(t.leaf(mat({{1000, 1000}}))).value();
  CHECK(b(0, 0) == 0.5);
  CHECK(b(0, 1) == 0.5);
  const Matrix c = ad::softmax_rows(t.leaf(mat({{std::log(2.0), 0}}))).value();
  CHECK(c(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(c(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const Matrix x = random(rng, 4, 5, -300.0, 300.0);
    const Matrix s = ad::softmax_rows(t.leaf(x)).value();
    CHECK((s.array() >= 0.0).all());
    CHECK(((s.rowwise().sum().array() - 1.0).abs() < 1e-12).all());
  }
}

TEST_CASE("gradient reversal") {
  Tape t;
  const Matrix x0 = mat({{1, -2}, {0.5, 3}});
  const Matrix g = mat({{0.3, -1}, {2, 4}});
  for (double strength : {1.0, 0.0, 0.4}) {
    Tape tape;
    const Var x = tape.leaf(x0);
    const Var r = ad::gradient_reversal(x, strength);
    CHECK(r.value() == x0);
    // loss = sum(g * r) seeds the upstream gradient g.
    tape.backward(ad::sum(ad::mul(tape.leaf(g), r)));
    CHECK(x.grad().isApprox(-strength * g, 0.0));
    if (strength == 0.0) CHECK((x.grad().array() == 0.0).all());
  }
  CHECK_THROWS_AS(ad::gradient_reversal(t.leaf(x0), -1.0), ContractError);
}

TEST_CASE("backward contract and fan-out") {
  Tape t;
  const Var x = t.leaf(mat({{2.5}}));
  t.backward(x);
  CHECK(x.grad()(0, 0) == 1.0);
  t.backward(x + x);
  CHECK(x.grad()(0, 0) == 2.0);
  CHECK_THROWS_AS(t.backward(t.leaf(Matrix::Ones(2, 1))), ContractError);
  Tape other;
  const Var y = other.leaf(mat({{1}}));
  CHECK_THROWS_AS(t.backward(y), ContractError);
}

TEST_CASE("backward visits consumers before producers") {
  std::mt19937_64 rng(11);
  Tape t;
  const Var x = t.leaf(random(rng, 4, 3));
  const Var w1 = t.leaf(random(rng, 3, 5));
  const Var w2 = t.leaf(random(rng, 5, 2));
  const Var h = ad::relu(ad::matmul(x, w1));
  const Var o = ad::softmax_rows(ad::matmul(h, w2));
  const Var loss = ad::sum(ad::log(ad::clamp(o, 1e-7, 1.0))) + ad::mean(h) * 0.0 + ad::sum(h);
  ad::BackwardTrace trace;
  t.backward(loss, &trace);
  std::vector<std::size_t> position(t.size());
  for (std::size_t k = 0; k < trace.visit_order.size(); ++k) position[trace.visit_order[k]] = k;
  REQUIRE(trace.visit_order.size() == t.size());
  for (std::size_t id = 0; id < t.size(); ++id) {
    for (std::size_t parent : t.node(id).parents) {
      CHECK(parent < id);
      // A parent is only read after every consumer has written into it.
      CHECK(position[parent] > position[id]);
    }
  }
}

TEST_CASE("every differentiable op matches central differences") {
  std::mt19937_64 rng(5);
  const Matrix w = random(rng, 3, 4);
  const Matrix bias = random(rng, 1, 4);
  using Builder = std::function<Var(Tape&, Var)>;
  const std::vector<std::pair<const char*, Builder>> ops{
      {"add", [&](Tape& t, Var x) { return x + t.leaf(w); }},
      {"bias", [&](Tape& t, Var x) { return ad::add(x, t.leaf(bias)); }},
      {"sub", [&](Tape& t, Var x) { return t.leaf(w) - x; }},
      {"mul", [&](Tape& t, Var x) { return x * x; }},
      {"mul-bias", [&](Tape& t, Var x) { return ad::mul(x, t.leaf(bias)); }},
      {"neg", [](Tape&, Var x) { return -x; }},
      {"scale", [](Tape&, Var x) { return 2.5 * x; }},
      {"add_scalar", [](Tape&, Var x) { return x + 0.7; }},
      {"log", [](Tape&, Var x) { return ad::log(x + 3.0); }},
      {"exp", [](Tape&, Var x) { return ad::exp(x); }},
      {"relu", [](Tape&, Var x) { return ad::relu(x); }},
      {"sigmoid", [](Tape&, Var x) { return ad::sigmoid(x); }},
      {"softmax", [](Tape&, Var x) { return ad::softmax_rows(x); }},
      {"reversal", [](Tape&, Var x) { return ad::gradient_reversal(x, 0.6); }},
      {"mean", [](Tape&, Var x) { return ad::mean(x); }},
      {"clamp", [](Tape&, Var x) { return ad::clamp(x, -0.5, 0.5); }},
      {"row_outer", [&](Tape& t, Var x) { return ad::row_outer(x, ad::sigmoid(x)); }},
      {"matmul", [&](Tape& t, Var x) { return ad::matmul(x, t.leaf(w.transpose())); }},
  };
  for (const auto& [name, build] : ops) {
    const std::string op = name;
    CAPTURE(op);
    // The reversal node is the identity forward and scales gradients by -strength.
    const double expected_factor = op == "reversal" ? -0.6 : 1.0;
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix x0 = random(rng, 3, 4);
      Tape probe;
      const Eigen::Index r = build(probe, probe.leaf(x0)).rows();
      const Eigen::Index c = build(probe, probe.leaf(x0)).cols();
      const Matrix mask = random(rng, r, c);
      auto f = [&](const Matrix& x) {
        Tape t;
        return ad::sum(ad::mul(t.leaf(mask), build(t, t.leaf(x)))).scalar();
      };
      Tape t;
      const Var x = t.leaf(x0);
      t.backward(ad::sum(ad::mul(t.leaf(mask), build(t, x))));
      const Matrix numeric = expected_factor * brute::numeric_gradient(f, x0);
      // Skip trials that land within a step of a kink.
      bool near_kink = false;
      if (op == "relu" || op == "clamp") {
        for (Eigen::Index i = 0; i < x0.size(); ++i) {
          const double v = x0.data()[i];
          near_kink |= std::abs(v) < 1e-4 || std::abs(std::abs(v) - 0.5) < 1e-4;
        }
      }
      if (!near_kink) CHECK(brute::max_relative_error(x.grad(), numeric) < 1e-4);
    }
  }
}

TEST_CASE("two-layer MLP loss gradients match central differences") {
  std::mt19937_64 rng(9);
  const Matrix x = random(rng, 5, 3);
  Matrix w1 = random(rng, 3, 6), b1 = random(rng, 1, 6), w2 = random(rng, 6, 2), b2 = random(rng, 1, 2);
  auto loss_of = [&](Tape& t, Var vw1, Var vb1, Var vw2, Var vb2) {
    const Var h = ad::relu(ad::add(ad::matmul(t.leaf(x), vw1), vb1));
    const Var o = ad::softmax_rows(ad::add(ad::matmul(h, vw2), vb2));
    return -ad::mean(ad::log(o));
  };
  Tape t;
  const Var vw1 = t.leaf(w1), vb1 = t.leaf(b1), vw2 = t.leaf(w2), vb2 = t.leaf(b2);
  t.backward(loss_of(t, vw1, vb1, vw2, vb2));
  Matrix* params[4] = {&w1, &b1, &w2, &b2};
  const Var vars[4] = {vw1, vb1, vw2, vb2};
  for (int k = 0; k < 4; ++k) {
    const Matrix base = *params[k];
    auto f = [&](const Matrix& v) {
      *params[k] = v;
      Tape tt;
      const double out = loss_of(tt, tt.leaf(w1), tt.leaf(b1), tt.leaf(w2), tt.leaf(b2)).scalar();
      *params[k] = base;
      return out;
    };
    CHECK(brute::max_relative_error(vars[k].grad(), brute::numeric_gradient(f, base)) < 1e-4);
  }
}
