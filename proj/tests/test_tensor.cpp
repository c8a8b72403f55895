#include <doctest.h>

#include <cmath>
#include <functional>

#include "seqadv/errors.hpp"
#include "seqadv/rng.hpp"
#include "seqadv/tensor.hpp"

using namespace seqadv;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Independent central-difference oracle over a scalar function of a raw buffer.
std::vector<double> finite_diff(std::vector<double> x,
                                const std::function<double(const std::vector<double>&)>& f,
                                double eps) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f(x);
    x[i] = keep - eps;
    const double dn = f(x);
    x[i] = keep;
    g[i] = (up - dn) / (2.0 * eps);
  }
  return g;
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(1e-12, std::fabs(a) + std::fabs(b));
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor t(Shape{2, 3}, 0.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST_CASE("elementwise examples") {
  CHECK(sigmoid(Tensor::vec({0.0})).item() == doctest::Approx(0.5));
  Tensor r = relu(Tensor::vec({-1.0, 2.0}));
  CHECK(r.at(0) == 0.0);
  CHECK(r.at(1) == 2.0);
  CHECK(tanh_op(Tensor::vec({0.0})).item() == 0.0);
}

TEST_CASE("elementwise shape mismatch names both shapes") {
  try {
    add(Tensor(Shape{2, 3}), Tensor(Shape{4}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("broadcast: scalar and row vector") {
  Tensor m(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor s = Tensor::scalar(10.0);
  Tensor r = add(m, s);
  CHECK(r.at2(1, 2) == 16.0);

  Tensor row = Tensor::vec({10, 20, 30});
  Tensor r2 = add(m, row);
  CHECK(r2.at2(0, 0) == 11.0);
  CHECK(r2.at2(1, 1) == 25.0);

  Tensor r3 = sub(s, m);  // scalar minus matrix
  CHECK(r3.at2(0, 0) == 9.0);
}

TEST_CASE("matmul hand examples") {
  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  Tensor b(Shape{2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at2(0, 0) == 3.0);
  CHECK(c.at2(1, 0) == 7.0);

  Rng rng(7);
  Tensor m = random_tensor({3, 3}, rng);
  Tensor eye(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor mi = matmul(m, eye);
  for (std::size_t i = 0; i < 9; ++i) CHECK(mi.at(i) == doctest::Approx(m.at(i)).epsilon(1e-12));

  CHECK_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);

  a.set_requires_grad(true);
  std::vector<double> analytic;
  {
    RecordScope scope;
    Tensor loss = sum(matmul(a, b));
    backward(loss);
    analytic = a.grad();
  }

  auto f = [&](const std::vector<double>& flat) {
    Tensor probe(Shape{3, 4}, flat);
    return sum(matmul(probe, b)).item();
  };
  std::vector<double> numeric = finite_diff(a.values(), f, 1e-6);
  for (std::size_t i = 0; i < numeric.size(); ++i)
    CHECK(rel_err(analytic[i], numeric[i]) <= 1e-6);

  // dA of sum(A.B) is the row-broadcast of B's column sums.
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 4; ++k) {
      double colsum = 0.0;
      for (std::size_t j = 0; j < 2; ++j) colsum += b.at2(k, j);
      CHECK(analytic[r * 4 + k] == doctest::Approx(colsum).epsilon(1e-12));
    }
}

TEST_CASE("conv2d hand examples") {
  Tensor img(Shape{1, 2, 2}, {1, 2, 3, 4});
  Tensor k(Shape{1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor bias(Shape{1}, 0.0);
  Tensor out = conv2d(img, k, bias);
  CHECK(out.size() == 1);
  CHECK(out.item() == 10.0);

  Tensor ones(Shape{1, 3, 3}, 1.0);
  Tensor k3(Shape{1, 1, 3, 3}, 1.0);
  CHECK(conv2d(ones, k3, bias).item() == 9.0);

  Tensor small(Shape{1, 2, 2}, 1.0);
  CHECK_THROWS_AS(conv2d(small, k3, bias), ShapeError);
}

TEST_CASE("conv2d gradient matches finite differences") {
  Rng rng(13);
  Tensor img = random_tensor({1, 6, 6}, rng);
  Tensor k = random_tensor({2, 1, 3, 3}, rng);
  Tensor bias = random_tensor({2}, rng);

  k.set_requires_grad(true);
  img.set_requires_grad(true);
  std::vector<double> dk, dimg;
  {
    RecordScope scope;
    Tensor loss = sum(conv2d(img, k, bias));
    backward(loss);
    dk = k.grad();
    dimg = img.grad();
  }

  auto fk = [&](const std::vector<double>& flat) {
    Tensor probe(Shape{2, 1, 3, 3}, flat);
    return sum(conv2d(img, probe, bias)).item();
  };
  std::vector<double> nk = finite_diff(k.values(), fk, 1e-6);
  for (std::size_t i = 0; i < nk.size(); ++i) CHECK(rel_err(dk[i], nk[i]) <= 1e-5);

  auto fi = [&](const std::vector<double>& flat) {
    Tensor probe(Shape{1, 6, 6}, flat);
    return sum(conv2d(probe, k, bias)).item();
  };
  std::vector<double> ni = finite_diff(img.values(), fi, 1e-6);
  for (std::size_t i = 0; i < ni.size(); ++i) CHECK(rel_err(dimg[i], ni[i]) <= 1e-5);
}

TEST_CASE("maxpool2d examples and gradient") {
  Tensor img(Shape{1, 2, 2}, {1, 2, 3, 4});
  CHECK(maxpool2d(img).item() == 4.0);

  Tensor flat(Shape{1, 4, 4}, 0.7);
  Tensor pooled = maxpool2d(flat);
  CHECK(pooled.shape() == Shape{1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(pooled.at(i) == 0.7);

  CHECK_THROWS_AS(maxpool2d(Tensor(Shape{1, 3, 4})), ShapeError);

  // Gradient at a tie-free input.
  Rng rng(17);
  Tensor x = random_tensor({1, 4, 4}, rng);
  x.set_requires_grad(true);
  std::vector<double> dx;
  {
    RecordScope scope;
    Tensor loss = sum(mul(maxpool2d(x), maxpool2d(x)));
    backward(loss);
    dx = x.grad();
  }
  auto f = [&](const std::vector<double>& flat2) {
    Tensor probe(Shape{1, 4, 4}, flat2);
    Tensor p = maxpool2d(probe);
    return sum(mul(p, p)).item();
  };
  std::vector<double> nx = finite_diff(x.values(), f, 1e-6);
  for (std::size_t i = 0; i < nx.size(); ++i) CHECK(rel_err(dx[i], nx[i]) <= 1e-5);
}

TEST_CASE("maxpool tie routes to first cell in row-major order") {
  Tensor x(Shape{1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
  x.set_requires_grad(true);
  RecordScope scope;
  Tensor loss = sum(maxpool2d(x));
  backward(loss);
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 0.0);
  CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("backward basics") {
  {
    Tensor x = Tensor::vec({3.0});
    x.set_requires_grad(true);
    RecordScope scope;
    Tensor y = sum(mul(x, x));
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  {
    Tensor x = Tensor::vec({1.0});
    x.set_requires_grad(true);
    RecordScope scope;
    Tensor y = sum(add(x, x));
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
  }
  {
    Tensor x = Tensor::vec({1.0, 2.0});
    x.set_requires_grad(true);
    RecordScope scope;
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(backward(y), ShapeError);  // non-scalar root
  }
}

TEST_CASE("grad_check examples") {
  Rng rng(23);
  Tensor x = random_tensor({8}, rng);

  CHECK(grad_check([](const Tensor& t) { return sum(sigmoid(t)); }, x, 1e-6) <= 1e-6);
  CHECK(grad_check([](const Tensor&) { return Tensor::scalar(4.0); }, x, 1e-6) == 0.0);

  Tensor w = random_tensor({8, 3}, rng);
  CHECK(grad_check([&](const Tensor& t) {
          return sum(matmul(reshape(t, {1, 8}), w));
        }, x, 1e-6) <= 1e-6);
}

TEST_CASE("grad_check every primitive over random instances") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({6}, rng, 0.1, 2.0);  // positive: safe for log/sqrt
    Tensor y = random_tensor({6}, rng, 0.1, 2.0);
    Tensor m = random_tensor({4, 5}, rng, -2.0, 2.0);

    CHECK(grad_check([&](const Tensor& t) { return sum(add(t, y)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([&](const Tensor& t) { return sum(sub(t, y)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(t, y)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(sigmoid(t)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(tanh_op(t)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(log_op(t)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(sqrt_op(t)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(reciprocal(t)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(scale(t, -1.7)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(add_const(t, 0.3)); }, x, 1e-6) <= 1e-5);
    // relu/abs/clamp probed away from their kinks (inputs in [0.1, 2]).
    CHECK(grad_check([](const Tensor& t) { return sum(relu(t)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(abs_op(t)); }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(clamp(t, -5.0, 5.0)); }, x, 1e-6) <= 1e-5);
    Tensor w = random_tensor({6, 3}, rng);
    Tensor v = random_tensor({1, 3}, rng);
    CHECK(grad_check([&](const Tensor& t) {
            return sum(mul(matmul(reshape(t, {1, 6}), w), v));
          }, x, 1e-6) <= 1e-5);
    CHECK(grad_check([](const Tensor& t) { return sum(mul(t, t)); }, m, 1e-6) <= 1e-5);
  }
}

TEST_CASE("backward linearity") {
  Rng rng(31);
  Tensor x = random_tensor({5}, rng);
  const double a = 2.5, b = -0.75;

  auto grad_of = [&](const std::function<Tensor(const Tensor&)>& f) {
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    RecordScope scope;
    backward(f(probe));
    return probe.grad();
  };

  auto f = [](const Tensor& t) { return sum(sigmoid(t)); };
  auto g = [](const Tensor& t) { return sum(mul(t, t)); };
  std::vector<double> gf = grad_of(f);
  std::vector<double> gg = grad_of(g);
  std::vector<double> combined =
      grad_of([&](const Tensor& t) { return add(scale(f(t), a), scale(g(t), b)); });

  for (std::size_t i = 0; i < combined.size(); ++i)
    CHECK(combined[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("requires_grad=false leaves never accumulate gradient") {
  Tensor x = Tensor::vec({2.0});
  x.set_requires_grad(true);
  Tensor frozen = Tensor::vec({3.0});
  RecordScope scope;
  Tensor y = sum(mul(x, frozen));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("identical seed reruns are bit-identical") {
  auto run = [] {
    Rng rng(99);
    Tensor x = random_tensor({16}, rng);
    x.set_requires_grad(true);
    RecordScope scope;
    Tensor y = sum(sigmoid(mul(x, x)));
    backward(y);
    return std::pair{x.values(), x.grad()};
  };
  auto [d1, g1] = run();
  auto [d2, g2] = run();
  CHECK(d1 == d2);
  CHECK(g1 == g2);
}

TEST_CASE("gradient accumulates across backward calls until zeroed") {
  Tensor x = Tensor::vec({1.5});
  x.set_requires_grad(true);
  {
    RecordScope scope;
    backward(sum(mul(x, x)));
  }
  const double once = x.grad()[0];
  {
    RecordScope scope;
    backward(sum(mul(x, x)));
  }
  CHECK(x.grad()[0] == doctest::Approx(2.0 * once));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}
