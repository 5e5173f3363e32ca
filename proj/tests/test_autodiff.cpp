#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dabm/autodiff.hpp"

using namespace dabm::ad;

TEST_CASE("record stores value and partials") {
  Tape tape;
  Var a = tape.input(2.0);
  Var b = tape.input(3.0);

  Var m = a * b;
  CHECK(m.value() == 6.0);
  CHECK(tape.op(m.index()) == Op::Mul);
  REQUIRE(tape.partials(m.index()).size() == 2);
  CHECK(tape.partials(m.index())[0] == 3.0);
  CHECK(tape.partials(m.index())[1] == 2.0);

  Var s = a + b;
  CHECK(s.value() == 5.0);
  CHECK(tape.partials(s.index())[0] == 1.0);
  CHECK(tape.partials(s.index())[1] == 1.0);

  Var z = tape.input(0.0);
  Var e = exp(z);
  CHECK(e.value() == 1.0);
  CHECK(tape.partials(e.index())[0] == 1.0);
}

TEST_CASE("parents precede their node") {
  Tape tape;
  Var x = tape.input(0.3);
  Var y = tape.input(-1.2);
  Var f = log(exp(x * y) + x * x) / (y - 2.0);
  for (std::size_t n = 0; n < tape.size(); ++n) {
    for (std::uint32_t p : tape.parents(n)) CHECK(p < n);
  }
  (void)f;
}

TEST_CASE("mixing tapes is rejected") {
  Tape t1, t2;
  Var a = t1.input(1.0);
  Var b = t2.input(2.0);
  CHECK_THROWS_AS(a + b, TapeMismatchError);
  CHECK_THROWS_AS(t1.backward(b), TapeMismatchError);
}

TEST_CASE("domain errors carry the node") {
  Tape tape;
  Var a = tape.input(-1.0);
  CHECK_THROWS_AS(log(a), DomainError);
  Var zero = tape.input(0.0);
  try {
    (void)(a / zero);
    FAIL("division by zero accepted");
  } catch (const DomainError& e) {
    CHECK(e.node() == static_cast<std::int64_t>(zero.index()));
  }
}

TEST_CASE("softmax closed forms") {
  Tape tape;
  std::vector<Var> three{tape.input(0.0), tape.input(0.0), tape.input(0.0)};
  for (const Var& y : softmax(three)) CHECK(y.value() == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  std::vector<Var> two{tape.input(1.0), tape.input(0.0)};
  const std::vector<Var> y = softmax(two);
  CHECK(y[0].value() == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(y[1].value() == doctest::Approx(0.2689414213699951).epsilon(1e-14));
}

TEST_CASE("simple gradients") {
  Tape tape;
  Var x = tape.input(3.0);
  Gradients g = tape.backward(x * x);
  CHECK(g[x] == 6.0);

  Var w = tape.input(1.7);
  Var id = log(exp(w));
  CHECK(id.value() == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(tape.backward(id)[w] == doctest::Approx(1.0).epsilon(1e-14));

  std::vector<Var> xs{tape.input(0.2), tape.input(-1.0), tape.input(2.5)};
  const std::vector<Var> sm = softmax(xs, 0.7);
  Gradients gs = tape.backward(sum(sm));
  for (const Var& v : xs) CHECK(std::abs(gs[v]) < 1e-14);
}

TEST_CASE("max with constant routes the gradient") {
  Tape tape;
  Var a = tape.input(2.0);
  Var b = tape.input(-2.0);
  CHECK(tape.backward(max(a, 0.0) * 3.0)[a] == 3.0);
  CHECK(tape.backward(max(b, 0.0) * 3.0)[b] == 0.0);
}

TEST_CASE("constants fold without touching the tape") {
  Var a = 2.0;
  Var b = 5.0;
  Var c = exp(log(a * b) - 1.0);
  CHECK(c.is_constant());
  CHECK(c.value() == doctest::Approx(10.0 / std::exp(1.0)));
}

TEST_CASE("backward visits every node once and is deterministic") {
  Tape tape;
  std::vector<Var> xs;
  for (int k = 0; k < 6; ++k) xs.push_back(tape.input(0.1 * k - 0.2));
  Var acc = logsumexp(xs, 0.5);
  for (const Var& x : xs) acc += x * acc;
  const Gradients g1 = tape.backward(acc);
  const Gradients g2 = tape.backward(acc);
  CHECK(g1.visited() == tape.size());
  for (const Var& x : xs) CHECK(g1[x] == g2[x]);
}

namespace {

// Random composite of every op; returns f(x) built on `tape`.
Var composite(Tape& tape, const std::vector<Var>& x, double tau) {
  std::vector<Var> u{x[0] * x[1], x[2] - x[3], exp(x[4] * 0.3), log(x[5] * x[5] + 1.0)};
  std::vector<Var> s = softmax(u, tau);
  Var lse = logsumexp(u, tau);
  Var m = max(x[0] - x[2], -0.5);
  const std::vector<double> coeff{0.3, -1.1, 2.0, 0.7};
  Var a = affine(s, coeff, 0.25);
  (void)tape;
  return a * lse + m / (x[3] * x[3] + 2.0) - (-x[1]) * sum(s) + s[2] * s[3];
}

}  // namespace

TEST_CASE("gradients agree with central differences on random composites") {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x0(6);
    for (double& v : x0) v = U(rng);
    const double tau = trial % 2 == 0 ? 1.0 : 0.3;

    Tape tape;
    std::vector<Var> x;
    for (double v : x0) x.push_back(tape.input(v));
    Var f = composite(tape, x, tau);
    Gradients g = tape.backward(f);

    for (int k = 0; k < 6; ++k) {
      auto eval = [&](double delta) {
        Tape t;
        std::vector<Var> xp;
        for (int j = 0; j < 6; ++j) xp.push_back(t.input(x0[j] + (j == k ? delta : 0.0)));
        return composite(t, xp, tau).value();
      };
      const double fd = (eval(h) - eval(-h)) / (2.0 * h);
      const double ad = g[x[k]];
      const double scale = std::max(std::abs(ad), std::abs(fd));
      if (scale < 1e-3) {
        CHECK(std::abs(ad - fd) < 1e-7);
      } else {
        CHECK(std::abs(ad - fd) / scale < 1e-4);
      }
    }
  }
}

TEST_CASE("custom nodes propagate through their backward closure") {
  Tape tape;
  Var a = tape.input(1.5);
  Var b = tape.input(-0.5);
  const std::vector<Var> parents{a, b};
  const std::vector<double> values{a.value() * b.value(), a.value() + b.value()};
  std::vector<Var> out = tape.record_custom(parents, values, [&](std::span<const double> adj, std::span<double> pa) {
    pa[0] += adj[0] * b.value() + adj[1];
    pa[1] += adj[0] * a.value() + adj[1];
  });
  Gradients g = tape.backward(out[0] * 2.0 + out[1]);
  CHECK(g[a] == doctest::Approx(2.0 * -0.5 + 1.0));
  CHECK(g[b] == doctest::Approx(2.0 * 1.5 + 1.0));
}

TEST_CASE("clear empties the tape") {
  Tape tape;
  Var a = tape.input(1.0);
  (void)(a * a);
  tape.clear();
  CHECK(tape.size() == 0);
}
