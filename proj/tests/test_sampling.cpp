#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dabm/sampling.hpp"

using namespace dabm;
using dabm::ad::Tape;
using dabm::ad::Var;

namespace {

std::vector<Var> inputs(Tape& tape, const std::vector<double>& xs) {
  std::vector<Var> out;
  for (double x : xs) out.push_back(tape.input(x));
  return out;
}

double sum_values(const std::vector<Var>& ys) {
  double s = 0.0;
  for (const Var& y : ys) s += y.value();
  return s;
}

}  // namespace

TEST_CASE("gumbel-softmax degenerate and symmetric cases") {
  Tape tape;
  auto p = inputs(tape, {1.0, 0.0});
  const std::vector<double> g{-0.3, 2.7};
  auto y = gumbel_softmax_sample(p, 1.0, g);
  CHECK(y[0].value() == 1.0);
  CHECK(y[1].value() == 0.0);

  auto half = inputs(tape, {0.5, 0.5});
  const std::vector<double> zero{0.0, 0.0};
  auto y2 = gumbel_softmax_sample(half, 1.0, zero);
  CHECK(y2[0].value() == doctest::Approx(0.5));
  CHECK(y2[1].value() == doctest::Approx(0.5));

  auto none = inputs(tape, {0.0, 0.0});
  CHECK_THROWS_AS(gumbel_softmax_sample(none, 1.0, zero), InvalidDistributionError);
}

TEST_CASE("relaxed samples lie on the simplex") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tape tape;
    std::vector<double> p(1 + trial % 7);
    for (double& v : p) v = U(rng);
    if (trial % 5 == 0) p[0] = 0.0;
    const double tau = 0.05 + 3.0 * U(rng);
    if (std::accumulate(p.begin(), p.end(), 0.0) == 0.0) continue;
    auto y = gumbel_softmax_sample(inputs(tape, p), tau, rng);
    CHECK(std::abs(sum_values(y) - 1.0) < 1e-9);

    std::vector<double> keyed(p.size());
    std::vector<std::uint32_t> ids(p.size());
    std::iota(ids.begin(), ids.end(), 0u);
    gumbel_softmax_keyed(p, ids, rng(), tau, keyed);
    CHECK(std::abs(std::accumulate(keyed.begin(), keyed.end(), 0.0) - 1.0) < 1e-9);
  }
}

TEST_CASE("low-temperature argmax frequencies follow the pmf") {
  const std::vector<double> p{0.7310585786300049, 0.2689414213699951};
  std::mt19937_64 rng(11);
  const int draws = 100000;
  int first = 0;
  std::vector<double> g(2), y(2);
  std::extreme_value_distribution<double> gumbel(0.0, 1.0);
  for (int k = 0; k < draws; ++k) {
    g[0] = gumbel(rng);
    g[1] = gumbel(rng);
    gumbel_softmax_values(p, g, 0.01, y);
    if (y[0] > y[1]) ++first;
  }
  const double freq = static_cast<double>(first) / draws;
  CHECK(std::abs(freq - p[0]) < 0.01);
}

TEST_CASE("keyed noise is frozen") {
  const std::vector<double> p{0.2, 0.5, 0.3};
  const std::vector<std::uint32_t> ids{4, 9, 17};
  std::vector<double> a(3), b(3), c(3);
  gumbel_softmax_keyed(p, ids, 1234, 0.5, a);
  gumbel_softmax_keyed(p, ids, 1234, 0.5, b);
  gumbel_softmax_keyed(p, ids, 1235, 0.5, c);
  CHECK(a == b);
  CHECK(a != c);

  // The tau = 1 fast path equals the general formula on the same noise.
  std::vector<double> fast(3), general(3), g(3);
  gumbel_softmax_keyed(p, ids, 99, 1.0, fast);
  for (int k = 0; k < 3; ++k) g[k] = NoiseStream::gumbel_at(99, ids[k]);
  gumbel_softmax_values(p, g, 1.0, general);
  for (int k = 0; k < 3; ++k) CHECK(fast[k] == doctest::Approx(general[k]).epsilon(1e-12));
}

TEST_CASE("poisson truncation limits") {
  // Smallest n with P(X >= n) < 1e-6, from the cumulative Poisson distribution.
  const std::vector<std::pair<double, int>> cases{{1.0, 10}, {0.5, 8}, {0.1, 5}, {1.3, 11}, {0.2, 6}, {0.02, 4}};
  for (auto [lambda, n] : cases) {
    const TruncatedCountDist d = truncate(CountBase::poisson(lambda));
    CHECK(d.limit() == n);
    CHECK(d.num_categories() == n + 1);
    const auto pmf = d.pmf();
    CHECK(std::accumulate(pmf.begin(), pmf.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.tail_mass() < 1e-6);
  }

  const TruncatedCountDist tiny = truncate(CountBase::poisson(1e-12));
  CHECK(tiny.pmf()[0] == doctest::Approx(1.0));

  const TruncatedCountDist coarse = truncate(CountBase::poisson(0.5), {0.5, 64});
  CHECK(coarse.limit() == 1);
  CHECK(coarse.pmf()[0] == doctest::Approx(std::exp(-0.5)));
  CHECK(coarse.pmf()[1] == doctest::Approx(1.0 - std::exp(-0.5)));

  CHECK_THROWS_AS(truncate(CountBase::poisson(200.0)), ConfigError);
  CHECK_THROWS_AS(truncate(CountBase::poisson(-1.0)), InvalidDistributionError);
}

TEST_CASE("discretized exponential durations") {
  const TruncatedCountDist d = discretize_exponential(1.0, 1.0);
  CHECK(d.value_of(0) == 1);
  CHECK(d.pmf()[0] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(d.pmf()[1] == doctest::Approx(std::exp(-1.0) * (1.0 - std::exp(-1.0))).epsilon(1e-14));
  const auto pmf = d.pmf();
  CHECK(std::accumulate(pmf.begin(), pmf.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));

  // Fast trips (large rate) finish in one step.
  CHECK(discretize_exponential(50.0, 1.0).pmf()[0] > 1.0 - 1e-15);
  CHECK_THROWS_AS(discretize_exponential(0.0, 1.0), InvalidDistributionError);
}

TEST_CASE("soft counts") {
  Tape tape;
  auto pmf = inputs(tape, {1.0, 0.0, 0.0});
  const std::vector<double> g{0.4, -1.0, 3.0};
  const SoftCount sc = gengs_count_sample(pmf, 0, 1.0, g);
  CHECK(sc.count.value() == 0.0);

  // Relaxed counts at tau = 1 are biased upward; Monte-Carlo oracle over
  // 2e6 draws of softmax(log p + g) on the 11-category truncation: 1.19525.
  const TruncatedCountDist d = truncate(CountBase::poisson(1.0));
  std::mt19937_64 rng(5);
  const int draws = 100000;
  double total = 0.0;
  for (int k = 0; k < draws; ++k) total += gengs_count_sample(d, 1.0, rng).count.value();
  CHECK(std::abs(total / draws - 1.19525) < 0.006);
}

TEST_CASE("soft count gradient matches finite differences") {
  const std::vector<double> p0{0.35, 0.25, 0.2, 0.15, 0.05};
  const std::vector<double> g{0.3, -0.8, 1.1, 0.05, -0.2};
  const double tau = 0.7;
  Tape tape;
  auto p = inputs(tape, p0);
  const SoftCount sc = gengs_count_sample(p, 0, tau, g);
  const auto grads = tape.backward(sc.count);
  for (std::size_t k = 0; k < p0.size(); ++k) {
    auto eval = [&](double delta) {
      Tape t;
      std::vector<double> q = p0;
      q[k] += delta;
      return gengs_count_sample(inputs(t, q), 0, tau, g).count.value();
    };
    const double h = 1e-6;
    const double fd = (eval(h) - eval(-h)) / (2 * h);
    CHECK(std::abs(grads[p[k]] - fd) / std::max(1e-12, std::abs(fd)) < 1e-4);
  }
}

TEST_CASE("hard sampling statistics") {
  std::mt19937_64 rng(17);
  const std::vector<double> deg{1.0, 0.0, 0.0};
  for (int k = 0; k < 1000; ++k) CHECK(hard_sample_categorical(deg, rng) == 0);

  const int draws = 100000;
  double s = 0.0;
  const TruncatedCountDist pois = truncate(CountBase::poisson(1.0));
  for (int k = 0; k < draws; ++k) s += hard_sample(pois, rng);
  CHECK(std::abs(s / draws - 1.0) < 0.02);

  double s1 = 0.0, s2 = 0.0;
  const TruncatedCountDist half = truncate(CountBase::poisson(0.5));
  for (int k = 0; k < draws; ++k) {
    const double x = hard_sample(half, rng);
    s1 += x;
    s2 += x * x;
  }
  const double mean = s1 / draws;
  CHECK(std::abs((s2 - draws * mean * mean) / (draws - 1) - 0.5) < 0.02);

  const TruncatedCountDist dur = discretize_exponential(1.0, 1.0);
  double expected = 0.0;
  for (int c = 0; c < dur.num_categories(); ++c) expected += dur.value_of(c) * dur.pmf()[c];
  double sd = 0.0;
  for (int k = 0; k < draws; ++k) sd += hard_sample(dur, rng);
  // sd of the duration is sqrt(0.92); 3 sigma over 1e5 draws ~ 0.009.
  CHECK(std::abs(sd / draws - expected) < 0.01);
  CHECK(expected == doctest::Approx(1.0 / (1.0 - std::exp(-1.0))).epsilon(1e-5));
}
