#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "rwre/environment.hpp"
#include "rwre/stats.hpp"
#include "support.hpp"

using namespace rwre;

TEST_CASE("simplex samples stay in the kappa simplex") {
  CounterRng rng(1);
  for (int d = 2; d <= 4; ++d) {
    const double kappa = 0.9 / (4.0 * d);
    for (int i = 0; i < 2000; ++i) {
      const auto p = sample_simplex_point(kappa, d, rng);
      CHECK_NOTHROW(validate_transition(p, d, kappa));
    }
  }
  SUBCASE("kappa near the upper limit collapses to the centre") {
    const double kappa = 1.0 / 8.0 - 1e-12;
    const auto p = sample_simplex_point(kappa, 2, rng);
    for (int k = 0; k < 4; ++k) CHECK(p[k] == doctest::Approx(0.25).epsilon(1e-9));
  }
  SUBCASE("kappa outside range") {
    CHECK_THROWS_AS(sample_simplex_point(0.125, 2, rng), InvalidArgument);
    CHECK_THROWS_AS(sample_simplex_point(0.0, 2, rng), InvalidArgument);
  }
}

TEST_CASE("uniform Dirichlet coordinates have mean 1/(2d)") {
  CounterRng rng(2);
  const int n = 100000;
  std::array<double, 4> sum{};
  double min_entry = 1.0;
  for (int i = 0; i < n; ++i) {
    const auto p = sample_simplex_point(0.05, 2, rng);
    double s = 0.0;
    for (int k = 0; k < 4; ++k) {
      sum[k] += p[k];
      s += p[k];
      min_entry = std::min(min_entry, p[k]);
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK(min_entry >= 0.1 - 1e-15);
  // Var of one coordinate: 0.6^2 * 3 / (16 * 5).
  const double sigma = std::sqrt(0.36 * 3.0 / 80.0 / n);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(sum[k] / n - 0.25) < 3 * sigma);
}

TEST_CASE("Dirichlet alpha vector shifts the mean") {
  CounterRng rng(4);
  const auto alpha = expand_alpha({8, 1, 2, 2}, 2);
  double s0 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) s0 += sample_simplex_point(0.05, 2, alpha, rng)[0];
  // 2 kappa + (1 - 4 d kappa) * 8/13
  CHECK(s0 / n == doctest::Approx(0.1 + 0.6 * 8.0 / 13.0).epsilon(0.01));
  CHECK_THROWS_AS(expand_alpha({1, 2, 3}, 2), InvalidArgument);
  CHECK_THROWS_AS(expand_alpha({0.0}, 2), InvalidArgument);
}

TEST_CASE("iid environments are deterministic per site") {
  const Region region = Region::cube(2, 20);
  const auto a = Environment::iid(2, 0.05, region, 17);
  const auto b = Environment::iid(2, 0.05, region, 17);
  const auto c = Environment::iid(2, 0.05, region, 18);
  int differ = 0;
  CounterRng rng(0);
  for (int i = 0; i < 100; ++i) {
    const Site x = make_site({static_cast<std::int64_t>(rng() % 41) - 20, static_cast<std::int64_t>(rng() % 41) - 20});
    CHECK(a.at(x) == b.at(x));
    CHECK(a.at(x) == a.at(x));
    if (a.at(x) != c.at(x)) ++differ;
  }
  CHECK(differ == 100);
  SUBCASE("lazy and materialized agree") {
    Region big;
    big.d = 2;
    big.lo = make_site({-5000, -5000});
    big.hi = make_site({5000, 5000});
    const auto lazy = Environment::iid(2, 0.05, big, 17);
    CHECK_FALSE(lazy.materialized());
    for (int i = 0; i < 50; ++i) {
      const Site x = region.site(rng() % region.size());
      CHECK(lazy.at(x) == a.at(x));
    }
  }
  CHECK_THROWS_AS(a.at(make_site({21, 0})), RegionExhausted);
}

TEST_CASE("iid environment: ellipticity fuzz, independence and stationarity") {
  Region region;
  region.d = 2;
  region.lo = make_site({0, 0});
  region.hi = make_site({399, 249});
  const auto env = Environment::iid(2, 0.05, region, 99);
  double min_entry = 1.0;
  double max_sum_err = 0.0;
  for (std::uint64_t i = 0; i < region.size(); ++i) {
    const auto p = env.at(region.site(i));
    double s = 0.0;
    for (int k = 0; k < 4; ++k) {
      min_entry = std::min(min_entry, p[k]);
      s += p[k];
    }
    max_sum_err = std::max(max_sum_err, std::abs(s - 1.0));
  }
  CHECK(region.size() == 100000);
  CHECK(min_entry >= 0.1 - 1e-15);
  CHECK(max_sum_err <= 1e-12);

  // Correlation of omega(x, e1) across 10^4 distinct site pairs.
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::int64_t i = 0; i < 10000; ++i) {
    const Site x = region.site(static_cast<std::uint64_t>(2 * i));
    const Site y = region.site(static_cast<std::uint64_t>(2 * i + 1));
    xs.push_back(env.prob(x, 0));
    ys.push_back(env.prob(y, 0));
  }
  const double corr = stats::covariance(xs, ys) / (stats::stddev(xs) * stats::stddev(ys));
  CHECK(std::abs(corr) < 3.0 / std::sqrt(10000.0));

  // Marginal law of omega(x, e1) is the same in two disjoint batches.
  std::vector<double> left;
  std::vector<double> right;
  for (std::int64_t y = 0; y < 250; y += 5)
    for (std::int64_t x = 0; x < 200; x += 2) {
      left.push_back(env.prob(make_site({x, y}), 0));
      right.push_back(env.prob(make_site({x + 200, y}), 0));
    }
  const double dist = stats::ks_statistic(left, right);
  CHECK(stats::ks_pvalue_asymptotic(dist, left.size(), right.size()) > 0.01);
}

TEST_CASE("constant environments") {
  const auto env = testing::drifted_constant();
  CHECK_FALSE(env.bounded());
  CHECK(env.at(make_site({123456, -9})) == testing::probs2(0.7, 0.1, 0.1, 0.1));
  CHECK_THROWS_AS(Environment::constant(2, 0.05, testing::probs2(0.75, 0.05, 0.1, 0.1)), InvalidArgument);
  CHECK_THROWS_AS(Environment::constant(2, 0.05, testing::probs2(0.7, 0.1, 0.1, 0.2)), InvalidArgument);
  CHECK_THROWS_AS(Environment::symmetric(2, 0.2), InvalidArgument);
}

TEST_CASE("gibbs generator") {
  const Region region = Region::cube(2, 12);
  MixingParams m;
  m.C = 2.0;
  m.g = 1.0;
  m.r = 2;
  const auto a = Environment::gibbs(2, 0.05, region, m, 5, 3);
  const auto b = Environment::gibbs(2, 0.05, region, m, 5, 3);
  CHECK(snapshot_bytes(a) == snapshot_bytes(b));
  for (std::uint64_t i = 0; i < region.size(); ++i) CHECK_NOTHROW(validate_transition(a.at(region.site(i)), 2, 0.05));

  SUBCASE("zero coupling leaves the iid marginal") {
    MixingParams zero = m;
    zero.C = 0.0;
    std::vector<double> g;
    std::vector<double> iid;
    Region r2;
    r2.d = 2;
    r2.lo = make_site({0, 0});
    r2.hi = make_site({59, 59});
    const auto eg = Environment::gibbs(2, 0.05, r2, zero, 8, 2);
    const auto ei = Environment::iid(2, 0.05, r2, 1234);
    for (std::uint64_t i = 0; i < r2.size(); ++i) {
      g.push_back(eg.at(r2.site(i))[0]);
      iid.push_back(ei.at(r2.site(i))[0]);
    }
    CHECK(stats::ks_pvalue_asymptotic(stats::ks_statistic(g, iid), g.size(), iid.size()) > 0.01);
  }

  SUBCASE("positive coupling correlates neighbours, fast decay kills distant covariance") {
    Region r2;
    r2.d = 2;
    r2.lo = make_site({0, 0});
    r2.hi = make_site({79, 79});
    MixingParams strong{6.0, 0.5, 1};
    const auto env = Environment::gibbs(2, 0.05, r2, strong, 21, 4);
    std::vector<double> x0;
    std::vector<double> x1;
    for (std::int64_t i = 0; i < 79; i += 2)
      for (std::int64_t j = 0; j < 80; ++j) {
        x0.push_back(env.prob(make_site({i, j}), 0));
        x1.push_back(env.prob(make_site({i + 1, j}), 0));
      }
    const double corr = stats::covariance(x0, x1) / (stats::stddev(x0) * stats::stddev(x1));
    CHECK(corr > 0.1);

    MixingParams weak{1.0, 10.0, 1};
    const auto env2 = Environment::gibbs(2, 0.05, r2, weak, 22, 3);
    std::vector<double> a3;
    std::vector<double> b3;
    for (std::int64_t i = 0; i + 3 < 80; i += 4)
      for (std::int64_t j = 0; j < 80; ++j) {
        a3.push_back(env2.prob(make_site({i, j}), 0));
        b3.push_back(env2.prob(make_site({i + 3, j}), 0));
      }
    const double c3 = stats::covariance(a3, b3);
    const double se = stats::stddev(a3) * stats::stddev(b3) / std::sqrt(static_cast<double>(a3.size()));
    CHECK(std::abs(c3) < 3.0 * se);
  }

  SUBCASE("capacity") {
    Region huge;
    huge.d = 2;
    huge.lo = make_site({0, 0});
    huge.hi = make_site({4000, 4000});
    CHECK_THROWS_AS(Environment::gibbs(2, 0.05, huge, m, 1, 1), CapacityExceeded);
  }
}

TEST_CASE("snapshot round trip") {
  const Region region = Region::parse("-6:6,-4:5");
  CHECK(region.size() == 13 * 10);
  for (const auto& env : {Environment::iid(2, 0.05, region, 3, {8, 1, 2, 2}),
                          Environment::gibbs(2, 0.05, region, MixingParams{1.0, 1.0, 1}, 2, 2),
                          Environment::constant(2, 0.05, testing::probs2(0.7, 0.1, 0.1, 0.1), region)}) {
    const auto bytes = snapshot_bytes(env);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    const auto back = read_snapshot(in);
    CHECK(back.region().to_string() == region.to_string());
    CHECK(back.kappa() == env.kappa());
    CHECK(source_kind(back.source()) == source_kind(env.source()));
    for (std::uint64_t i = 0; i < region.size(); ++i) CHECK(back.at(region.site(i)) == env.at(region.site(i)));
    CHECK(snapshot_bytes(back) == bytes);
  }
  SUBCASE("corrupted input is rejected") {
    auto bytes = snapshot_bytes(Environment::iid(2, 0.05, region, 3));
    auto bad = bytes;
    bad[0] = 'X';
    std::istringstream in1(std::string(bad.begin(), bad.end()));
    CHECK_THROWS_AS(read_snapshot(in1), Error);
    std::istringstream in2(std::string(bytes.begin(), bytes.end() - 8));
    CHECK_THROWS_AS(read_snapshot(in2), Error);
    // Overwrite the last probability with a value below 2 kappa.
    auto low = bytes;
    const double tiny = 0.01;
    std::memcpy(low.data() + low.size() - 8, &tiny, 8);
    std::istringstream in3(std::string(low.begin(), low.end()));
    CHECK_THROWS_AS(read_snapshot(in3), InvalidArgument);
  }
  CHECK_THROWS_AS(snapshot_bytes(testing::drifted_constant()), InvalidArgument);
}

TEST_CASE("region parsing") {
  const auto r = Region::parse("-32:32,-32:32");
  CHECK(r.d == 2);
  CHECK(r.size() == 65 * 65);
  CHECK(r.site(r.index(make_site({3, -7}))) == make_site({3, -7}));
  CHECK(r.index(make_site({-32, -31})) == 1);
  CHECK_THROWS_AS(Region::parse("1:0,0:1"), InvalidArgument);
  CHECK_THROWS_AS(Region::parse("0:1"), InvalidArgument);
  CHECK_THROWS_AS(Region::parse("a:b,0:1"), InvalidArgument);
}

TEST_CASE("mixing diagnostic") {
  MixingParams m{1.0, 1.0, 1};
  SUBCASE("bound by direct summation") {
    const std::vector<Site> delta = {Site{}};
    const std::vector<Site> a = {make_site({10, 0}), make_site({6, 4}), make_site({0, -10})};
    CHECK(mixing_bound(delta, a, m) == doctest::Approx(std::exp(3.0 * std::exp(-10.0))));
  }
  SUBCASE("empty A") {
    const auto rep = mixing_ratio_diagnostic({}, {Site{}}, {}, m, 0.99, CounterRng(1));
    CHECK(rep.bound == 1.0);
    CHECK(rep.ratio == 1.0);
  }
  SUBCASE("too close") {
    MixingParams far{1.0, 1.0, 3};
    CHECK_THROWS_AS(mixing_ratio_diagnostic({}, {Site{}}, {make_site({1, 1})}, far, 0.99, CounterRng(1)),
                    GeometryError);
  }
  SUBCASE("iid ensemble has ratio 1 inside the CI") {
    std::vector<Environment> ens;
    for (std::uint64_t s = 0; s < 400; ++s) ens.push_back(Environment::iid(2, 0.05, Region::cube(2, 3), 1000 + s));
    const auto rep = mixing_ratio_diagnostic(ens, {Site{}}, {make_site({3, 0})}, m, 0.99, CounterRng(2));
    CHECK(rep.ratio_ci.contains(1.0));
    CHECK(rep.verdict == "holds");
  }
}
