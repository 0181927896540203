#include <doctest.h>

#include <cmath>

#include "rwre/clt.hpp"
#include "rwre/oracle.hpp"
#include "support.hpp"

using namespace rwre;

namespace {

std::vector<Trajectory> walks(const Environment& env, std::size_t n, std::int64_t horizon, std::uint64_t seed) {
  return simulate_batch(env, Site{}, StopSpec({StopCondition::horizon(horizon)}), {n, seed, 1, false});
}

EndpointSample endpoints_of(const std::vector<Trajectory>& ts, std::int64_t horizon) {
  EndpointSample s;
  s.horizon = horizon;
  for (const auto& t : ts) s.endpoints.push_back(t.end);
  return s;
}

EnsembleSpec drifted_iid(std::uint64_t seed) {
  EnsembleSpec e;
  e.kind = "iid";
  e.alpha = {8, 1, 2, 2};
  e.seed = seed;
  return e;
}

double sigma_of(const stats::Interval& ci) { return ci.width() / (2.0 * 1.959963984540054); }

}  // namespace

TEST_CASE("orthogonal projection") {
  const Vec e1 = make_vec({1, 0});
  CHECK(project_orthogonal(make_vec({3, 4}), e1) == make_vec({0, 4}));
  CHECK(norm2(project_orthogonal(e1, e1)) == 0.0);
  CHECK(project_orthogonal(make_vec({0, 2}), e1) == make_vec({0, 2}));
  CHECK_THROWS_AS(project_orthogonal(e1, make_vec({1, 1})), InvalidArgument);
  CounterRng rng(4);
  for (int i = 0; i < 200; ++i) {
    Vec v{};
    Vec z{};
    for (int k = 0; k < 3; ++k) {
      v[k] = rng.uniform() - 0.5;
      z[k] = 10 * (rng.uniform() - 0.5);
    }
    const double n = norm2(v);
    for (int k = 0; k < 3; ++k) v[k] /= n;
    const Vec p = project_orthogonal(z, v);
    CHECK(std::abs(dot(p, v)) < 1e-10);
    const Vec pp = project_orthogonal(p, v);
    for (int k = 0; k < 3; ++k) CHECK(pp[k] == doctest::Approx(p[k]).epsilon(1e-12));
  }
}

TEST_CASE("exponent windows") {
  const double gt = 7.0 * transversal_t(0.05, 7.0);
  const double lk = 2.0 * std::log(20.0);
  CHECK(varsigma_window(0.05, 7.0).lo == doctest::Approx((gt + lk) / (2 * gt)));
  CHECK(varsigma_window(0.05, 7.0).lo < 1.0);
  CHECK(beta_window(0.05, 7.0).lo == doctest::Approx(2 * gt / (3 * gt - lk)));
  CHECK(beta_window(0.05, 7.0).lo < 1.0);
  const double s = 0.98;
  const double eps = fluctuation_epsilon(0.05, 7.0, s);
  CHECK(eps > 0);
  CHECK(2 * s - 1 - eps > 0);
  CHECK(chi_bound(0.05, 7.0, 2, 0.99) > 0);
}

TEST_CASE("velocity in constant environments") {
  const auto env = testing::mild_constant();
  const auto ts = walks(env, 400, 2000, 1);
  const auto v = estimate_velocity({}, endpoints_of(ts, 2000), 2, {});
  REQUIRE(v.has_plugin);
  CHECK_FALSE(v.has_ratio);
  // mean step sum_e e omega(e) = (0.3, 0)
  CHECK(std::abs(v.v_plugin[0] - 0.3) <= 3 * sigma_of(v.ci_plugin[0]));
  CHECK(std::abs(v.v_plugin[1]) <= 3 * sigma_of(v.ci_plugin[1]));
  CHECK(v.ballistic(make_vec({1, 0})));

  const auto sym = walks(Environment::symmetric(2, 0.05), 400, 2000, 2);
  const auto vs = estimate_velocity({}, endpoints_of(sym, 2000), 2, {});
  CHECK(vs.ci_plugin[0].contains(0.0));
  CHECK(vs.ci_plugin[1].contains(0.0));
  CHECK_FALSE(vs.ballistic(make_vec({1, 0})));

  CHECK_THROWS_AS(estimate_velocity({}, endpoints_of(std::vector<Trajectory>(ts.begin(), ts.begin() + 50), 2000), 2, {}),
                  InvalidArgument);
}

TEST_CASE("ratio and plug-in velocity agree on a drifted iid ensemble") {
  const auto ens = drifted_iid(9);
  RegenRunConfig run;
  run.regen.L = 1;
  run.regen.window = 100;
  run.n_traj = 300;
  run.horizon = 3000;
  run.seed = 3;
  const auto records = simulate_regenerations(ens, run);
  EndpointSample ends;
  ends.horizon = 3000;
  const Region region = Region::cube(2, 3001);
  for (std::size_t i = 0; i < 300; ++i) {
    CounterRng rng = CounterRng(17).split(i);
    ends.endpoints.push_back(
        simulate_quenched(ens.make(1000 + i, region, true), Site{}, StopSpec({StopCondition::horizon(3000)}), rng).end);
  }
  const auto v = estimate_velocity(records, ends, 2, {});
  REQUIRE(v.has_ratio);
  REQUIRE(v.has_plugin);
  CHECK(v.n_blocks >= 1000);
  CHECK(v.consistent);
  REQUIRE(v.has_direction);
  CHECK(std::abs(norm2(v.v_hat_L) - 1.0) < 1e-10);
  CHECK(v.v_hat_L[0] > 0.9);
  CHECK(v.ballistic(make_vec({1, 0})));
}

TEST_CASE("transversal fluctuations") {
  SUBCASE("axis path has no transverse excursion") {
    Trajectory t;
    t.steps.assign(1200, 0);
    t.end = make_site({1200, 0});
    TransversalConfig cfg;
    cfg.M = 50;
    const auto rep = transversal_fluctuation_stat({t, t}, make_vec({1, 0}), cfg);
    CHECK(rep.confirmed == 2);
    CHECK(rep.sup_norm == std::vector<double>{0.0, 0.0});
    for (const double e : rep.exceedance) CHECK(e == 0.0);
    CHECK(rep.verdict == "reported");
  }
  SUBCASE("exceedance decreases in M") {
    const auto ts = walks(testing::mild_constant(), 2000, 1500, 5);
    std::vector<double> strict;
    std::vector<double> loose;
    for (const double M : {25.0, 50.0, 100.0}) {
      TransversalConfig cfg;
      cfg.M = M;
      cfg.varsigma = {0.9};
      const auto rep = transversal_fluctuation_stat(ts, make_vec({1, 0}), cfg);
      CHECK(rep.confirmed > 1900);
      CHECK_FALSE(rep.varsigma_in_window.front());
      strict.push_back(rep.exceedance.front());
      cfg.eta = 0.5;
      loose.push_back(transversal_fluctuation_stat(ts, make_vec({1, 0}), cfg).exceedance.front());
      if (M == 50.0) CHECK(rep.sign_test_p > 0.01);
    }
    CHECK(strict[0] > strict[1]);
    CHECK(strict[1] >= strict[2]);
    CHECK(loose[0] > loose[1]);
    CHECK(loose[1] > loose[2]);
  }
  SUBCASE("short horizons are inconclusive") {
    const auto ts = walks(testing::mild_constant(), 50, 500, 6);
    TransversalConfig cfg;
    cfg.M = 50;
    const auto rep = transversal_fluctuation_stat(ts, make_vec({1, 0}), cfg);
    CHECK(rep.confirmed == 0);
    CHECK(rep.verdict == "inconclusive");
    CHECK_FALSE(rep.warnings.empty());
  }
}

TEST_CASE("CLT checks") {
  CltConfig cfg;
  cfg.n_grid = {2000};
  cfg.resamples = 400;
  SUBCASE("symmetric environment has covariance I/d") {
    const auto ts = walks(Environment::symmetric(2, 0.05), 500, 2000, 7);
    const auto rep = clt_scaling_check(ts, Vec{}, cfg);
    CHECK(rep.R_source == "endpoints");
    for (int i = 0; i < 2; ++i) {
      const double se = sigma_of(rep.R_ci[i][i]);
      CHECK(std::abs(rep.R[i][i] - 0.5) <= 3 * se);
    }
    CHECK(rep.R_ci[0][1].contains(0.0));
    CHECK(rep.R[0][1] == rep.R[1][0]);
    CHECK(rep.R_psd);
    CHECK(rep.normal_ok);
  }
  SUBCASE("drifted constant environment") {
    const auto ts = walks(testing::mild_constant(), 500, 2000, 8);
    const auto rep = clt_scaling_check(ts, make_vec({0.3, 0}), cfg);
    CHECK(rep.normal_ok);
    CHECK(rep.scaling_ok);
    CHECK(rep.verdict == "holds");
    const auto& dir = rep.levels.front().directions.front();
    CHECK(std::abs(dir.mean) <= dir.mean_tolerance);
    CHECK(dir.variance_ratio[1] == doctest::Approx(0.5).epsilon(0.2));
    // per-step covariance diag(E[X1^2] - v^2, E[X2^2]) = diag(0.41, 0.5)
    CHECK(std::abs(rep.R[0][0] - 0.41) <= 3 * sigma_of(rep.R_ci[0][0]));
    CHECK(std::abs(rep.R[1][1] - 0.5) <= 3 * sigma_of(rep.R_ci[1][1]));
    CHECK(rep.samples_csv().rfind("n,direction,index,standardized\n", 0) == 0);
  }
  SUBCASE("covariance from regeneration blocks") {
    RegenRunConfig run;
    run.regen.L = 1;
    run.regen.window = 100;
    run.n_traj = 200;
    run.horizon = 4000;
    const auto records = simulate_regenerations(testing::mild_constant(), run);
    const auto ts = walks(testing::mild_constant(), 300, 2000, 9);
    const auto rep = clt_scaling_check(ts, make_vec({0.3, 0}), cfg, records);
    CHECK(rep.R_source == "regeneration_blocks");
    CHECK(std::abs(rep.R[0][0] - 0.41) <= 3 * sigma_of(rep.R_ci[0][0]));
    CHECK(std::abs(rep.R[1][1] - 0.5) <= 3 * sigma_of(rep.R_ci[1][1]));
    CHECK(rep.R_ci[0][1].contains(0.0));
  }
  SUBCASE("transversely exchangeable environment") {
    TransitionVector p{};
    const double q[6] = {0.3, 0.1, 0.15, 0.15, 0.15, 0.15};
    for (int k = 0; k < 6; ++k) p[k] = q[k];
    const auto ts = walks(Environment::constant(3, 0.05, p), 400, 2000, 10);
    cfg.n_grid = {1000};
    const auto rep = clt_scaling_check(ts, make_vec({0.2, 0, 0}), cfg);
    REQUIRE(rep.R.size() == 3);
    const double se = std::hypot(sigma_of(rep.R_ci[1][1]), sigma_of(rep.R_ci[2][2]));
    CHECK(std::abs(rep.R[1][1] - rep.R[2][2]) <= 3 * se);
    CHECK(rep.R_psd);
  }
  SUBCASE("insufficient samples") {
    const auto ts = walks(testing::mild_constant(), 100, 2000, 11);
    CHECK_THROWS_AS(clt_scaling_check(ts, Vec{}, cfg), InvalidArgument);
  }
  SUBCASE("short paths") {
    const auto ts = walks(testing::mild_constant(), 300, 100, 12);
    CHECK_THROWS_AS(clt_scaling_check(ts, Vec{}, cfg), InvalidArgument);
  }
}

TEST_CASE("atypical quenched frequency") {
  AtypicalConfig cfg;
  SUBCASE("symmetric ensemble exits forward with probability one half") {
    cfg.ensemble.kind = "symmetric";
    cfg.M = 4;
    cfg.n_env = 5;
    const auto rep = atypical_quenched_frequency(cfg);
    CHECK(rep.threshold > 0);
    CHECK(rep.threshold < 1);
    CHECK(rep.exact == 5);
    for (const double p : rep.forward_lo) CHECK(p == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(rep.frequency == 0.0);
  }
  SUBCASE("backward drift matches gambler's ruin") {
    cfg.ensemble.kind = "constant";
    cfg.ensemble.probs = testing::probs2(0.1, 0.4, 0.25, 0.25);
    cfg.M = 3;
    cfg.n_env = 2;
    const auto rep = atypical_quenched_frequency(cfg);
    const double exact = lazy_gr_oracle(0.1, 0.4, 3, 3);
    CHECK(rep.forward_lo[0] == doctest::Approx(exact).epsilon(1e-12));
    CHECK(rep.forward_hi[0] == doctest::Approx(exact).epsilon(1e-12));
    CHECK(rep.below == 2);
    CHECK(rep.frequency == 1.0);
    cfg.state_cap = 1;
    cfg.n_walks = 100;
    const auto mc = atypical_quenched_frequency(cfg);
    CHECK(mc.exact == 0);
    CHECK(mc.undecided == 2);
    CHECK(mc.verdict == "inconclusive");
    CHECK(mc.warnings.size() >= 2);
  }
  SUBCASE("drifted iid ensemble") {
    cfg.ensemble = drifted_iid(4);
    cfg.M = 6;
    cfg.n_env = 30;
    const auto rep = atypical_quenched_frequency(cfg);
    CHECK(rep.exact == 30);
    CHECK(rep.below == 0);
    CHECK(rep.undecided == 0);
    CHECK(rep.frequency == 0.0);
    CHECK(rep.frequency_upper == doctest::Approx(1.0 - std::pow(0.05, 1.0 / 30)));
    CHECK(rep.frequency_upper <= 3.0 / 30);
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(rep.forward_lo[i] <= rep.forward_hi[i]);
      CHECK(rep.forward_hi[i] - rep.forward_lo[i] < 1e-6);
      CHECK(rep.forward_lo[i] > 0.9);
    }
    cfg.threads = 3;
    CHECK(atypical_quenched_frequency(cfg).forward_lo == rep.forward_lo);
  }
  SUBCASE("beta outside the window is reported") {
    cfg.ensemble.kind = "symmetric";
    cfg.n_env = 1;
    cfg.beta = 0.5;
    const auto rep = atypical_quenched_frequency(cfg);
    CHECK_FALSE(rep.beta_in_window);
    CHECK_FALSE(rep.warnings.empty());
  }
}
