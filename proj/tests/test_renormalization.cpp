#include <doctest.h>

#include <cmath>
#include <set>
#include <unordered_set>

#include "rwre/renormalization.hpp"
#include "support.hpp"

using namespace rwre;

namespace {

Environment strong_drift() { return Environment::constant(2, 0.025, testing::probs2(0.85, 0.05, 0.05, 0.05)); }

std::unordered_set<Site, SiteHash> site_set(const BoxSpec& b) {
  const auto s = b.interior_sites();
  return {s.begin(), s.end()};
}

// Existential rule of the good/bad recursion evaluated on explicit site sets.
bool brute_good(const BoxLattice& lat, int k, const std::vector<Site>& subs, const std::set<Site>& bad) {
  std::map<Site, std::unordered_set<Site, SiteHash>> sets;
  for (const auto& y : subs) sets[y] = site_set(lat.b2(k - 1, y));
  for (const auto& t : subs) {
    bool ok = true;
    for (const auto& y : bad) {
      if (y == t) continue;
      bool meet = false;
      for (const auto& x : sets[y]) meet = meet || sets[t].count(x) > 0;
      ok = ok && meet;
    }
    if (ok) return true;
  }
  return false;
}

GoodBadMap lower_map(const std::vector<Site>& subs, const std::set<Site>& bad) {
  GoodBadMap m;
  m.level = 0;
  for (const auto& y : subs) m.boxes[y].good = bad.count(y) == 0;
  return m;
}

}  // namespace

TEST_CASE("effective-criterion scale ladder") {
  const auto l = build_ladder_ec(2, 10, 20, 0.5, 0.5, 6);
  CHECK(l.levels[0].N == doctest::Approx(640.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(l.levels[0].N == doctest::Approx(905.097).epsilon(1e-6));
  for (const auto& lv : l.levels) {
    CHECK(lv.L == doctest::Approx(ec_closed_form_L(l, lv.k)).epsilon(1e-9));
    CHECK(lv.Lt == doctest::Approx(ec_closed_form_Lt(l, lv.k)).epsilon(1e-9));
    CHECK(lv.a == doctest::Approx(0.5 * std::pow(0.25, lv.k)));
    CHECK(lv.u == doctest::Approx(0.5 * std::pow(16.0, -lv.k)));
  }
  CHECK(l.levels[1].L == doctest::Approx(10 * 640.0 * std::sqrt(2.0)));
  CHECK_THROWS_AS(build_ladder_ec(2, 10, 5, 0.5, 0.5, 2), InvalidArgument);
  CHECK_THROWS_AS(build_ladder_ec(2, 10, 20, 1.0, 0.5, 2), InvalidArgument);
  CHECK_THROWS_AS(build_ladder_ec(2, 10, 20, 0.5, 1.5, 2), InvalidArgument);
  CHECK_THROWS_AS(build_ladder_ec(2, 10, 20, 0.5, 0.5, 40), InvalidArgument);
  CHECK(ec_phi(2.0, 3, 10.0, 5.0, 0.1) == doctest::Approx(2.0 * 100.0 * 5.0 * 0.1));
}

TEST_CASE("polynomial scale ladder") {
  SUBCASE("seed multiplier against an independent long double evaluation") {
    for (std::int64_t N0 : {5, 11, 50, 330, 1001}) {
      for (double kappa : {0.01, 0.05, 0.1}) {
        for (int d : {2, 3, 4}) {
          if (N0 < 3.0 * std::sqrt(d) || 4 * d * kappa >= 1) continue;
          const long double x = 15.0L * std::sqrt(static_cast<long double>(d)) * N0 *
                                std::log(1.0L / (2.0L * kappa)) / (2.0L * std::log(static_cast<long double>(N0)));
          CHECK(poly_seed_multiplier(N0, d, kappa) == static_cast<std::int64_t>(std::floor(x)) + 1);
        }
      }
    }
    CHECK(poly_seed_multiplier(11, 2, 0.05) == 113);
  }
  SUBCASE("exact products") {
    PolyLadderConfig c;
    c.N0 = 11;
    c.k_max = 6;
    const auto l = build_ladder_poly(c);
    REQUIRE(l.N.size() == 7);
    BigInt n = 11;
    for (int k = 1; k <= 6; ++k) {
      BigInt r = 113;
      for (int j = 0; j < k; ++j) r *= 44;
      n *= r;
      CHECK(l.ratio[static_cast<std::size_t>(k)] == r);
      CHECK(l.N[static_cast<std::size_t>(k)] == n);
    }
    CHECK(l.required_divisor == 110);
    CHECK_FALSE(l.divisible);
    CHECK(l.scale(1) == doctest::Approx(11.0 * 113 * 44));
    CHECK(l.transverse_scale(1) == doctest::Approx(std::pow(11.0 * 113 * 44, 3)));
    c.multiplier = 5;
    CHECK(build_ladder_poly(c).divisible);
    CHECK(ladder_json(build_ladder_poly(c))["levels"][6]["N"].get<std::string>() ==
          build_ladder_poly(c).N[6].str());
  }
  SUBCASE("mini preset") {
    const auto l = build_ladder_poly(PolyLadderConfig::mini(5, 0.05, 2, 2));
    CHECK(l.N[1] == 30);
    CHECK(l.N[2] == 1080);
    CHECK(l.required_divisor == 6);
    CHECK(l.divisible);
  }
  SUBCASE("validation") {
    PolyLadderConfig c;
    c.N0 = 4;
    CHECK_THROWS_AS(build_ladder_poly(c), InvalidArgument);
    c.N0 = 11;
    c.kappa = 0.3;
    CHECK_THROWS_AS(build_ladder_poly(c), InvalidArgument);
  }
}

TEST_CASE("lattice inclusion and intersection") {
  const Rotation id = Rotation::identity(2);
  const auto box = [&](double a, double b, bool closed) {
    return BoxSpec::from_ranges(id, Vec{}, {{a, b, closed, closed}, {0, 3, true, true}});
  };
  CHECK(lattice_subset(box(0, 3, false), box(0, 3, true)));
  CHECK_FALSE(lattice_subset(box(0, 3, true), box(0, 3, false)));
  CHECK(lattice_subset(box(0.5, 2.5, true), box(0, 3, false)));  // {1, 2} x ... inside
  CHECK(lattice_subset(box(0.2, 0.8, true), box(5, 6, false)));   // no lattice points
  CHECK(lattice_intersect(box(0, 3, true), box(3, 6, true)));
  CHECK_FALSE(lattice_intersect(box(0, 3, false), box(3, 6, false)));
  CHECK_FALSE(lattice_intersect(box(0, 3, true), box(3.5, 6, true)));
}

TEST_CASE("quasi-covering at miniature scales") {
  SUBCASE("mini preset") {
    const auto l = build_ladder_poly(PolyLadderConfig::mini(5, 0.05, 2, 1));
    const BoxLattice lat(l, Rotation::identity(2));
    for (const Site& z : {Site{}, make_site({1, -1}), make_site({-2, 3})}) {
      CHECK(lat.uncovered_sites(1, z) == 0);
      for (const auto& y : lat.sub_boxes(1, z)) CHECK(lattice_subset(lat.dot1(0, y), lat.b2(1, z)));
    }
  }
  SUBCASE("mini preset in d = 3") {
    const auto l = build_ladder_poly(PolyLadderConfig::mini(6, 0.05, 3, 1));
    const BoxLattice lat(l, Rotation::identity(3));
    CHECK(lat.uncovered_sites(1, Site{}) == 0);
  }
  SUBCASE("standard divisors with ratio 110") {
    PolyLadderConfig c;
    c.N0 = 5;
    c.k_max = 1;
    c.v = 110;
    c.multiplier = 1;
    c.shape = {11, 10, 1};
    const auto l = build_ladder_poly(c);
    REQUIRE(l.divisible);
    const BoxLattice lat(l, Rotation::identity(2));
    CHECK(lat.uncovered_sites(1, Site{}) == 0);
  }
  SUBCASE("a ratio that is not a multiple of the divisors leaves gaps") {
    auto c = PolyLadderConfig::mini(5, 0.05, 2, 1);
    c.v = 7;
    const auto l = build_ladder_poly(c);
    CHECK_FALSE(l.divisible);
    const BoxLattice lat(l, Rotation::identity(2));
    CHECK(lat.uncovered_sites(1, Site{}) > 0);
  }
}

TEST_CASE("good and bad recursion") {
  const auto l = build_ladder_poly(PolyLadderConfig::mini(5, 0.05, 2, 1));
  const BoxLattice lat(l, Rotation::identity(2));
  const auto subs = lat.sub_boxes(1, Site{});
  REQUIRE(subs.size() > 50);
  const auto classify = [&](const std::set<Site>& bad) {
    return classify_level(lat, 1, {Site{}}, lower_map(subs, bad)).boxes.at(Site{});
  };
  SUBCASE("all good") { CHECK(classify({}).good); }
  SUBCASE("one bad sub-box") {
    const auto s = classify({subs[7]});
    CHECK(s.good);
    CHECK(s.bad_children == 1);
  }
  SUBCASE("two disjoint bad sub-boxes") {
    const Site a = make_site({0, 0});
    const Site b = make_site({3, 0});
    REQUIRE_FALSE(lattice_intersect(lat.b2(0, a), lat.b2(0, b)));
    CHECK_FALSE(classify({a, b}).good);
  }
  SUBCASE("two overlapping bad sub-boxes") {
    const auto s = classify({make_site({0, 0}), make_site({1, 0})});
    CHECK(s.good);
    REQUIRE(s.witness.has_value());
  }
  SUBCASE("missing lower classification") {
    GoodBadMap partial = lower_map(subs, {});
    partial.boxes.erase(subs[0]);
    CHECK_THROWS_AS(classify_level(lat, 1, {Site{}}, partial), InvalidArgument);
  }
  SUBCASE("agrees with brute force on random bad sets") {
    CounterRng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const double p = 0.01 + 0.05 * rng.uniform();
      std::set<Site> bad;
      for (const auto& y : subs)
        if (rng.uniform() < p) bad.insert(y);
      const auto s = classify(bad);
      CHECK(s.good == brute_good(lat, 1, subs, bad));
      if (s.good) CHECK(s.bad_children <= 9);
    }
  }
}

TEST_CASE("level-0 classification matches a dense solve") {
  const auto l = build_ladder_poly(PolyLadderConfig::mini(5, 0.05, 2, 1));
  const BoxLattice lat(l, Rotation::identity(2));
  const auto env = Environment::iid(2, 0.05, Region::cube(2, 30), 3, {8, 1, 2, 2});
  std::vector<Site> idx{Site{}, make_site({1, 1}), make_site({-1, 2})};
  const auto m = classify_level0(env, lat, idx, {});
  for (const auto& z : idx) {
    const auto h = testing::dense_frontal_all(env, lat.b2(0, z));
    double inf = 1.0;
    for (const auto& x : lat.tilde1(0, z).interior_sites()) inf = std::min(inf, h.at(x));
    CHECK(m.boxes.at(z).inf_frontal == doctest::Approx(inf).epsilon(1e-10));
    CHECK(m.boxes.at(z).good == (inf > 0.8));
  }
  ClassifyOptions mc;
  mc.method.kind = Method::monte_carlo;
  mc.method.n_walks = 4000;
  mc.seed = 5;
  const auto mm = classify_level0(env, lat, idx, mc);
  for (const auto& z : idx) {
    const double e = m.boxes.at(z).inf_frontal;
    CHECK(std::abs(mm.boxes.at(z).inf_frontal - e) < 0.05);
  }
}

TEST_CASE("classification of environments") {
  const auto l = build_ladder_poly(PolyLadderConfig::mini(5, 0.05, 2, 1));
  const BoxLattice lat(l, Rotation::identity(2));
  SUBCASE("strong drift is good at every level") {
    const auto maps = classify_boxes(strong_drift(), lat, 1, {Site{}}, {});
    REQUIRE(maps.size() == 2);
    CHECK(maps[1].good(Site{}));
    for (const auto& [y, s] : maps[0].boxes) CHECK(s.good);
  }
  SUBCASE("the symmetric walk is bad") {
    const auto maps = classify_boxes(Environment::symmetric(2, 0.05), lat, 1, {Site{}}, {});
    CHECK_FALSE(maps[1].good(Site{}));
    CHECK(maps[1].boxes.at(Site{}).bad_children == maps[1].boxes.at(Site{}).children);
  }
  SUBCASE("dependence region covers every level-0 box") {
    const Region r = dependence_region(lat, 1, Site{});
    for (const auto& y : lat.sub_boxes(1, Site{})) {
      for (const auto& x : lat.b2(0, y).interior_sites()) {
        for (int k = 0; k < 4; ++k) CHECK(r.contains(step(x, k)));
      }
    }
  }
}

TEST_CASE("bad-box probability") {
  BadProbabilityConfig c;
  c.ladder = PolyLadderConfig::mini(5, 0.025, 2, 1);
  c.level = 1;
  c.m_env = 40;
  SUBCASE("deterministic strong drift has no bad boxes") {
    c.ensemble.kind = "constant";
    c.ensemble.kappa = 0.025;
    c.ensemble.probs = testing::probs2(0.85, 0.05, 0.05, 0.05);
    const auto rep = estimate_bad_probability(c);
    CHECK(rep.estimates["levels"][1]["bad"] == 0);
    CHECK(rep.estimates["levels"][1]["upper_bound"].get<double>() ==
          doctest::Approx(1.0 - std::pow(0.05, 1.0 / 40)).epsilon(1e-6));
    CHECK(rep.verdict == "holds");
    CHECK_FALSE(rep.warnings.empty());
  }
  SUBCASE("symmetric walk is always bad") {
    c.ensemble.kind = "symmetric";
    c.ensemble.kappa = 0.025;
    const auto rep = estimate_bad_probability(c);
    CHECK(rep.estimates["levels"][0]["p_hat"].get<double>() == 1.0);
    CHECK(rep.estimates["levels"][1]["p_hat"].get<double>() == 1.0);
  }
  SUBCASE("iid ensemble is reproducible and thread invariant") {
    c.ladder = PolyLadderConfig::mini(5, 0.05, 2, 1);
    c.ensemble.kind = "iid";
    c.ensemble.kappa = 0.05;
    c.ensemble.alpha = {8, 1, 2, 2};
    c.ensemble.seed = 9;
    c.m_env = 20;
    c.J = 5;
    const auto a = estimate_bad_probability(c);
    c.threads = 4;
    const auto b = estimate_bad_probability(c);
    CHECK(a.estimates == b.estimates);
    const double p0 = a.estimates["level0_all_boxes"]["p_hat"].get<double>();
    const double p1 = a.estimates["levels"][1]["p_hat"].get<double>();
    CHECK(p1 <= p0 + 1e-12);
    CHECK(a.estimates.contains("union_bound"));
    CHECK(a.estimates["lemma_reference_level0"].get<double>() == doctest::Approx(std::pow(5.0, -(5.0 - 9.0))));
  }
}

TEST_CASE("quenched bound inside a good box") {
  const auto l = build_ladder_poly(PolyLadderConfig::mini(5, 0.025, 2, 1));
  GoodBoxBoundConfig c;
  c.n_walks = 4000;
  c.seed = 3;
  SUBCASE("level 0") {
    const auto rep = quenched_goodbox_bound_check(strong_drift(), l, c);
    const double exact = rep.estimates["exact_sup_over_starts"].get<double>();
    const double est = rep.estimates["sup_nonfrontal"].get<double>();
    CHECK(std::abs(est - exact) <= 4.0 * rep.estimates["sigma"].get<double>() + 1e-9);
    CHECK(rep.estimates["below_goodness_threshold"].get<bool>());
    CHECK(rep.estimates["eta4_fit"].get<double>() > 0);
  }
  SUBCASE("level 1") {
    c.level = 1;
    c.n_walks = 500;
    c.max_starts = 20;
    const auto rep = quenched_goodbox_bound_check(strong_drift(), l, c);
    CHECK(rep.estimates.contains("sup_nonfrontal"));
    CHECK_FALSE(rep.warnings.empty());
  }
  SUBCASE("refuses a bad box") {
    CHECK_THROWS_AS(quenched_goodbox_bound_check(Environment::symmetric(2, 0.025), l, c), InvalidArgument);
  }
}
