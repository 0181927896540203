#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <CLI11.hpp>
#include <json.hpp>

#include "rwre/ballisticity.hpp"
#include "rwre/clt.hpp"
#include "rwre/oracle.hpp"
#include "rwre/regeneration.hpp"
#include "rwre/renormalization.hpp"
#include "rwre/walk.hpp"
#include "support.hpp"

using namespace rwre;
using nlohmann::json;

namespace {

struct Ctx {
  std::uint64_t seed = 1;
  int threads = 1;
};

struct Outcome {
  bool pass = false;
  std::string detail;
  json payload = json::object();  // deterministic content only
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

Vec axis(int k, int d) { return DirectionSpec::axis(k, d).ell; }

const TransitionVector kDrifted = testing::probs2(0.4, 0.1, 0.25, 0.25);

// 1 ------------------------------------------------------------------------
Outcome coupling_exactness(const Ctx& c) {
  Outcome o;
  double worst = 0.0;
  json tv = json::array();
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto env = Environment::iid(2, 0.05, Region::cube(2, 4), c.seed * 1000 + i);
    const double t = coupled_law_exact(env, Site{}, 3).total_variation;
    tv.push_back(t);
    worst = std::max(worst, t);
  }
  o.payload = {{"total_variation", tv}};
  o.pass = worst <= 1e-12;
  o.detail = "max TV " + fmt("%.3g", worst) + " over 20 environments, n = 3";
  return o;
}

// 2 ------------------------------------------------------------------------
Outcome oracle_agreement(const Ctx&) {
  Outcome o;
  double worst = 0.0;
  std::size_t cases = 0;
  const std::vector<double> ps{0.1, 0.2, 0.25, 0.4, 0.5, 0.6};
  for (double up : ps)
    for (double down : ps) {
      const double side = (1.0 - up - down) / 2.0;
      if (side < 0.05 - 1e-12) continue;
      const auto env = Environment::constant(2, 0.025, testing::probs2(up, down, side, side));
      for (std::int64_t a = 1; a <= 5; ++a)
        for (std::int64_t b = 1; b <= 5; ++b) {
          const auto p = make_slab_problem(env, axis(0, 2), -static_cast<double>(b), static_cast<double>(a), Site{});
          const double exact = exit_distribution_exact(p).of("up");
          worst = std::max(worst, std::abs(exact - lazy_gr_oracle(up, down, a, b)));
          ++cases;
        }
    }
  const auto env = Environment::constant(2, 0.025, testing::probs2(0.4, 0.1, 0.25, 0.25));
  const double pinned = exit_distribution_exact(make_slab_problem(env, axis(0, 2), -2, 2, Site{})).of("up");
  const double pinned_err = std::abs(pinned - 16.0 / 17.0);
  o.payload = {{"cases", cases}, {"max_error", worst}, {"pinned", pinned}};
  o.pass = worst <= 1e-10 && pinned_err <= 1e-10;
  o.detail = "max |exact - oracle| " + fmt("%.3g", worst) + " over " + std::to_string(cases) +
             " cases; r = 1/4, a = b = 2 gives " + fmt("%.15f", pinned) + " (16/17 error " + fmt("%.2g", pinned_err) + ")";
  return o;
}

// 3 ------------------------------------------------------------------------
Outcome mc_consistency(const Ctx& c) {
  Outcome o;
  constexpr std::size_t kWalks = 100000;
  CounterRng pick = CounterRng(c.seed).split(3);
  std::size_t ok_problems = 0;
  json problems = json::array();
  for (int i = 0; i < 10; ++i) {
    const double L = 5 + std::floor(4 * pick.uniform());
    const double Lf = 5 + std::floor(4 * pick.uniform());
    const double Lt = 5 + std::floor(4 * pick.uniform());
    const Rotation rot = make_rotation(i % 2 ? make_site({2, 1}) : make_site({1, 0}), 2);
    const BoxSpec box = BoxSpec::from_extents(rot, L, Lf, Lt, Site{});
    const auto env = Environment::iid(2, 0.05, box_region(box, 4), c.seed * 100 + static_cast<std::uint64_t>(i),
                                      {4, 1, 2, 2});
    const auto problem = make_box_problem(env, box, Site{});
    const auto dist = exit_distribution_exact(problem);
    const StopSpec stop({StopCondition::box_exit(box), StopCondition::horizon(10'000'000)});
    const auto ts = simulate_batch(env, Site{}, stop, {kWalks, c.seed * 100 + static_cast<std::uint64_t>(i), c.threads, false});
    std::vector<std::size_t> counts(problem.boundary.size(), 0);
    for (const auto& t : ts) {
      const int b = problem.boundary_id(t.end);
      if (b >= 0) ++counts[static_cast<std::size_t>(b)];
    }
    std::vector<std::size_t> order(problem.boundary.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist.site_probability[a] > dist.site_probability[b] || (dist.site_probability[a] == dist.site_probability[b] && a < b);
    });
    const std::size_t cells = std::min<std::size_t>(10, order.size());
    std::size_t within = 0;
    for (std::size_t k = 0; k < cells; ++k) {
      const double p = dist.site_probability[order[k]];
      const double f = static_cast<double>(counts[order[k]]) / kWalks;
      if (std::abs(f - p) <= 3.0 * std::sqrt(p * (1 - p) / kWalks)) ++within;
    }
    const bool ok = 10 * within >= 9 * cells;
    ok_problems += ok;
    problems.push_back({{"extents", {L, Lf, Lt}}, {"cells", cells}, {"within", within}, {"states", problem.states()}});
  }
  o.payload = {{"problems", problems}};
  o.pass = ok_problems == 10;
  o.detail = std::to_string(ok_problems) + "/10 problems with >= 9/10 cells inside 3 sigma (N = 1e5)";
  return o;
}

// 4 ------------------------------------------------------------------------
Outcome symmetry_controls(const Ctx& c) {
  Outcome o;
  const auto env = Environment::symmetric(2, 0.05);
  double slab_err = 0.0;
  for (std::int64_t a = 1; a <= 6; ++a) {
    const double up = exit_distribution_exact(make_slab_problem(env, axis(0, 2), -double(a), double(a), Site{})).of("up");
    slab_err = std::max(slab_err, std::abs(up - 0.5));
  }
  constexpr std::int64_t n = 10000;
  const StopSpec stop({StopCondition::horizon(n)});
  const auto ts = simulate_batch(env, Site{}, stop, {500, c.seed, c.threads, false});
  EndpointSample ends;
  ends.horizon = n;
  for (const auto& t : ts) ends.endpoints.push_back(t.end);
  VelocityConfig vc;
  vc.seed = c.seed;
  const auto v = estimate_velocity({}, ends, 2, vc);
  const bool v_ok = v.ci_plugin[0].contains(0.0) && v.ci_plugin[1].contains(0.0);
  CltConfig cc;
  cc.n_grid = {n};
  cc.seed = c.seed;
  const auto rep = clt_scaling_check(ts, v.v_hat(), cc, {}, v.ci());
  const double z = stats::normal_quantile(0.975);
  bool r_ok = rep.R_ci[0][1].contains(0.0) && rep.R_ci[1][0].contains(0.0);
  for (int i = 0; i < 2; ++i) {
    const double sigma = rep.R_ci[i][i].width() / (2 * z);
    r_ok = r_ok && std::abs(rep.R[i][i] - 0.5) <= 3 * sigma;
  }
  o.payload = {{"slab_error", slab_err}, {"velocity", v.to_json()}, {"R", rep.R}};
  o.pass = slab_err <= 1e-10 && v_ok && r_ok;
  o.detail = "slab error " + fmt("%.2g", slab_err) + "; v CI contains 0: " + (v_ok ? "yes" : "no") + "; R = [[" +
             fmt("%.3f", rep.R[0][0]) + ", " + fmt("%.3f", rep.R[0][1]) + "], [" + fmt("%.3f", rep.R[1][0]) + ", " +
             fmt("%.3f", rep.R[1][1]) + "]] " + (r_ok ? "consistent with I/2" : "not consistent with I/2");
  return o;
}

// 5 ------------------------------------------------------------------------
Outcome ladder_arithmetic(const Ctx&) {
  using Dec = boost::multiprecision::cpp_dec_float_100;
  Outcome o;
  double worst = 0.0;
  for (int d : {2, 3}) {
    const auto l = build_ladder_ec(d, 10, 20, 0.5, 0.5, 6);
    for (const auto& lv : l.levels) {
      const long double base = 320.0L * l.nu1 / 0.5L;
      const long double L = std::pow(base, lv.k) * std::pow(16.0L, lv.k * (lv.k - 1) / 2.0L) * 10.0L;
      const long double Lt = std::pow(L / 10.0L, 4.0L) * 20.0L;
      worst = std::max<double>(worst, std::abs((lv.L - L) / L));
      worst = std::max<double>(worst, std::abs((lv.Lt - Lt) / Lt));
    }
  }
  std::size_t mismatches = 0;
  std::size_t compared = 0;
  for (std::int64_t N0 : {11, 50, 330, 1001})
    for (double kappa : {0.01, 0.05, 0.1})
      for (int d : {2, 3}) {
        if (4 * d * kappa >= 1) continue;
        PolyLadderConfig pc;
        pc.N0 = N0;
        pc.kappa = kappa;
        pc.d = d;
        pc.k_max = 4;
        const auto ladder = build_ladder_poly(pc);
        const Dec x = Dec(15) * boost::multiprecision::sqrt(Dec(d)) * Dec(N0) * boost::multiprecision::log(Dec(1) / (Dec(2) * Dec(kappa))) /
                      (Dec(2) * boost::multiprecision::log(Dec(N0)));
        const Dec m = boost::multiprecision::floor(x) + 1;
        Dec n = Dec(N0);
        for (int k = 0; k <= 4; ++k) {
          if (k > 0) n *= m * boost::multiprecision::pow(Dec(44), k);
          ++compared;
          std::string text = n.str(0, std::ios_base::fixed);
          const auto dot = text.find('.');
          if (dot != std::string::npos) {
            if (text.find_first_not_of('0', dot + 1) != std::string::npos) ++mismatches;
            text.resize(dot);
          }
          if (text != ladder.N[static_cast<std::size_t>(k)].str()) ++mismatches;
        }
      }
  o.payload = {{"ec_max_relative_error", worst}, {"poly_compared", compared}, {"poly_mismatches", mismatches}};
  o.pass = worst <= 1e-9 && mismatches == 0;
  o.detail = "EC max relative error " + fmt("%.2g", worst) + " (k <= 6); poly ladder " + std::to_string(compared - mismatches) +
             "/" + std::to_string(compared) + " exact matches (k <= 4)";
  return o;
}

// 6 ------------------------------------------------------------------------
std::unordered_set<Site, SiteHash> site_set(const BoxSpec& b) {
  const auto s = b.interior_sites();
  return {s.begin(), s.end()};
}

Outcome classification_equivalence(const Ctx& c) {
  Outcome o;
  const auto ladder = build_ladder_poly(PolyLadderConfig::mini(5, 0.05, 2, 1));
  const BoxLattice lat(ladder, Rotation::identity(2));
  const auto subs = lat.sub_boxes(1, Site{});
  std::map<Site, std::unordered_set<Site, SiteHash>> sets;
  for (const auto& y : subs) sets[y] = site_set(lat.b2(0, y));
  const double threshold = 1.0 - std::pow(5.0, -ladder.cfg.threshold_exponent);
  CounterRng pick = CounterRng(c.seed).split(6);
  std::size_t agree = 0;
  std::size_t good1 = 0;
  bool bound_ok = true;
  json instances = json::array();
  for (int i = 0; i < 100; ++i) {
    const double drift = 6.0 + 54.0 * pick.uniform();
    const auto env = Environment::iid(2, 0.05, dependence_region(lat, 1, Site{}), c.seed * 7919 + static_cast<std::uint64_t>(i),
                                      {drift, 1, 2, 2});
    ClassifyOptions opt;
    opt.threads = c.threads;
    const auto maps = classify_boxes(env, lat, 1, {Site{}}, opt);
    // brute force: dense solves at level 0, the existential over explicit site sets at level 1
    std::set<Site> bad;
    bool level0_agree = true;
    for (const auto& y : subs) {
      const auto h = testing::dense_frontal_all(env, lat.b2(0, y));
      double inf = 1.0;
      for (const auto& x : lat.tilde1(0, y).interior_sites()) inf = std::min(inf, h.at(x));
      const bool good = inf > threshold;
      if (!good) bad.insert(y);
      level0_agree = level0_agree && maps[0].good(y) == good;
    }
    bool brute = false;
    for (const auto& t : subs) {
      bool ok = true;
      for (const auto& y : bad) {
        if (y == t) continue;
        bool meet = false;
        for (const auto& x : sets[y]) {
          if (sets[t].count(x)) {
            meet = true;
            break;
          }
        }
        if (!meet) {
          ok = false;
          break;
        }
      }
      if (ok) {
        brute = true;
        break;
      }
    }
    const auto& st = maps[1].boxes.at(Site{});
    const bool same = level0_agree && st.good == brute;
    agree += same;
    good1 += st.good;
    if (st.good && st.bad_children > 9) bound_ok = false;
    instances.push_back({{"bad_level0", bad.size()}, {"good", st.good}, {"agree", same}});
  }
  o.payload = {{"instances", instances}};
  o.pass = agree == 100 && bound_ok;
  o.detail = std::to_string(agree) + "/100 agree with brute force (" + std::to_string(good1) +
             " good at level 1); bad-subbox bound 3^d " + (bound_ok ? "holds" : "violated");
  return o;
}

// 7 ------------------------------------------------------------------------
Outcome slab_bound(const Ctx& c) {
  Outcome o;
  SlabConfig cfg;
  cfg.L0 = 3.5;
  cfg.L1 = 7;
  cfg.Lt1 = 6;
  cfg.threads = c.threads;
  std::size_t holds = 0;
  json envs = json::array();
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto env = Environment::iid(2, 0.05, Region::cube(2, 60), c.seed * 31 + i, {3, 2, 2, 2});
    const auto sq = slab_quantities(env, cfg);
    cfg.seed = c.seed + i;
    const auto chk = slab_bound_check(env, cfg, sq.bound, 20000);
    holds += chk.holds;
    envs.push_back({{"bound", sq.bound}, {"lhs", chk.lhs}, {"sigma", chk.sigma}, {"holds", chk.holds}});
  }
  o.payload = {{"environments", envs}};
  o.pass = holds == 20;
  o.detail = std::to_string(holds) + "/20 environments with MC left side <= f(0)/f(-n0+1) + 3 sigma";
  return o;
}

// 8 ------------------------------------------------------------------------
Outcome effective_criterion(const Ctx& c) {
  Outcome o;
  EcConfig cfg;
  cfg.ensemble.kind = "iid";
  cfg.ensemble.kappa = 0.05;
  cfg.ensemble.alpha = {8, 1, 2, 2};
  cfg.ensemble.seed = c.seed;
  cfg.m_env = 200;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  const auto drifted = effective_criterion_check(cfg);
  EcConfig sym = cfg;
  sym.ensemble.kind = "symmetric";
  sym.L_grid = {6, 10, 15};
  sym.Lt_grid = {20, 40};
  sym.a_grid = {0.25, 0.5, 1.0};
  const auto symmetric = effective_criterion_check(sym);
  bool all_above = true;
  for (const auto& e : symmetric.estimates["grid"]) all_above = all_above && e["value"].get<double>() > 1.0;
  const auto ci = drifted.estimates["ci"];
  const bool drift_ok = ci[1].get<double>() < 1.0;
  o.payload = {{"drifted", drifted.to_json()}, {"symmetric", symmetric.to_json()}};
  o.pass = drift_ok && all_above;
  o.detail = "drifted product " + fmt("%.4g", drifted.estimates["value"].get<double>()) + " CI [" +
             fmt("%.4g", ci[0].get<double>()) + ", " + fmt("%.4g", ci[1].get<double>()) + "] (needs < 1); symmetric > 1 at every grid point: " +
             (all_above ? "yes" : "no");
  return o;
}

// 9 ------------------------------------------------------------------------
Outcome regeneration_pipeline(const Ctx& c) {
  Outcome o;
  RegenRunConfig run;
  run.regen.l = make_site({1, 0});
  run.regen.L = 1;
  run.regen.window = 1000;
  run.n_traj = 1200;
  run.horizon = 20000;
  run.seed = c.seed;
  run.threads = c.threads;
  const auto env = Environment::constant(2, 0.05, kDrifted);
  const auto records = simulate_regenerations(env, run);
  std::size_t confirmed = 0;
  std::vector<double> first, second;
  for (const auto& r : records) {
    confirmed += !r.tau.empty();
    const auto inc = r.increments();
    if (inc.size() >= 1) first.push_back(static_cast<double>(inc[0][0]));
    if (inc.size() >= 2) second.push_back(static_cast<double>(inc[1][0]));
  }
  const double p = stats::ks_pvalue_permutation(first, second, 2000, CounterRng(c.seed).split(9));
  TailConfig tc;
  tc.kappa = 0.05;
  tc.seed = c.seed;
  const auto tail = tail_and_moments(records, tc);
  o.payload = {{"confirmed", confirmed}, {"batch_sizes", {first.size(), second.size()}}, {"ks_p", p},
               {"tail", tail.to_json()}};
  o.pass = confirmed >= 1000 && p > 0.01 && tail.faster_than_power;
  o.detail = std::to_string(confirmed) + " confirmed tau_1; KS p across k-batches " + fmt("%.3f", p) + "; tail slope " +
             fmt("%.2f", tail.tail_slope) + (tail.faster_than_power ? " (faster than u^-3)" : " (not faster than u^-3)");
  return o;
}

// 10 -----------------------------------------------------------------------
Outcome sandwich_calibration(const Ctx& c) {
  Outcome o;
  SandwichConfig cfg;
  cfg.regen.l = make_site({1, 0});
  cfg.regen.L = 5;
  cfg.regen.window = 200;
  cfg.ensemble.kind = "constant";
  cfg.ensemble.kappa = 0.05;
  cfg.ensemble.probs = kDrifted;
  cfg.g = 7.0;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  SandwichConfig null_cfg = cfg;
  null_cfg.n_samples = 100;
  std::vector<double> p_pos, p_pass;
  for (std::uint64_t r = 0; r < 100; ++r) {
    const auto a = fresh_conditioned(null_cfg, 100 + 2 * r);
    const auto b = fresh_conditioned(null_cfg, 101 + 2 * r);
    const auto rep = compare_marginals(a, b, null_cfg, CounterRng(c.seed).split(1000 + r));
    p_pos.push_back(rep.p_position);
    p_pass.push_back(rep.p_passage);
  }
  const double u_pos = stats::chi_square_uniform_pvalue(p_pos, 10);
  const double u_pass = stats::chi_square_uniform_pvalue(p_pass, 10);
  cfg.n_samples = 150;
  cfg.horizon = 400'000'000;
  const auto post = post_regeneration(cfg, 0);
  const auto fresh = fresh_conditioned(cfg, 1);
  const auto treat = compare_marginals(post, fresh, cfg, CounterRng(c.seed).split(0x5a));
  o.payload = {{"null_uniformity_p", {u_pos, u_pass}}, {"treatment", treat.to_json()}};
  o.pass = u_pos > 0.01 && u_pass > 0.01 && treat.pass;
  o.detail = "null p-value uniformity chi-square p = " + fmt("%.3f", u_pos) + " / " + fmt("%.3f", u_pass) +
             "; treatment KS " + fmt("%.3f", treat.ks_position) + " / " + fmt("%.3f", treat.ks_passage) + " vs tolerance " +
             fmt("%.3f", treat.tolerance) + " (slack " + fmt("%.2g", treat.slack) + ", " + std::to_string(treat.n_post) +
             " post-regeneration samples)";
  return o;
}

// 11 -----------------------------------------------------------------------
Outcome clt_normality(const Ctx& c) {
  Outcome o;
  constexpr std::int64_t n = 10000;
  const auto env = Environment::constant(2, 0.05, kDrifted);
  const StopSpec stop({StopCondition::horizon(n)});
  const auto ts = simulate_batch(env, Site{}, stop, {4000, c.seed, c.threads, false});
  const auto vw = simulate_batch(env, Site{}, stop, {200, c.seed + 1, c.threads, false});
  EndpointSample ends;
  ends.horizon = n;
  for (const auto& t : vw) ends.endpoints.push_back(t.end);
  VelocityConfig vc;
  vc.seed = c.seed;
  const auto v = estimate_velocity({}, ends, 2, vc);
  CltConfig cc;
  cc.n_grid = {n};
  cc.t_grid = {0.5};
  cc.seed = c.seed;
  const std::vector<Trajectory> head(ts.begin(), ts.begin() + 500);
  const auto normal = clt_scaling_check(head, v.v_hat(), cc, {}, v.ci());
  const auto scaling = clt_scaling_check(ts, v.v_hat(), cc, {}, v.ci());
  bool normal_ok = true;
  bool scaling_ok = true;
  std::string parts;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& nd = normal.levels[0].directions[k];
    const auto& sd = scaling.levels[0].directions[k];
    normal_ok = normal_ok && !nd.normality.reject;
    const auto ci = sd.variance_ratio_ci[0];
    scaling_ok = scaling_ok && ci.lo >= 0.45 && ci.hi <= 0.55;
    parts += "; e" + std::to_string(k + 1) + ": AD p " + fmt("%.3f", nd.normality.p_value) + ", ratio " +
             fmt("%.4f", sd.variance_ratio[0]) + " CI [" + fmt("%.4f", ci.lo) + ", " + fmt("%.4f", ci.hi) + "]";
  }
  o.payload = {{"normality", normal.to_json()["levels"]}, {"scaling", scaling.to_json()["levels"]}};
  o.pass = normal_ok && scaling_ok;
  o.detail = "n = 1e4, 500 paths for normality, 4000 for the t = 1/2 ratio" + parts;
  return o;
}

const std::map<int, std::pair<std::string, std::function<Outcome(const Ctx&)>>>& registry() {
  static const std::map<int, std::pair<std::string, std::function<Outcome(const Ctx&)>>> r{
      {1, {"coupling exactness", coupling_exactness}},
      {2, {"oracle agreement", oracle_agreement}},
      {3, {"Monte Carlo consistency", mc_consistency}},
      {4, {"symmetry controls", symmetry_controls}},
      {5, {"ladder arithmetic", ladder_arithmetic}},
      {6, {"good/bad classification", classification_equivalence}},
      {7, {"quenched slab bound", slab_bound}},
      {8, {"effective criterion", effective_criterion}},
      {9, {"regeneration pipeline", regeneration_pipeline}},
      {10, {"renewal sandwich", sandwich_calibration}},
      {11, {"CLT normality and scaling", clt_normality}},
  };
  return r;
}

// Runtime limits in seconds; 0 means none.
const std::map<int, double> kLimits{{1, 10}, {3, 120}, {4, 300}, {8, 600}, {9, 300}};

// 12 -----------------------------------------------------------------------
Outcome reproducibility(const Ctx& c) {
  Outcome o;
  std::vector<int> ids{1, 2, 3, 4, 5, 6, 7, 8, 9, 11};
  std::size_t identical = 0;
  std::string mismatched;
  for (int id : ids) {
    const auto& fn = registry().at(id).second;
    const std::string a = fn({c.seed, 1}).payload.dump();
    const std::string b = fn({c.seed, 1}).payload.dump();
    const std::string p = fn({c.seed, 8}).payload.dump();
    if (a == b && a == p) {
      ++identical;
    } else {
      mismatched += " " + std::to_string(id);
    }
  }
  o.pass = identical == ids.size();
  o.detail = std::to_string(identical) + "/" + std::to_string(ids.size()) +
             " criteria byte-identical on repeat and at parallelism 1 and 8" +
             (mismatched.empty() ? "" : " (differs:" + mismatched + ")");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> which;
  Ctx ctx;
  bool show_payload = false;
  app.add_option("--criterion", which, "criteria to run (default all)")->check(CLI::Range(1, 12));
  app.add_option("--seed", ctx.seed, "seed");
  app.add_option("--threads", ctx.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--payload", show_payload, "print each payload as JSON");
  CLI11_PARSE(app, argc, argv);
  if (which.empty())
    for (int i = 1; i <= 12; ++i) which.push_back(i);

  bool all = true;
  for (int id : which) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    std::string name;
    try {
      if (id == 12) {
        name = "reproducibility";
        out = reproducibility(ctx);
      } else {
        name = registry().at(id).first;
        out = registry().at(id).second(ctx);
      }
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (kLimits.count(id) && secs > kLimits.at(id)) {
      out.pass = false;
      out.detail += "; runtime limit " + fmt("%.0f", kLimits.at(id)) + " s exceeded";
    }
    std::cout << (out.pass ? "[PASS] " : "[FAIL] ") << id << ". " << name << ": " << out.detail << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
    if (show_payload) std::cout << out.payload.dump(2) << std::endl;
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
