#include "rwre/ballisticity.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <unordered_set>

#include "rwre/parallel.hpp"
#include "rwre/walk.hpp"

namespace rwre {

std::string to_string(Method m) { return m == Method::exact ? "exact" : "monte_carlo"; }

Method parse_method(const std::string& s) {
  if (s == "exact") return Method::exact;
  if (s == "mc" || s == "monte_carlo") return Method::monte_carlo;
  throw InvalidArgument("unknown method '" + s + "' (expected exact or mc)");
}

std::string verdict_below(const stats::Interval& ci, double threshold) {
  if (ci.hi < threshold) return "holds";
  if (ci.lo > threshold) return "fails";
  return "inconclusive";
}

nlohmann::json ConditionReport::to_json() const {
  return {{"condition", condition}, {"parameters", parameters}, {"estimates", estimates},
          {"verdict", verdict},     {"seed", seed},             {"warnings", warnings}};
}

namespace {

nlohmann::json interval_json(const stats::Interval& ci) { return nlohmann::json::array({ci.lo, ci.hi}); }

nlohmann::json site_json(const Site& x, int d) { return std::vector<std::int64_t>(x.begin(), x.begin() + d); }

double z_value(double level) { return stats::normal_quantile(0.5 + level / 2.0); }

}  // namespace

std::int64_t frontal_distance(const BoxSpec& box, const Site& start) {
  const int d = box.dim();
  if (!box.contains(start)) return box.frontal_if_boundary(start) ? 0 : -1;
  std::unordered_map<Site, std::int64_t, SiteHash> dist{{start, 0}};
  std::deque<Site> queue{start};
  while (!queue.empty()) {
    const Site x = queue.front();
    queue.pop_front();
    const auto dx = dist.at(x);
    for (int k = 0; k < 2 * d; ++k) {
      const Site y = step(x, k);
      if (!box.contains(y)) {
        if (box.frontal_if_boundary(y)) return dx + 1;
        continue;
      }
      if (dist.emplace(y, dx + 1).second) queue.push_back(y);
    }
  }
  return -1;
}

RhoSample estimate_rho(const Environment& env, const BoxSpec& box, const MethodSpec& method, CounterRng rng,
                       const Site& start, int threads) {
  RhoSample s;
  s.box = box;
  s.method = method.kind;
  const auto k = frontal_distance(box, start);
  const double pmin = std::pow(2.0 * env.kappa(), static_cast<double>(std::max<std::int64_t>(k, 0)));
  s.rho_ellipticity_bound = (1.0 - pmin) / pmin;
  if (method.kind == Method::exact) {
    const auto dist = exit_distribution_exact(make_box_problem(env, box, start, method.state_cap));
    s.p = dist.of("frontal");
    s.q = dist.of("other_boundary");
  } else {
    require(method.n_walks >= 1000, "Monte Carlo rho estimates need at least 1000 walks");
    const StopSpec stop({StopCondition::box_exit(box), StopCondition::horizon(method.horizon)});
    const auto batch = simulate_batch(env, start, stop, {method.n_walks, rng(), threads, false});
    std::size_t frontal = 0;
    std::size_t other = 0;
    for (const auto& t : batch) {
      if (t.stop_index != 0) {
        ++s.censored;
      } else if (box.frontal_if_boundary(t.end)) {
        ++frontal;
      } else {
        ++other;
      }
    }
    s.n = frontal + other;
    require(s.n > 0, "every Monte Carlo walk was censored by the horizon");
    s.p = static_cast<double>(frontal) / static_cast<double>(s.n);
    s.q = static_cast<double>(other) / static_cast<double>(s.n);
    s.ci = z_value(0.95) * stats::binomial_sigma(s.q, s.n);
  }
  if (s.p <= 0.0) {
    s.infinite = true;
    s.rho = std::numeric_limits<double>::infinity();
  } else {
    s.rho = s.q / s.p;
  }
  return s;
}

MomentEstimate moment_from_samples(double a, std::vector<RhoSample> samples, double level, int resamples,
                                   CounterRng rng) {
  require(a > 0.0 && a <= 1.0, "moment exponent a must lie in (0, 1]");
  require(!samples.empty(), "moment needs at least one sample");
  MomentEstimate m;
  m.a = a;
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.infinite) {
      ++m.infinite;
      v.push_back(std::pow(s.rho_ellipticity_bound, a));
    } else {
      v.push_back(std::pow(s.rho, a));
    }
  }
  m.upper_bound_only = m.infinite > 0;
  m.estimate = stats::mean(v);
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
    m.ci = {m.estimate, m.estimate};
  } else {
    m.ci = stats::bootstrap_mean_ci(v, resamples, level, rng);
  }
  m.samples = std::move(samples);
  return m;
}

Region box_region(const BoxSpec& box, std::int64_t pad) {
  auto [lo, hi] = box.bounding_box();
  Region r;
  r.d = box.dim();
  for (int i = 0; i < r.d; ++i) {
    r.lo[i] = lo[i] - pad;
    r.hi[i] = hi[i] + pad;
  }
  return r;
}

std::vector<RhoSample> rho_ensemble(const BoxSpec& box, const EnsembleSpec& ens, std::size_t m_env,
                                    const MethodSpec& method, std::uint64_t seed, int threads) {
  ens.validate();
  require(m_env >= 1, "ensemble needs at least one environment");
  const Region region = box_region(box);
  const CounterRng root(seed);
  if (ens.deterministic() && method.kind == Method::exact) {
    // One solve serves every member.
    RhoSample s = estimate_rho(ens.make(0, region), box, method, root.split(0));
    std::vector<RhoSample> out(m_env, s);
    for (std::size_t i = 0; i < m_env; ++i) out[i].env_id = i;
    return out;
  }
  return parallel_map(m_env, threads, [&](std::size_t i) {
    RhoSample s = estimate_rho(ens.make(i, region), box, method, root.split(i));
    s.env_id = i;
    return s;
  });
}

MomentEstimate annealed_rho_moment(double a, const BoxSpec& box, const EnsembleSpec& ens, std::size_t m_env,
                                   const MethodSpec& method, std::uint64_t seed, int threads, double level,
                                   int resamples) {
  require(a > 0.0 && a <= 1.0, "moment exponent a must lie in (0, 1]");
  require(m_env >= 30 || ens.deterministic(), "annealed moments need at least 30 environments");
  auto samples = rho_ensemble(box, ens, m_env, method, seed, threads);
  return moment_from_samples(a, std::move(samples), level, resamples, CounterRng(seed).split(0xb007));
}

double ec_product(double c_prime, int d, double L, double L_tilde, double moment) {
  return c_prime * std::pow(L_tilde, d - 1) * std::pow(L, 4 * (d - 1) + 1) * moment;
}

ConditionReport effective_criterion_check(const EcConfig& cfg) {
  const int d = cfg.ensemble.d;
  check_dim(d);
  cfg.ensemble.validate();
  const auto dir = DirectionSpec::from_integer(cfg.l, d);
  const Rotation rot = make_rotation(cfg.l, d);
  const double c2 = cfg.c_dprime < 0 ? 3.0 * std::sqrt(static_cast<double>(d)) : cfg.c_dprime;
  require(cfg.c_prime > 0, "C' must be positive");
  require(!cfg.a_grid.empty(), "a grid is empty");
  for (double a : cfg.a_grid) require(a > 0.0 && a <= 1.0, "every a must lie in (0, 1]");
  require(cfg.m_env >= 30 || cfg.ensemble.deterministic(), "the effective criterion needs at least 30 environments");

  ConditionReport rep;
  rep.condition = "effective_criterion";
  rep.seed = cfg.seed;
  rep.parameters = {{"l", site_json(cfg.l, d)},
                    {"ell", std::vector<double>(dir.ell.begin(), dir.ell.begin() + d)},
                    {"L_grid", cfg.L_grid},
                    {"Ltilde_grid", cfg.Lt_grid},
                    {"a_grid", cfg.a_grid},
                    {"C_prime", cfg.c_prime},
                    {"C_double_prime", c2},
                    {"environment", cfg.ensemble.kind},
                    {"kappa", cfg.ensemble.kappa},
                    {"M_env", cfg.m_env},
                    {"method", to_string(cfg.method.kind)},
                    {"level", cfg.level}};

  struct Point {
    double L;
    double Lt;
    BoxSpec box;
  };
  std::vector<Point> points;
  for (double L : cfg.L_grid)
    for (double Lt : cfg.Lt_grid) {
      if (!(L > c2 && L < Lt && Lt < std::pow(L, 4))) continue;
      try {
        points.push_back({L, Lt, BoxSpec::from_extents(rot, L - 2, L + 2, Lt, Site{})});
      } catch (const InvalidArgument& e) {
        rep.warnings.push_back("skipped (L, L~) = (" + std::to_string(L) + ", " + std::to_string(Lt) + "): " + e.what());
      }
    }
  if (points.empty()) throw InvalidArgument("empty feasible grid");

  nlohmann::json grid = nlohmann::json::array();
  double best = std::numeric_limits<double>::infinity();
  nlohmann::json best_entry;
  stats::Interval best_ci{};
  bool all_above = true;
  const CounterRng root(cfg.seed);
  std::size_t point_id = 0;
  for (const auto& pt : points) {
    const auto samples = rho_ensemble(pt.box, cfg.ensemble, cfg.m_env, cfg.method, cfg.seed, cfg.threads);
    for (double a : cfg.a_grid) {
      const auto m = moment_from_samples(a, samples, cfg.level, cfg.resamples, root.split(point_id++));
      const double value = ec_product(cfg.c_prime, d, pt.L, pt.Lt, m.estimate);
      const stats::Interval ci{ec_product(cfg.c_prime, d, pt.L, pt.Lt, m.ci.lo),
                               ec_product(cfg.c_prime, d, pt.L, pt.Lt, m.ci.hi)};
      nlohmann::json e = {{"L", pt.L},         {"Ltilde", pt.Lt},         {"a", a},
                          {"moment", m.estimate}, {"moment_ci", interval_json(m.ci)},
                          {"value", value},     {"ci", interval_json(ci)}, {"infinite_rho", m.infinite},
                          {"upper_bound_only", m.upper_bound_only}};
      if (m.upper_bound_only) {
        rep.warnings.push_back("some environments had no frontal exit; moment at L=" + std::to_string(pt.L) +
                               " is an ellipticity upper bound");
      }
      grid.push_back(e);
      all_above = all_above && ci.lo > 1.0;
      if (value < best) {
        best = value;
        best_entry = e;
        best_ci = ci;
      }
    }
  }
  rep.estimates = {{"grid", grid}, {"minimizer", best_entry}, {"value", best}, {"ci", interval_json(best_ci)}};
  if (best_ci.hi < 1.0) {
    rep.verdict = "holds";
  } else if (all_above) {
    rep.verdict = "fails";
  } else {
    rep.verdict = "inconclusive";
  }
  return rep;
}

std::int64_t poly_scale_multiplier(double N0, double nu1, double kappa) {
  require(N0 > 1.0, "N0 must exceed 1");
  return static_cast<std::int64_t>(std::floor(15.0 * nu1 * N0 * std::log(1.0 / (2.0 * kappa)) / (2.0 * std::log(N0)))) +
         1;
}

std::vector<Site> poly_start_sites(const BoxSpec& tilde_b1, std::size_t max_starts) {
  require(max_starts >= 2, "need at least two start sites");
  auto sites = tilde_b1.interior_sites();
  if (sites.size() <= max_starts) return sites;
  // Stratify by layer along the first rotated axis; within a layer keep evenly
  // spaced sites in transverse order, always including both ends.
  std::map<std::int64_t, std::vector<std::pair<double, Site>>> layers;
  for (const auto& x : sites) {
    const Vec loc = tilde_b1.local(x);
    layers[static_cast<std::int64_t>(std::floor(loc[0]))].push_back({loc[1], x});
  }
  const std::size_t per = std::max<std::size_t>(2, max_starts / layers.size());
  std::vector<Site> out;
  for (auto& [key, layer] : layers) {
    std::sort(layer.begin(), layer.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second < b.second;
    });
    if (layer.size() <= per) {
      for (const auto& [t, x] : layer) out.push_back(x);
      continue;
    }
    for (std::size_t k = 0; k < per; ++k) {
      const std::size_t idx = k * (layer.size() - 1) / (per - 1);
      out.push_back(layer[idx].second);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ConditionReport polynomial_condition_check(const PjConfig& cfg) {
  const int d = cfg.ensemble.d;
  check_dim(d);
  cfg.ensemble.validate();
  if (!(cfg.J > 0)) throw InvalidArgument("J must be positive so that N0^-J is a probability threshold");
  if (cfg.N0 < 3.0 * std::sqrt(static_cast<double>(d))) throw InvalidArgument("infeasible N0: need N0 >= 3 sqrt(d)");
  require(cfg.m_env >= 1, "need at least one environment");
  const Rotation rot = make_rotation(cfg.l, d);
  const BoxSpec tilde = poly_box_tilde1(rot, Vec{}, cfg.N0, cfg.shape);
  const BoxSpec b2 = poly_box_2(rot, Vec{}, cfg.N0, cfg.shape);
  const double threshold = std::pow(cfg.N0, -cfg.J);
  const std::size_t m_env = cfg.ensemble.deterministic() ? 1 : cfg.m_env;

  ConditionReport rep;
  rep.condition = "polynomial_condition";
  rep.seed = cfg.seed;
  const auto mult = poly_scale_multiplier(cfg.N0, std::sqrt(static_cast<double>(d)), cfg.ensemble.kappa);
  rep.parameters = {{"l", site_json(cfg.l, d)},
                    {"N0", cfg.N0},
                    {"J", cfg.J},
                    {"threshold", threshold},
                    {"front_divisor", cfg.shape.front_divisor},
                    {"transverse_divisor", cfg.shape.transverse_divisor},
                    {"transverse_exponent", cfg.shape.transverse_exponent},
                    {"environment", cfg.ensemble.kind},
                    {"kappa", cfg.ensemble.kappa},
                    {"M_env", m_env},
                    {"method", to_string(cfg.method.kind)},
                    {"scale_multiplier", mult}};
  if (mult % 110 != 0) {
    rep.warnings.push_back("N0 does not satisfy the ladder divisibility requirement (multiplier " +
                           std::to_string(mult) + " not in 110 N)");
  }

  const Region region = box_region(b2);
  std::vector<Site> starts;
  // q[i][s]: non-frontal exit probability of environment i from start s.
  std::vector<std::vector<double>> q;
  std::size_t censored = 0;
  if (cfg.method.kind == Method::exact) {
    starts = tilde.interior_sites();
    q = parallel_map(m_env, cfg.threads, [&](std::size_t i) {
      const Environment env = cfg.ensemble.make(i, region);
      const auto prob = make_box_problem_all(env, b2, cfg.method.state_cap);
      AbsorptionSolver solver(prob);
      const auto h = solver.class_probabilities(prob.class_id("frontal"));
      std::vector<double> row(starts.size());
      for (std::size_t s = 0; s < starts.size(); ++s) row[s] = 1.0 - h[static_cast<std::size_t>(prob.interior_id(starts[s]))];
      return row;
    });
  } else {
    starts = poly_start_sites(tilde, cfg.max_starts);
    if (starts.size() < tilde.interior_sites().size()) {
      rep.warnings.push_back("sup estimated over a stratified subsample of " + std::to_string(starts.size()) +
                             " start sites");
    }
    std::vector<Environment> envs;
    for (std::size_t i = 0; i < m_env; ++i) envs.push_back(cfg.ensemble.make(i, region));
    const StopSpec stop({StopCondition::box_exit(b2), StopCondition::horizon(cfg.method.horizon)});
    const CounterRng root(cfg.seed);
    // Walk j from start s runs in environment j mod M_env.
    struct Cell {
      std::vector<double> other;
      std::vector<double> total;
      std::size_t censored = 0;
    };
    const auto cells = parallel_map(starts.size(), cfg.threads, [&](std::size_t s) {
      Cell c{std::vector<double>(m_env, 0.0), std::vector<double>(m_env, 0.0), 0};
      const CounterRng site_rng = root.split(s);
      for (std::size_t j = 0; j < cfg.method.n_walks; ++j) {
        CounterRng rng = site_rng.split(j);
        const auto t = simulate_quenched(envs[j % m_env], starts[s], stop, rng);
        if (t.stop_index != 0) {
          ++c.censored;
          continue;
        }
        c.total[j % m_env] += 1;
        if (!b2.frontal_if_boundary(t.end)) c.other[j % m_env] += 1;
      }
      return c;
    });
    q.assign(m_env, std::vector<double>(starts.size(), 0.0));
    for (std::size_t s = 0; s < starts.size(); ++s) {
      censored += cells[s].censored;
      for (std::size_t i = 0; i < m_env; ++i)
        q[i][s] = cells[s].total[i] > 0 ? cells[s].other[i] / cells[s].total[i] : 0.0;
    }
    if (censored > 0) rep.warnings.push_back(std::to_string(censored) + " walks censored by the horizon");
  }

  std::size_t best = 0;
  double sup = -1.0;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    double m = 0.0;
    for (std::size_t i = 0; i < m_env; ++i) m += q[i][s];
    m /= static_cast<double>(m_env);
    if (m > sup) {
      sup = m;
      best = s;
    }
  }
  std::vector<double> at_best(m_env);
  for (std::size_t i = 0; i < m_env; ++i) at_best[i] = q[i][best];
  stats::Interval ci{sup, sup};
  if (cfg.method.kind == Method::monte_carlo) {
    const std::size_t n = cfg.method.n_walks;
    const auto k = static_cast<std::size_t>(std::llround(sup * static_cast<double>(n)));
    ci = stats::clopper_pearson(std::min(k, n), n, cfg.level);
  } else if (m_env > 1) {
    ci = stats::bootstrap_mean_ci(at_best, cfg.resamples, cfg.level, CounterRng(cfg.seed).split(0xb007));
  }
  rep.estimates = {{"sup", sup},
                   {"ci", interval_json(ci)},
                   {"argmax", site_json(starts[best], d)},
                   {"start_sites", starts.size()},
                   {"b1_sites", tilde.interior_sites().size()},
                   {"censored", censored}};
  rep.verdict = verdict_below(ci, threshold);
  return rep;
}

stats::LinearFit tgamma_fit(const std::vector<double>& L, const std::vector<double>& p) {
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (p[i] > 0.0 && p[i] < 1.0) {
      x.push_back(std::log(L[i]));
      y.push_back(std::log(-std::log(p[i])));
    }
  }
  require(x.size() >= 2, "need at least two levels with 0 < p_L < 1 to fit");
  return stats::least_squares(x, y);
}

namespace {

// Slope of ln p_L against L; negative when the probabilities decay.
double log_slope(const std::vector<double>& L, const std::vector<double>& p) {
  std::vector<double> y;
  for (double v : p) y.push_back(std::log(v));
  return stats::least_squares(L, y).slope;
}

}  // namespace

ConditionReport tgamma_decay_fit(const TgammaConfig& cfg) {
  const int d = cfg.ensemble.d;
  check_dim(d);
  cfg.ensemble.validate();
  require(cfg.levels.size() >= 3, "tgamma fit needs at least three levels");
  require(cfg.b > 0, "b must be positive");
  for (double L : cfg.levels) require(L > 0, "levels must be positive");
  const auto dir = DirectionSpec::from_integer(cfg.l, d);

  ConditionReport rep;
  rep.condition = "tgamma_decay";
  rep.seed = cfg.seed;
  rep.parameters = {{"l", site_json(cfg.l, d)},  {"b", cfg.b},
                    {"levels", cfg.levels},       {"N_walks", cfg.n_walks},
                    {"environment", cfg.ensemble.kind}, {"kappa", cfg.ensemble.kappa},
                    {"exact", cfg.exact},         {"J_reference", cfg.j_reference}};

  std::vector<TgammaLevel> levels;
  if (cfg.exact) {
    require(cfg.ensemble.deterministic(), "exact tgamma fits need a deterministic environment");
    const Environment env = cfg.ensemble.make(0, Region::cube(d, 1));
    for (double L : cfg.levels) {
      const auto dist = exit_distribution_exact(make_problem(
          env, Site{}, {StopCondition::level_up(dir.ell, L, "front"), StopCondition::level_down(dir.ell, -cfg.b * L, "back")}));
      TgammaLevel lv;
      lv.L = L;
      lv.p = dist.of("back");
      lv.ci = {lv.p, lv.p};
      levels.push_back(lv);
    }
  } else {
    require(cfg.n_walks >= 1, "need at least one walk per level");
    const Region region = Region::cube(d, cfg.region_half_width);
    std::vector<Environment> shared;
    for (std::size_t i = 0; i < cfg.m_env; ++i) shared.push_back(cfg.ensemble.make(i, region));
    const CounterRng root(cfg.seed);
    for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
      const double L = cfg.levels[li];
      const StopSpec stop({StopCondition::level_up(dir.ell, L, "front"), StopCondition::level_down(dir.ell, -cfg.b * L, "back"),
                           StopCondition::horizon(cfg.horizon)});
      const CounterRng level_rng = root.split(li);
      const auto outcome = parallel_map(cfg.n_walks, cfg.threads, [&](std::size_t j) {
        CounterRng rng = level_rng.split(j);
        const Environment env = cfg.m_env == 0 ? cfg.ensemble.make(j, region) : shared[j % cfg.m_env];
        return simulate_quenched(env, Site{}, stop, rng).stop_index;
      });
      TgammaLevel lv;
      lv.L = L;
      for (int o : outcome) {
        if (o == 1) ++lv.hits;
        if (o == 2) ++lv.censored;
      }
      lv.n = cfg.n_walks - lv.censored;
      require(lv.n > 0, "every walk at level " + std::to_string(L) + " was censored");
      lv.ci = stats::clopper_pearson(lv.hits, lv.n, cfg.level);
      if (lv.hits == 0) {
        lv.rare = true;
        lv.p = stats::clopper_pearson_upper(0, lv.n, cfg.level);
        rep.warnings.push_back("zero hits at L=" + std::to_string(L) + "; reporting the Clopper-Pearson upper bound");
      } else {
        lv.p = static_cast<double>(lv.hits) / static_cast<double>(lv.n);
      }
      if (lv.censored > 0) rep.warnings.push_back(std::to_string(lv.censored) + " walks censored at L=" + std::to_string(L));
      levels.push_back(lv);
    }
  }

  nlohmann::json table = nlohmann::json::array();
  std::vector<double> Ls;
  std::vector<double> ps;
  for (const auto& lv : levels) {
    nlohmann::json row = {{"L", lv.L}, {"p", lv.p}, {"ci", interval_json(lv.ci)}, {"n", lv.n},
                          {"hits", lv.hits}, {"censored", lv.censored}, {"rare_event", lv.rare}};
    nlohmann::json refs = nlohmann::json::object();
    for (double J : cfg.j_reference) refs[std::to_string(J)] = std::pow(lv.L, -J);
    if (!cfg.j_reference.empty()) row["polynomial_reference"] = refs;
    table.push_back(row);
    if (!lv.rare) {
      Ls.push_back(lv.L);
      ps.push_back(lv.p);
    }
  }
  rep.estimates["levels"] = table;

  const std::size_t usable = std::count_if(ps.begin(), ps.end(), [](double p) { return p > 0 && p < 1; });
  if (usable < 2) {
    rep.verdict = "inconclusive";
    rep.warnings.push_back(Ls.empty() ? "zero hits at every level; only upper bounds are available"
                                      : "fewer than two levels with usable frequencies");
    return rep;
  }
  const auto fit = tgamma_fit(Ls, ps);
  rep.estimates["gamma_hat"] = fit.slope;
  rep.estimates["gamma_se"] = fit.slope_se;
  rep.estimates["intercept"] = fit.intercept;
  rep.estimates["residuals"] = fit.residuals;
  {
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < Ls.size(); ++i) {
      lx.push_back(std::log(Ls[i]));
      ly.push_back(std::log(ps[i]));
    }
    rep.estimates["polynomial_exponent"] = -stats::least_squares(lx, ly).slope;
  }
  const double slope = log_slope(Ls, ps);
  rep.estimates["log_p_slope"] = slope;

  if (cfg.exact) {
    rep.estimates["gamma_ci"] = interval_json({fit.slope, fit.slope});
    rep.verdict = slope < -1e-12 ? "holds" : (slope > 1e-12 ? "fails" : "inconclusive");
    return rep;
  }
  // Parametric bootstrap over the binomial counts of each level.
  std::vector<double> gammas;
  std::vector<double> slopes;
  std::mt19937_64 gen(CounterRng(cfg.seed).split(0x7a11)());
  for (int r = 0; r < cfg.resamples; ++r) {
    std::vector<double> pb;
    bool ok = true;
    for (const auto& lv : levels) {
      if (lv.rare) continue;
      std::binomial_distribution<std::size_t> bin(lv.n, lv.p);
      const auto k = bin(gen);
      if (k == 0) {
        ok = false;
        break;
      }
      pb.push_back(static_cast<double>(k) / static_cast<double>(lv.n));
    }
    if (!ok) continue;
    slopes.push_back(log_slope(Ls, pb));
    if (std::count_if(pb.begin(), pb.end(), [](double p) { return p > 0 && p < 1; }) >= 2) {
      gammas.push_back(tgamma_fit(Ls, pb).slope);
    }
  }
  const double tail = (1.0 - cfg.level) / 2.0;
  if (!gammas.empty()) {
    rep.estimates["gamma_ci"] = interval_json({stats::quantile(gammas, tail), stats::quantile(gammas, 1.0 - tail)});
  }
  if (slopes.size() < static_cast<std::size_t>(cfg.resamples) / 2) {
    rep.verdict = "inconclusive";
    rep.warnings.push_back("bootstrap replicates frequently hit zero counts");
    return rep;
  }
  const stats::Interval sci{stats::quantile(slopes, tail), stats::quantile(slopes, 1.0 - tail)};
  rep.estimates["log_p_slope_ci"] = interval_json(sci);
  rep.verdict = sci.hi < 0 ? "holds" : (sci.lo > 0 ? "fails" : "inconclusive");
  return rep;
}

std::map<std::int64_t, double> slab_f_function(const std::map<std::int64_t, double>& rho, std::int64_t n0,
                                               std::int64_t lo) {
  std::map<std::int64_t, double> f;
  f[n0 + 2] = 0.0;
  f[n0 + 1] = 1.0;
  double w = 1.0;
  for (std::int64_t i = n0; i >= lo; --i) {
    const auto it = rho.find(i + 1);
    require(it != rho.end(), "missing rho_hat for slab " + std::to_string(i + 1));
    require(it->second > 0.0 && std::isfinite(it->second), "rho_hat must be finite and positive");
    w /= it->second;
    f[i] = f[i + 1] + w;
  }
  return f;
}

double slab_f_ratio(const std::map<std::int64_t, double>& f, std::int64_t n0) { return f.at(0) / f.at(-n0 + 1); }

std::vector<Site> thin_slab_sites(const Rotation& r, const Vec& ell, double L0, std::int64_t i, double Lt1) {
  const int d = r.dim();
  const double c = static_cast<double>(i) * L0;
  std::vector<AxisRange> ranges{{c - 1.0, c + 1.0, true, true}};
  for (int j = 1; j < d; ++j) ranges.push_back({-Lt1, Lt1, false, false});
  const BoxSpec band = BoxSpec::from_ranges(r, Vec{}, ranges);
  std::vector<Site> out;
  for (const auto& x : band.interior_sites())
    if (in_thin_slab(x, ell, L0, i, d)) out.push_back(x);
  return out;
}

namespace {

struct SlabRatio {
  double upper = 0.0;
  double lower = 0.0;
};

int single_axis(const Vec& v, int d) {
  int axis = -1;
  for (int i = 0; i < d; ++i) {
    if (v[i] != 0.0) {
      if (axis >= 0) return -1;
      axis = i;
    }
  }
  return axis;
}

SlabRatio slab_ratio_exact(const Environment& env, const Rotation& rot, const SlabConfig& cfg, double margin,
                           std::int64_t i, const std::vector<Site>& sites) {
  const int d = env.dim();
  const Vec ell = rot.column(0);
  const int axis = single_axis(ell, d);
  const bool quotient = !env.bounded() && std::holds_alternative<ConstantSource>(env.source()) && axis >= 0;
  std::vector<StopCondition> stops{StopCondition::thin_slab(ell, cfg.L0, i + 1, d, "up"),
                                   StopCondition::thin_slab(ell, cfg.L0, i - 1, d, "down")};
  if (!quotient) {
    for (int j = 1; j < d; ++j) {
      stops.push_back(StopCondition::level_up(rot.column(j), cfg.Lt1 + margin, "truncated"));
      stops.push_back(StopCondition::level_down(rot.column(j), -(cfg.Lt1 + margin), "truncated"));
    }
  }
  SlabRatio out;
  std::unordered_set<Site, SiteHash> done;
  for (const auto& x : sites) {
    if (done.count(x)) continue;
    const auto p = make_problem(env, x, stops, cfg.state_cap);
    AbsorptionSolver solver(p);
    const auto up = solver.class_probabilities(0);
    const auto down = solver.class_probabilities(1);
    for (const auto& y : sites) {
      if (done.count(y)) continue;
      Site key = y;
      if (p.quotient) {
        key = Site{};
        key[axis] = y[axis];
      }
      const int id = p.interior_id(key);
      if (id < 0) continue;
      const double pu = up[static_cast<std::size_t>(id)];
      const double pd = down[static_cast<std::size_t>(id)];
      out.upper = std::max(out.upper, (1.0 - pu) / pu);
      out.lower = std::max(out.lower, pd / (1.0 - pd));
      done.insert(y);
    }
    require(done.count(x) > 0, "slab start site was not an interior state");
  }
  return out;
}

SlabRatio slab_ratio_mc(const Environment& env, const Rotation& rot, const SlabConfig& cfg, std::int64_t i,
                        const std::vector<Site>& sites) {
  const int d = env.dim();
  const Vec ell = rot.column(0);
  const StopSpec stop({StopCondition::thin_slab(ell, cfg.L0, i + 1, d, "up"),
                       StopCondition::thin_slab(ell, cfg.L0, i - 1, d, "down"), StopCondition::horizon(10'000'000)});
  const std::size_t stride = std::max<std::size_t>(1, sites.size() / 32);
  SlabRatio out;
  const CounterRng root = CounterRng(cfg.seed).split(static_cast<std::uint64_t>(i + (1 << 20)));
  for (std::size_t s = 0; s < sites.size(); s += stride) {
    const auto batch = simulate_batch(env, sites[s], stop, {cfg.mc_walks, root.split(s)(), cfg.threads, false});
    double up = 0;
    double down = 0;
    for (const auto& t : batch) {
      up += t.stop_index == 0;
      down += t.stop_index == 1;
    }
    if (up == 0) {
      out.upper = out.lower = std::numeric_limits<double>::infinity();
      continue;
    }
    out.upper = std::max(out.upper, down / up);
    out.lower = std::max(out.lower, down / up);
  }
  return out;
}

}  // namespace

SlabQuantities slab_quantities(const Environment& env, const SlabConfig& cfg) {
  require(cfg.L0 > 2.0, "slab width L0 must exceed 2");
  require(cfg.L1 >= cfg.L0, "L1 must be at least L0");
  require(cfg.Lt1 > 0.0, "transverse cap must be positive");
  const int d = env.dim();
  const Rotation rot = make_rotation(cfg.l, d);
  const Vec ell = rot.column(0);
  const double margin = cfg.margin < 0 ? 4.0 * cfg.L0 : cfg.margin;

  SlabQuantities sq;
  sq.L0 = cfg.L0;
  sq.L1 = cfg.L1;
  sq.Lt1 = cfg.Lt1;
  sq.n0 = static_cast<std::int64_t>(std::floor(cfg.L1 / cfg.L0));
  for (std::int64_t i = -sq.n0 + 2; i <= sq.n0 + 1; ++i) {
    const auto sites = thin_slab_sites(rot, ell, cfg.L0, i, cfg.Lt1);
    require(!sites.empty(), "thin slab " + std::to_string(i) + " has no sites below the transverse cap");
    SlabRatio r;
    try {
      r = slab_ratio_exact(env, rot, cfg, margin, i, sites);
    } catch (const CapacityExceeded&) {
      sq.exact = false;
      sq.warnings.push_back("slab " + std::to_string(i) + ": exact solve over the state cap, Monte Carlo fallback over a subsample");
      r = slab_ratio_mc(env, rot, cfg, i, sites);
    }
    sq.rho_hat[i] = r.upper;
    sq.rho_hat_lower[i] = r.lower;
  }
  sq.f_values = slab_f_function(sq.rho_hat, sq.n0, -sq.n0 + 1);
  sq.bound = slab_f_ratio(sq.f_values, sq.n0);
  sq.bound_lower = slab_f_ratio(slab_f_function(sq.rho_hat_lower, sq.n0, -sq.n0 + 1), sq.n0);
  return sq;
}

SlabBoundCheck slab_bound_check(const Environment& env, const SlabConfig& cfg, double bound, std::size_t n_walks,
                                std::int64_t horizon) {
  const int d = env.dim();
  const Rotation rot = make_rotation(cfg.l, d);
  const Vec ell = rot.column(0);
  // Transverse exits come first so that simultaneous events do not count as hits.
  std::vector<StopCondition> conds;
  for (int j = 1; j < d; ++j) {
    conds.push_back(StopCondition::level_up(rot.column(j), cfg.Lt1, "transverse"));
    conds.push_back(StopCondition::level_down(rot.column(j), -cfg.Lt1, "transverse"));
  }
  conds.push_back(StopCondition::level_down(ell, -cfg.L1 + 1, "back"));
  conds.push_back(StopCondition::level_up(ell, cfg.L1 + 1, "front"));
  conds.push_back(StopCondition::horizon(horizon));
  const int back = 2 * (d - 1);
  const int hz = back + 2;
  const auto batch = simulate_batch(env, Site{}, StopSpec(conds), {n_walks, cfg.seed, cfg.threads, false});
  SlabBoundCheck c;
  c.n = n_walks;
  c.bound = bound;
  for (const auto& t : batch) {
    c.hits += t.stop_index == back;
    c.censored += t.stop_index == hz;
  }
  c.lhs = static_cast<double>(c.hits) / static_cast<double>(n_walks);
  c.sigma = stats::binomial_sigma(c.lhs, n_walks);
  c.holds = c.lhs <= bound + 3.0 * c.sigma;
  return c;
}

}  // namespace rwre
