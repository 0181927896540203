#include "rwre/clt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>

#include "rwre/oracle.hpp"
#include "rwre/parallel.hpp"

namespace rwre {

namespace {

nlohmann::json vec_json(const Vec& v, int d) { return std::vector<double>(v.begin(), v.begin() + d); }

nlohmann::json intervals_json(const std::array<stats::Interval, kMaxDim>& ci, int d) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < d; ++i) out.push_back({ci[static_cast<std::size_t>(i)].lo, ci[static_cast<std::size_t>(i)].hi});
  return out;
}

double z_of(double level) { return stats::normal_quantile(0.5 + level / 2.0); }

double half_width(const stats::Interval& ci) { return ci.width() / 2.0; }

// Interval of sum_i a_i x_i for x_i in ci[i].
stats::Interval linear_interval(const std::array<stats::Interval, kMaxDim>& ci, const Vec& a, int d) {
  stats::Interval out;
  for (int i = 0; i < d; ++i) {
    const auto& c = ci[static_cast<std::size_t>(i)];
    out.lo += std::min(a[i] * c.lo, a[i] * c.hi);
    out.hi += std::max(a[i] * c.lo, a[i] * c.hi);
  }
  return out;
}

double sign_test_pvalue(const std::vector<double>& xs) {
  std::size_t pos = 0;
  std::size_t n = 0;
  for (const double x : xs) {
    if (x == 0.0) continue;
    ++n;
    pos += x > 0;
  }
  if (n == 0) return 1.0;
  const boost::math::binomial_distribution<double> bin(static_cast<double>(n), 0.5);
  const double k = static_cast<double>(std::min(pos, n - pos));
  return std::min(1.0, 2.0 * boost::math::cdf(bin, k));
}

}  // namespace

Vec VelocityEstimate::v_hat() const { return has_plugin ? v_plugin : v_ratio; }

std::array<stats::Interval, kMaxDim> VelocityEstimate::ci() const { return has_plugin ? ci_plugin : ci_ratio; }

bool VelocityEstimate::ballistic(const Vec& ell) const {
  return dot(v_hat(), ell) > 0 && linear_interval(ci(), ell, d).lo > 0;
}

nlohmann::json VelocityEstimate::to_json() const {
  nlohmann::json j = {{"d", d},
                      {"n_blocks", n_blocks},
                      {"n_trajectories", n_trajectories},
                      {"n_direction", n_direction},
                      {"consistent", consistent},
                      {"warnings", warnings}};
  if (has_ratio) j["ratio"] = {{"v", vec_json(v_ratio, d)}, {"ci", intervals_json(ci_ratio, d)}};
  if (has_plugin) j["plugin"] = {{"v", vec_json(v_plugin, d)}, {"ci", intervals_json(ci_plugin, d)}};
  if (has_direction) j["v_hat_L"] = vec_json(v_hat_L, d);
  return j;
}

VelocityEstimate estimate_velocity(const std::vector<RegenRecord>& records, const EndpointSample& endpoints,
                                   int d, const VelocityConfig& cfg) {
  check_dim(d);
  VelocityEstimate est;
  est.d = d;
  const CounterRng root(cfg.seed);

  std::array<std::vector<double>, kMaxDim> num;
  std::vector<double> den;
  Vec first{};
  for (const auto& r : records) {
    const auto dt = r.time_increments();
    const auto dx = r.increments();
    for (std::size_t k = 0; k < dt.size(); ++k) {
      den.push_back(static_cast<double>(dt[k]));
      for (int i = 0; i < d; ++i) num[static_cast<std::size_t>(i)].push_back(static_cast<double>(dx[k][i]));
    }
    if (r.start_confirmed && !r.tau.empty()) {
      ++est.n_direction;
      for (int i = 0; i < d; ++i) first[i] += static_cast<double>(r.positions.front()[i]);
    }
  }
  est.n_blocks = den.size();
  est.n_trajectories = endpoints.endpoints.size();
  if (est.n_blocks >= cfg.min_blocks) {
    est.has_ratio = true;
    double total = 0.0;
    for (const double t : den) total += t;
    for (int i = 0; i < d; ++i) {
      const auto& ni = num[static_cast<std::size_t>(i)];
      double s = 0.0;
      for (const double x : ni) s += x;
      est.v_ratio[i] = s / total;
      est.ci_ratio[static_cast<std::size_t>(i)] =
          stats::bootstrap_ratio_ci(ni, den, cfg.resamples, cfg.level, root.split(static_cast<std::uint64_t>(i)));
    }
  } else if (!records.empty()) {
    est.warnings.push_back("only " + std::to_string(est.n_blocks) + " regeneration blocks; ratio estimator skipped");
  }
  if (est.n_trajectories >= cfg.min_trajectories) {
    require(endpoints.horizon > 0, "endpoint horizon must be positive");
    est.has_plugin = true;
    const auto H = static_cast<double>(endpoints.horizon);
    for (int i = 0; i < d; ++i) {
      std::vector<double> xs;
      xs.reserve(est.n_trajectories);
      for (const auto& x : endpoints.endpoints) xs.push_back(static_cast<double>(x[i]) / H);
      est.v_plugin[i] = stats::mean(xs);
      est.ci_plugin[static_cast<std::size_t>(i)] =
          stats::bootstrap_mean_ci(xs, cfg.resamples, cfg.level, root.split(0x100 + static_cast<std::uint64_t>(i)));
    }
  } else if (est.n_trajectories > 0) {
    est.warnings.push_back("only " + std::to_string(est.n_trajectories) + " endpoints; plug-in estimator skipped");
  }
  if (!est.has_ratio && !est.has_plugin) {
    throw InvalidArgument("insufficient data for velocity estimation: " + std::to_string(est.n_blocks) +
                          " regeneration blocks (need " + std::to_string(cfg.min_blocks) + ") and " +
                          std::to_string(est.n_trajectories) + " endpoints (need " +
                          std::to_string(cfg.min_trajectories) + ")");
  }
  if (est.n_direction > 0) {
    const double nrm = norm2(first);
    if (nrm > 0) {
      est.has_direction = true;
      for (int i = 0; i < d; ++i) est.v_hat_L[i] = first[i] / nrm;
    } else {
      est.warnings.push_back("mean of X_{tau_1} on D' = infinity is zero; no direction");
    }
  }
  if (est.has_ratio && est.has_plugin) {
    const double z = z_of(cfg.level);
    for (int i = 0; i < d; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double se_r = half_width(est.ci_ratio[k]) / z;
      const double se_p = half_width(est.ci_plugin[k]) / z;
      if (std::abs(est.v_ratio[i] - est.v_plugin[i]) > z * std::hypot(se_r, se_p)) est.consistent = false;
    }
    if (!est.consistent) est.warnings.push_back("ratio and plug-in estimators disagree");
  }
  return est;
}

Vec project_orthogonal(const Vec& z, const Vec& v) {
  if (std::abs(norm2(v) - 1.0) > 1e-10) throw InvalidArgument("projection direction must be a unit vector");
  const double c = dot(z, v);
  Vec out{};
  for (int i = 0; i < kMaxDim; ++i) out[i] = z[i] - c * v[i];
  return out;
}

stats::Interval varsigma_window(double kappa, double g) {
  const double gt = g * transversal_t(kappa, g);
  return {(gt + 2.0 * std::log(1.0 / kappa)) / (2.0 * gt), 1.0};
}

stats::Interval beta_window(double kappa, double g) {
  const double gt = g * transversal_t(kappa, g);
  return {2.0 * gt / (3.0 * gt - 2.0 * std::log(1.0 / kappa)), 1.0};
}

double fluctuation_epsilon(double kappa, double g, double varsigma) {
  const double gt = g * transversal_t(kappa, g);
  const double lk = 2.0 * std::log(1.0 / kappa);
  return lk * (2.0 - 2.0 * varsigma) / (gt - lk);
}

double chi_bound(double kappa, double g, int d, double beta) {
  const double gt = g * transversal_t(kappa, g);
  return d * gt * (3.0 * beta - 2.0) / (gt - 2.0 * std::log(1.0 / kappa));
}

nlohmann::json TransversalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < varsigma.size(); ++i) {
    rows.push_back({{"varsigma", varsigma[i]},
                    {"in_window", static_cast<bool>(varsigma_in_window[i])},
                    {"threshold", threshold[i]},
                    {"exceedance", exceedance[i]},
                    {"ci", {exceedance_ci[i].lo, exceedance_ci[i].hi}},
                    {"epsilon", epsilon[i]}});
  }
  return {{"M", M},
          {"eta", eta},
          {"trajectories", trajectories},
          {"confirmed", confirmed},
          {"window", {window.lo, window.hi}},
          {"exceedance", rows},
          {"sup_norm_mean", sup_norm.empty() ? 0.0 : stats::mean(sup_norm)},
          {"sign_test_p", sign_test_p},
          {"verdict", verdict},
          {"warnings", warnings}};
}

std::string TransversalReport::samples_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "index,sup_norm,signed_second\n";
  for (std::size_t i = 0; i < sup_norm.size(); ++i) out << i << ',' << sup_norm[i] << ',' << signed_second[i] << '\n';
  return out.str();
}

TransversalReport transversal_fluctuation_stat(const std::vector<Trajectory>& trajectories, const Vec& v_hat_L,
                                               const TransversalConfig& cfg) {
  check_dim(cfg.d);
  require(cfg.M > 0 && cfg.eta > 0, "M and eta must be positive");
  require(cfg.excursion >= 1, "excursion length must be positive");
  require(!trajectories.empty(), "no trajectories");
  const auto dir = DirectionSpec::from_integer(cfg.l, cfg.d);
  const Rotation rot = make_rotation(cfg.l, cfg.d);
  TransversalReport rep;
  rep.M = cfg.M;
  rep.eta = cfg.eta;
  rep.trajectories = trajectories.size();
  rep.window = varsigma_window(cfg.kappa, cfg.g);
  rep.varsigma = cfg.varsigma;
  if (rep.varsigma.empty()) {
    for (int i = 1; i <= 5; ++i) rep.varsigma.push_back(rep.window.lo + (rep.window.hi - rep.window.lo) * i / 6.0);
  }
  for (const auto& t : trajectories) {
    const auto pos = t.positions();
    const auto H = static_cast<std::int64_t>(pos.size()) - 1;
    std::int64_t last = -1;
    for (std::int64_t n = H; n >= 0; --n) {
      const Site& x = pos[static_cast<std::size_t>(n)];
      std::int64_t xl = 0;
      for (int i = 0; i < cfg.d; ++i) xl += x[i] * dir.l_int[i];
      if (static_cast<double>(xl) <= cfg.M) {
        last = n;
        break;
      }
    }
    if (last < 0 || H - last < cfg.excursion) continue;
    double sup = 0.0;
    for (std::int64_t n = 0; n <= last; ++n) {
      sup = std::max(sup, norm2(project_orthogonal(to_vec(pos[static_cast<std::size_t>(n)]), v_hat_L)));
    }
    rep.sup_norm.push_back(sup);
    rep.signed_second.push_back(
        dot(project_orthogonal(to_vec(pos[static_cast<std::size_t>(last)]), v_hat_L), rot.column(1)));
  }
  rep.confirmed = rep.sup_norm.size();
  const std::size_t unconfirmed = rep.trajectories - rep.confirmed;
  if (unconfirmed > 0) {
    rep.warnings.push_back(std::to_string(unconfirmed) + " walks without a confirmed last visit (horizon-censored)");
  }
  for (const double s : rep.varsigma) {
    const bool inside = s > rep.window.lo && s < rep.window.hi;
    rep.varsigma_in_window.push_back(inside);
    if (!inside) rep.warnings.push_back("varsigma " + std::to_string(s) + " lies outside the admissible window");
    const double thr = cfg.eta * std::pow(cfg.M, s);
    rep.threshold.push_back(thr);
    std::size_t above = 0;
    for (const double x : rep.sup_norm) above += x > thr;
    rep.exceedance.push_back(rep.confirmed ? static_cast<double>(above) / static_cast<double>(rep.confirmed) : 0.0);
    rep.exceedance_ci.push_back(rep.confirmed ? stats::clopper_pearson(above, rep.confirmed, cfg.level)
                                              : stats::Interval{0.0, 1.0});
    rep.epsilon.push_back(fluctuation_epsilon(cfg.kappa, cfg.g, s));
  }
  rep.sign_test_p = sign_test_pvalue(rep.signed_second);
  if (2 * unconfirmed > rep.trajectories) {
    rep.warnings.push_back("last visit unconfirmed in more than half of the walks");
    rep.verdict = "inconclusive";
  } else {
    rep.verdict = "reported";
  }
  return rep;
}

nlohmann::json CltReport::to_json() const {
  nlohmann::json lv = nlohmann::json::array();
  for (const auto& L : levels) {
    nlohmann::json dirs = nlohmann::json::array();
    for (const auto& r : L.directions) {
      nlohmann::json sc = nlohmann::json::array();
      for (std::size_t i = 0; i < r.t.size(); ++i) {
        sc.push_back({{"t", r.t[i]},
                      {"variance_ratio", r.variance_ratio[i]},
                      {"ci", {r.variance_ratio_ci[i].lo, r.variance_ratio_ci[i].hi}},
                      {"ok", static_cast<bool>(r.scaling_ok[i])}});
      }
      dirs.push_back({{"w", vec_json(r.w, d)},
                      {"mean", r.mean},
                      {"mean_tolerance", r.mean_tolerance},
                      {"sd", r.sd},
                      {"anderson_darling", r.normality.statistic},
                      {"p_value", r.normality.p_value},
                      {"reject", r.normality.reject},
                      {"scaling", sc}});
    }
    lv.push_back({{"n", L.n}, {"samples", L.samples}, {"directions", dirs}});
  }
  nlohmann::json rci = nlohmann::json::array();
  for (const auto& row : R_ci) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back({c.lo, c.hi});
    rci.push_back(r);
  }
  return {{"d", d},
          {"v_used", vec_json(v_used, d)},
          {"levels", lv},
          {"R", R},
          {"R_ci", rci},
          {"R_eigenvalues", R_eigenvalues},
          {"R_psd", R_psd},
          {"R_source", R_source},
          {"normality_test", normality_test},
          {"alpha", alpha},
          {"normal_ok", normal_ok},
          {"scaling_ok", scaling_ok},
          {"verdict", verdict},
          {"warnings", warnings}};
}

std::string CltReport::samples_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "n,direction,index,standardized\n";
  for (const auto& L : levels) {
    for (std::size_t k = 0; k < L.standardized.size(); ++k) {
      for (std::size_t i = 0; i < L.standardized[k].size(); ++i) {
        out << L.n << ',' << k << ',' << i << ',' << L.standardized[k][i] << '\n';
      }
    }
  }
  return out.str();
}

namespace {

// Percentile interval of a statistic of paired samples, resampling indices jointly.
template <class Stat>
stats::Interval paired_bootstrap(std::size_t n, Stat&& stat, int resamples, double level, CounterRng rng) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
    values.push_back(stat(idx));
  }
  const double a = (1.0 - level) / 2.0;
  return {stats::quantile(values, a), stats::quantile(values, 1.0 - a)};
}

double sample_variance(const std::vector<double>& xs, const std::vector<std::size_t>& idx) {
  double m = 0.0;
  for (const auto i : idx) m += xs[i];
  m /= static_cast<double>(idx.size());
  double s = 0.0;
  for (const auto i : idx) s += (xs[i] - m) * (xs[i] - m);
  return s / static_cast<double>(idx.size() - 1);
}

using Matrix = std::vector<std::vector<double>>;

// Covariance per unit time of centred increments dx - v dt, summed over the chosen rows.
Matrix block_covariance(const std::vector<Vec>& dx, const std::vector<double>& dt, const Vec& v, int d,
                        const std::vector<std::size_t>& idx) {
  Matrix m(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  double total = 0.0;
  for (const auto k : idx) {
    total += dt[k];
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            (dx[k][i] - v[i] * dt[k]) * (dx[k][j] - v[j] * dt[k]);
      }
    }
  }
  for (auto& row : m)
    for (auto& x : row) x /= total;
  return m;
}

// Cov(X_n) / n with the sample mean removed.
Matrix endpoint_covariance(const std::vector<Vec>& x, double n, int d, const std::vector<std::size_t>& idx) {
  Vec mean{};
  for (const auto k : idx)
    for (int i = 0; i < d; ++i) mean[i] += x[k][i];
  for (int i = 0; i < d; ++i) mean[i] /= static_cast<double>(idx.size());
  Matrix m(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (const auto k : idx) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += (x[k][i] - mean[i]) * (x[k][j] - mean[j]);
      }
    }
  }
  for (auto& row : m)
    for (auto& v : row) v /= (static_cast<double>(idx.size()) - 1.0) * n;
  return m;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

template <class MatrixOf>
std::vector<std::vector<stats::Interval>> matrix_bootstrap(std::size_t n, int d, MatrixOf&& of, int resamples,
                                                           double level, CounterRng rng) {
  std::vector<Matrix> draws;
  draws.reserve(static_cast<std::size_t>(resamples));
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
    draws.push_back(of(idx));
  }
  const double a = (1.0 - level) / 2.0;
  std::vector<std::vector<stats::Interval>> ci(static_cast<std::size_t>(d),
                                               std::vector<stats::Interval>(static_cast<std::size_t>(d)));
  std::vector<double> vals(draws.size());
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      for (std::size_t b = 0; b < draws.size(); ++b)
        vals[b] = draws[b][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      ci[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = {stats::quantile(vals, a),
                                                                      stats::quantile(vals, 1.0 - a)};
    }
  }
  return ci;
}

}  // namespace

CltReport clt_scaling_check(const std::vector<Trajectory>& trajectories, const Vec& v, const CltConfig& cfg,
                            const std::vector<RegenRecord>& blocks,
                            const std::array<stats::Interval, kMaxDim>& v_ci) {
  require(!cfg.n_grid.empty(), "empty n grid");
  if (trajectories.size() < cfg.min_samples) {
    throw InvalidArgument("insufficient samples for the CLT check: " + std::to_string(trajectories.size()) +
                          " trajectories, need " + std::to_string(cfg.min_samples));
  }
  const int d = trajectories.front().d;
  check_dim(d);
  const std::int64_t n_max = *std::max_element(cfg.n_grid.begin(), cfg.n_grid.end());
  for (const auto n : cfg.n_grid) require(n >= 1, "n grid entries must be positive");
  for (const double t : cfg.t_grid) require(t > 0 && t < 1, "t grid entries must lie in (0, 1)");

  std::vector<Vec> dirs = cfg.directions;
  if (dirs.empty()) {
    for (int i = 0; i < d; ++i) {
      Vec e{};
      e[i] = 1.0;
      dirs.push_back(e);
    }
  }
  CltReport rep;
  rep.d = d;
  rep.v_used = v;
  rep.alpha = cfg.alpha;
  const CounterRng root(cfg.seed);
  const double z = z_of(cfg.level);

  // positions at every time the report needs
  std::vector<std::int64_t> times;
  for (const auto n : cfg.n_grid) {
    times.push_back(n);
    for (const double t : cfg.t_grid) times.push_back(static_cast<std::int64_t>(std::floor(static_cast<double>(n) * t)));
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<std::vector<Vec>> at(trajectories.size());
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const auto& tr = trajectories[r];
    require(tr.d == d, "trajectories of mixed dimension");
    if (tr.length() < n_max) {
      throw InvalidArgument("trajectory " + std::to_string(r) + " has " + std::to_string(tr.length()) +
                            " steps, need " + std::to_string(n_max));
    }
    Site x = tr.start;
    std::size_t ti = 0;
    at[r].reserve(times.size());
    for (std::int64_t n = 0; ti < times.size(); ++n) {
      while (ti < times.size() && times[ti] == n) {
        at[r].push_back(to_vec(x - tr.start));
        ++ti;
      }
      if (ti < times.size()) x = step(x, tr.steps[static_cast<std::size_t>(n)]);
    }
  }
  auto position = [&](std::size_t r, std::int64_t n) -> const Vec& {
    const auto it = std::lower_bound(times.begin(), times.end(), n);
    return at[r][static_cast<std::size_t>(it - times.begin())];
  };

  rep.normal_ok = true;
  rep.scaling_ok = true;
  const std::size_t N = trajectories.size();
  for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
    const std::int64_t n = cfg.n_grid[ni];
    const double sn = std::sqrt(static_cast<double>(n));
    CltLevel level;
    level.n = n;
    level.samples = N;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      const Vec& w = dirs[k];
      CltDirectionResult res;
      res.w = w;
      std::vector<double> s1(N);
      for (std::size_t r = 0; r < N; ++r) s1[r] = (dot(position(r, n), w) - static_cast<double>(n) * dot(v, w)) / sn;
      res.mean = stats::mean(s1);
      res.sd = stats::stddev(s1);
      res.mean_tolerance = z * res.sd / std::sqrt(static_cast<double>(N)) + sn * linear_interval(v_ci, w, d).width() / 2.0;
      res.normality = stats::anderson_darling_normal(s1, cfg.alpha);
      if (res.normality.reject) rep.normal_ok = false;
      std::vector<double> standardized(N);
      for (std::size_t r = 0; r < N; ++r) standardized[r] = res.sd > 0 ? (s1[r] - res.mean) / res.sd : 0.0;
      level.standardized.push_back(std::move(standardized));
      for (std::size_t ti = 0; ti < cfg.t_grid.size(); ++ti) {
        const double t = cfg.t_grid[ti];
        const auto m = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * t));
        std::vector<double> st(N);
        for (std::size_t r = 0; r < N; ++r)
          st[r] = (dot(position(r, m), w) - static_cast<double>(n) * t * dot(v, w)) / sn;
        const auto all = iota_indices(N);
        const double ratio = sample_variance(st, all) / sample_variance(s1, all);
        const auto ci = paired_bootstrap(
            N, [&](const std::vector<std::size_t>& idx) { return sample_variance(st, idx) / sample_variance(s1, idx); },
            cfg.resamples, cfg.level, root.split(ni * 1000 + k * 10 + ti));
        res.t.push_back(t);
        res.variance_ratio.push_back(ratio);
        res.variance_ratio_ci.push_back(ci);
        const bool ok = ci.contains(static_cast<double>(m) / static_cast<double>(n));
        res.scaling_ok.push_back(ok);
        if (!ok) rep.scaling_ok = false;
      }
      level.directions.push_back(std::move(res));
    }
    rep.levels.push_back(std::move(level));
  }

  std::vector<Vec> dx;
  std::vector<double> dt;
  for (const auto& r : blocks) {
    const auto ti = r.time_increments();
    const auto xi = r.increments();
    for (std::size_t k = 0; k < ti.size(); ++k) {
      dt.push_back(static_cast<double>(ti[k]));
      dx.push_back(to_vec(xi[k]));
    }
  }
  if (dx.size() >= 2) {
    rep.R_source = "regeneration_blocks";
    auto of = [&](const std::vector<std::size_t>& idx) { return block_covariance(dx, dt, v, d, idx); };
    rep.R = of(iota_indices(dx.size()));
    rep.R_ci = matrix_bootstrap(dx.size(), d, of, cfg.resamples, cfg.level, root.split(0xc0));
  } else {
    rep.R_source = "endpoints";
    std::vector<Vec> x(N);
    for (std::size_t r = 0; r < N; ++r) x[r] = position(r, n_max);
    auto of = [&](const std::vector<std::size_t>& idx) {
      return endpoint_covariance(x, static_cast<double>(n_max), d, idx);
    };
    rep.R = of(iota_indices(N));
    rep.R_ci = matrix_bootstrap(N, d, of, cfg.resamples, cfg.level, root.split(0xc1));
  }
  Eigen::MatrixXd R(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) R(i, j) = rep.R[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R, Eigen::EigenvaluesOnly);
  for (int i = 0; i < d; ++i) rep.R_eigenvalues.push_back(eig.eigenvalues()(i));
  rep.R_psd = rep.R_eigenvalues.front() >= -kPsdTolerance;
  if (!rep.R_psd) rep.warnings.push_back("covariance estimate is not positive semidefinite");
  rep.verdict = rep.normal_ok && rep.scaling_ok && rep.R_psd ? "holds" : "fails";
  return rep;
}

nlohmann::json AtypicalReport::to_json() const {
  return {{"threshold", threshold},
          {"beta_window", {window.lo, window.hi}},
          {"beta_in_window", beta_in_window},
          {"chi_bound", chi},
          {"environments", environments},
          {"exact", exact},
          {"below", below},
          {"undecided", undecided},
          {"frequency", frequency},
          {"frequency_ci", {frequency_ci.lo, frequency_ci.hi}},
          {"frequency_upper", frequency_upper},
          {"forward_lo", forward_lo},
          {"forward_hi", forward_hi},
          {"verdict", verdict},
          {"warnings", warnings}};
}

namespace {

struct ForwardBounds {
  double lo = 0.0;
  double hi = 1.0;
  bool exact = false;
};

}  // namespace

AtypicalReport atypical_quenched_frequency(const AtypicalConfig& cfg) {
  cfg.ensemble.validate();
  const int d = cfg.ensemble.d;
  require(cfg.M > 0 && cfg.c > 0 && cfg.beta > 0, "M, c and beta must be positive");
  require(cfg.n_env >= 1, "need at least one environment");
  const auto dir = DirectionSpec::from_integer(cfg.l, d);
  const Rotation rot = make_rotation(cfg.l, d);
  const double T = cfg.transverse > 0 ? cfg.transverse : 10.0 * cfg.M;

  AtypicalReport rep;
  rep.threshold = std::exp(-cfg.c * std::pow(cfg.M, cfg.beta));
  rep.window = beta_window(cfg.ensemble.kappa, cfg.g);
  rep.beta_in_window = cfg.beta > rep.window.lo && cfg.beta < rep.window.hi;
  rep.chi = chi_bound(cfg.ensemble.kappa, cfg.g, d, cfg.beta);
  if (!rep.beta_in_window) {
    rep.warnings.push_back("beta = " + std::to_string(cfg.beta) + " lies outside the admissible window");
  }

  // Deterministic environments with an axis direction collapse to a one-dimensional problem.
  bool axis = false;
  for (int i = 0; i < d; ++i)
    if (std::abs(cfg.l[i]) == dir.l1_norm) axis = true;
  const bool collapse = cfg.ensemble.deterministic() && axis;
  std::vector<StopCondition> stops{StopCondition::level_up(dir.ell, cfg.M, "forward"),
                                   StopCondition::level_down(dir.ell, -cfg.M, "backward")};
  if (!collapse) {
    for (int j = 1; j < d; ++j) {
      stops.push_back(StopCondition::transverse(rot, j, +1, T));
      stops.push_back(StopCondition::transverse(rot, j, -1, -T));
    }
  }
  const auto reach = static_cast<std::int64_t>(std::ceil(std::max(cfg.M, T) * std::sqrt(static_cast<double>(d)))) + 2;
  const Region region = Region::cube(d, reach);
  const CounterRng root(cfg.seed);

  const auto bounds = parallel_map(cfg.n_env, cfg.threads, [&](std::size_t i) {
    const Environment env = cfg.ensemble.make(i, region, true);
    ForwardBounds b;
    try {
      const auto problem = make_problem(env, Site{}, stops, cfg.state_cap);
      const auto dist = exit_distribution_exact(problem);
      double side = 0.0;
      for (std::size_t k = 2; k < dist.class_probability.size(); ++k) side += dist.class_probability[k];
      b.lo = dist.class_probability[0];
      b.hi = std::min(1.0, b.lo + side);
      b.exact = true;
    } catch (const CapacityExceeded&) {
      auto conds = stops;
      conds.push_back(StopCondition::horizon(static_cast<std::int64_t>(100.0 * (cfg.M + T) * (cfg.M + T)) + 1000));
      const StopSpec spec(conds);
      std::size_t forward = 0;
      std::size_t other = 0;  // side exits and censored walks
      const CounterRng rng_env = root.split(i);
      for (std::size_t w = 0; w < cfg.n_walks; ++w) {
        CounterRng rng = rng_env.split(w);
        const auto t = simulate_quenched(env, Site{}, spec, rng);
        if (t.stop_index == 0) {
          ++forward;
        } else if (t.stop_index != 1) {
          ++other;
        }
      }
      b.lo = stats::clopper_pearson(forward, cfg.n_walks, cfg.level).lo;
      b.hi = stats::clopper_pearson(forward + other, cfg.n_walks, cfg.level).hi;
    }
    return b;
  });

  rep.environments = cfg.n_env;
  bool mc_floor = false;
  for (const auto& b : bounds) {
    rep.forward_lo.push_back(b.lo);
    rep.forward_hi.push_back(b.hi);
    rep.exact += b.exact;
    if (b.hi < rep.threshold) {
      ++rep.below;
    } else if (b.lo < rep.threshold) {
      ++rep.undecided;
      if (!b.exact) mc_floor = true;
    }
  }
  if (rep.exact < rep.environments) {
    rep.warnings.push_back(std::to_string(rep.environments - rep.exact) +
                           " environments exceeded the exact solver and used Monte Carlo");
  }
  if (mc_floor) rep.warnings.push_back("threshold below the Monte Carlo resolution");
  rep.frequency = static_cast<double>(rep.below) / static_cast<double>(rep.environments);
  rep.frequency_ci = stats::clopper_pearson(rep.below, rep.environments, cfg.level);
  rep.frequency_upper = stats::clopper_pearson_upper(rep.below + rep.undecided, rep.environments, cfg.level);
  if (rep.undecided > 0) {
    rep.warnings.push_back(std::to_string(rep.undecided) + " environments straddle the threshold");
    rep.verdict = "inconclusive";
  } else {
    rep.verdict = "reported";
  }
  return rep;
}

}  // namespace rwre
