#include "rwre/regeneration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rwre/parallel.hpp"

namespace rwre {

BarEpsilon bar_epsilon(const DirectionSpec& l, std::int64_t L, double zeta) {
  require(L > 0 && L % l.l1_norm == 0,
          "L must be a positive multiple of |l|_1 = " + std::to_string(l.l1_norm) + ", got " + std::to_string(L));
  require(zeta > 0 && zeta < 1, "zeta must lie in (0, 1)");
  BarEpsilon b;
  b.l = l;
  b.L = L;
  b.zeta = zeta;
  std::vector<std::uint8_t> block;
  for (int i = 0; i < l.d; ++i) {
    const std::int64_t c = l.l_int[i];
    for (std::int64_t j = 0; j < std::abs(c); ++j) block.push_back(static_cast<std::uint8_t>(dir_index(i, c > 0 ? 1 : -1)));
  }
  for (std::int64_t r = 0; r < L / l.l1_norm; ++r) b.entries.insert(b.entries.end(), block.begin(), block.end());
  const ConeSpec cone{Site{}, l, zeta};
  Site x{};
  for (const auto k : b.entries) {
    x = step(x, k);
    if (!cone_contains(cone, x)) {
      throw InvalidArgument("zeta = " + std::to_string(zeta) + " is too large: the forced pattern leaves the cone at " +
                            to_string(x, l.d));
    }
  }
  return b;
}

std::int64_t default_regen_L(const DirectionSpec& l, std::int64_t L_min) {
  return (std::max<std::int64_t>(L_min, 0) / l.l1_norm + 1) * l.l1_norm;
}

DirectionSpec RegenConfig::direction() const { return DirectionSpec::from_integer(l, d); }

double RegenConfig::zeta_value() const { return zeta > 0 ? zeta : default_zeta(1.0, d); }

void RegenConfig::validate() const {
  check_dim(d);
  const auto dir = direction();
  require(L > 0 && L % dir.l1_norm == 0, "L must be a positive multiple of |l|_1");
  require(window >= 1, "window must be positive");
  require(delta >= 0 && drift_floor >= 0, "progress parameters must be non-negative");
  const double z = zeta_value();
  require(z > 0 && z < 1, "zeta must lie in (0, 1)");
}

std::string to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::confirmed:
      return "confirmed";
    case CandidateStatus::cone_exit:
      return "cone_exit";
    case CandidateStatus::no_progress:
      return "no_progress";
    case CandidateStatus::censored:
      return "censored";
  }
  return "unknown";
}

std::vector<std::int64_t> RegenRecord::time_increments() const {
  std::vector<std::int64_t> out;
  for (std::size_t k = 1; k < tau.size(); ++k) out.push_back(tau[k] - tau[k - 1]);
  return out;
}

std::vector<Site> RegenRecord::increments() const {
  std::vector<Site> out;
  for (std::size_t k = 1; k < positions.size(); ++k) out.push_back(positions[k] - positions[k - 1]);
  return out;
}

nlohmann::json RegenRecord::to_json(int d) const {
  nlohmann::json pos = nlohmann::json::array();
  for (const auto& x : positions) pos.push_back(std::vector<std::int64_t>(x.begin(), x.begin() + d));
  nlohmann::json cand = nlohmann::json::array();
  for (const auto& c : candidates) {
    nlohmann::json e = {{"S", c.S}, {"status", to_string(c.status)}};
    if (c.status == CandidateStatus::cone_exit) e["exit_index"] = c.exit_index;
    cand.push_back(e);
  }
  return {{"horizon", horizon},   {"window", window}, {"L", L}, {"tau", tau}, {"positions", pos},
          {"candidates", cand},   {"tail_censored", tail_censored}, {"start_confirmed", start_confirmed}};
}

namespace {

// Read access to X_0..X_H and the stored epsilons, either from memory or
// generated on demand. Indices below the last release() are gone.
class VectorSource {
 public:
  VectorSource(const std::vector<Site>& positions, const std::vector<std::uint8_t>* eps)
      : pos_(positions), eps_(eps) {}
  std::int64_t horizon() const { return static_cast<std::int64_t>(pos_.size()) - 1; }
  bool has(std::int64_t i) { return i <= horizon(); }
  const Site& pos(std::int64_t i) { return pos_[static_cast<std::size_t>(i)]; }
  std::uint8_t eps(std::int64_t i) { return (*eps_)[static_cast<std::size_t>(i)]; }
  void release(std::int64_t) {}

 private:
  const std::vector<Site>& pos_;
  const std::vector<std::uint8_t>* eps_;
};

// Ring buffer over absolute indices [base, base + count).
class StreamSource {
 public:
  StreamSource(const Environment& env, CounterRng rng, std::int64_t horizon)
      : walker_(env, Site{}, rng), horizon_(horizon), pos_(1024), eps_(1024), mask_(1023) {
    pos_[0] = walker_.position();
    count_ = 1;
  }
  std::int64_t horizon() const { return horizon_; }
  bool has(std::int64_t i) {
    if (i > horizon_) return false;
    while (base_ + count_ <= i) {
      if (count_ == static_cast<std::int64_t>(pos_.size())) grow();
      const std::int64_t last = base_ + count_ - 1;
      eps_[static_cast<std::size_t>(last & mask_)] = walker_.advance().second;
      pos_[static_cast<std::size_t>((last + 1) & mask_)] = walker_.position();
      ++count_;
    }
    return true;
  }
  const Site& pos(std::int64_t i) {
    has(i);
    return pos_[static_cast<std::size_t>(i & mask_)];
  }
  std::uint8_t eps(std::int64_t i) {
    has(i + 1);
    return eps_[static_cast<std::size_t>(i & mask_)];
  }
  void release(std::int64_t below) {
    const std::int64_t drop = std::min(below - base_, count_ - 1);
    if (drop > 0) {
      base_ += drop;
      count_ -= drop;
    }
  }

 private:
  void grow() {
    std::vector<Site> pos(pos_.size() * 2);
    std::vector<std::uint8_t> eps(eps_.size() * 2);
    const std::int64_t mask = static_cast<std::int64_t>(pos.size()) - 1;
    for (std::int64_t i = base_; i < base_ + count_; ++i) {
      pos[static_cast<std::size_t>(i & mask)] = pos_[static_cast<std::size_t>(i & mask_)];
      eps[static_cast<std::size_t>(i & mask)] = eps_[static_cast<std::size_t>(i & mask_)];
    }
    pos_ = std::move(pos);
    eps_ = std::move(eps);
    mask_ = mask;
  }

  CoupledStepper walker_;
  std::int64_t horizon_;
  std::vector<Site> pos_;
  std::vector<std::uint8_t> eps_;
  std::int64_t mask_;
  std::int64_t base_ = 0;
  std::int64_t count_ = 0;
};

template <class Source>
RegenCandidate confirm_at(Source& src, std::int64_t from, const RegenConfig& cfg) {
  const auto dir = cfg.direction();
  const ConeSpec cone{src.pos(from), dir, cfg.zeta_value()};
  RegenCandidate c;
  c.S = from;
  double progress = 0.0;
  for (std::int64_t j = 0; j <= cfg.window; ++j) {
    const std::int64_t idx = from + j;
    if (!src.has(idx)) {
      c.status = CandidateStatus::censored;
      return c;
    }
    const Site& x = src.pos(idx);
    if (!cone_contains(cone, x)) {
      c.status = CandidateStatus::cone_exit;
      c.exit_index = idx;
      return c;
    }
    progress = std::max(progress, dot(to_vec(x - cone.apex), dir.ell));
  }
  c.status = progress >= cfg.progress_threshold() ? CandidateStatus::confirmed : CandidateStatus::no_progress;
  return c;
}

std::int64_t projection(const Site& x, const Site& l) {
  std::int64_t s = 0;
  for (int j = 0; j < kMaxDim; ++j) s += x[j] * l[j];
  return s;
}

template <class Source>
bool pattern_at(Source& src, std::int64_t n, const BarEpsilon& bar) {
  // (epsilon_{n-L+1}, ..., epsilon_n) is stored at indices n-L .. n-1
  for (std::int64_t i = 0; i < bar.L; ++i) {
    if (src.eps(n - bar.L + i) != bar.entries[static_cast<std::size_t>(i)]) return false;
  }
  return true;
}

// Scans for S_n, R_n and the iterates tau_k; stops after `max_tau` regenerations.
// `on_tau` sees each confirmed tau while its window is still readable.
template <class Source, class OnTau>
RegenRecord scan(Source& src, const RegenConfig& cfg, std::size_t max_tau, OnTau&& on_tau) {
  const auto dir = cfg.direction();
  const BarEpsilon bar = bar_epsilon(dir, cfg.L, cfg.zeta_value());
  RegenRecord rec;
  rec.horizon = src.horizon();
  rec.window = cfg.window;
  rec.L = cfg.L;
  rec.start_confirmed = confirm_at(src, 0, cfg).status == CandidateStatus::confirmed;

  std::int64_t origin = 0;
  while (rec.tau.size() < max_tau) {
    std::int64_t run_max = std::numeric_limits<std::int64_t>::min();  // max over [origin, n - L)
    std::int64_t lower = origin + cfg.L;                               // candidates need n >= lower
    bool found = false;
    for (std::int64_t n = origin + cfg.L; src.has(n); ++n) {
      const std::int64_t m = n - cfg.L;
      const std::int64_t pm = projection(src.pos(m), dir.l_int);
      const bool record = pm > run_max;
      run_max = std::max(run_max, pm);
      src.release(m);
      if (n < lower || !record || !pattern_at(src, n, bar)) continue;
      const RegenCandidate c = confirm_at(src, n, cfg);
      rec.candidates.push_back(c);
      if (c.status == CandidateStatus::confirmed) {
        rec.tau.push_back(n);
        rec.positions.push_back(src.pos(n));
        on_tau(src, n);
        origin = n;
        found = true;
        break;
      }
      if (c.status == CandidateStatus::censored) {
        rec.tail_censored = true;
        return rec;
      }
      // S_{next} > R = S + D' o theta_S; a window without progress is skipped whole
      lower = (c.status == CandidateStatus::cone_exit ? c.exit_index : n + cfg.window) + 1;
    }
    if (!found) {
      rec.tail_censored = true;
      return rec;
    }
  }
  return rec;
}

std::vector<std::int64_t> projections(const std::vector<Site>& positions, const Site& l) {
  std::vector<std::int64_t> p(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) p[i] = projection(positions[i], l);
  return p;
}

void require_coupled(const Trajectory& t) {
  if (!t.coupled || t.epsilon.size() != t.steps.size()) {
    throw InvalidArgument("regeneration detection needs the epsilon sequence of a coupled trajectory");
  }
}

}  // namespace

RegenCandidate confirm_window(const std::vector<Site>& positions, std::int64_t from, const RegenConfig& cfg) {
  VectorSource src(positions, nullptr);
  return confirm_at(src, from, cfg);
}

RegenRecord detect_regenerations(const Trajectory& traj, const RegenConfig& cfg) {
  cfg.validate();
  require_coupled(traj);
  const auto positions = traj.positions();
  VectorSource src(positions, &traj.epsilon);
  return scan(src, cfg, std::numeric_limits<std::size_t>::max(), [](VectorSource&, std::int64_t) {});
}

bool verify_record(const Trajectory& traj, const RegenRecord& rec, const RegenConfig& cfg) {
  require_coupled(traj);
  const auto dir = cfg.direction();
  const BarEpsilon bar = bar_epsilon(dir, cfg.L, cfg.zeta_value());
  const auto positions = traj.positions();
  const auto proj = projections(positions, dir.l_int);
  VectorSource src(positions, &traj.epsilon);
  std::int64_t origin = 0;
  for (const auto tau : rec.tau) {
    if (tau - cfg.L < origin || tau <= origin) return false;
    const std::int64_t m = tau - cfg.L;
    for (std::int64_t j = origin; j < m; ++j)
      if (proj[static_cast<std::size_t>(j)] >= proj[static_cast<std::size_t>(m)]) return false;
    if (!pattern_at(src, tau, bar)) return false;
    origin = tau;
  }
  return true;
}

namespace {

std::vector<RegenRecord> run_batch(const RegenRunConfig& cfg, const std::function<Environment(std::size_t)>& env_of) {
  cfg.regen.validate();
  require(cfg.horizon > cfg.regen.window, "horizon must exceed the confirmation window");
  const CounterRng root(cfg.seed);
  return parallel_map(cfg.n_traj, cfg.threads, [&](std::size_t i) {
    const Environment env = env_of(i);
    StreamSource src(env, root.split(i), cfg.horizon);
    return scan(src, cfg.regen, std::numeric_limits<std::size_t>::max(), [](StreamSource&, std::int64_t) {});
  });
}

}  // namespace

std::vector<RegenRecord> simulate_regenerations(const Environment& env, const RegenRunConfig& cfg) {
  require(env.dim() == cfg.regen.d, "environment and direction dimensions differ");
  return run_batch(cfg, [&](std::size_t) { return env; });
}

std::vector<RegenRecord> simulate_regenerations(const EnsembleSpec& ens, const RegenRunConfig& cfg) {
  ens.validate();
  require(ens.d == cfg.regen.d, "ensemble and direction dimensions differ");
  const Region region = Region::cube(ens.d, cfg.horizon + 1);
  return run_batch(cfg, [&](std::size_t i) { return ens.make(i, region, true); });
}

double transversal_t(double kappa, double g) {
  require(g > 0, "g must be positive");
  return 0.5 * (2.0 * std::log(1.0 / kappa) / g + 1.0);
}

double tail_sigma(double kappa, double g, int d) {
  const double gt = g * transversal_t(kappa, g);
  const double lk = 2.0 * std::log(1.0 / kappa);
  return std::min((gt - lk) / (3.0 * gt - lk), ((d - 1) * gt + lk) / ((3.0 * d + 1) * gt - lk));
}

double sandwich_slack(double kappa, double g, std::int64_t L, double t) {
  if (t < 0) t = transversal_t(kappa, g);
  return std::expm1(std::exp(-g * t * static_cast<double>(L)));
}

nlohmann::json TailReport::to_json() const {
  nlohmann::json surv = nlohmann::json::array();
  for (std::size_t i = 0; i < u.size(); ++i) {
    surv.push_back({{"u", u[i]}, {"survival", survival[i]}, {"ci", {survival_ci[i].lo, survival_ci[i].hi}}});
  }
  return {{"records", records},
          {"confirmed", confirmed},
          {"censored", censored},
          {"censoring_fraction", censoring_fraction},
          {"censor_time", censor_time},
          {"L", L},
          {"survival", surv},
          {"fit", {{"c_hat", c_hat}, {"alpha_hat", alpha_hat}, {"residuals", fit_residuals}}},
          {"sigma", sigma},
          {"alpha_window", {alpha_window.lo, alpha_window.hi}},
          {"tail_slope", tail_slope},
          {"faster_than_power", faster_than_power},
          {"third_moment", third_moment},
          {"third_moment_ci", {third_moment_ci.lo, third_moment_ci.hi}},
          {"verdict", verdict},
          {"warnings", warnings}};
}

std::string TailReport::survival_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "u,survival,ci_lo,ci_hi\n";
  for (std::size_t i = 0; i < u.size(); ++i) {
    out << u[i] << ',' << survival[i] << ',' << survival_ci[i].lo << ',' << survival_ci[i].hi << '\n';
  }
  return out.str();
}

TailReport tail_and_moments(const std::vector<RegenRecord>& records, const TailConfig& cfg) {
  require(!records.empty(), "no regeneration records");
  TailReport rep;
  rep.records = records.size();
  rep.L = records.front().L;
  rep.censor_time = std::numeric_limits<std::int64_t>::max();
  std::vector<double> tau1;
  std::vector<double> num;
  std::vector<double> den;
  const double scale = std::pow(cfg.kappa, static_cast<double>(rep.L));
  for (const auto& r : records) {
    rep.censor_time = std::min(rep.censor_time, r.horizon - r.window);
    if (r.tau.empty()) continue;
    const auto t = static_cast<double>(r.tau.front());
    tau1.push_back(t);
    num.push_back(r.start_confirmed ? std::pow(scale * t, 3) : 0.0);
    den.push_back(r.start_confirmed ? 1.0 : 0.0);
  }
  rep.confirmed = tau1.size();
  rep.censored = rep.records - rep.confirmed;
  rep.censoring_fraction = static_cast<double>(rep.censored) / static_cast<double>(rep.records);
  rep.sigma = tail_sigma(cfg.kappa, cfg.g, cfg.d);
  rep.alpha_window = {1.0, 1.0 + rep.sigma};
  if (rep.censored > 0) {
    rep.warnings.push_back(std::to_string(rep.censored) + " trajectories without a confirmed tau_1 before the horizon");
  }
  if (rep.confirmed == 0) {
    rep.warnings.push_back("no confirmed regeneration");
    return rep;
  }
  if (rep.confirmed < cfg.min_samples) {
    rep.warnings.push_back("only " + std::to_string(rep.confirmed) + " confirmed tau_1 samples");
  }

  std::vector<double> grid = cfg.u_grid;
  const double top = std::min(*std::max_element(tau1.begin(), tau1.end()), static_cast<double>(rep.censor_time - 1));
  if (grid.empty()) {
    for (int i = 0; i <= 40; ++i) {
      const double u = std::floor(std::pow(std::max(top, 1.0), i / 40.0));
      if (grid.empty() || u > grid.back()) grid.push_back(u);
    }
  }
  const auto n = static_cast<double>(rep.records);
  std::vector<double> fx;
  std::vector<double> fy;
  std::vector<double> tx;
  std::vector<double> ty;
  std::vector<double> sorted = tau1;
  std::sort(sorted.begin(), sorted.end());
  for (const double u : grid) {
    if (u >= static_cast<double>(rep.censor_time)) {
      rep.warnings.push_back("survival above the censoring time is omitted");
      break;
    }
    // censored records have tau_1 > censor_time > u
    const auto above = static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), u)) +
                       rep.censored;
    const double s = static_cast<double>(above) / n;
    rep.u.push_back(u);
    rep.survival.push_back(s);
    rep.survival_ci.push_back(stats::clopper_pearson(above, rep.records, cfg.level));
    if (s > 0 && s < 1 && u > 1) {
      fx.push_back(std::log(std::log(u)));
      fy.push_back(std::log(-std::log(s)));
    }
    if (s <= cfg.tail_fraction && above >= 10 && u > 0) {
      tx.push_back(std::log(u));
      ty.push_back(std::log(s));
    }
  }
  if (fx.size() >= 2) {
    const auto fit = stats::least_squares(fx, fy);
    rep.alpha_hat = fit.slope;
    rep.c_hat = std::exp(fit.intercept);
    rep.fit_residuals = fit.residuals;
  } else {
    rep.warnings.push_back("too few survival points for the log-exponential fit");
  }
  if (tx.size() >= 2) {
    rep.tail_slope = stats::least_squares(tx, ty).slope;
    rep.faster_than_power = rep.tail_slope < -cfg.power;
  } else {
    rep.warnings.push_back("too few tail points for the power comparison");
  }

  double dsum = 0.0;
  for (const double v : den) dsum += v;
  if (dsum > 0) {
    double nsum = 0.0;
    for (const double v : num) nsum += v;
    rep.third_moment = nsum / dsum;
    rep.third_moment_ci =
        stats::bootstrap_ratio_ci(num, den, cfg.resamples, cfg.level, CounterRng(cfg.seed).split(0x3a1));
  } else {
    rep.warnings.push_back("no trajectory passes the window rule from time 0");
  }
  if (rep.confirmed >= cfg.min_samples && tx.size() >= 2) {
    rep.verdict = rep.faster_than_power ? "holds" : "fails";
  }
  return rep;
}

nlohmann::json SandwichReport::to_json() const {
  return {{"slack", slack},
          {"t", t},
          {"n_post", n_post},
          {"n_fresh", n_fresh},
          {"ks_position", ks_position},
          {"p_position", p_position},
          {"ks_passage", ks_passage},
          {"p_passage", p_passage},
          {"tolerance", tolerance},
          {"pass", pass},
          {"acceptance_rate", acceptance_rate},
          {"warnings", warnings}};
}

namespace {

constexpr std::uint64_t kStreamStride = std::uint64_t{1} << 32;

std::int64_t marginal_span(const SandwichConfig& cfg) { return std::max(cfg.n_steps, cfg.regen.window); }

// Marginals of the path after index `from`, which must be followed by the full span.
template <class Source>
void add_marginals(Source& src, std::int64_t from, const SandwichConfig& cfg, const DirectionSpec& dir,
                   WalkMarginals& out) {
  const Site x0 = src.pos(from);
  const std::int64_t span = marginal_span(cfg);
  out.position.push_back(dot(to_vec(src.pos(from + cfg.n_steps) - x0), dir.ell));
  double passage = static_cast<double>(span + 1);  // not reached within the span
  for (std::int64_t j = 0; j <= span; ++j) {
    if (dot(to_vec(src.pos(from + j) - x0), dir.ell) >= cfg.level_a) {
      passage = static_cast<double>(j);
      break;
    }
  }
  out.passage.push_back(passage);
}

template <class Attempt>
WalkMarginals collect(const SandwichConfig& cfg, Attempt&& attempt) {
  WalkMarginals out;
  while (out.position.size() < cfg.n_samples && out.attempts < cfg.max_attempts) {
    const std::size_t base = out.attempts;
    // surplus attempts past the last needed sample are discarded, so the chunk size never shows in the result
    const std::size_t chunk = std::max<std::size_t>(cfg.n_samples - out.position.size(), static_cast<std::size_t>(std::max(cfg.threads, 1)));
    const std::size_t count = std::min(chunk, cfg.max_attempts - base);
    const auto results = parallel_map(count, cfg.threads, [&](std::size_t i) { return attempt(base + i); });
    for (const auto& r : results) {
      ++out.attempts;
      if (!r.position.empty()) {
        out.position.push_back(r.position.front());
        out.passage.push_back(r.passage.front());
      }
      if (out.position.size() == cfg.n_samples) break;
    }
  }
  return out;
}

}  // namespace

WalkMarginals fresh_conditioned(const SandwichConfig& cfg, std::uint64_t stream) {
  cfg.regen.validate();
  cfg.ensemble.validate();
  const auto dir = cfg.regen.direction();
  const std::int64_t span = marginal_span(cfg);
  const Region region = Region::cube(cfg.ensemble.d, span + 1);
  const StopSpec stop({StopCondition::horizon(span)});
  const CounterRng root = CounterRng(cfg.seed).split(stream);
  return collect(cfg, [&](std::size_t i) {
    WalkMarginals r;
    const Environment env = cfg.ensemble.make(stream * kStreamStride + i, region, true);
    CounterRng rng = root.split(i);
    const auto positions = simulate_coupled(env, Site{}, stop, rng).positions();
    VectorSource src(positions, nullptr);
    if (confirm_at(src, 0, cfg.regen).status == CandidateStatus::confirmed) add_marginals(src, 0, cfg, dir, r);
    return r;
  });
}

WalkMarginals post_regeneration(const SandwichConfig& cfg, std::uint64_t stream) {
  cfg.regen.validate();
  cfg.ensemble.validate();
  require(cfg.j >= 1, "j must be at least 1");
  const auto dir = cfg.regen.direction();
  const std::int64_t span = marginal_span(cfg);
  const Region region = Region::cube(cfg.ensemble.d, cfg.horizon + 1);
  const CounterRng root = CounterRng(cfg.seed).split(stream);
  return collect(cfg, [&](std::size_t i) {
    WalkMarginals r;
    const Environment env = cfg.ensemble.make(stream * kStreamStride + i, region, true);
    StreamSource src(env, root.split(i), cfg.horizon);
    std::size_t seen = 0;
    scan(src, cfg.regen, cfg.j, [&](StreamSource& s, std::int64_t tau) {
      if (++seen == cfg.j && s.has(tau + span)) add_marginals(s, tau, cfg, dir, r);
    });
    return r;
  });
}

SandwichReport compare_marginals(const WalkMarginals& a, const WalkMarginals& b, const SandwichConfig& cfg,
                                 CounterRng rng) {
  if (a.position.size() < 30 || b.position.size() < 30) {
    throw InvalidArgument("insufficient samples for the sandwich comparison (" + std::to_string(a.position.size()) +
                          " and " + std::to_string(b.position.size()) + ")");
  }
  SandwichReport rep;
  rep.t = cfg.t > 0 ? cfg.t : transversal_t(cfg.ensemble.kappa, cfg.g);
  rep.slack = sandwich_slack(cfg.ensemble.kappa, cfg.g, cfg.regen.L, rep.t);
  rep.n_post = a.position.size();
  rep.n_fresh = b.position.size();
  rep.ks_position = stats::ks_statistic(a.position, b.position);
  rep.ks_passage = stats::ks_statistic(a.passage, b.passage);
  rep.p_position = stats::ks_pvalue_permutation(a.position, b.position, cfg.permutations, rng.split(1));
  rep.p_passage = stats::ks_pvalue_permutation(a.passage, b.passage, cfg.permutations, rng.split(2));
  // 3 sigma two-sided level
  rep.tolerance = rep.slack + stats::ks_critical(rep.n_post, rep.n_fresh, 0.0027);
  rep.pass = rep.ks_position <= rep.tolerance && rep.ks_passage <= rep.tolerance;
  if (a.position.size() < cfg.n_samples || b.position.size() < cfg.n_samples) {
    rep.warnings.push_back("attempt cap reached before the requested sample size");
  }
  return rep;
}

SandwichReport renewal_sandwich_diagnostic(const SandwichConfig& cfg) {
  const WalkMarginals post = post_regeneration(cfg, 0);
  const WalkMarginals fresh = fresh_conditioned(cfg, 1);
  SandwichReport rep = compare_marginals(post, fresh, cfg, CounterRng(cfg.seed).split(0x5a));
  rep.acceptance_rate = static_cast<double>(fresh.position.size()) / static_cast<double>(std::max<std::size_t>(fresh.attempts, 1));
  return rep;
}

}  // namespace rwre
