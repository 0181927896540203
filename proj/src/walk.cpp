#include "rwre/walk.hpp"

#include <sstream>

#include "rwre/parallel.hpp"

namespace rwre {

StopCondition StopCondition::box_exit(const BoxSpec& box, std::string name) {
  StopCondition s;
  s.kind = Kind::box_exit;
  s.box = box;
  s.name = std::move(name);
  return s;
}

StopCondition StopCondition::level_up(const Vec& u, double c, std::string name) {
  StopCondition s;
  s.kind = Kind::level_up;
  s.u = u;
  s.c = c;
  s.name = std::move(name);
  return s;
}

StopCondition StopCondition::level_down(const Vec& u, double c, std::string name) {
  StopCondition s;
  s.kind = Kind::level_down;
  s.u = u;
  s.c = c;
  s.name = std::move(name);
  return s;
}

StopCondition StopCondition::transverse(const Rotation& r, int j, int sign, double c) {
  require(j >= 1 && j < r.dim(), "transverse stop needs an axis index in [1, d)");
  const std::string name = std::string("transverse") + (sign > 0 ? "+" : "-") + std::to_string(j + 1);
  return sign > 0 ? level_up(r.column(j), c, name) : level_down(r.column(j), c, name);
}

StopCondition StopCondition::cone_exit(const ConeSpec& cone, std::string name) {
  StopCondition s;
  s.kind = Kind::cone_exit;
  s.cone = cone;
  s.name = std::move(name);
  return s;
}

StopCondition StopCondition::thin_slab(const Vec& ell, double L0, std::int64_t i, int d, std::string name) {
  require(L0 > 2.0, "thin slabs need L0 > 2");
  StopCondition s;
  s.kind = Kind::thin_slab;
  s.u = ell;
  s.c = L0;
  s.slab = i;
  s.d = d;
  s.name = std::move(name);
  return s;
}

StopCondition StopCondition::horizon(std::int64_t n_max) {
  require(n_max >= 0, "horizon must be non-negative");
  StopCondition s;
  s.kind = Kind::horizon;
  s.n_max = n_max;
  s.name = "horizon";
  return s;
}

bool StopCondition::fires(const Site& x, std::int64_t n) const {
  switch (kind) {
    case Kind::box_exit: return !box.contains(x);
    case Kind::level_up: return dot(x, u) >= c;
    case Kind::level_down: return dot(x, u) <= c;
    case Kind::cone_exit: return !cone_contains(cone, x);
    case Kind::thin_slab: return in_thin_slab(x, u, c, slab, d);
    case Kind::horizon: return n >= n_max;
  }
  return false;
}

StopSpec::StopSpec(std::vector<StopCondition> c) : conditions(std::move(c)) { validate(); }

void StopSpec::validate() const {
  for (const auto& c : conditions)
    if (c.kind == StopCondition::Kind::horizon) return;
  throw InvalidArgument("stop specification must include a horizon");
}

std::int64_t StopSpec::horizon() const {
  std::int64_t h = std::numeric_limits<std::int64_t>::max();
  for (const auto& c : conditions)
    if (c.kind == StopCondition::Kind::horizon) h = std::min(h, c.n_max);
  return h;
}

int StopSpec::first_firing(const Site& x, std::int64_t n) const {
  // Spatial stops take precedence over a horizon reached at the same time.
  int horizon_hit = -1;
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const auto& c = conditions[i];
    if (c.kind == StopCondition::Kind::horizon) {
      if (horizon_hit < 0 && c.fires(x, n)) horizon_hit = static_cast<int>(i);
    } else if (c.fires(x, n)) {
      return static_cast<int>(i);
    }
  }
  return horizon_hit;
}

std::vector<Site> Trajectory::positions() const {
  std::vector<Site> out;
  out.reserve(steps.size() + 1);
  Site x = start;
  out.push_back(x);
  for (auto k : steps) {
    x = step(x, k);
    out.push_back(x);
  }
  return out;
}

Site Trajectory::position(std::int64_t n) const {
  Site x = start;
  for (std::int64_t i = 0; i < n; ++i) x = step(x, steps[static_cast<std::size_t>(i)]);
  return x;
}

namespace {

inline int sample_direction(const TransitionVector& p, int n_dirs, double u) {
  for (int k = 0; k < n_dirs - 1; ++k) {
    u -= p[k];
    if (u < 0.0) return k;
  }
  return n_dirs - 1;
}

void finish(Trajectory& t, const StopSpec& stop, int idx, const Site& x) {
  t.stop_index = idx;
  t.stop_name = stop.conditions[static_cast<std::size_t>(idx)].name;
  t.end = x;
}

}  // namespace

Trajectory simulate_quenched(const Environment& env, const Site& x0, const StopSpec& stop, CounterRng& rng) {
  stop.validate();
  const int d = env.dim();
  if (!env.in_region(x0)) throw InvalidArgument("start site outside environment region");
  Trajectory t;
  t.d = d;
  t.start = x0;
  Site x = x0;
  for (std::int64_t n = 0;; ++n) {
    const int idx = stop.first_firing(x, n);
    if (idx >= 0) {
      finish(t, stop, idx, x);
      return t;
    }
    const TransitionVector p = env.at(x);
    const int k = sample_direction(p, 2 * d, rng.uniform());
    t.steps.push_back(static_cast<std::uint8_t>(k));
    x = step(x, k);
  }
}

std::uint8_t sample_epsilon(double kappa, int d, CounterRng& rng) {
  const double u = rng.uniform();
  if (u < 2.0 * d * kappa) {
    return static_cast<std::uint8_t>(std::min<int>(static_cast<int>(u / kappa), 2 * d - 1));
  }
  return kEpsilonZero;
}

CoupledStepper::CoupledStepper(const Environment& env, const Site& x0, CounterRng rng, std::vector<std::uint8_t> forced)
    : env_(&env), x_(x0), rng_(rng), forced_(std::move(forced)), rest_(1.0 - 2.0 * env.dim() * env.kappa()) {
  if (!env.in_region(x0)) throw InvalidArgument("start site outside environment region");
}

std::pair<std::uint8_t, std::uint8_t> CoupledStepper::advance() {
  const int d = env_->dim();
  const double kappa = env_->kappa();
  const TransitionVector p = env_->at(x_);
  std::uint8_t eps = 0;
  if (static_cast<std::size_t>(n_) < forced_.size()) {
    eps = forced_[static_cast<std::size_t>(n_)];
    rng_.uniform();  // keep the stream aligned with the unforced chain
  } else {
    eps = sample_epsilon(kappa, d, rng_);
  }
  int k = 0;
  if (eps != kEpsilonZero) {
    k = eps;
  } else {
    TransitionVector residual{};
    for (int j = 0; j < 2 * d; ++j) {
      residual[j] = (p[j] - kappa) / rest_;
      if (residual[j] < 0.0) throw Error("corrupted environment: transition entry below kappa");
    }
    k = sample_direction(residual, 2 * d, rng_.uniform());
  }
  x_ = step(x_, k);
  ++n_;
  return {static_cast<std::uint8_t>(k), eps};
}

Trajectory simulate_coupled(const Environment& env, const Site& x0, const StopSpec& stop, CounterRng& rng,
                            const std::vector<std::uint8_t>& forced) {
  stop.validate();
  CoupledStepper walker(env, x0, rng, forced);
  Trajectory t;
  t.d = env.dim();
  t.start = x0;
  t.coupled = true;
  for (;;) {
    const int idx = stop.first_firing(walker.position(), walker.time());
    if (idx >= 0) {
      finish(t, stop, idx, walker.position());
      rng = walker.rng();
      return t;
    }
    const auto [k, eps] = walker.advance();
    t.steps.push_back(k);
    t.epsilon.push_back(eps);
  }
}

std::vector<std::optional<std::int64_t>> evaluate_stops(const Trajectory& traj,
                                                        const std::vector<StopCondition>& specs) {
  std::vector<std::optional<std::int64_t>> out(specs.size());
  std::size_t remaining = specs.size();
  Site x = traj.start;
  for (std::int64_t n = 0; n <= traj.length() && remaining > 0; ++n) {
    if (n > 0) x = step(x, traj.steps[static_cast<std::size_t>(n - 1)]);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!out[i] && specs[i].fires(x, n)) {
        out[i] = n;
        --remaining;
      }
    }
  }
  return out;
}

std::vector<Trajectory> simulate_batch(const Environment& env, const Site& x0, const StopSpec& stop,
                                       const BatchOptions& opt) {
  stop.validate();
  const CounterRng master(opt.seed);
  return parallel_map(opt.n, opt.threads, [&](std::size_t i) {
    CounterRng rng = master.split(i);
    return opt.coupled ? simulate_coupled(env, x0, stop, rng) : simulate_quenched(env, x0, stop, rng);
  });
}

namespace {

Vec parse_vec(const std::string& s, int d) {
  Vec v{};
  std::stringstream ss(s);
  std::string part;
  int i = 0;
  while (std::getline(ss, part, ',')) {
    if (i >= d) throw InvalidArgument("too many vector coordinates in '" + s + "'");
    try {
      v[i++] = std::stod(part);
    } catch (const std::exception&) {
      throw InvalidArgument("bad number in '" + s + "'");
    }
  }
  if (i != d) throw InvalidArgument("vector '" + s + "' needs " + std::to_string(d) + " coordinates");
  return v;
}

}  // namespace

StopSpec parse_stops(const std::string& text, int d) {
  std::vector<StopCondition> conds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    std::vector<std::string> f;
    std::stringstream is(item);
    std::string tok;
    while (std::getline(is, tok, ':')) f.push_back(tok);
    const std::string& kind = f[0];
    try {
      if (kind == "horizon" && f.size() == 2) {
        conds.push_back(StopCondition::horizon(std::stoll(f[1])));
      } else if ((kind == "level_up" || kind == "level_down") && f.size() == 3) {
        const Vec u = parse_vec(f[1], d);
        const double c = std::stod(f[2]);
        conds.push_back(kind == "level_up" ? StopCondition::level_up(u, c) : StopCondition::level_down(u, c));
      } else if (kind == "box" && (f.size() == 5 || f.size() == 6)) {
        // box:l:L:L_front:L_tilde[:anchor]
        const Vec lv = parse_vec(f[1], d);
        Site l{};
        for (int i = 0; i < d; ++i) l[i] = static_cast<std::int64_t>(std::llround(lv[i]));
        Site anchor{};
        if (f.size() == 6) {
          const Vec a = parse_vec(f[5], d);
          for (int i = 0; i < d; ++i) anchor[i] = static_cast<std::int64_t>(std::llround(a[i]));
        }
        conds.push_back(StopCondition::box_exit(BoxSpec::from_extents(make_rotation(l, d), std::stod(f[2]),
                                                                      std::stod(f[3]), std::stod(f[4]), anchor)));
      } else if (kind == "cone" && f.size() == 3) {
        // cone:l:zeta (apex at the start, which the caller sets)
        const Vec lv = parse_vec(f[1], d);
        Site l{};
        for (int i = 0; i < d; ++i) l[i] = static_cast<std::int64_t>(std::llround(lv[i]));
        ConeSpec cone;
        cone.l = DirectionSpec::from_integer(l, d);
        cone.zeta = std::stod(f[2]);
        conds.push_back(StopCondition::cone_exit(cone));
      } else {
        throw InvalidArgument("unknown stop '" + item + "'");
      }
    } catch (const std::invalid_argument&) {
      throw InvalidArgument("bad number in stop '" + item + "'");
    }
  }
  return StopSpec(std::move(conds));
}

}  // namespace rwre
