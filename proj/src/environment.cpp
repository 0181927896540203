#include "rwre/environment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace rwre {

static_assert(std::endian::native == std::endian::little, "snapshot IO assumes a little-endian host");

Region Region::cube(int d, std::int64_t half_width) {
  check_dim(d);
  Region r;
  r.d = d;
  for (int i = 0; i < d; ++i) {
    r.lo[i] = -half_width;
    r.hi[i] = half_width;
  }
  return r;
}

Region Region::parse(const std::string& text) {
  Region r;
  int d = 0;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':', part.empty() || part[0] != '-' ? 0 : 1);
    if (colon == std::string::npos || d >= kMaxDim) throw InvalidArgument("bad region: " + text);
    try {
      r.lo[d] = std::stoll(part.substr(0, colon));
      r.hi[d] = std::stoll(part.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("bad region: " + text);
    }
    if (r.lo[d] > r.hi[d]) throw InvalidArgument("bad region: empty range in " + text);
    ++d;
  }
  check_dim(d);
  r.d = d;
  return r;
}

bool Region::contains(const Site& x) const {
  for (int i = 0; i < d; ++i)
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  return true;
}

std::uint64_t Region::size() const {
  std::uint64_t n = 1;
  for (int i = 0; i < d; ++i) n *= static_cast<std::uint64_t>(hi[i] - lo[i] + 1);
  return n;
}

std::uint64_t Region::index(const Site& x) const {
  std::uint64_t idx = 0;
  for (int i = 0; i < d; ++i) idx = idx * static_cast<std::uint64_t>(hi[i] - lo[i] + 1) +
                                   static_cast<std::uint64_t>(x[i] - lo[i]);
  return idx;
}

Site Region::site(std::uint64_t index) const {
  Site x{};
  for (int i = d - 1; i >= 0; --i) {
    const auto w = static_cast<std::uint64_t>(hi[i] - lo[i] + 1);
    x[i] = lo[i] + static_cast<std::int64_t>(index % w);
    index /= w;
  }
  return x;
}

std::string Region::to_string() const {
  std::ostringstream os;
  for (int i = 0; i < d; ++i) {
    if (i) os << ',';
    os << lo[i] << ':' << hi[i];
  }
  return os.str();
}

void validate_kappa(double kappa, int d) {
  check_dim(d);
  if (!(kappa > 0.0 && kappa < 1.0 / (4.0 * d))) {
    throw InvalidArgument("kappa must lie in (0, 1/(4d)), got " + std::to_string(kappa));
  }
}

void validate_transition(const TransitionVector& p, int d, double kappa) {
  double sum = 0.0;
  for (int k = 0; k < 2 * d; ++k) {
    if (!(p[k] >= 2.0 * kappa - 1e-15)) {
      throw InvalidArgument("transition entry below 2*kappa: " + std::to_string(p[k]));
    }
    sum += p[k];
  }
  for (int k = 2 * d; k < kMaxDirs; ++k) {
    if (p[k] != 0.0) throw InvalidArgument("transition vector has entries beyond 2d");
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidArgument("transition entries do not sum to 1");
}

std::array<double, kMaxDirs> expand_alpha(const std::vector<double>& alpha, int d) {
  std::array<double, kMaxDirs> a{};
  if (alpha.size() == 1) {
    for (int k = 0; k < 2 * d; ++k) a[k] = alpha[0];
  } else if (static_cast<int>(alpha.size()) == 2 * d) {
    for (int k = 0; k < 2 * d; ++k) a[k] = alpha[k];
  } else {
    throw InvalidArgument("Dirichlet alpha must have 1 or 2d entries");
  }
  for (int k = 0; k < 2 * d; ++k)
    if (!(a[k] > 0.0)) throw InvalidArgument("Dirichlet alpha entries must be positive");
  return a;
}

TransitionVector sample_simplex_point(double kappa, int d, const std::array<double, kMaxDirs>& alpha,
                                      CounterRng& rng) {
  validate_kappa(kappa, d);
  TransitionVector y{};
  double total = 0.0;
  for (int k = 0; k < 2 * d; ++k) {
    std::gamma_distribution<double> gamma(alpha[k], 1.0);
    y[k] = gamma(rng);
    total += y[k];
  }
  if (!(total > 0.0)) {
    // All gamma draws underflowed (tiny alpha); fall back to a vertex.
    y[0] = 1.0;
    total = 1.0;
  }
  const double free_mass = 1.0 - 4.0 * d * kappa;
  TransitionVector p{};
  for (int k = 0; k < 2 * d; ++k) p[k] = 2.0 * kappa + free_mass * (y[k] / total);
  return p;
}

TransitionVector sample_simplex_point(double kappa, int d, CounterRng& rng) {
  return sample_simplex_point(kappa, d, expand_alpha({1.0}, d), rng);
}

void MixingParams::validate() const {
  if (!(C >= 0.0)) throw InvalidArgument("mixing C must be non-negative");
  if (!(g > 0.0)) throw InvalidArgument("mixing g must be positive");
  if (r < 1) throw InvalidArgument("mixing range r must be >= 1");
}

std::string source_kind(const EnvSource& s) {
  switch (s.index()) {
    case 0: return "explicit";
    case 1: return "iid";
    case 2: return "gibbs";
    default: return "constant";
  }
}

namespace {

TransitionVector iid_value(const IidSource& src, int d, double kappa, const Site& x) {
  CounterRng rng = site_stream(src.seed, x);
  return sample_simplex_point(kappa, d, src.alpha, rng);
}

}  // namespace

Environment Environment::iid(int d, double kappa, const Region& region, std::uint64_t seed,
                             const std::vector<double>& alpha, bool lazy) {
  validate_kappa(kappa, d);
  require(region.d == d, "region dimension does not match d");
  Environment e;
  e.d_ = d;
  e.kappa_ = kappa;
  e.region_ = region;
  e.source_ = IidSource{seed, expand_alpha(alpha, d)};
  if (!lazy && region.size() <= kMaterializeLimit) return e.materialize();
  return e;
}

Environment Environment::constant(int d, double kappa, const TransitionVector& probs) {
  validate_kappa(kappa, d);
  validate_transition(probs, d, kappa);
  Environment e;
  e.d_ = d;
  e.kappa_ = kappa;
  e.bounded_ = false;
  e.region_.d = d;
  e.source_ = ConstantSource{probs};
  return e;
}

Environment Environment::constant(int d, double kappa, const TransitionVector& probs,
                                  const Region& region) {
  Environment e = constant(d, kappa, probs);
  require(region.d == d, "region dimension does not match d");
  e.bounded_ = true;
  e.region_ = region;
  return e;
}

Environment Environment::symmetric(int d, double kappa) {
  TransitionVector p{};
  for (int k = 0; k < 2 * d; ++k) p[k] = 1.0 / (2.0 * d);
  return constant(d, kappa, p);
}

Environment Environment::from_grid(int d, double kappa, const Region& region, std::vector<double> data,
                                   EnvSource source) {
  validate_kappa(kappa, d);
  require(region.d == d, "region dimension does not match d");
  require(data.size() == region.size() * static_cast<std::uint64_t>(2 * d),
          "grid data size does not match region");
  TransitionVector p{};
  for (std::uint64_t i = 0; i < region.size(); ++i) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(i * 2 * d), 2 * d, p.begin());
    validate_transition(p, d, kappa);
  }
  Environment e;
  e.d_ = d;
  e.kappa_ = kappa;
  e.region_ = region;
  e.source_ = std::move(source);
  e.data_ = std::make_shared<const std::vector<double>>(std::move(data));
  return e;
}

TransitionVector Environment::at(const Site& x) const {
  if (bounded_ && !region_.contains(x)) {
    throw RegionExhausted("site " + rwre::to_string(x, d_) + " outside environment region " +
                          region_.to_string());
  }
  if (data_) {
    TransitionVector p{};
    const auto base = region_.index(x) * static_cast<std::uint64_t>(2 * d_);
    std::copy_n(data_->data() + base, 2 * d_, p.begin());
    return p;
  }
  if (const auto* c = std::get_if<ConstantSource>(&source_)) return c->probs;
  if (const auto* s = std::get_if<IidSource>(&source_)) return iid_value(*s, d_, kappa_, x);
  throw Error("environment has no data for site " + rwre::to_string(x, d_));
}

Environment Environment::materialize() const {
  if (data_) return *this;
  if (!bounded_) throw InvalidArgument("cannot materialize an unbounded environment");
  if (region_.size() > kMaterializeLimit) {
    throw CapacityExceeded("region of " + std::to_string(region_.size()) + " sites exceeds materialization limit");
  }
  auto data = std::make_shared<std::vector<double>>(region_.size() * 2 * d_);
  for (std::uint64_t i = 0; i < region_.size(); ++i) {
    const TransitionVector p = at(region_.site(i));
    std::copy_n(p.begin(), 2 * d_, data->begin() + static_cast<std::ptrdiff_t>(i * 2 * d_));
  }
  Environment e = *this;
  e.data_ = std::move(data);
  return e;
}

namespace {

void centered_log(const double* p, int n, double* out) {
  double m = 0.0;
  for (int k = 0; k < n; ++k) {
    out[k] = std::log(p[k]);
    m += out[k];
  }
  m /= n;
  for (int k = 0; k < n; ++k) out[k] -= m;
}

}  // namespace

Environment Environment::gibbs(int d, double kappa, const Region& region, const MixingParams& mixing,
                               std::uint64_t seed, std::uint32_t sweeps, const std::vector<double>& alpha,
                               std::uint32_t candidates) {
  validate_kappa(kappa, d);
  mixing.validate();
  require(sweeps >= 1, "gibbs sweeps must be >= 1");
  require(candidates >= 1, "gibbs candidate pool must be >= 1");
  require(region.d == d, "region dimension does not match d");
  if (region.size() > kMaterializeLimit) {
    throw CapacityExceeded("region of " + std::to_string(region.size()) + " sites too large for gibbs generation");
  }
  const auto alpha_full = expand_alpha(alpha, d);
  const int n = 2 * d;
  const std::uint64_t sites = region.size();

  Environment base = iid(d, kappa, region, seed, alpha);
  std::vector<double> data(*base.data_);
  std::vector<double> phi(data.size());
  for (std::uint64_t i = 0; i < sites; ++i) centered_log(&data[i * n], n, &phi[i * n]);

  // Interaction offsets 1 <= |o|_1 <= r with coupling C e^{-g |o|_1}.
  std::vector<std::pair<Site, double>> offsets;
  {
    Site o{};
    const int r = mixing.r;
    std::function<void(int)> rec = [&](int axis) {
      if (axis == d) {
        const auto dist = norm1(o);
        if (dist >= 1 && dist <= r) offsets.emplace_back(o, mixing.C * std::exp(-mixing.g * static_cast<double>(dist)));
        return;
      }
      for (std::int64_t v = -r; v <= r; ++v) {
        o[axis] = v;
        rec(axis + 1);
      }
      o[axis] = 0;
    };
    rec(0);
  }

  const CounterRng master(seed ^ 0x9b05688c2b3e6c1fULL);
  std::vector<double> pool(static_cast<std::size_t>(candidates + 1) * n);
  std::vector<double> pool_phi(pool.size());
  std::vector<double> logw(candidates + 1);
  std::array<double, kMaxDirs> field{};

  for (std::uint32_t s = 0; s < sweeps; ++s) {
    const CounterRng sweep_rng = master.split(s);
    for (std::uint64_t i = 0; i < sites; ++i) {
      const Site x = region.site(i);
      CounterRng rng = sweep_rng.split(i);
      // Local field: sum_y J(x,y) phi(omega_y).
      field.fill(0.0);
      bool interacting = false;
      for (const auto& [o, j] : offsets) {
        const Site y = x + o;
        if (!region.contains(y) || j == 0.0) continue;
        const double* py = &phi[region.index(y) * n];
        for (int k = 0; k < n; ++k) field[k] += j * py[k];
        interacting = true;
      }
      std::copy_n(&data[i * n], n, pool.begin());
      std::copy_n(&phi[i * n], n, pool_phi.begin());
      for (std::uint32_t c = 1; c <= candidates; ++c) {
        const TransitionVector p = sample_simplex_point(kappa, d, alpha_full, rng);
        std::copy_n(p.begin(), n, pool.begin() + c * n);
        centered_log(&pool[c * n], n, &pool_phi[c * n]);
      }
      double best = -std::numeric_limits<double>::infinity();
      for (std::uint32_t c = 0; c <= candidates; ++c) {
        double e = 0.0;
        if (interacting)
          for (int k = 0; k < n; ++k) e += field[k] * pool_phi[c * n + k];
        logw[c] = e;
        best = std::max(best, e);
      }
      double total = 0.0;
      for (auto& w : logw) {
        w = std::exp(w - best);
        total += w;
      }
      double u = rng.uniform() * total;
      std::uint32_t pick = candidates;
      for (std::uint32_t c = 0; c <= candidates; ++c) {
        u -= logw[c];
        if (u < 0.0) {
          pick = c;
          break;
        }
      }
      if (pick != 0) {
        std::copy_n(pool.begin() + pick * n, n, data.begin() + static_cast<std::ptrdiff_t>(i * n));
        std::copy_n(pool_phi.begin() + pick * n, n, phi.begin() + static_cast<std::ptrdiff_t>(i * n));
      }
    }
  }
  return from_grid(d, kappa, region, std::move(data),
                   GibbsSource{seed, mixing, sweeps, candidates, alpha_full});
}

// ---------------------------------------------------------------------------
// Snapshots

namespace {

constexpr char kMagic[4] = {'R', 'W', 'R', 'E'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("snapshot truncated");
  return v;
}

}  // namespace

void EnsembleSpec::validate() const {
  validate_kappa(kappa, d);
  if (kind == "iid" || kind == "gibbs") {
    expand_alpha(alpha, d);
    if (kind == "gibbs") mixing.validate();
  } else if (kind == "constant") {
    validate_transition(probs, d, kappa);
  } else if (kind != "symmetric") {
    throw InvalidArgument("unknown environment kind '" + kind + "'");
  }
}

std::uint64_t EnsembleSpec::member_seed(std::size_t index) const { return mix64(seed + index); }

Environment EnsembleSpec::make(std::size_t index, const Region& region, bool lazy) const {
  if (kind == "iid") return Environment::iid(d, kappa, region, member_seed(index), alpha, lazy);
  if (kind == "gibbs") {
    return Environment::gibbs(d, kappa, region, mixing, member_seed(index), sweeps, alpha, candidates);
  }
  if (kind == "constant") return Environment::constant(d, kappa, probs);
  if (kind == "symmetric") return Environment::symmetric(d, kappa);
  throw InvalidArgument("unknown environment kind '" + kind + "'");
}

void write_snapshot(const Environment& env, std::ostream& out) {
  if (!env.bounded()) throw InvalidArgument("cannot serialize an environment without a bounded region");
  const Environment m = env.materialize();
  const int d = m.dim();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kSnapshotVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put<double>(out, m.kappa());
  for (int i = 0; i < d; ++i) {
    put<std::int64_t>(out, m.region().lo[i]);
    put<std::int64_t>(out, m.region().hi[i]);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.source().index()));
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, IidSource>) {
          put<std::uint64_t>(out, s.seed);
          for (int k = 0; k < 2 * d; ++k) put<double>(out, s.alpha[k]);
        } else if constexpr (std::is_same_v<S, GibbsSource>) {
          put<std::uint64_t>(out, s.seed);
          put<double>(out, s.mixing.C);
          put<double>(out, s.mixing.g);
          put<std::uint32_t>(out, static_cast<std::uint32_t>(s.mixing.r));
          put<std::uint32_t>(out, s.sweeps);
          put<std::uint32_t>(out, s.candidates);
          for (int k = 0; k < 2 * d; ++k) put<double>(out, s.alpha[k]);
        } else if constexpr (std::is_same_v<S, ConstantSource>) {
          for (int k = 0; k < 2 * d; ++k) put<double>(out, s.probs[k]);
        }
      },
      m.source());
  const auto& region = m.region();
  for (std::uint64_t i = 0; i < region.size(); ++i) {
    const TransitionVector p = m.at(region.site(i));
    for (int k = 0; k < 2 * d; ++k) put<double>(out, p[k]);
  }
  if (!out) throw Error("snapshot write failed");
}

void write_snapshot(const Environment& env, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_snapshot(env, out);
}

std::vector<char> snapshot_bytes(const Environment& env) {
  std::ostringstream os(std::ios::binary);
  write_snapshot(env, os);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

Environment read_snapshot(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error("not an environment snapshot (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kSnapshotVersion) throw Error("unsupported snapshot version " + std::to_string(version));
  const int d = static_cast<int>(get<std::uint32_t>(in));
  check_dim(d);
  const double kappa = get<double>(in);
  validate_kappa(kappa, d);
  Region region;
  region.d = d;
  for (int i = 0; i < d; ++i) {
    region.lo[i] = get<std::int64_t>(in);
    region.hi[i] = get<std::int64_t>(in);
    if (region.lo[i] > region.hi[i]) throw Error("snapshot region is empty");
  }
  if (region.size() > Environment::kMaterializeLimit) throw CapacityExceeded("snapshot region too large");
  const auto tag = get<std::uint32_t>(in);
  EnvSource source;
  switch (tag) {
    case 0: source = ExplicitSource{}; break;
    case 1: {
      IidSource s;
      s.seed = get<std::uint64_t>(in);
      for (int k = 0; k < 2 * d; ++k) s.alpha[k] = get<double>(in);
      source = s;
      break;
    }
    case 2: {
      GibbsSource s;
      s.seed = get<std::uint64_t>(in);
      s.mixing.C = get<double>(in);
      s.mixing.g = get<double>(in);
      s.mixing.r = static_cast<int>(get<std::uint32_t>(in));
      s.sweeps = get<std::uint32_t>(in);
      s.candidates = get<std::uint32_t>(in);
      for (int k = 0; k < 2 * d; ++k) s.alpha[k] = get<double>(in);
      source = s;
      break;
    }
    case 3: {
      ConstantSource s;
      for (int k = 0; k < 2 * d; ++k) s.probs[k] = get<double>(in);
      source = s;
      break;
    }
    default: throw Error("unknown snapshot source tag " + std::to_string(tag));
  }
  std::vector<double> data(region.size() * 2 * d);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw Error("snapshot truncated");
  return Environment::from_grid(d, kappa, region, std::move(data), std::move(source));
}

Environment read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open snapshot: " + path);
  return read_snapshot(in);
}

// ---------------------------------------------------------------------------
// Mixing diagnostic

double mixing_bound(const std::vector<Site>& delta, const std::vector<Site>& a, const MixingParams& m) {
  double s = 0.0;
  for (const auto& x : delta)
    for (const auto& y : a) s += std::exp(-m.g * static_cast<double>(norm1(x - y)));
  return std::exp(m.C * s);
}

namespace {

double kde(std::span<const double> xs, double at, double bw) {
  double s = 0.0;
  for (double x : xs) {
    const double z = (at - x) / bw;
    s += std::exp(-0.5 * z * z);
  }
  return s / (static_cast<double>(xs.size()) * bw * std::sqrt(2.0 * 3.141592653589793));
}

struct SplitSample {
  std::vector<double> lo;
  std::vector<double> hi;
};

std::array<double, 3> log_ratios(const std::vector<double>& stat, const std::vector<double>& cond,
                                 const std::vector<std::size_t>& idx, const std::array<double, 3>& points,
                                 double bw) {
  std::vector<double> c;
  c.reserve(idx.size());
  for (auto i : idx) c.push_back(cond[i]);
  const double med = stats::quantile(c, 0.5);
  SplitSample s;
  for (auto i : idx) (cond[i] > med ? s.hi : s.lo).push_back(stat[i]);
  std::array<double, 3> out{};
  if (s.hi.empty() || s.lo.empty()) return out;
  for (int q = 0; q < 3; ++q) {
    const double fh = std::max(kde(s.hi, points[q], bw), 1e-300);
    const double fl = std::max(kde(s.lo, points[q], bw), 1e-300);
    out[q] = std::log(fh / fl);
  }
  return out;
}

}  // namespace

MixingReport mixing_ratio_diagnostic(const std::vector<Environment>& ensemble, const std::vector<Site>& delta,
                                     const std::vector<Site>& a, const MixingParams& mixing, double level,
                                     CounterRng rng) {
  mixing.validate();
  require(!delta.empty(), "mixing diagnostic: Delta must be non-empty");
  for (const auto& x : delta)
    for (const auto& y : a)
      if (norm1(x - y) < mixing.r) {
        throw GeometryError("mixing diagnostic: d_1(Delta, A) is below the Markov range r");
      }
  MixingReport rep;
  rep.samples = ensemble.size();
  rep.bound = mixing_bound(delta, a, mixing);
  if (a.empty()) {
    rep.verdict = "holds";
    return rep;
  }
  if (ensemble.size() < 40) {
    rep.verdict = "inconclusive";
    return rep;
  }
  std::vector<double> stat;
  std::vector<double> cond;
  for (const auto& env : ensemble) {
    double s = 0.0;
    for (const auto& x : delta) s += env.prob(x, 0);
    double c = 0.0;
    for (const auto& y : a) c += env.prob(y, 0);
    stat.push_back(s / static_cast<double>(delta.size()));
    cond.push_back(c / static_cast<double>(a.size()));
  }
  const std::array<double, 3> points = {stats::quantile(stat, 0.25), stats::quantile(stat, 0.5),
                                        stats::quantile(stat, 0.75)};
  const double sd = stats::stddev(stat);
  const double bw = std::max(1.06 * sd * std::pow(static_cast<double>(stat.size()), -0.2), 1e-12);
  std::vector<std::size_t> all(stat.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  rep.log_ratio_at_quartiles = log_ratios(stat, cond, all, points, bw);

  const int resamples = 400;
  std::array<std::vector<double>, 3> boot;
  std::vector<std::size_t> idx(all.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % all.size());
    const auto lr = log_ratios(stat, cond, idx, points, bw);
    for (int q = 0; q < 3; ++q) boot[q].push_back(lr[q]);
  }
  const double tail = (1.0 - level) / 2.0;
  const double log_bound = std::log(rep.bound);
  bool violated = false;
  for (int q = 0; q < 3; ++q) {
    rep.log_ratio_ci[q] = {stats::quantile(boot[q], tail), stats::quantile(boot[q], 1.0 - tail)};
    if (rep.log_ratio_ci[q].lo > log_bound || rep.log_ratio_ci[q].hi < -log_bound) violated = true;
  }
  rep.ratio = std::exp(rep.log_ratio_at_quartiles[1]);
  rep.ratio_ci = {std::exp(rep.log_ratio_ci[1].lo), std::exp(rep.log_ratio_ci[1].hi)};
  rep.verdict = violated ? "fails" : "holds";
  return rep;
}

}  // namespace rwre
