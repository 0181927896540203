#include "rwre/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "rwre/ballisticity.hpp"
#include "rwre/clt.hpp"
#include "rwre/environment.hpp"
#include "rwre/oracle.hpp"
#include "rwre/parallel.hpp"
#include "rwre/regeneration.hpp"
#include "rwre/renormalization.hpp"
#include "rwre/walk.hpp"

namespace rwre::cli {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      t = static_cast<std::time_t>(std::stoll(sde));
    } catch (const std::exception&) {
      // malformed values fall back to the clock
    }
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json ReportEnvelope::to_json() const {
  return {{"tool_version", kToolVersion},
          {"schema_version", kSchemaVersion},
          {"command", command},
          {"config_hash", config_hash(config)},
          {"config", config},
          {"runtime", runtime},
          {"seed", seed},
          {"created", created},
          {"verdict", verdict},
          {"warnings", warnings},
          {"payload", payload}};
}

namespace {

class IoError : public Error {
 public:
  using Error::Error;
};

struct Result {
  nlohmann::json payload = nlohmann::json::object();
  std::string verdict = "ok";
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> tables;  // file suffix, CSV text
};

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string preset = "paper";
  bool strict = false;
  std::string out_dir = "rwre-out";
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw InvalidArgument("bad number '" + part + "' in '" + s + "'");
    }
  }
  return out;
}

Site parse_site(const std::string& s, int d) {
  const auto v = parse_list(s);
  if (static_cast<int>(v.size()) != d) {
    throw InvalidArgument("'" + s + "' needs " + std::to_string(d) + " coordinates");
  }
  Site x{};
  for (int i = 0; i < d; ++i) {
    if (v[static_cast<std::size_t>(i)] != std::round(v[static_cast<std::size_t>(i)])) {
      throw InvalidArgument("'" + s + "' must have integer coordinates");
    }
    x[i] = static_cast<std::int64_t>(v[static_cast<std::size_t>(i)]);
  }
  return x;
}

nlohmann::json site_json(const Site& x, int d) { return std::vector<std::int64_t>(x.begin(), x.begin() + d); }

// Environment options shared by every command that needs one: a snapshot file
// or the parameters of an ensemble.
struct EnvOptions {
  std::string file;
  std::string kind = "iid";
  int d = 2;
  double kappa = 0.05;
  std::string region;
  std::vector<double> alpha{1.0};
  std::vector<double> probs;
  double C = 1.0;
  double g = 1.0;
  int r = 1;
  std::uint32_t sweeps = 1;
  std::uint32_t candidates = 16;

  void add(CLI::App* app, bool with_file) {
    if (with_file) app->add_option("--env", file, "environment snapshot file")->check(CLI::ExistingFile);
    app->add_option("--kind", kind, "iid | gibbs | constant | symmetric")
        ->check(CLI::IsMember({"iid", "gibbs", "constant", "symmetric"}));
    app->add_option("--d", d, "dimension")->check(CLI::Range(2, kMaxDim));
    app->add_option("--kappa", kappa, "ellipticity constant");
    app->add_option("--region", region, "lo:hi per axis, e.g. -32:32,-32:32");
    app->add_option("--alpha", alpha, "Dirichlet parameters (one or 2d values)")->delimiter(',');
    app->add_option("--probs", probs, "transition vector of a constant environment")->delimiter(',');
    app->add_option("--C", C, "mixing constant C");
    app->add_option("--g", g, "mixing rate g");
    app->add_option("--r", r, "mixing range r");
    app->add_option("--sweeps", sweeps, "Gibbs sweeps");
    app->add_option("--candidates", candidates, "Gibbs proposals per site");
  }

  EnsembleSpec ensemble(std::uint64_t seed) const {
    EnsembleSpec e;
    e.kind = kind;
    e.d = d;
    e.kappa = kappa;
    e.alpha = alpha;
    if (!probs.empty()) {
      if (static_cast<int>(probs.size()) != 2 * d) throw InvalidArgument("--probs needs 2d values");
      std::copy(probs.begin(), probs.end(), e.probs.begin());
    } else if (kind == "constant") {
      throw InvalidArgument("--kind constant needs --probs");
    }
    e.mixing = {C, g, r};
    e.sweeps = sweeps;
    e.candidates = candidates;
    e.seed = seed;
    e.validate();
    return e;
  }

  Region region_or(std::int64_t half_width) const {
    if (!region.empty()) {
      Region r = Region::parse(region);
      if (r.d != d) throw InvalidArgument("--region dimension differs from --d");
      return r;
    }
    return Region::cube(d, half_width);
  }

  /// One bounded environment that can be written to a snapshot.
  Environment bounded(std::uint64_t seed, const Region& reg) const {
    const EnsembleSpec e = ensemble(seed);
    if (kind == "constant") return Environment::constant(d, kappa, e.probs, reg);
    if (kind == "symmetric") {
      TransitionVector p{};
      for (int k = 0; k < 2 * d; ++k) p[k] = 1.0 / (2 * d);
      return Environment::constant(d, kappa, p, reg);
    }
    return e.make(0, reg);
  }

  /// The snapshot when given, else member 0 of the ensemble (lazy over a large cube).
  Environment single(std::uint64_t seed, std::int64_t half_width) const {
    if (!file.empty()) return read_snapshot(file);
    return ensemble(seed).make(0, region_or(half_width), true);
  }

  int dim() const { return file.empty() ? d : read_snapshot(file).dim(); }
};

nlohmann::json describe(const Environment& env) {
  nlohmann::json j = {{"d", env.dim()},
                      {"kappa", env.kappa()},
                      {"bounded", env.bounded()},
                      {"kind", source_kind(env.source())}};
  const int d = env.dim();
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, IidSource>) {
          j["source_seed"] = s.seed;
          j["alpha"] = std::vector<double>(s.alpha.begin(), s.alpha.begin() + 2 * d);
        } else if constexpr (std::is_same_v<S, GibbsSource>) {
          j["source_seed"] = s.seed;
          j["alpha"] = std::vector<double>(s.alpha.begin(), s.alpha.begin() + 2 * d);
          j["mixing"] = {{"C", s.mixing.C}, {"g", s.mixing.g}, {"r", s.mixing.r}};
          j["sweeps"] = s.sweeps;
          j["candidates"] = s.candidates;
        } else if constexpr (std::is_same_v<S, ConstantSource>) {
          j["probs"] = std::vector<double>(s.probs.begin(), s.probs.begin() + 2 * d);
        }
      },
      env.source());
  if (env.bounded()) {
    const Region& reg = env.region();
    j["region"] = reg.to_string();
    j["sites"] = reg.size();
    if (reg.size() <= Environment::kMaterializeLimit) {
      std::vector<double> drift(static_cast<std::size_t>(d), 0.0);
      double min_entry = 1.0;
      for (std::uint64_t i = 0; i < reg.size(); ++i) {
        const auto p = env.at(reg.site(i));
        for (int k = 0; k < 2 * d; ++k) {
          drift[static_cast<std::size_t>(dir_axis(k))] += dir_sign(k) * p[k];
          min_entry = std::min(min_entry, p[k]);
        }
      }
      for (auto& x : drift) x /= static_cast<double>(reg.size());
      j["mean_drift"] = drift;
      j["min_entry"] = min_entry;
    }
  }
  return j;
}

// Independent walks; with an ensemble, walk i runs in member i of stream `stream`.
std::vector<Trajectory> annealed_walks(const EnvOptions& eo, std::uint64_t seed, std::uint64_t stream, std::size_t n,
                                       std::int64_t horizon, int threads) {
  const StopSpec stop({StopCondition::horizon(horizon)});
  const CounterRng root = CounterRng(seed).split(stream);
  if (!eo.file.empty()) {
    const Environment env = read_snapshot(eo.file);
    return parallel_map(n, threads, [&](std::size_t i) {
      CounterRng rng = root.split(i);
      return simulate_quenched(env, Site{}, stop, rng);
    });
  }
  const EnsembleSpec ens = eo.ensemble(seed);
  const Region region = Region::cube(eo.d, horizon + 1);
  return parallel_map(n, threads, [&](std::size_t i) {
    CounterRng rng = root.split(i);
    return simulate_quenched(ens.make((stream << 32) + i, region, true), Site{}, stop, rng);
  });
}

void add_method(CLI::App* app, std::string& method, std::size_t& n_walks) {
  app->add_option("--method", method, "exact | mc")->check(CLI::IsMember({"exact", "mc", "monte_carlo"}));
  app->add_option("--n-walks", n_walks, "walks per start site for Monte Carlo");
}

MethodSpec method_spec(const std::string& method, std::size_t n_walks) {
  MethodSpec m;
  m.kind = parse_method(method == "mc" ? "monte_carlo" : method);
  m.n_walks = n_walks;
  return m;
}

Result from_condition(const ConditionReport& rep) {
  Result r;
  r.payload = rep.to_json();
  r.verdict = rep.verdict;
  r.warnings = rep.warnings;
  return r;
}

nlohmann::json goodbad_json(const GoodBadMap& m, int d) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& [index, st] : m.boxes) {
    nlohmann::json b = {{"index", site_json(index, d)}, {"good", st.good}};
    if (m.level == 0) {
      b["inf_frontal"] = st.inf_frontal;
    } else {
      b["children"] = st.children;
      b["bad_children"] = st.bad_children;
      if (st.witness) b["witness"] = site_json(*st.witness, d);
    }
    boxes.push_back(b);
  }
  return {{"level", m.level}, {"boxes", boxes}};
}

// Flat "group.sub.option" keys; threads and output paths go to the runtime block.
void resolve(const CLI::App* app, const std::string& prefix, nlohmann::json& config, nlohmann::json& runtime) {
  static const std::set<std::string> runtime_keys{"threads", "out-dir", "out", "dump", "config"};
  for (const CLI::Option* opt : app->get_options()) {
    std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "h") continue;
    nlohmann::json value;
    if (opt->get_expected_min() == 0) {
      value = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto res = opt->results();
      if (res.size() == 1) {
        value = res.front();
      } else {
        value = res;
      }
    } else {
      const std::string def = opt->get_default_str();
      if (def == "{}") {
        value = nlohmann::json::array();
      } else if (def.size() >= 2 && def.front() == '[' && def.back() == ']') {
        value = nlohmann::json::array();
        std::stringstream ss(def.substr(1, def.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) value.push_back(item);
      } else {
        value = def;
      }
    }
    (runtime_keys.count(name) ? runtime : config)[prefix + name] = value;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random walks in random environments: simulation, exact oracles and diagnostics", "rwre"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML or INI file with defaults; flags override");
  Globals G;
  app.add_option("--seed", G.seed, "master seed");
  app.add_option("--threads", G.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--preset", G.preset, "scale preset")->check(CLI::IsMember({"paper", "mini"}));
  app.add_flag("--strict", G.strict, "exit 2 when the verdict is inconclusive");
  app.add_option("--out-dir", G.out_dir, "directory for reports");
  app.require_subcommand(1);

  std::map<const CLI::App*, std::function<Result()>> handlers;
  std::map<const CLI::App*, std::string> report_override;

  // env -------------------------------------------------------------------
  auto* env_cmd = app.add_subcommand("env", "environment snapshots")->require_subcommand(1);
  EnvOptions gen_env;
  std::string gen_out;
  auto* env_gen = env_cmd->add_subcommand("gen", "generate an environment snapshot");
  gen_env.add(env_gen, false);
  env_gen->add_option("--out", gen_out, "snapshot file")->required();
  handlers[env_gen] = [&]() {
    const Environment e = gen_env.bounded(G.seed, gen_env.region_or(32));
    std::ofstream f(gen_out, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + gen_out);
    write_snapshot(e, f);
    f.close();
    if (!f) throw IoError("write failed: " + gen_out);
    Result r;
    r.payload = describe(e);
    r.payload["file"] = gen_out;
    r.payload["bytes"] = std::filesystem::file_size(gen_out);
    return r;
  };

  std::string inspect_file;
  auto* env_inspect = env_cmd->add_subcommand("inspect", "print the parameters of a snapshot");
  env_inspect->add_option("file", inspect_file, "snapshot file")->required()->check(CLI::ExistingFile);
  handlers[env_inspect] = [&]() {
    Result r;
    r.payload = describe(read_snapshot(inspect_file));
    r.payload["file"] = inspect_file;
    for (const auto& key : {"d", "kappa", "kind", "source_seed", "region", "sites"}) {
      if (r.payload.contains(key)) out << key << " = " << r.payload[key].dump() << '\n';
    }
    return r;
  };

  // walk ------------------------------------------------------------------
  auto* walk_cmd = app.add_subcommand("walk", "walk simulation")->require_subcommand(1);
  EnvOptions walk_env;
  std::string walk_start = "0,0";
  std::string walk_stops;
  std::size_t walk_n = 1000;
  bool walk_coupled = false;
  std::string walk_dump;
  std::string walk_out;
  auto* walk_sim = walk_cmd->add_subcommand("sim", "simulate walks until a stop condition");
  walk_env.add(walk_sim, true);
  walk_sim->add_option("--start", walk_start, "start site");
  walk_sim->add_option("--stops", walk_stops, "e.g. level_up:1,0:5;level_down:1,0:-5;horizon:1000")->required();
  walk_sim->add_option("--n", walk_n, "trajectories");
  walk_sim->add_flag("--coupled", walk_coupled, "simulate the coupled chain");
  walk_sim->add_option("--dump", walk_dump, "JSON lines of {start, steps, annotations}");
  walk_sim->add_option("--out", walk_out, "report file");
  handlers[walk_sim] = [&]() {
    const int d = walk_env.dim();
    const StopSpec stop = parse_stops(walk_stops, d);
    const Site start = parse_site(walk_start, d);
    std::int64_t reach = stop.horizon() + 1;
    for (int i = 0; i < d; ++i) reach += std::abs(start[i]);
    const Environment env = walk_env.single(G.seed, reach);
    const auto ts = simulate_batch(env, start, stop, {walk_n, G.seed, G.threads, walk_coupled});
    std::map<std::string, std::size_t> counts;
    std::vector<double> mean_end(static_cast<std::size_t>(d), 0.0);
    double mean_len = 0.0;
    std::ostringstream csv;
    csv << "index,stop,length";
    for (int i = 0; i < d; ++i) csv << ",x" << i + 1;
    csv << '\n';
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const auto& t = ts[k];
      ++counts[t.stop_name];
      mean_len += static_cast<double>(t.length()) / static_cast<double>(ts.size());
      csv << k << ',' << t.stop_name << ',' << t.length();
      for (int i = 0; i < d; ++i) {
        mean_end[static_cast<std::size_t>(i)] += static_cast<double>(t.end[i]) / static_cast<double>(ts.size());
        csv << ',' << t.end[i];
      }
      csv << '\n';
    }
    Result r;
    r.payload = {{"n", walk_n}, {"horizon", stop.horizon()}, {"stops", counts}, {"mean_end", mean_end},
                 {"mean_length", mean_len}, {"coupled", walk_coupled}};
    if (counts.count("horizon")) {
      r.warnings.push_back(std::to_string(counts["horizon"]) + " walks censored at the horizon");
    }
    r.tables.emplace_back("csv", csv.str());
    if (!walk_dump.empty()) {
      std::ofstream f(walk_dump);
      if (!f) throw IoError("cannot open for writing: " + walk_dump);
      for (const auto& t : ts) {
        nlohmann::json line = {{"start", site_json(t.start, d)},
                               {"steps", t.steps},
                               {"annotations", {{"stop", t.stop_name}, {"length", t.length()}}}};
        if (t.coupled) line["annotations"]["epsilon"] = t.epsilon;
        f << line.dump() << '\n';
      }
      if (!f) throw IoError("write failed: " + walk_dump);
    }
    return r;
  };
  report_override[walk_sim] = "";

  // oracle ----------------------------------------------------------------
  auto* oracle_cmd = app.add_subcommand("oracle", "exact exit distributions")->require_subcommand(1);
  EnvOptions oracle_env;
  std::string oracle_start = "0,0";
  std::string oracle_stops;
  std::string oracle_box;
  std::size_t oracle_cap = kDefaultStateCap;
  std::string oracle_out;
  auto* oracle_exit = oracle_cmd->add_subcommand("exit", "exit distribution of a killed walk");
  oracle_env.add(oracle_exit, true);
  oracle_exit->add_option("--start", oracle_start, "start site");
  oracle_exit->add_option("--stops", oracle_stops, "spatial stop conditions");
  oracle_exit->add_option("--box", oracle_box, "box as l:L:L_front:L_tilde[:anchor]");
  oracle_exit->add_option("--state-cap", oracle_cap, "largest number of interior states");
  oracle_exit->add_option("--out", oracle_out, "report file");
  handlers[oracle_exit] = [&]() {
    const int d = oracle_env.dim();
    if (oracle_stops.empty() == oracle_box.empty()) throw InvalidArgument("give exactly one of --stops and --box");
    const StopSpec spec = parse_stops(oracle_box.empty() ? oracle_stops + ";horizon:1" : "box:" + oracle_box + ";horizon:1", d);
    std::vector<StopCondition> stops;
    for (const auto& c : spec.conditions)
      if (c.kind != StopCondition::Kind::horizon) stops.push_back(c);
    const Environment env = oracle_env.single(G.seed, std::int64_t{1} << 20);
    const auto problem = make_problem(env, parse_site(oracle_start, d), stops, oracle_cap);
    const auto dist = exit_distribution_exact(problem);
    Result r;
    nlohmann::json classes = nlohmann::json::object();
    for (std::size_t i = 0; i < dist.class_names.size(); ++i) classes[dist.class_names[i]] = dist.class_probability[i];
    r.payload = {{"states", problem.states()}, {"quotient", problem.quotient}, {"classes", classes},
                 {"residual", dist.residual}};
    std::ostringstream csv;
    csv.precision(17);
    csv << "class";
    for (int i = 0; i < d; ++i) csv << ",x" << i + 1;
    csv << ",probability\n";
    for (std::size_t b = 0; b < problem.boundary.size(); ++b) {
      csv << problem.class_names[static_cast<std::size_t>(problem.boundary_class[b])];
      for (int i = 0; i < d; ++i) csv << ',' << problem.boundary[b][i];
      csv << ',' << dist.site_probability[b] << '\n';
    }
    r.tables.emplace_back("csv", csv.str());
    return r;
  };

  // check -----------------------------------------------------------------
  auto* check_cmd = app.add_subcommand("check", "ballisticity conditions")->require_subcommand(1);
  EnvOptions ec_env;
  EcConfig ec;
  std::string ec_l = "1,0";
  std::vector<double> ec_L{10}, ec_Lt{20}, ec_a{0.5};
  std::string ec_method = "exact";
  std::size_t ec_walks = 10000;
  auto* check_ec = check_cmd->add_subcommand("ec", "effective criterion over a parameter grid");
  ec_env.add(check_ec, false);
  check_ec->add_option("--l", ec_l, "integer direction");
  check_ec->add_option("--Lgrid", ec_L, "L values")->delimiter(',');
  check_ec->add_option("--Ltildegrid", ec_Lt, "L~ values")->delimiter(',');
  check_ec->add_option("--agrid", ec_a, "moment exponents")->delimiter(',');
  check_ec->add_option("--Cprime", ec.c_prime, "constant C'");
  check_ec->add_option("--Cdoubleprime", ec.c_dprime, "constant C'' (negative: 3 sqrt(d))");
  check_ec->add_option("--m-env", ec.m_env, "environments");
  check_ec->add_option("--level", ec.level, "confidence level");
  add_method(check_ec, ec_method, ec_walks);
  handlers[check_ec] = [&]() {
    ec.l = parse_site(ec_l, ec_env.d);
    ec.L_grid = ec_L;
    ec.Lt_grid = ec_Lt;
    ec.a_grid = ec_a;
    ec.ensemble = ec_env.ensemble(G.seed);
    ec.method = method_spec(ec_method, ec_walks);
    ec.seed = G.seed;
    ec.threads = G.threads;
    return from_condition(effective_criterion_check(ec));
  };

  EnvOptions pj_env;
  PjConfig pj;
  std::string pj_l = "1,0";
  std::string pj_method = "exact";
  std::size_t pj_walks = 10000;
  auto* check_pj = check_cmd->add_subcommand("pj", "polynomial condition");
  pj_env.add(check_pj, false);
  check_pj->add_option("--l", pj_l, "integer direction");
  check_pj->add_option("--N0", pj.N0, "scale N0");
  check_pj->add_option("--J", pj.J, "exponent J");
  check_pj->add_option("--m-env", pj.m_env, "environments");
  check_pj->add_option("--max-starts", pj.max_starts, "start sites of the sup");
  check_pj->add_option("--level", pj.level, "confidence level");
  add_method(check_pj, pj_method, pj_walks);
  handlers[check_pj] = [&]() {
    pj.l = parse_site(pj_l, pj_env.d);
    pj.shape = G.preset == "mini" ? PolyBoxShape::mini() : PolyBoxShape::paper();
    pj.ensemble = pj_env.ensemble(G.seed);
    pj.method = method_spec(pj_method, pj_walks);
    pj.seed = G.seed;
    pj.threads = G.threads;
    return from_condition(polynomial_condition_check(pj));
  };

  EnvOptions tg_env;
  TgammaConfig tg;
  std::string tg_l = "1,0";
  std::vector<double> tg_levels{4, 6, 8, 10};
  std::vector<double> tg_jref;
  auto* check_tg = check_cmd->add_subcommand("tgamma", "stretched-exponential slab exit decay");
  tg_env.add(check_tg, false);
  check_tg->add_option("--l", tg_l, "integer direction");
  check_tg->add_option("--b", tg.b, "aspect ratio b");
  check_tg->add_option("--levels", tg_levels, "slab half-widths L")->delimiter(',');
  check_tg->add_option("--n-walks", tg.n_walks, "walks per level");
  check_tg->add_option("--m-env", tg.m_env, "environments (0: fresh per walk)");
  check_tg->add_flag("--exact", tg.exact, "exact solve (deterministic environments)");
  check_tg->add_option("--horizon", tg.horizon, "safety horizon");
  check_tg->add_option("--jref", tg_jref, "reference exponents")->delimiter(',');
  handlers[check_tg] = [&]() {
    tg.l = parse_site(tg_l, tg_env.d);
    tg.levels = tg_levels;
    tg.j_reference = tg_jref;
    tg.ensemble = tg_env.ensemble(G.seed);
    tg.seed = G.seed;
    tg.threads = G.threads;
    return from_condition(tgamma_decay_fit(tg));
  };

  // renorm ----------------------------------------------------------------
  auto* renorm_cmd = app.add_subcommand("renorm", "multiscale renormalization")->require_subcommand(1);
  std::string ladder_kind = "poly";
  int ladder_d = 2;
  double ladder_kappa = 0.05;
  double ec_L0 = 10, ec_Lt0 = 20, ec_u0 = 0.5, ec_a0 = 0.5;
  std::int64_t poly_N0 = 11;
  int ladder_k = 2;
  auto* renorm_ladder = renorm_cmd->add_subcommand("ladder", "scale ladders");
  renorm_ladder->add_option("--kind", ladder_kind, "ec | poly")->check(CLI::IsMember({"ec", "poly"}));
  renorm_ladder->add_option("--d", ladder_d, "dimension")->check(CLI::Range(2, kMaxDim));
  renorm_ladder->add_option("--kappa", ladder_kappa, "ellipticity constant");
  renorm_ladder->add_option("--L0", ec_L0, "EC: L0");
  renorm_ladder->add_option("--Lt0", ec_Lt0, "EC: L~0");
  renorm_ladder->add_option("--u0", ec_u0, "EC: u0");
  renorm_ladder->add_option("--a0", ec_a0, "EC: a0");
  renorm_ladder->add_option("--N0", poly_N0, "poly: N0");
  renorm_ladder->add_option("--k-max", ladder_k, "levels");
  handlers[renorm_ladder] = [&]() {
    Result r;
    if (ladder_kind == "ec") {
      r.payload = ladder_json(build_ladder_ec(ladder_d, ec_L0, ec_Lt0, ec_u0, ec_a0, ladder_k));
    } else {
      PolyLadderConfig c;
      if (G.preset == "mini") {
        c = PolyLadderConfig::mini(poly_N0, ladder_kappa, ladder_d, ladder_k);
      } else {
        c.N0 = poly_N0;
        c.kappa = ladder_kappa;
        c.d = ladder_d;
        c.k_max = ladder_k;
      }
      const auto ladder = build_ladder_poly(c);
      r.payload = ladder_json(ladder);
      if (!ladder.divisible) r.warnings.push_back("ladder ratios are not divisible by the required divisor");
    }
    return r;
  };

  EnvOptions cls_env;
  std::string cls_l = "1,0";
  std::int64_t cls_N0 = 5;
  int cls_level = 1;
  std::string cls_index;
  std::string cls_method = "exact";
  std::size_t cls_walks = 10000;
  std::size_t cls_starts = 1000;
  auto* renorm_classify = renorm_cmd->add_subcommand("classify", "good/bad classification of one box");
  cls_env.add(renorm_classify, true);
  renorm_classify->add_option("--l", cls_l, "integer direction");
  renorm_classify->add_option("--N0", cls_N0, "scale N0");
  renorm_classify->add_option("--level", cls_level, "level k");
  renorm_classify->add_option("--index", cls_index, "box index (default origin)");
  renorm_classify->add_option("--max-starts", cls_starts, "start sites at level 0 (Monte Carlo)");
  add_method(renorm_classify, cls_method, cls_walks);
  handlers[renorm_classify] = [&]() {
    const int d = cls_env.dim();
    const double kappa = cls_env.file.empty() ? cls_env.kappa : read_snapshot(cls_env.file).kappa();
    PolyLadderConfig c;
    if (G.preset == "mini") {
      c = PolyLadderConfig::mini(cls_N0, kappa, d, std::max(cls_level, 1));
    } else {
      c.N0 = cls_N0;
      c.kappa = kappa;
      c.d = d;
      c.k_max = std::max(cls_level, 1);
    }
    const auto ladder = build_ladder_poly(c);
    const BoxLattice lat(ladder, make_rotation(parse_site(cls_l, d), d));
    const Site index = cls_index.empty() ? Site{} : parse_site(cls_index, d);
    const Environment env = cls_env.file.empty()
                                ? cls_env.bounded(G.seed, dependence_region(lat, cls_level, index))
                                : read_snapshot(cls_env.file);
    ClassifyOptions opt;
    opt.method = method_spec(cls_method, cls_walks);
    opt.max_starts = cls_starts;
    opt.seed = G.seed;
    opt.threads = G.threads;
    const auto maps = classify_boxes(env, lat, cls_level, {index}, opt);
    Result r;
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& m : maps) levels.push_back(goodbad_json(m, d));
    const bool good = maps.back().good(index);
    r.payload = {{"ladder", ladder_json(ladder)}, {"index", site_json(index, d)}, {"good", good}, {"maps", levels}};
    r.verdict = good ? "good" : "bad";
    return r;
  };

  EnvOptions bad_env;
  BadProbabilityConfig bad;
  std::string bad_l = "1,0";
  std::string bad_method = "exact";
  std::size_t bad_walks = 10000;
  auto* renorm_bad = renorm_cmd->add_subcommand("badprob", "probability that a box is bad");
  bad_env.add(renorm_bad, false);
  renorm_bad->add_option("--l", bad_l, "integer direction");
  renorm_bad->add_option("--N0", bad.ladder.N0, "scale N0");
  renorm_bad->add_option("--level", bad.level, "level k");
  renorm_bad->add_option("--m-env", bad.m_env, "environments");
  renorm_bad->add_option("--J", bad.J, "reference exponent J (negative: none)");
  renorm_bad->add_option("--conf", bad.conf, "confidence level");
  add_method(renorm_bad, bad_method, bad_walks);
  handlers[renorm_bad] = [&]() {
    const std::int64_t N0 = bad.ladder.N0;
    if (G.preset == "mini") {
      bad.ladder = PolyLadderConfig::mini(N0, bad_env.kappa, bad_env.d, std::max(bad.level, 1));
    } else {
      bad.ladder.kappa = bad_env.kappa;
      bad.ladder.d = bad_env.d;
      bad.ladder.k_max = std::max(bad.level, 1);
    }
    bad.l = parse_site(bad_l, bad_env.d);
    bad.ensemble = bad_env.ensemble(G.seed);
    bad.classify.method = method_spec(bad_method, bad_walks);
    bad.classify.seed = G.seed;
    bad.seed = G.seed;
    bad.threads = G.threads;
    return from_condition(estimate_bad_probability(bad));
  };

  // regen -----------------------------------------------------------------
  auto* regen_cmd = app.add_subcommand("regen", "approximate regeneration times")->require_subcommand(1);
  EnvOptions rg_env;
  RegenRunConfig rg;
  std::string rg_l = "1,0";
  TailConfig rg_tail;
  auto* regen_stats = regen_cmd->add_subcommand("stats", "tail of tau_1 and the third moment");
  rg_env.add(regen_stats, true);
  regen_stats->add_option("--l", rg_l, "integer direction");
  regen_stats->add_option("--L", rg.regen.L, "forced pattern length");
  regen_stats->add_option("--zeta", rg.regen.zeta, "cone aperture (negative: default)");
  regen_stats->add_option("--window", rg.regen.window, "confirmation window W");
  regen_stats->add_option("--delta", rg.regen.delta, "progress fraction");
  regen_stats->add_option("--drift-floor", rg.regen.drift_floor, "progress per step floor");
  regen_stats->add_option("--n", rg.n_traj, "trajectories");
  regen_stats->add_option("--horizon", rg.horizon, "horizon");
  regen_stats->add_option("--g-ref", rg_tail.g, "mixing rate in the reference exponents");
  regen_stats->add_option("--power", rg_tail.power, "reference polynomial decay");
  handlers[regen_stats] = [&]() {
    const int d = rg_env.dim();
    rg.regen.d = d;
    rg.regen.l = parse_site(rg_l, d);
    rg.seed = G.seed;
    rg.threads = G.threads;
    std::vector<RegenRecord> records;
    if (!rg_env.file.empty()) {
      const Environment env = read_snapshot(rg_env.file);
      rg_tail.kappa = env.kappa();
      records = simulate_regenerations(env, rg);
    } else {
      const EnsembleSpec ens = rg_env.ensemble(G.seed);
      rg_tail.kappa = ens.kappa;
      records = ens.deterministic() ? simulate_regenerations(ens.make(0, Region::cube(d, 1)), rg)
                                    : simulate_regenerations(ens, rg);
    }
    rg_tail.d = d;
    rg_tail.seed = G.seed;
    const TailReport tail = tail_and_moments(records, rg_tail);
    Result r;
    r.payload = tail.to_json();
    r.verdict = tail.verdict;
    r.warnings = tail.warnings;
    r.tables.emplace_back("survival.csv", tail.survival_csv());
    return r;
  };

  EnvOptions sw_env;
  SandwichConfig sw;
  std::string sw_l = "1,0";
  auto* regen_sandwich = regen_cmd->add_subcommand("sandwich", "post-regeneration law against fresh conditioned walks");
  sw_env.add(regen_sandwich, false);
  regen_sandwich->add_option("--l", sw_l, "integer direction");
  regen_sandwich->add_option("--L", sw.regen.L, "forced pattern length");
  regen_sandwich->add_option("--zeta", sw.regen.zeta, "cone aperture (negative: default)");
  regen_sandwich->add_option("--window", sw.regen.window, "confirmation window W");
  regen_sandwich->add_option("--n-samples", sw.n_samples, "samples per batch");
  regen_sandwich->add_option("--n-steps", sw.n_steps, "compare the position after this many steps");
  regen_sandwich->add_option("--level-a", sw.level_a, "passage level");
  regen_sandwich->add_option("--j", sw.j, "use the increments after tau_j");
  regen_sandwich->add_option("--horizon", sw.horizon, "horizon of the post-regeneration walks");
  regen_sandwich->add_option("--g-ref", sw.g, "mixing rate in the slack");
  regen_sandwich->add_option("--permutations", sw.permutations, "KS permutations");
  regen_sandwich->add_option("--max-attempts", sw.max_attempts, "rejection sampling budget");
  handlers[regen_sandwich] = [&]() {
    sw.regen.d = sw_env.d;
    sw.regen.l = parse_site(sw_l, sw_env.d);
    sw.ensemble = sw_env.ensemble(G.seed);
    sw.seed = G.seed;
    sw.threads = G.threads;
    const SandwichReport rep = renewal_sandwich_diagnostic(sw);
    Result r;
    r.payload = rep.to_json();
    r.verdict = rep.pass ? "holds" : "fails";
    r.warnings = rep.warnings;
    return r;
  };

  // clt -------------------------------------------------------------------
  auto* clt_cmd = app.add_subcommand("clt", "velocity, fluctuations and the central limit theorem")->require_subcommand(1);
  EnvOptions clt_env;
  CltConfig clt;
  std::size_t clt_reps = 500;
  std::size_t clt_vwalks = 200;
  auto* clt_check = clt_cmd->add_subcommand("check", "normality and diffusive scaling of S_n");
  clt_env.add(clt_check, true);
  clt_check->add_option("--n-grid", clt.n_grid, "values of n")->delimiter(',');
  clt_check->add_option("--reps", clt_reps, "walks per n");
  clt_check->add_option("--test-level", clt.alpha, "normality test level");
  clt_check->add_option("--velocity-walks", clt_vwalks, "independent walks for the plug-in velocity");
  handlers[clt_check] = [&]() {
    const int d = clt_env.dim();
    const std::int64_t n_max = *std::max_element(clt.n_grid.begin(), clt.n_grid.end());
    require(n_max >= 1, "n grid must be positive");
    const auto vw = annealed_walks(clt_env, G.seed, 2, clt_vwalks, n_max, G.threads);
    EndpointSample ends;
    ends.horizon = n_max;
    for (const auto& t : vw) ends.endpoints.push_back(t.end);
    VelocityConfig vc;
    vc.seed = G.seed;
    const auto v = estimate_velocity({}, ends, d, vc);
    clt.seed = G.seed;
    const auto ts = annealed_walks(clt_env, G.seed, 1, clt_reps, n_max, G.threads);
    const CltReport rep = clt_scaling_check(ts, v.v_hat(), clt, {}, v.ci());
    Result r;
    r.payload = {{"velocity", v.to_json()}, {"clt", rep.to_json()}};
    r.verdict = rep.verdict;
    r.warnings = v.warnings;
    r.warnings.insert(r.warnings.end(), rep.warnings.begin(), rep.warnings.end());
    r.tables.emplace_back("samples.csv", rep.samples_csv());
    return r;
  };

  EnvOptions tr_env;
  TransversalConfig tr;
  std::string tr_l = "1,0";
  std::size_t tr_n = 1000;
  std::int64_t tr_horizon = 5000;
  std::size_t tr_vwalks = 200;
  auto* clt_tr = clt_cmd->add_subcommand("transversal", "transverse fluctuations up to the last visit of level M");
  tr_env.add(clt_tr, true);
  clt_tr->add_option("--l", tr_l, "integer direction");
  clt_tr->add_option("--M", tr.M, "level M");
  clt_tr->add_option("--eta", tr.eta, "threshold factor");
  clt_tr->add_option("--varsigma", tr.varsigma, "threshold exponents")->delimiter(',');
  clt_tr->add_option("--excursion", tr.excursion, "steps above M confirming the last visit");
  clt_tr->add_option("--n", tr_n, "walks");
  clt_tr->add_option("--horizon", tr_horizon, "walk length");
  clt_tr->add_option("--g-ref", tr.g, "mixing rate in the reference window");
  clt_tr->add_option("--velocity-walks", tr_vwalks, "independent walks for the direction estimate");
  handlers[clt_tr] = [&]() {
    const int d = tr_env.dim();
    tr.d = d;
    tr.l = parse_site(tr_l, d);
    tr.kappa = tr_env.file.empty() ? tr_env.kappa : read_snapshot(tr_env.file).kappa();
    const auto vw = annealed_walks(tr_env, G.seed, 2, tr_vwalks, tr_horizon, G.threads);
    EndpointSample ends;
    ends.horizon = tr_horizon;
    for (const auto& t : vw) ends.endpoints.push_back(t.end);
    VelocityConfig vc;
    vc.seed = G.seed;
    const auto v = estimate_velocity({}, ends, d, vc);
    Vec dir = v.v_hat();
    const double nrm = norm2(dir);
    if (nrm == 0.0) throw InvalidArgument("velocity estimate is zero; no direction to project on");
    for (auto& x : dir) x /= nrm;
    const auto ts = annealed_walks(tr_env, G.seed, 1, tr_n, tr_horizon, G.threads);
    const auto rep = transversal_fluctuation_stat(ts, dir, tr);
    Result r;
    r.payload = {{"direction", std::vector<double>(dir.begin(), dir.begin() + d)}, {"transversal", rep.to_json()}};
    r.verdict = rep.verdict;
    r.warnings = rep.warnings;
    r.tables.emplace_back("samples.csv", rep.samples_csv());
    return r;
  };

  EnvOptions at_env;
  AtypicalConfig at;
  std::string at_l = "1,0";
  auto* clt_at = clt_cmd->add_subcommand("atypical", "frequency of environments with a small forward exit probability");
  at_env.add(clt_at, false);
  clt_at->add_option("--l", at_l, "integer direction");
  clt_at->add_option("--M", at.M, "slab half-width M");
  clt_at->add_option("--beta", at.beta, "exponent beta");
  clt_at->add_option("--c", at.c, "constant c");
  clt_at->add_option("--g-ref", at.g, "mixing rate in the reference window");
  clt_at->add_option("--m-env", at.n_env, "environments");
  clt_at->add_option("--transverse", at.transverse, "transverse truncation (negative: 10 M)");
  clt_at->add_option("--state-cap", at.state_cap, "largest exact problem");
  clt_at->add_option("--n-walks", at.n_walks, "Monte Carlo walks per environment");
  handlers[clt_at] = [&]() {
    at.l = parse_site(at_l, at_env.d);
    at.ensemble = at_env.ensemble(G.seed);
    at.seed = G.seed;
    at.threads = G.threads;
    const auto rep = atypical_quenched_frequency(at);
    Result r;
    r.payload = rep.to_json();
    r.verdict = rep.verdict;
    r.warnings = rep.warnings;
    return r;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  const CLI::App* group = app.get_subcommands().front();
  const CLI::App* sub = group->get_subcommands().front();
  ReportEnvelope env;
  env.command = group->get_name() + " " + sub->get_name();
  env.seed = G.seed;
  resolve(&app, "global.", env.config, env.runtime);
  resolve(sub, group->get_name() + "." + sub->get_name() + ".", env.config, env.runtime);
  env.config["command"] = env.command;

  Result res;
  try {
    res = handlers.at(sub)();
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kValidation;
  } catch (const InvalidArgument& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  env.payload = std::move(res.payload);
  env.verdict = res.verdict;
  env.warnings = std::move(res.warnings);
  if (G.preset == "mini") env.warnings.push_back("mini scale preset: structurally identical but far below paper scales");
  env.created = timestamp();

  const std::string stem = group->get_name() + "_" + sub->get_name();
  std::filesystem::path report = std::filesystem::path(G.out_dir) / (stem + ".json");
  std::string explicit_out;
  if (sub == walk_sim) explicit_out = walk_out;
  if (sub == oracle_exit) explicit_out = oracle_out;
  if (!explicit_out.empty()) report = explicit_out;
  try {
    if (report.has_parent_path()) std::filesystem::create_directories(report.parent_path());
    std::ofstream f(report);
    if (!f) throw IoError("cannot open for writing: " + report.string());
    f << env.to_json().dump(2) << '\n';
    for (const auto& [suffix, text] : res.tables) {
      const auto path = report.parent_path() / (report.stem().string() + (suffix == "csv" ? ".csv" : "_" + suffix));
      std::ofstream t(path);
      if (!t) throw IoError("cannot open for writing: " + path.string());
      t << text;
    }
    if (!f) throw IoError("write failed: " + report.string());
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kValidation;
  }
  out << env.command << ": verdict " << env.verdict << ", report " << report.string() << '\n';
  for (const auto& w : env.warnings) out << "warning: " << w << '\n';
  if (G.strict && env.verdict == "inconclusive") return kInconclusive;
  return kOk;
}

}  // namespace rwre::cli
