#include "rwre/oracle.hpp"

#include <cmath>
#include <deque>
#include <functional>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace rwre {

int AbsorptionProblem::interior_id(const Site& x) const {
  const auto it = interior_index.find(x);
  return it == interior_index.end() ? -1 : it->second;
}

int AbsorptionProblem::boundary_id(const Site& x) const {
  const auto it = boundary_index.find(x);
  return it == boundary_index.end() ? -1 : it->second;
}

int AbsorptionProblem::class_id(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return static_cast<int>(i);
  throw InvalidArgument("unknown exit class '" + name + "'");
}

namespace {

// Axis along which every stop depends on one coordinate only, or -1.
int quotient_axis(const Environment& env, const std::vector<StopCondition>& stops) {
  if (env.bounded() || !std::holds_alternative<ConstantSource>(env.source())) return -1;
  int axis = -1;
  for (const auto& s : stops) {
    if (s.kind != StopCondition::Kind::level_up && s.kind != StopCondition::Kind::level_down &&
        s.kind != StopCondition::Kind::thin_slab) {
      return -1;
    }
    int nz = -1;
    for (int i = 0; i < env.dim(); ++i) {
      if (s.u[i] != 0.0) {
        if (nz >= 0) return -1;
        nz = i;
      }
    }
    if (nz < 0 || (axis >= 0 && nz != axis)) return -1;
    axis = nz;
  }
  return axis;
}

struct Builder {
  const Environment& env;
  std::function<int(const Site&)> classify;  // -1 when interior
  std::function<Site(const Site&)> canon;
  std::size_t cap;
  AbsorptionProblem p;

  int add_interior(const Site& x, std::deque<Site>* queue) {
    const auto [it, inserted] = p.interior_index.emplace(x, static_cast<int>(p.interior.size()));
    if (inserted) {
      if (p.interior.size() >= cap) {
        throw CapacityExceeded("absorption problem exceeds state cap of " + std::to_string(cap));
      }
      p.interior.push_back(x);
      p.to_interior.emplace_back();
      p.to_boundary.emplace_back();
      if (queue) queue->push_back(x);
    }
    return it->second;
  }

  int add_boundary(const Site& x, int cls) {
    const auto [it, inserted] = p.boundary_index.emplace(x, static_cast<int>(p.boundary.size()));
    if (inserted) {
      p.boundary.push_back(x);
      p.boundary_class.push_back(cls);
    }
    return it->second;
  }

  void expand(int id, std::deque<Site>* queue) {
    const Site x = p.interior[static_cast<std::size_t>(id)];
    const TransitionVector prob = env.at(x);
    for (int k = 0; k < 2 * env.dim(); ++k) {
      const Site y = canon(step(x, k));
      const int cls = classify(y);
      if (cls >= 0) {
        const int b = add_boundary(y, cls);
        p.to_boundary[static_cast<std::size_t>(id)].emplace_back(b, prob[k]);
      } else {
        const int j = add_interior(y, queue);
        p.to_interior[static_cast<std::size_t>(id)].emplace_back(j, prob[k]);
      }
    }
  }

  void bfs(const Site& start) {
    p.start = start;
    if (classify(start) >= 0) {
      add_boundary(start, classify(start));
      return;
    }
    std::deque<Site> queue;
    add_interior(start, &queue);
    while (!queue.empty()) {
      const Site x = queue.front();
      queue.pop_front();
      expand(p.interior_index.at(x), &queue);
    }
  }
};

}  // namespace

AbsorptionProblem make_problem(const Environment& env, const Site& start, const std::vector<StopCondition>& stops,
                               std::size_t cap) {
  for (const auto& s : stops) {
    if (s.kind == StopCondition::Kind::horizon) throw InvalidArgument("absorption problems take spatial stops only");
  }
  require(!stops.empty(), "absorption problem needs at least one stop");
  const int axis = quotient_axis(env, stops);
  Builder b{env,
            [&stops](const Site& x) {
              for (std::size_t i = 0; i < stops.size(); ++i)
                if (stops[i].fires(x, 0)) return static_cast<int>(i);
              return -1;
            },
            [axis](const Site& x) {
              if (axis < 0) return x;
              Site y{};
              y[axis] = x[axis];
              return y;
            },
            cap,
            {}};
  b.p.d = env.dim();
  b.p.quotient = axis >= 0;
  for (const auto& s : stops) b.p.class_names.push_back(s.name);
  b.bfs(b.canon(start));
  return std::move(b.p);
}

AbsorptionProblem make_box_problem(const Environment& env, const BoxSpec& box, const Site& start, std::size_t cap) {
  Builder b{env,
            [&box](const Site& x) {
              if (box.contains(x)) return -1;
              return box.frontal_if_boundary(x) ? 0 : 1;
            },
            [](const Site& x) { return x; },
            cap,
            {}};
  b.p.d = env.dim();
  b.p.class_names = {"frontal", "other_boundary"};
  b.bfs(start);
  return std::move(b.p);
}

AbsorptionProblem make_box_problem_all(const Environment& env, const BoxSpec& box, std::size_t cap) {
  Builder b{env,
            [&box](const Site& x) {
              if (box.contains(x)) return -1;
              return box.frontal_if_boundary(x) ? 0 : 1;
            },
            [](const Site& x) { return x; },
            cap,
            {}};
  b.p.d = env.dim();
  b.p.class_names = {"frontal", "other_boundary"};
  for (const auto& x : box.interior_sites()) b.add_interior(x, nullptr);
  if (b.p.interior.empty()) throw GeometryError("box has no lattice sites");
  b.p.start = b.p.interior.front();
  for (std::size_t i = 0; i < b.p.interior.size(); ++i) b.expand(static_cast<int>(i), nullptr);
  return std::move(b.p);
}

AbsorptionProblem make_slab_problem(const Environment& env, const Vec& u, double c_down, double c_up,
                                    const Site& start, std::size_t cap) {
  require(c_down < c_up, "slab needs c_down < c_up");
  return make_problem(env, start, {StopCondition::level_up(u, c_up, "up"), StopCondition::level_down(u, c_down, "down")},
                      cap);
}

double ExitDistribution::of(const std::string& class_name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == class_name) return class_probability[i];
  throw InvalidArgument("unknown exit class '" + class_name + "'");
}

struct AbsorptionSolver::Impl {
  using SpMat = Eigen::SparseMatrix<double>;
  SpMat a;
  SpMat at;
  SpMat b;  // interior x boundary
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  mutable std::unique_ptr<Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>> lut;
};

AbsorptionSolver::AbsorptionSolver(const AbsorptionProblem& p) : problem_(&p), impl_(std::make_unique<Impl>()) {
  const auto n = static_cast<Eigen::Index>(p.interior.size());
  const auto m = static_cast<Eigen::Index>(p.boundary.size());
  std::vector<Eigen::Triplet<double>> ta;
  std::vector<Eigen::Triplet<double>> tb;
  for (Eigen::Index i = 0; i < n; ++i) {
    ta.emplace_back(i, i, 1.0);
    for (const auto& [j, w] : p.to_interior[static_cast<std::size_t>(i)]) ta.emplace_back(i, j, -w);
    for (const auto& [j, w] : p.to_boundary[static_cast<std::size_t>(i)]) tb.emplace_back(i, j, w);
  }
  impl_->a.resize(n, n);
  impl_->a.setFromTriplets(ta.begin(), ta.end());
  impl_->b.resize(n, m);
  impl_->b.setFromTriplets(tb.begin(), tb.end());
  if (n > 0) {
    impl_->lu.compute(impl_->a);
    if (impl_->lu.info() != Eigen::Success) {
      throw Error("absorption system is singular (corrupted environment?)");
    }
  }
}

AbsorptionSolver::~AbsorptionSolver() = default;
AbsorptionSolver::AbsorptionSolver(AbsorptionSolver&&) noexcept = default;

namespace {

void check_residual(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
  if (a.rows() == 0) return;
  const double r = (a * x - b).lpNorm<Eigen::Infinity>();
  if (!(r <= 1e-10)) throw Error("absorption solve residual too large: " + std::to_string(r));
}

}  // namespace

std::vector<double> AbsorptionSolver::class_probabilities(int class_id) const {
  const auto& p = *problem_;
  const auto n = static_cast<Eigen::Index>(p.interior.size());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (const auto& [j, w] : p.to_boundary[static_cast<std::size_t>(i)])
      if (p.boundary_class[static_cast<std::size_t>(j)] == class_id) rhs[i] += w;
  if (n == 0) return {};
  Eigen::VectorXd h = impl_->lu.solve(rhs);
  check_residual(impl_->a, h, rhs);
  return {h.data(), h.data() + n};
}

ExitDistribution AbsorptionSolver::from_start() const {
  const auto& p = *problem_;
  ExitDistribution out;
  out.class_names = p.class_names;
  out.class_probability.assign(p.class_names.size(), 0.0);
  out.site_probability.assign(p.boundary.size(), 0.0);
  const int s = p.interior_id(p.start);
  if (s < 0) {
    const int b = p.boundary_id(p.start);
    require(b >= 0, "start site is neither interior nor boundary");
    out.site_probability[static_cast<std::size_t>(b)] = 1.0;
    out.class_probability[static_cast<std::size_t>(p.boundary_class[static_cast<std::size_t>(b)])] = 1.0;
    return out;
  }
  const auto n = static_cast<Eigen::Index>(p.interior.size());
  if (!impl_->lut) {
    impl_->at = impl_->a.transpose();
    impl_->lut = std::make_unique<Eigen::SparseLU<Impl::SpMat, Eigen::COLAMDOrdering<int>>>();
    impl_->lut->compute(impl_->at);
    if (impl_->lut->info() != Eigen::Success) throw Error("absorption system is singular");
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e[s] = 1.0;
  // Row s of the Green's function: expected visits to each interior state.
  Eigen::VectorXd g = impl_->lut->solve(e);
  check_residual(impl_->at, g, e);
  Eigen::VectorXd q = impl_->b.transpose() * g;
  for (std::size_t j = 0; j < p.boundary.size(); ++j) {
    out.site_probability[j] = q[static_cast<Eigen::Index>(j)];
    out.class_probability[static_cast<std::size_t>(p.boundary_class[j])] += q[static_cast<Eigen::Index>(j)];
  }
  double total = 0.0;
  for (double c : out.class_probability) total += c;
  out.residual = std::abs(total - 1.0);
  return out;
}

ExitDistribution exit_distribution_exact(const AbsorptionProblem& p) {
  AbsorptionSolver solver(p);
  auto out = solver.from_start();
  if (!(out.residual <= 1e-10)) {
    throw Error("exit distribution does not sum to one (residual " + std::to_string(out.residual) + ")");
  }
  return out;
}

double lazy_gr_oracle(double p_up, double p_down, std::int64_t a, std::int64_t b) {
  require(p_up > 0.0 && p_down > 0.0, "lazy_gr_oracle needs positive step probabilities");
  require(a >= 1 && b >= 1, "lazy_gr_oracle needs a, b >= 1");
  const double lr = std::log(p_down / p_up);
  const auto ab = static_cast<double>(a + b);
  if (std::abs(lr) < 1e-14) return static_cast<double>(b) / ab;
  return std::expm1(static_cast<double>(b) * lr) / std::expm1(ab * lr);
}

PathLaws coupled_law_exact(const Environment& env, const Site& x0, int n) {
  if (n < 0 || n > 4) throw InvalidArgument("coupled_law_exact supports 0 <= n <= 4");
  const int d = env.dim();
  const double kappa = env.kappa();
  const double rest = 1.0 - 2.0 * d * kappa;
  PathLaws out;
  std::vector<std::uint8_t> path;

  std::function<void(const Site&, double)> quenched = [&](const Site& x, double w) {
    if (static_cast<int>(path.size()) == n) {
      out.quenched[path] += w;
      return;
    }
    const TransitionVector p = env.at(x);
    for (int k = 0; k < 2 * d; ++k) {
      path.push_back(static_cast<std::uint8_t>(k));
      quenched(step(x, k), w * p[k]);
      path.pop_back();
    }
  };

  // Enumerates epsilon in W = Lambda u {0} and the move, per step.
  std::function<void(const Site&, double)> coupled = [&](const Site& x, double w) {
    if (static_cast<int>(path.size()) == n) {
      out.coupled[path] += w;
      return;
    }
    const TransitionVector p = env.at(x);
    for (int eps = 0; eps <= 2 * d; ++eps) {
      const bool zero = eps == 2 * d;
      const double q_eps = zero ? rest : kappa;
      for (int k = 0; k < 2 * d; ++k) {
        const double move = zero ? (p[k] - kappa) / rest : (k == eps ? 1.0 : 0.0);
        if (move == 0.0) continue;
        path.push_back(static_cast<std::uint8_t>(k));
        coupled(step(x, k), w * q_eps * move);
        path.pop_back();
      }
    }
  };

  quenched(x0, 1.0);
  coupled(x0, 1.0);
  double tv = 0.0;
  for (const auto& [k, v] : out.quenched) {
    const auto it = out.coupled.find(k);
    tv += std::abs(v - (it == out.coupled.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : out.coupled)
    if (!out.quenched.count(k)) tv += std::abs(v);
  out.total_variation = 0.5 * tv;
  return out;
}

}  // namespace rwre
