#pragma once

// Adaptive relaxed Kacanov loop: at every step the largest of the iteration,
// relaxation and discretisation indicators decides between another Kacanov
// step, widening the relaxation interval, and Doerfler refinement.

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "plfem/errors.hpp"
#include "plfem/estimate.hpp"
#include "plfem/fespace.hpp"
#include "plfem/mesh.hpp"
#include "plfem/nfunc.hpp"
#include "plfem/solver.hpp"

namespace plfem {

enum class Action { Kacanov, RelaxMinus, RelaxPlus, Refine };

inline const char* to_string(Action a) {
  switch (a) {
    case Action::Kacanov: return "KACANOV";
    case Action::RelaxMinus: return "RELAX_MINUS";
    case Action::RelaxPlus: return "RELAX_PLUS";
    case Action::Refine: return "REFINE";
  }
  return "?";
}

inline Action parse_action(const std::string& s) {
  if (s == "KACANOV") return Action::Kacanov;
  if (s == "RELAX_MINUS") return Action::RelaxMinus;
  if (s == "RELAX_PLUS") return Action::RelaxPlus;
  if (s == "REFINE") return Action::Refine;
  throw std::invalid_argument("unknown run-log event '" + s + "'");
}

/// How the reference solution is obtained from the final state.
struct ReferenceRecipe {
  double eps_minus_factor = 0.01;
  double eps_plus_factor = 100.0;
  int iterations = 50;
  int generations = 2;  // uniform bisection generations on top of the final mesh
};

enum class IterationEstimator { DualityGap, EnergyDecrease };

inline const char* to_string(IterationEstimator e) {
  return e == IterationEstimator::DualityGap ? "duality_gap" : "energy_decrease";
}

/// Interval on which the Kacanov weight t^(p-2) stays within [1e-2, 1e2]:
/// eps_minus/plus = 100^(-/+ 1/|p-2|); (0.5, 2) at p = 2 where it is inert.
inline RelaxationInterval default_initial_interval(double p) {
  if (std::abs(p - 2.0) < 1e-12) return {0.5, 2.0};
  const double e = 2.0 / std::abs(p - 2.0);
  return {std::pow(10.0, -e), std::pow(10.0, e)};
}

struct AdaptConfig {
  double p = 2.0;
  ElementKind element = ElementKind::Lagrange;
  double theta = 0.3;
  std::size_t max_ndof = 50000;
  std::optional<SpaceEstimator> mode;  // default: residual for p <= 2, dual jump otherwise
  IterationEstimator iteration_estimator = IterationEstimator::DualityGap;
  std::optional<RelaxationInterval> initial_eps;  // default: default_initial_interval(p)
  ReferenceRecipe reference;
  int initial_refinements = 3;  // uniform generations applied to the problem mesh
  std::size_t max_events = 10000;

  RelaxationInterval start_interval() const { return initial_eps ? *initial_eps : default_initial_interval(p); }

  SpaceEstimator estimator() const {
    if (mode) return *mode;
    return p <= 2.0 ? SpaceEstimator::Residual : SpaceEstimator::DualJump;
  }

  void validate() const {
    if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("config: p must be a finite number > 1");
    if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("config: theta must lie in (0, 1]");
    if (initial_refinements < 0) throw std::invalid_argument("config: initial_refinements must be >= 0");
    if (max_events == 0) throw std::invalid_argument("config: max_events must be positive");
    const auto& r = reference;
    if (!(r.eps_minus_factor > 0.0 && r.eps_minus_factor <= 1.0) || !(r.eps_plus_factor >= 1.0) ||
        r.iterations < 0 || r.generations < 0)
      throw std::invalid_argument("config: invalid reference recipe");
  }
};

/// Domain mesh, constant load and Dirichlet data.
struct Problem {
  MeshPtr mesh;
  double f = 0.0;
  PointFunction g;
};

/// L-shaped domain (-1,1)^2 \ [0,1)x(0,1), f = 2, u = 1 - |y| on the boundary.
inline Problem lshape_problem() {
  return {lshape_mesh(), 2.0, [](const Vec2& x) { return 1.0 - std::abs(x.y); }};
}

struct RunEvent {
  Action action = Action::Kacanov;
  std::size_t ndof = 0;
  double eps_minus = 0.0;
  double eps_plus = kInf;
  double eta_iter2 = 0.0;
  double eta_minus2 = 0.0;
  double eta_plus2 = 0.0;
  double eta_space2 = 0.0;
  double energy = 0.0;
  int iterate = -1;                      // index into AdaptResult::iterates
  double marked_indicator_sum = 0.0;     // REFINE only
  std::size_t marked_count = 0;          // REFINE only
  std::optional<ErrorReport> report;     // filled post hoc
};

/// Action of the strict maximum, ties resolved as iter > minus > plus > refine.
inline Action decide(double iter2, double minus2, double plus2, double space2) {
  Action a = Action::Kacanov;
  double best = iter2;
  if (minus2 > best) { a = Action::RelaxMinus; best = minus2; }
  if (plus2 > best) { a = Action::RelaxPlus; best = plus2; }
  if (space2 > best) a = Action::Refine;
  return a;
}

struct RunLog {
  std::vector<RunEvent> events;
  IterationEstimator iteration_estimator = IterationEstimator::DualityGap;

  void write(std::ostream& os) const {
    const auto old = os.precision(17);
    os << "# eta_iter2: " << to_string(iteration_estimator) << '\n';
    os << "# event ndof eps_minus eps_plus eta_iter2 eta_minus2 eta_plus2 eta_space2 energy\n";
    for (const auto& e : events) {
      os << to_string(e.action) << ' ' << e.ndof << ' ' << e.eps_minus << ' ' << e.eps_plus << ' ' << e.eta_iter2
         << ' ' << e.eta_minus2 << ' ' << e.eta_plus2 << ' ' << e.eta_space2 << ' ' << e.energy << '\n';
    }
    os.precision(old);
  }

  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  static RunLog read(std::istream& is) {
    RunLog log;
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind("# eta_iter2: ", 0) == 0) {
        log.iteration_estimator = line.substr(13) == "energy_decrease" ? IterationEstimator::EnergyDecrease
                                                                        : IterationEstimator::DualityGap;
        continue;
      }
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string name, vals[7];
      RunEvent e;
      ls >> name >> e.ndof;
      for (auto& v : vals) ls >> v;
      if (!ls) throw std::runtime_error("run log: malformed line '" + line + "'");
      e.action = parse_action(name);
      double* dst[7] = {&e.eps_minus, &e.eps_plus, &e.eta_iter2, &e.eta_minus2, &e.eta_plus2, &e.eta_space2, &e.energy};
      for (int k = 0; k < 7; ++k) *dst[k] = std::stod(vals[k]);
      log.events.push_back(e);
    }
    return log;
  }
};

struct StoredIterate {
  DiscreteField u;
  bool solved = true;  // false for iterates produced by transfer onto a refined mesh
};

struct AdaptResult {
  RunLog log;
  KacanovState final_state;
  std::vector<MeshPtr> meshes;
  std::vector<StoredIterate> iterates;
};

inline IndicatorBreakdown compute_indicators(const KacanovState& s, const NFunction& nf, double f,
                                             SpaceEstimator mode,
                                             IterationEstimator it = IterationEstimator::DualityGap) {
  IndicatorBreakdown b;
  b.eta_iter2 = it == IterationEstimator::DualityGap ? eta_iter_duality(s, nf, f) : eta_iter(s);
  std::tie(b.eta_minus2, b.eta_plus2) = eta_relax(s, nf);
  auto sp = eta_space(s, nf, f, mode);
  b.eta_space2 = sp.total;
  b.eta_space_local = std::move(sp.local);
  return b;
}

namespace detail {

inline void restart_history(KacanovState& s, const NFunction& nf, double f) {
  s.energy_history.assign(1, energy(s.u, RelaxedNFunction(nf, s.eps), f));
}

/// Flux of the coarse state, constant on the children of each triangle.
inline void transfer_flux(KacanovState& s, const MeshPtr& fine) {
  if (!s.sigma) return;
  const auto anc = ancestor_map(fine, s.sigma->mesh);
  P0Field<Vec2> sigma(fine);
  for (std::size_t t = 0; t < fine->num_triangles(); ++t) sigma[t] = (*s.sigma)[anc[t]];
  s.sigma = std::move(sigma);
  s.sigma_equilibrated = false;
}

}  // namespace detail

inline AdaptResult adaptive_solve(const AdaptConfig& cfg, const Problem& problem) {
  cfg.validate();
  const NFunction nf(cfg.p);
  const SpaceEstimator mode = cfg.estimator();
  MeshPtr mesh = uniform_refine(problem.mesh, cfg.initial_refinements);
  FeSpacePtr space = FeSpace::create(mesh, cfg.element);
  SpdSolver solver;

  AdaptResult res;
  res.log.iteration_estimator = cfg.iteration_estimator;
  KacanovState state = initial_state(space, problem.g, problem.f, nf, cfg.start_interval(), &solver);
  res.meshes.push_back(mesh);
  res.iterates.push_back({state.u, true});

  for (;;) {
    if (res.log.events.size() >= cfg.max_events)
      throw LoopGuardError("adaptive_solve: event limit reached without exceeding max_ndof");
    const IndicatorBreakdown ind = compute_indicators(state, nf, problem.f, mode, cfg.iteration_estimator);
    RunEvent ev;
    ev.ndof = space->num_free_dofs();
    ev.eps_minus = state.eps.lower();
    ev.eps_plus = state.eps.upper();
    ev.eta_iter2 = ind.eta_iter2;
    ev.eta_minus2 = ind.eta_minus2;
    ev.eta_plus2 = ind.eta_plus2;
    ev.eta_space2 = ind.eta_space2;
    ev.energy = state.energy_history.back();
    ev.iterate = static_cast<int>(res.iterates.size()) - 1;
    ev.action = decide(ind.eta_iter2, ind.eta_minus2, ind.eta_plus2, ind.eta_space2);

    switch (ev.action) {
      case Action::Kacanov:
        state = kacanov_step(state, problem.f, nf, &solver);
        res.iterates.push_back({state.u, true});
        break;
      case Action::RelaxMinus:
        state.eps = RelaxationInterval(0.5 * state.eps.lower(), state.eps.upper());
        detail::restart_history(state, nf, problem.f);
        break;
      case Action::RelaxPlus:
        state.eps = RelaxationInterval(state.eps.lower(), 2.0 * state.eps.upper());
        detail::restart_history(state, nf, problem.f);
        break;
      case Action::Refine: {
        const auto marked = doerfler_mark(ind.eta_space_local, cfg.theta);
        for (int t : marked) ev.marked_indicator_sum += ind.eta_space_local[t];
        ev.marked_count = marked.size();
        mesh = bisect(mesh, marked);
        space = FeSpace::create(mesh, cfg.element);
        state.u = transfer_iterate(state.u, space, &problem.g);
        detail::transfer_flux(state, mesh);
        detail::restart_history(state, nf, problem.f);
        res.meshes.push_back(mesh);
        res.iterates.push_back({state.u, false});
        break;
      }
    }
    res.log.events.push_back(std::move(ev));
    if (space->num_free_dofs() > cfg.max_ndof) break;
  }
  res.final_state = std::move(state);
  return res;
}

/// Reference solution: the final iterate carried to a uniform refinement of
/// the final mesh and re-minimised with a widened relaxation interval.
struct Reference {
  KacanovState state;
  double transferred_energy = 0.0;  // J_ref of the transferred final iterate
};

inline Reference compute_reference(const KacanovState& final_state, const AdaptConfig& cfg, const Problem& problem) {
  cfg.validate();
  const NFunction nf(cfg.p);
  const auto& r = cfg.reference;
  const MeshPtr fine = uniform_refine(final_state.u.mesh(), r.generations);
  const FeSpacePtr space = FeSpace::create(fine, final_state.u.space()->kind());
  Reference ref;
  ref.state.u = transfer_iterate(final_state.u, space, &problem.g);
  ref.state.sigma = final_state.sigma;
  detail::transfer_flux(ref.state, fine);
  ref.state.eps = RelaxationInterval(final_state.eps.lower() * r.eps_minus_factor,
                                     final_state.eps.upper() * r.eps_plus_factor);
  detail::restart_history(ref.state, nf, problem.f);
  ref.transferred_energy = ref.state.energy_history.back();
  SpdSolver solver;
  for (int k = 0; k < r.iterations; ++k) ref.state = kacanov_step(ref.state, problem.f, nf, &solver);
  return ref;
}

/// Error of every stored iterate against the reference plus the reports of
/// the REFINE events.
struct ErrorHistory {
  std::vector<ErrorReport> iterates;  // parallel to AdaptResult::iterates
};

inline ErrorHistory attach_reports(AdaptResult& res, const DiscreteField& u_ref, const AdaptConfig& cfg,
                                   const Problem& problem) {
  const NFunction nf(cfg.p);
  // ancestor maps onto every mesh of the chain, composed once from the top
  std::unordered_map<const Mesh*, std::vector<int>> anc;
  {
    std::unordered_map<const Mesh*, bool> wanted;
    for (const auto& it : res.iterates) wanted[it.u.mesh().get()] = true;
    std::vector<int> map(u_ref.mesh()->num_triangles());
    for (std::size_t t = 0; t < map.size(); ++t) map[t] = static_cast<int>(t);
    std::size_t found = 0;
    for (const Mesh* cur = u_ref.mesh().get(); cur && found < wanted.size(); cur = cur->parent_mesh().get()) {
      if (wanted.count(cur)) {
        anc[cur] = map;
        ++found;
      }
      if (cur->parent_mesh())
        for (int& t : map) t = cur->parent(t);
    }
    if (found != wanted.size()) throw NotNestedError("attach_reports: reference mesh does not refine the run meshes");
  }
  ErrorHistory hist;
  hist.iterates.reserve(res.iterates.size());
  for (const auto& it : res.iterates) {
    const auto& a = anc.at(it.u.mesh().get());
    ErrorReport rep;
    rep.ndof = it.u.space()->num_free_dofs();
    std::tie(rep.abs_error2, rep.rel_error2) = error_f_distance(u_ref, it.u, nf, a);
    rep.best_p0_error2 = best_p0_error(u_ref, it.u.mesh(), nf, a);
    rep.osc2 = osc2(it.u, nf, problem.f).total;
    hist.iterates.push_back(rep);
  }
  for (auto& ev : res.log.events)
    if (ev.action == Action::Refine) ev.report = hist.iterates.at(static_cast<std::size_t>(ev.iterate));
  return hist;
}

}  // namespace plfem
