#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "plfem/adapt.hpp"
#include "plfem/errors.hpp"
#include "support.hpp"

using namespace plfem;
using plfem::testing::dense_weighted_solve;

namespace {

const auto kLag = ElementKind::Lagrange;
const auto kCR = ElementKind::CrouzeixRaviart;

AdaptConfig small_config(double p, ElementKind kind, std::size_t max_ndof = 1500) {
  AdaptConfig c;
  c.p = p;
  c.element = kind;
  c.max_ndof = max_ndof;
  return c;
}

struct Runs {
  AdaptResult p11_cr, p2_lag, p10_cr, p10_lag;
};

const Runs& runs() {
  static const Runs r = [] {
    const auto pr = lshape_problem();
    return Runs{adaptive_solve(small_config(1.1, kCR), pr), adaptive_solve(small_config(2.0, kLag), pr),
                adaptive_solve(small_config(10.0, kCR), pr), adaptive_solve(small_config(10.0, kLag), pr)};
  }();
  return r;
}

std::vector<const AdaptResult*> all_runs() {
  const auto& r = runs();
  return {&r.p11_cr, &r.p2_lag, &r.p10_cr, &r.p10_lag};
}

}  // namespace

TEST(Decide, StrictMaximumWithFixedTieOrder) {
  EXPECT_EQ(decide(1, 0, 0, 0), Action::Kacanov);
  EXPECT_EQ(decide(0, 1, 0, 0), Action::RelaxMinus);
  EXPECT_EQ(decide(0, 0, 1, 0), Action::RelaxPlus);
  EXPECT_EQ(decide(0, 0, 0, 1), Action::Refine);
  EXPECT_EQ(decide(1, 1, 1, 1), Action::Kacanov);
  EXPECT_EQ(decide(0, 1, 1, 1), Action::RelaxMinus);
  EXPECT_EQ(decide(0, 0, 1, 1), Action::RelaxPlus);
  EXPECT_EQ(decide(kInf, 5, 5, 5), Action::Kacanov);
}

TEST(Config, DefaultsAndValidation) {
  AdaptConfig c;
  EXPECT_EQ(c.theta, 0.3);
  EXPECT_EQ(c.max_ndof, 50000u);
  EXPECT_EQ(c.reference.generations, 2);
  EXPECT_EQ(c.reference.iterations, 50);
  EXPECT_EQ(c.reference.eps_minus_factor, 0.01);
  EXPECT_EQ(c.reference.eps_plus_factor, 100.0);
  c.p = 1.5;
  EXPECT_EQ(c.estimator(), SpaceEstimator::Residual);
  c.p = 2.0;
  EXPECT_EQ(c.estimator(), SpaceEstimator::Residual);
  c.p = 3.0;
  EXPECT_EQ(c.estimator(), SpaceEstimator::DualJump);
  EXPECT_NO_THROW(c.validate());
  for (double theta : {0.0, -0.1, 1.5}) {
    AdaptConfig b;
    b.theta = theta;
    EXPECT_THROW(b.validate(), std::invalid_argument);
  }
  AdaptConfig b;
  b.p = 1.0;
  EXPECT_THROW(b.validate(), std::invalid_argument);
  b = AdaptConfig{};
  b.reference.eps_plus_factor = 0.5;
  EXPECT_THROW(b.validate(), std::invalid_argument);

  const auto e2 = default_initial_interval(2.0);
  EXPECT_EQ(e2.lower(), 0.5);
  EXPECT_EQ(e2.upper(), 2.0);
  const auto e10 = default_initial_interval(10.0);
  EXPECT_NEAR(e10.lower(), std::pow(10.0, -0.25), 1e-15);
  EXPECT_NEAR(e10.upper(), std::pow(10.0, 0.25), 1e-15);
  // the weight t^(p-2) spans [1e-2, 1e2] on the default interval
  for (double p : {1.1, 1.5, 3.0, 10.0}) {
    const auto e = default_initial_interval(p);
    EXPECT_NEAR(std::pow(e.lower(), p - 2.0) * std::pow(e.upper(), p - 2.0), 1.0, 1e-12);
    EXPECT_NEAR(std::max(std::pow(e.lower(), p - 2.0), std::pow(e.upper(), p - 2.0)), 100.0, 1e-9);
  }
}

TEST(RunLog, RoundTripAndErrors) {
  const auto& log = runs().p10_cr.log;
  std::istringstream is(log.str());
  const auto back = RunLog::read(is);
  ASSERT_EQ(back.events.size(), log.events.size());
  EXPECT_EQ(back.str(), log.str());
  EXPECT_EQ(back.iteration_estimator, log.iteration_estimator);
  for (std::size_t k = 0; k < log.events.size(); ++k) {
    EXPECT_EQ(back.events[k].action, log.events[k].action);
    EXPECT_EQ(back.events[k].ndof, log.events[k].ndof);
    EXPECT_EQ(back.events[k].energy, log.events[k].energy);
    EXPECT_EQ(back.events[k].eta_space2, log.events[k].eta_space2);
  }
  std::istringstream bad("KACANOV 10 0.5 2 1 2\n");
  EXPECT_THROW(RunLog::read(bad), std::runtime_error);
  std::istringstream unknown("JUMP 10 0.5 2 1 2 3 4 5\n");
  EXPECT_THROW(RunLog::read(unknown), std::invalid_argument);
  std::istringstream inf("KACANOV 10 0.5 inf inf 0 0 1 -2\n");
  const auto li = RunLog::read(inf);
  EXPECT_TRUE(std::isinf(li.events[0].eps_plus));
  EXPECT_TRUE(std::isinf(li.events[0].eta_iter2));
}

TEST(AdaptiveSolve, DecisionsReplayFromTheLog) {
  for (const auto* r : all_runs()) {
    std::istringstream is(r->log.str());
    const auto log = RunLog::read(is);
    ASSERT_FALSE(log.events.empty());
    for (const auto& e : log.events)
      EXPECT_EQ(e.action, decide(e.eta_iter2, e.eta_minus2, e.eta_plus2, e.eta_space2));
  }
}

TEST(AdaptiveSolve, IntervalAndNdofMonotonicity) {
  for (const auto* r : all_runs()) {
    const auto& ev = r->log.events;
    for (std::size_t k = 1; k < ev.size(); ++k) {
      const auto& a = ev[k - 1];
      const auto& b = ev[k];
      EXPECT_GE(b.ndof, a.ndof);
      EXPECT_EQ(b.eps_minus, a.action == Action::RelaxMinus ? 0.5 * a.eps_minus : a.eps_minus);
      EXPECT_EQ(b.eps_plus, a.action == Action::RelaxPlus ? 2.0 * a.eps_plus : a.eps_plus);
      if (a.action != Action::Refine) {
        EXPECT_EQ(b.ndof, a.ndof);
      } else {
        EXPECT_GT(b.ndof, a.ndof);
      }
    }
  }
}

TEST(AdaptiveSolve, KacanovStepsNeverIncreaseTheEnergy) {
  for (const auto* r : all_runs()) {
    const auto& ev = r->log.events;
    for (std::size_t k = 0; k + 1 < ev.size(); ++k)
      if (ev[k].action == Action::Kacanov) {
        EXPECT_LE(ev[k + 1].energy, ev[k].energy + 1e-10) << "event " << k;
      }
  }
}

TEST(AdaptiveSolve, LinearCaseOnlyIteratesAndRefines) {
  const auto& ev = runs().p2_lag.log.events;
  for (const auto& e : ev) {
    EXPECT_TRUE(e.action == Action::Kacanov || e.action == Action::Refine);
    EXPECT_NEAR(e.eta_minus2, 0.0, 1e-12);
    EXPECT_NEAR(e.eta_plus2, 0.0, 1e-12);
  }
  // Kacanov is exact in one step, so events alternate after the first
  for (std::size_t k = 1; k + 1 < ev.size(); ++k) EXPECT_NE(ev[k].action, ev[k + 1].action);
}

TEST(AdaptiveSolve, RefineEventsSatisfyTheBulkCriterion) {
  for (const auto* r : all_runs()) {
    int refines = 0;
    for (const auto& e : r->log.events) {
      if (e.action != Action::Refine) continue;
      ++refines;
      EXPECT_GT(e.marked_count, 0u);
      EXPECT_GE(e.marked_indicator_sum, 0.3 * e.eta_space2 * (1 - 1e-12));
    }
    EXPECT_GT(refines, 3);
    EXPECT_EQ(r->meshes.size(), static_cast<std::size_t>(refines) + 1);
  }
}

TEST(AdaptiveSolve, StopsAfterExceedingMaxNdof) {
  for (const auto* r : all_runs()) {
    EXPECT_GT(r->final_state.u.space()->num_free_dofs(), 1500u);
    const auto& ev = r->log.events;
    EXPECT_LE(ev.back().ndof, 1500u);
    EXPECT_EQ(ev.back().action, Action::Refine);
  }
}

TEST(AdaptiveSolve, MaxNdofBelowInitialGivesSingleEvent) {
  const auto pr = lshape_problem();
  for (auto kind : {kLag, kCR}) {
    const auto r = adaptive_solve(small_config(1.5, kind, 1), pr);
    EXPECT_EQ(r.log.events.size(), 1u);
  }
}

TEST(AdaptiveSolve, LoopGuard) {
  auto c = small_config(1.5, kCR, 1000000);
  c.max_events = 5;
  EXPECT_THROW(adaptive_solve(c, lshape_problem()), LoopGuardError);
}

TEST(AdaptiveSolve, TransferKeepsTheLagrangeEnergy) {
  const auto& r = runs().p10_lag;
  const NFunction nf(10.0);
  for (std::size_t k = 1; k < r.iterates.size(); ++k) {
    if (r.iterates[k].solved) continue;
    const auto& before = r.iterates[k - 1].u;
    const auto& after = r.iterates[k].u;
    const RelaxedNFunction phi(nf, default_initial_interval(10.0));
    EXPECT_NEAR(energy(after, phi, 2.0), energy(before, phi, 2.0), 1e-12);
  }
}

TEST(AdaptiveSolve, Deterministic) {
  const auto pr = lshape_problem();
  const auto a = adaptive_solve(small_config(10.0, kCR, 600), pr);
  const auto b = adaptive_solve(small_config(10.0, kCR, 600), pr);
  EXPECT_EQ(a.log.str(), b.log.str());
}

TEST(Reference, LinearCaseEqualsTheDirectSolve) {
  const auto pr = lshape_problem();
  for (auto kind : {kLag, kCR}) {
    auto c = small_config(2.0, kind, 150);
    const auto r = adaptive_solve(c, pr);
    const auto ref = compute_reference(r.final_state, c, pr);
    const auto& u = ref.state.u;
    const auto direct = dense_weighted_solve(boundary_interpolate(u.space(), pr.g),
                                             std::vector<double>(u.mesh()->num_triangles(), 1.0), pr.f);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < direct.coeffs().size(); ++i) {
      diff = std::max(diff, std::abs(u[i] - direct[i]));
      scale = std::max(scale, std::abs(direct[i]));
    }
    EXPECT_LT(diff, 1e-8 * scale) << to_string(kind);
    EXPECT_TRUE(is_descendant(u.mesh(), r.final_state.u.mesh()));
  }
}

TEST(Reference, EnergyAndIntervalProperties) {
  const auto pr = lshape_problem();
  for (double p : {1.1, 10.0}) {
    for (auto kind : {kLag, kCR}) {
      auto c = small_config(p, kind, 400);
      const auto r = adaptive_solve(c, pr);
      const auto ref = compute_reference(r.final_state, c, pr);
      EXPECT_LE(ref.state.energy_history.back(), ref.transferred_energy + 1e-10);
      const auto& fe = r.final_state.eps;
      const auto& re = ref.state.eps;
      EXPECT_LT(re.lower(), fe.lower());
      EXPECT_GT(re.upper(), fe.upper());
      EXPECT_EQ(ref.state.iteration, c.reference.iterations);
      const auto dof_ratio = static_cast<double>(ref.state.u.space()->num_free_dofs()) /
                             static_cast<double>(r.final_state.u.space()->num_free_dofs());
      EXPECT_GT(dof_ratio, 3.0);
    }
  }
}

TEST(Reference, ReportsAreAttachedToRefineEvents) {
  const auto pr = lshape_problem();
  auto c = small_config(1.1, kCR, 400);
  auto r = adaptive_solve(c, pr);
  const auto ref = compute_reference(r.final_state, c, pr);
  const auto hist = attach_reports(r, ref.state.u, c, pr);
  ASSERT_EQ(hist.iterates.size(), r.iterates.size());
  for (const auto& e : r.log.events) {
    EXPECT_EQ(e.report.has_value(), e.action == Action::Refine);
    if (!e.report) continue;
    EXPECT_EQ(e.report->ndof, e.ndof);
    EXPECT_GE(e.report->rel_error2, 0.0);
    EXPECT_GT(e.report->best_p0_error2, 0.0);
    EXPECT_EQ(e.report->osc2, 0.0);
  }
  // the last iterate is closer to the reference than the first one
  EXPECT_LT(hist.iterates.back().rel_error2, hist.iterates.front().rel_error2);
  const auto other = FeSpace::create(uniform_refine(lshape_mesh(), 3), kCR);
  EXPECT_THROW(attach_reports(r, DiscreteField(other), c, pr), NotNestedError);
}
